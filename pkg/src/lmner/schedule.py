"""Training configuration and the shared plateau schedule.

Both training loops use the same rule: strict improvement of the epoch
metric resets the patience counter; any other epoch halves the learning
rate, and three consecutive non-improving epochs stop the run.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError


@dataclass
class TrainConfig:
    epochs: int = 50
    word_budget: int = 1000
    clip_norm: float = 1.0
    dropout: float = 0.5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 0.5
    patience: int = 3
    seed: int = 1
    lm_loss_weight: float = 0.5
    holdout_fraction: float = 0.05
    retrain_train_dev: bool = False

    def __post_init__(self):
        if self.epochs <= 0 or self.word_budget <= 0:
            raise ContractError("epochs and word_budget must be positive")
        if not 0 <= self.holdout_fraction < 1:
            raise ContractError("holdout_fraction must be in [0, 1)")
        if self.lm_loss_weight <= 0:
            raise ContractError("lm_loss_weight must be positive")


class PlateauSchedule:
    """Tracks the best epoch metric; decays lr on plateau, stops after
    `patience` consecutive non-improving epochs."""

    def __init__(self, optimizer, decay: float, patience: int, higher_is_better: bool):
        self.optimizer = optimizer
        self.decay = decay
        self.patience = patience
        self.higher_is_better = higher_is_better
        self.best = None
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, value: float, epoch: int) -> bool:
        """Report an epoch metric; returns True when it improved on the best."""
        improved = self.best is None or (
            value > self.best if self.higher_is_better else value < self.best)
        if improved:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            self.optimizer.lr *= self.decay
        return improved

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience
