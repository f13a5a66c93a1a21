"""lmner: sequence labeling with language-model weight pretraining.

A character-CNN + BiLSTM encoder feeds either a per-word softmax head or
a linear-chain CRF; the same encoder can first be trained as a joint
forward/backward language model on unlabeled text and its weights
transferred into the tagger.
"""

__version__ = "0.1.0"

from .tensor import Tensor, backward, make_rng  # noqa: F401
