"""Independent reference implementations used as test oracles.

Everything here is deliberately written straight-line, without touching
the library's own dynamic programs or autodiff, so a test comparing the
two is a genuine two-route check.
"""

import itertools

import numpy as np


def finite_difference_grad(f, tensor, h=1e-4):
    """Central finite differences of scalar-valued f w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-3):
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced with max."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


# -- CRF by enumeration -----------------------------------------------------------


def crf_path_score(emissions, transitions, path, start=None, stop=None):
    total = sum(emissions[t, path[t]] for t in range(len(path)))
    total += sum(transitions[path[t], path[t + 1]] for t in range(len(path) - 1))
    if start is not None:
        total += start[path[0]]
    if stop is not None:
        total += stop[path[-1]]
    return float(total)


def crf_enumerate(emissions, transitions, start=None, stop=None):
    """All T^N paths with their scores: returns (paths, scores array)."""
    n, t = emissions.shape
    paths = list(itertools.product(range(t), repeat=n))
    scores = np.array([crf_path_score(emissions, transitions, p, start, stop)
                       for p in paths])
    return paths, scores


def crf_brute_log_partition(emissions, transitions, start=None, stop=None):
    _, scores = crf_enumerate(emissions, transitions, start, stop)
    m = scores.max()
    return float(np.log(np.exp(scores - m).sum()) + m)


def crf_brute_best_path(emissions, transitions, start=None, stop=None):
    """argmax path; itertools.product order makes ties resolve to the
    lexicographically smallest path, matching lowest-tag-id tie-breaks."""
    paths, scores = crf_enumerate(emissions, transitions, start, stop)
    best = int(np.argmax(scores))
    return list(paths[best]), float(scores[best])


def crf_brute_marginals(emissions, transitions, start=None, stop=None):
    n, t = emissions.shape
    paths, scores = crf_enumerate(emissions, transitions, start, stop)
    log_z = crf_brute_log_partition(emissions, transitions, start, stop)
    marg = np.zeros((n, t))
    for path, score in zip(paths, scores):
        p = np.exp(score - log_z)
        for pos, tag in enumerate(path):
            marg[pos, tag] += p
    return marg


# -- LSTM cell, straight-line ----------------------------------------------------------


def lstm_step_reference(x, h, c, W_i, W_f, W_o, W_g, b_i, b_f, b_o, b_g):
    """The six cell equations evaluated directly with numpy."""

    def sigmoid(z):
        return 1.0 / (1.0 + np.exp(-z))

    hx = np.concatenate([h, x])
    i = sigmoid(W_i @ hx + b_i)
    f = sigmoid(W_f @ hx + b_f)
    o = sigmoid(W_o @ hx + b_o)
    g = np.tanh(W_g @ hx + b_g)
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


# -- chunking -------------------------------------------------------------------


def chunks_from_bio(tags):
    """Chunk set of a VALID BIO sequence: {(start, end, type)}."""
    chunks = set()
    start, typ = None, None
    for i, tag in enumerate(tags):
        if tag == "O":
            if typ is not None:
                chunks.add((start, i - 1, typ))
                typ = None
        elif tag.startswith("B-"):
            if typ is not None:
                chunks.add((start, i - 1, typ))
            start, typ = i, tag[2:]
        else:  # I- continuing the open chunk (input assumed valid)
            pass
    if typ is not None:
        chunks.add((start, len(tags) - 1, typ))
    return chunks


def softmax_ce_reference(logits, targets):
    """Mean softmax cross-entropy, computed the obvious way."""
    total = 0.0
    for row, target in zip(logits, targets):
        e = np.exp(row - row.max())
        p = e / e.sum()
        total += -np.log(p[target])
    return total / len(targets)
