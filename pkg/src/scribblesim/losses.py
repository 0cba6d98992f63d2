"""Reference loss kernels for scribble-supervised segmentation.

Probability maps are ``(K, H, W)`` arrays, label maps are ``(H, W)`` integer
arrays with 255 marking unlabeled pixels. Everything is evaluated in float64
regardless of the input dtype.
"""

from __future__ import annotations

import numpy as np

from .distmaps import DistanceMap
from .errors import AllZeroDistanceMapError, NoLabeledPixelsError, ShapeMismatchError, UnsupportedLossError

IGNORE = 255
LOG_FLOOR = 1e-12
NORM_FLOOR = 1e-8


def _f64(x):
    return np.asarray(x, dtype=np.float64)


def softmax(logits, axis=0):
    z = _f64(logits)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _labeled(pred, labels):
    p = _f64(pred)
    lab = np.asarray(labels)
    if p.ndim != 3 or lab.shape != p.shape[1:]:
        raise ShapeMismatchError(f"prediction {p.shape} and labels {lab.shape} disagree")
    sel = lab != IGNORE
    if not sel.any():
        raise NoLabeledPixelsError("no labeled pixels")
    y = lab[sel].astype(np.int64)
    if y.min() < 0 or y.max() >= p.shape[0]:
        raise ValueError(f"label ids must lie in [0, {p.shape[0]}) or be {IGNORE}")
    return p[:, sel], y, sel


def partial_ce(pred, labels) -> float:
    """Cross-entropy averaged over labeled pixels only."""
    p, y, _ = _labeled(pred, labels)
    picked = p[y, np.arange(y.size)]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())


def smoothed_ce(pred, labels, eps: float = 0.2) -> float:
    """Label-smoothed cross-entropy over labeled pixels."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    p, y, _ = _labeled(pred, labels)
    logp = np.log(np.maximum(p, LOG_FLOOR))
    hard = -logp[y, np.arange(y.size)]
    soft = -logp.mean(axis=0)
    return float(((1 - eps) * hard + eps * soft).mean())


def partial_ce_grad(logits, labels) -> np.ndarray:
    """Gradient of :func:`partial_ce` (on ``softmax(logits)``) w.r.t. the logits."""
    p = softmax(logits)
    _, y, sel = _labeled(p, labels)
    g = np.zeros_like(p)
    target = np.zeros((p.shape[0], y.size))
    target[y, np.arange(y.size)] = 1.0
    g[:, sel] = (p[:, sel] - target) / y.size
    return g


def smoothed_ce_grad(logits, labels, eps: float = 0.2) -> np.ndarray:
    p = softmax(logits)
    _, y, sel = _labeled(p, labels)
    k = p.shape[0]
    q = np.full((k, y.size), eps / k)
    q[y, np.arange(y.size)] += 1 - eps
    g = np.zeros_like(p)
    g[:, sel] = (p[:, sel] - q) / y.size
    return g


def cam(features, weights, k: int) -> np.ndarray:
    """Class activation map ``ReLU(sum_c W[c, k] * F[c])``."""
    f = _f64(features)
    w = _f64(weights)
    if f.ndim != 3 or w.ndim != 2 or w.shape[0] != f.shape[0]:
        raise ShapeMismatchError(f"features {f.shape} and weights {w.shape} disagree")
    if not 0 <= k < w.shape[1]:
        raise ShapeMismatchError(f"class index {k} out of range for {w.shape[1]} classes")
    return np.maximum(np.tensordot(w[:, k], f, axes=1), 0.0)


def lorm_similarity(q, k) -> np.ndarray:
    """Row-softmax of cosine similarities between the columns of ``q`` and ``k``."""
    q = _f64(q)
    k = _f64(k)
    if q.ndim != 2 or q.shape != k.shape:
        raise ShapeMismatchError(f"Q {q.shape} and K {k.shape} disagree")
    qn = q / np.maximum(np.linalg.norm(q, axis=0), NORM_FLOOR)
    kn = k / np.maximum(np.linalg.norm(k, axis=0), NORM_FLOOR)
    return softmax(qn.T @ kn, axis=1)


def lorm_forward(features, foreground_mask, proj_q, proj_k=None, delta: float = 1.0, shared: bool = False):
    """Rectify features with foreground-masked self-similarity.

    Returns ``(refined, loss)`` with ``refined`` shaped like ``features`` and
    ``loss`` the mean squared difference between the two. With ``shared=True``
    the single matrix ``proj_q`` produces both Q and K.
    """
    f = _f64(features)
    if f.ndim != 3:
        raise ShapeMismatchError(f"features must be C x H x W, got {f.shape}")
    c, h, w = f.shape
    m = _f64(foreground_mask)
    if m.shape != (h, w):
        raise ShapeMismatchError(f"mask {m.shape} does not match features {f.shape}")
    if shared:
        proj_k = proj_q
    elif proj_k is None:
        raise ShapeMismatchError("proj_k is required unless shared=True")
    pq, pk = _f64(proj_q), _f64(proj_k)
    if pq.shape != (c, c) or pk.shape != (c, c):
        raise ShapeMismatchError(f"projections must be {c} x {c}")
    if not np.isfinite(delta):
        raise ValueError("delta must be finite")

    flat = f.reshape(c, h * w)
    a = lorm_similarity(pq @ flat, pk @ flat)
    a_masked = a * m.reshape(1, -1)
    refined = (delta * (flat @ a_masked)).reshape(c, h, w)
    return refined, float(np.mean((f - refined) ** 2))


def _weights(dmap, shape):
    d = dmap.decode() if isinstance(dmap, DistanceMap) else _f64(dmap)
    if d.shape != shape:
        raise ShapeMismatchError(f"distance map {d.shape} does not match prediction {shape}")
    return d


def dp_loss(pred, dmap, negate: bool = False) -> float:
    """Distance-weighted negative entropy, averaged over pixels with nonzero weight.

    ``dmap`` is a :class:`DistanceMap` or an already-decoded ``(H, W)`` array.
    ``negate=True`` flips the sign so the result is a weighted entropy.
    """
    p = _f64(pred)
    d = _weights(dmap, p.shape[1:])
    sel = d != 0
    if not sel.any():
        raise AllZeroDistanceMapError("distance map is zero everywhere")
    plogp = (p * np.log(np.maximum(p, LOG_FLOOR))).sum(axis=0)
    loss = float((d[sel] * plogp[sel]).sum() / sel.sum())
    return -loss if negate else loss


def dp_loss_grad(logits, dmap, negate: bool = False) -> np.ndarray:
    p = softmax(logits)
    d = _weights(dmap, p.shape[1:])
    n = np.count_nonzero(d)
    if n == 0:
        raise AllZeroDistanceMapError("distance map is zero everywhere")
    logp = np.log(np.maximum(p, LOG_FLOOR))
    h = (p * logp).sum(axis=0)
    g = d * p * (logp - h) / n
    return -g if negate else g


LOSSES = {
    "partial_ce": (
        lambda p, a: partial_ce(p, a["labels"]),
        lambda z, a: partial_ce_grad(z, a["labels"]),
    ),
    "smoothed_ce": (
        lambda p, a: smoothed_ce(p, a["labels"], a.get("eps", 0.2)),
        lambda z, a: smoothed_ce_grad(z, a["labels"], a.get("eps", 0.2)),
    ),
    "dp_loss": (
        lambda p, a: dp_loss(p, a["dmap"], a.get("negate", False)),
        lambda z, a: dp_loss_grad(z, a["dmap"], a.get("negate", False)),
    ),
}


def analytic_grad(loss_name: str, inputs: dict) -> np.ndarray:
    if loss_name not in LOSSES:
        raise UnsupportedLossError(f"no gradient for {loss_name!r}; choose from {sorted(LOSSES)}")
    return LOSSES[loss_name][1](_f64(inputs["logits"]), inputs)


def grad_check(loss_name: str, inputs: dict, analytic=None, step: float = 1e-4) -> float:
    """Max relative gap between an analytic gradient and central differences.

    ``inputs`` holds ``logits`` (``(K, H, W)``) plus whatever the loss needs
    (``labels``, ``eps``, ``dmap``, ``negate``). Probabilities are always
    ``softmax(logits)`` so perturbed points stay on the simplex. ``analytic``
    may be an array, a callable taking ``inputs``, or None for the built-in
    gradient.
    """
    if loss_name not in LOSSES:
        raise UnsupportedLossError(f"cannot check {loss_name!r}; choose from {sorted(LOSSES)}")
    loss = LOSSES[loss_name][0]
    z = _f64(inputs["logits"]).copy()
    if analytic is None:
        a = analytic_grad(loss_name, inputs)
    elif callable(analytic):
        a = _f64(analytic(inputs))
    else:
        a = _f64(analytic)
    if a.shape != z.shape:
        raise ShapeMismatchError(f"gradient {a.shape} does not match logits {z.shape}")

    num = np.empty_like(z)
    flat = z.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = loss(softmax(z), inputs)
        flat[i] = orig - step
        lo = loss(softmax(z), inputs)
        flat[i] = orig
        num.reshape(-1)[i] = (hi - lo) / (2 * step)
    return float(np.max(np.abs(a - num) / np.maximum(1.0, np.abs(num))))
