"""Training losses and per-scale residual targets.

Loss functions accept Tensors (building autodiff nodes) or plain arrays and
always return a scalar Tensor; use ``float(out.data)`` for the value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigInvalid, ShapeMismatch
from ..geometry import (
    PatchFrame,
    homography_to_displacement,
    invert,
    normalize,
    to_coarser_level,
)
from ..nnruntime import Tensor

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    sigma_f: float = 1.0
    sigma_d: float = 0.0

    def __post_init__(self):
        if self.sigma_f < 0 or self.sigma_d < 0:
            raise ConfigInvalid("loss weights must be non-negative")
        if self.sigma_f == 0 and self.sigma_d == 0:
            raise ConfigInvalid("at least one loss weight must be positive")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def mse_node(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean over all elements of the squared difference."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=pred.data.dtype).reshape(pred.data.shape)
    diff = pred.data - target
    n = diff.size

    def backward(g):
        pred.accumulate_grad((2.0 / n) * diff * g)

    return Tensor(np.array((diff ** 2).mean(), dtype=pred.data.dtype),
                  parents=(pred,), backward_fn=backward)


def bce_node(pred: Tensor, target: np.ndarray) -> Tensor:
    """Binary cross entropy averaged over all elements; predictions clamped
    to [1e-7, 1 - 1e-7]."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=pred.data.dtype).reshape(pred.data.shape)
    p = np.clip(pred.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (pred.data > BCE_CLAMP) & (pred.data < 1.0 - BCE_CLAMP)
    n = p.size
    value = -(target * np.log(p) + (1.0 - target) * np.log1p(-p)).mean()

    def backward(g):
        grad = np.where(inside, (p - target) / (p * (1.0 - p) * n), 0.0)
        pred.accumulate_grad(grad * g)

    return Tensor(np.array(value, dtype=pred.data.dtype),
                  parents=(pred,), backward_fn=backward)


def weighted_sum(terms: list[Tensor], weights: list[float]) -> Tensor:
    if len(terms) != len(weights):
        raise ShapeMismatch("one weight per term")
    terms = [_as_tensor(t) for t in terms]
    value = sum(w * float(t.data) for t, w in zip(terms, weights))

    def backward(g):
        for t, w in zip(terms, weights):
            t.accumulate_grad(np.asarray(w * g, dtype=t.data.dtype))

    dtype = terms[0].data.dtype if terms else np.float64
    return Tensor(np.array(value, dtype=dtype), parents=tuple(terms),
                  backward_fn=backward)


def homography_loss(est_per_scale, gt_per_scale) -> Tensor:
    """Sum over scales of the mean squared difference over the displacement
    components; ground truth at scale k must be in level-k pixel units."""
    if len(est_per_scale) != len(gt_per_scale):
        raise ShapeMismatch(
            f"{len(est_per_scale)} estimated scales vs {len(gt_per_scale)} targets")
    terms = [mse_node(_as_tensor(e), g) for e, g in zip(est_per_scale, gt_per_scale)]
    return weighted_sum(terms, [1.0] * len(terms))


def mask_loss(pred, gt) -> Tensor:
    """Binary cross entropy between predicted and ground-truth dynamics
    masks, averaged over the batch and both masks of the pair."""
    return bce_node(_as_tensor(pred), gt)


def total_loss(l_f_per_scale, l_d_per_scale, weights: LossWeights) -> Tensor:
    """Combined objective: sum over scales of sigma_f * l_f + sigma_d * l_d."""
    if len(l_d_per_scale) not in (0, len(l_f_per_scale)):
        raise ShapeMismatch("per-scale loss lists must align")
    terms = [_as_tensor(t) for t in l_f_per_scale]
    w = [weights.sigma_f] * len(terms)
    for t in l_d_per_scale:
        terms.append(_as_tensor(t))
        w.append(weights.sigma_d)
    return weighted_sum(terms, w)


def bce_value(pred: np.ndarray, gt: np.ndarray) -> float:
    """Plain-array BCE with the same clamping, for evaluation reports."""
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    gt = np.asarray(gt, dtype=np.float64)
    return float(-(gt * np.log(p) + (1.0 - gt) * np.log1p(-p)).mean())


def residual_displacement_targets(gt_h: np.ndarray,
                                  pre_cascades: list[np.ndarray],
                                  patch_size: int) -> list[np.ndarray]:
    """Per-scale displacement targets in level-local pixel units.

    The full-resolution ground truth is conjugated to each level, the
    pre-alignment already applied at that level is divided out, and the
    remainder is what the level's net should predict: with pre-alignment C
    and level ground truth G, the target homography is G @ C^-1, since the
    cascade recombines as H = Hhat @ C.
    """
    n = len(pre_cascades)
    b = gt_h.shape[0]
    targets = []
    for k in range(n):
        size = patch_size >> k
        frame = PatchFrame(size, size)
        g_k = [to_coarser_level(gt_h[j], k) for j in range(b)]
        t = np.empty((b, 8))
        for j in range(b):
            residual = normalize(g_k[j] @ invert(pre_cascades[k][j]))
            t[j] = homography_to_displacement(residual, frame)
        targets.append(t)
    return targets
