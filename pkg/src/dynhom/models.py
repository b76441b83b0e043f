"""Estimation networks: per-scale base nets, the multi-scale cascade, and
the mask-augmented variant.

Direction convention (see ``dynhom.geometry``): the estimate H for a pair
``(i1, i2)`` satisfies ``warp(i1, H) ~ i2``.  The cascade starts at the
coarsest pyramid level, pre-aligns the first image at each finer level with
the running estimate, and folds per-level refinements with
``compose_across_scale``.  Cross-level coupling (warping, homography solves)
is deliberately outside the autodiff graph: each level's net is supervised
through its own displacement output.

The mask-augmented variant additionally emits a pair of dynamics maps per
level.  Masks live on the unwarped image grids; the first mask is warped by
the running cascade on the way down so it stays registered with the warped
first image, and per-level decoders predict residuals that are added to the
incoming masks in logit space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .errors import ConfigInvalid, ShapeMismatch
from .geometry import (
    PatchFrame,
    compose_across_scale,
    displacement_to_homography,
    to_finer_level,
)
from .nnruntime import (
    BatchNormState,
    Parameter,
    Tensor,
    add,
    avg_pool_global,
    batch_norm,
    concat_channels,
    conv2d,
    dropout,
    max_pool2,
    relu,
    sigmoid,
    upsample2x,
    xavier_init,
    zeros_param,
)
from .nnruntime.ops import _upsample_matrix
from .nnruntime.optim import ones_param

MASK_LOGIT_CLAMP = 1e-4


def conv_layer_count(input_size: int) -> int:
    """Number of 3x3 conv layers for a given square input size: 12 at 128,
    two fewer per halving (10 at 64, 8 at 32, 6 at 16)."""
    k = int(round(np.log2(input_size)))
    if 2 ** k != input_size:
        raise ConfigInvalid(f"input size {input_size} is not a power of two")
    n = 2 * k - 2
    if n < 4:
        raise ConfigInvalid(f"input size {input_size} too small for the trunk")
    return n


def default_channel_plan(conv_layers: int, base: int) -> tuple[int, ...]:
    """Base width for the first four convs, double width thereafter."""
    return tuple(base if i < 4 else 2 * base for i in range(conv_layers))


@dataclass(frozen=True)
class BaseNetConfig:
    scale_index: int
    input_size: int
    in_channels: int
    channel_plan: tuple[int, ...]
    dropout_keep: float = 0.8

    def __post_init__(self):
        n = len(self.channel_plan)
        if n != conv_layer_count(self.input_size):
            raise ConfigInvalid(
                f"{n} convs inconsistent with input size {self.input_size}")
        if n % 2 or n < 4:
            raise ConfigInvalid("conv layer count must be even and at least 4")
        if self.input_size // 2 ** (n // 2) < 1:
            raise ConfigInvalid("too many pooling stages for the input size")
        if self.in_channels not in (2, 4):
            raise ConfigInvalid("base nets take 2 or 4 input channels")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ConfigInvalid("dropout keep probability must be in (0, 1]")

    @property
    def conv_layers(self) -> int:
        return len(self.channel_plan)


class BaseNet:
    """Trunk of 3x3 conv + BN + ReLU with a max-pool after every second conv,
    then global average pooling, dropout, and a 1x1 conv to the 8-vector of
    corner displacements in level-local pixel units."""

    def __init__(self, cfg: BaseNetConfig, rng: np.random.Generator,
                 dtype=np.float64, name: str = "net"):
        self.cfg = cfg
        self.name = name
        self.dtype = dtype
        self.conv_w: list[Parameter] = []
        self.conv_b: list[Parameter] = []
        self.bn_scale: list[Parameter] = []
        self.bn_shift: list[Parameter] = []
        self.bn_state: list[BatchNormState] = []
        c_in = cfg.in_channels
        for i, c_out in enumerate(cfg.channel_plan):
            self.conv_w.append(xavier_init((c_out, c_in, 3, 3), rng,
                                           name=f"{name}/conv{i:02d}/w", dtype=dtype))
            self.conv_b.append(zeros_param((c_out,), name=f"{name}/conv{i:02d}/b",
                                           dtype=dtype))
            self.bn_scale.append(ones_param((c_out,), name=f"{name}/bn{i:02d}/scale",
                                            dtype=dtype))
            self.bn_shift.append(zeros_param((c_out,), name=f"{name}/bn{i:02d}/shift",
                                             dtype=dtype))
            self.bn_state.append(BatchNormState(c_out, dtype=dtype))
            c_in = c_out
        self.head_w = xavier_init((8, c_in, 1, 1), rng, name=f"{name}/head/w",
                                  dtype=dtype)
        self.head_b = zeros_param((8,), name=f"{name}/head/b", dtype=dtype)

    def _trunk(self, x: Tensor, mode: str):
        """Runs the conv trunk; returns the final feature map plus the map
        right after the second pooling stage (the mask decoder tap)."""
        tap = None
        pools = 0
        for i in range(self.cfg.conv_layers):
            x = conv2d(x, self.conv_w[i], self.conv_b[i])
            x = batch_norm(x, self.bn_scale[i], self.bn_shift[i],
                           self.bn_state[i], mode)
            x = relu(x)
            if i % 2 == 1:
                x = max_pool2(x)
                pools += 1
                if pools == 2:
                    tap = x
        return x, tap

    def forward(self, x: Tensor, mode: str, rng: np.random.Generator) -> Tensor:
        if x.data.shape[1] != self.cfg.in_channels:
            raise ShapeMismatch(
                f"{self.name} expects {self.cfg.in_channels} channels, "
                f"got {x.data.shape[1]}")
        if x.data.shape[2] != self.cfg.input_size or x.data.shape[3] != self.cfg.input_size:
            raise ShapeMismatch(
                f"{self.name} expects {self.cfg.input_size}px inputs, "
                f"got {x.data.shape[2]}x{x.data.shape[3]}")
        feat, _ = self._trunk(x, mode)
        pooled = avg_pool_global(feat)
        pooled = dropout(pooled, self.cfg.dropout_keep, mode, rng)
        return conv2d(pooled, self.head_w, self.head_b)

    def parameters(self) -> dict[str, Parameter]:
        out = {}
        for plist in (self.conv_w, self.conv_b, self.bn_scale, self.bn_shift):
            for p in plist:
                out[p.name] = p
        out[self.head_w.name] = self.head_w
        out[self.head_b.name] = self.head_b
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, st in enumerate(self.bn_state):
            out[f"{self.name}/bn{i:02d}/running_mean"] = st.running_mean
            out[f"{self.name}/bn{i:02d}/running_var"] = st.running_var
        return out

    def load_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for i, st in enumerate(self.bn_state):
            st.running_mean = buffers[f"{self.name}/bn{i:02d}/running_mean"].copy()
            st.running_var = buffers[f"{self.name}/bn{i:02d}/running_var"].copy()


class MaskBaseNet(BaseNet):
    """Base net plus a decoder that regresses a pair of dynamics maps.

    The decoder taps the trunk at quarter input resolution (after the second
    max-pool), applies two upsample + conv3x3 + ReLU stages, and a final 1x1
    conv to two logit channels.  With incoming masks the logits act as
    residuals: they are added to the incoming masks' logits before the
    sigmoid, so a zeroed decoder passes the incoming masks through exactly.
    """

    def __init__(self, cfg: BaseNetConfig, rng: np.random.Generator,
                 dtype=np.float64, name: str = "net"):
        super().__init__(cfg, rng, dtype=dtype, name=name)
        c_tap = cfg.channel_plan[3]
        self.dec_w1 = xavier_init((c_tap, c_tap, 3, 3), rng,
                                  name=f"{name}/dec/conv1/w", dtype=dtype)
        self.dec_b1 = zeros_param((c_tap,), name=f"{name}/dec/conv1/b", dtype=dtype)
        self.dec_w2 = xavier_init((c_tap, c_tap, 3, 3), rng,
                                  name=f"{name}/dec/conv2/w", dtype=dtype)
        self.dec_b2 = zeros_param((c_tap,), name=f"{name}/dec/conv2/b", dtype=dtype)
        self.dec_w3 = xavier_init((2, c_tap, 1, 1), rng,
                                  name=f"{name}/dec/head/w", dtype=dtype)
        self.dec_b3 = zeros_param((2,), name=f"{name}/dec/head/b", dtype=dtype)

    def forward_with_masks(self, x: Tensor, incoming_masks: np.ndarray | None,
                           mode: str, rng: np.random.Generator):
        """Returns (displacement (B,8,1,1), masks (B,2,s,s) in [0,1])."""
        feat, tap = self._trunk(x, mode)
        pooled = avg_pool_global(feat)
        pooled = dropout(pooled, self.cfg.dropout_keep, mode, rng)
        disp = conv2d(pooled, self.head_w, self.head_b)

        d = upsample2x(tap)
        d = relu(conv2d(d, self.dec_w1, self.dec_b1))
        d = upsample2x(d)
        d = relu(conv2d(d, self.dec_w2, self.dec_b2))
        logits = conv2d(d, self.dec_w3, self.dec_b3)
        if incoming_masks is not None:
            if incoming_masks.shape != logits.data.shape:
                raise ShapeMismatch(
                    f"incoming masks {incoming_masks.shape} vs logits "
                    f"{logits.data.shape}")
            base = np.clip(incoming_masks, MASK_LOGIT_CLAMP, 1.0 - MASK_LOGIT_CLAMP)
            base_logit = np.log(base / (1.0 - base)).astype(logits.data.dtype)
            logits = add(logits, Tensor(base_logit))
        masks = sigmoid(logits)
        return disp, masks

    def parameters(self) -> dict[str, Parameter]:
        out = super().parameters()
        for p in (self.dec_w1, self.dec_b1, self.dec_w2, self.dec_b2,
                  self.dec_w3, self.dec_b3):
            out[p.name] = p
        return out


@dataclass(frozen=True)
class MhnConfig:
    n_scales: int = 3
    patch_size: int = 128
    base_channels: int = 64
    dropout_keep: float = 0.8
    mask_enabled: bool = False
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if not 1 <= self.n_scales <= 4:
            raise ConfigInvalid(f"n_scales {self.n_scales} outside 1..4")
        coarsest = self.patch_size // 2 ** (self.n_scales - 1)
        if coarsest < 16:
            raise ConfigInvalid(
                f"coarsest level {coarsest}px below the 16px minimum")
        conv_layer_count(self.patch_size)  # validates power of two / size

    def to_dict(self) -> dict:
        return {
            "n_scales": self.n_scales,
            "patch_size": self.patch_size,
            "base_channels": self.base_channels,
            "dropout_keep": self.dropout_keep,
            "mask_enabled": self.mask_enabled,
            "seed": self.seed,
            "dtype": self.dtype,
        }

    @staticmethod
    def from_dict(d: dict) -> "MhnConfig":
        return MhnConfig(**d)


@dataclass
class EstimationResult:
    """Cascade output for a batch.  Lists are indexed by scale k (0 finest);
    homographies are (B, 3, 3) stacks in level-local coordinates."""

    homography: np.ndarray                 # final cascaded estimate, level 0
    per_scale_h: list[np.ndarray]          # refinement at each level
    pre_cascades: list[np.ndarray]         # pre-alignment homography per level
    displacements: list[Tensor]            # raw net outputs, level-local px
    masks: list[Tensor] | None = None      # (B, 2, s_k, s_k) per level
    mask_inputs: list[np.ndarray | None] = field(default_factory=list)


def _batch_downscale(batch: np.ndarray) -> np.ndarray:
    b, h, w = batch.shape
    return batch.reshape(b, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def _upsample_pair_batch(masks: np.ndarray) -> np.ndarray:
    """(B, 2, s, s) -> (B, 2, 2s, 2s), same bilinear scheme as upsample2x."""
    u = _upsample_matrix(masks.shape[2], masks.dtype)
    return np.einsum("ij,bcjk,lk->bcil", u, masks, u, optimize=True)


class MhnModel:
    """Multi-scale estimator; ``mask_enabled`` switches in the dynamics-map
    branch and the 4-channel inputs at the non-coarsest levels."""

    def __init__(self, cfg: MhnConfig):
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype).type
        rng = np.random.default_rng(cfg.seed)
        self.nets: list[BaseNet] = []
        for k in range(cfg.n_scales):
            size = cfg.patch_size // 2 ** k
            coarsest = k == cfg.n_scales - 1
            in_ch = 4 if (cfg.mask_enabled and not coarsest) else 2
            ncfg = BaseNetConfig(
                scale_index=k,
                input_size=size,
                in_channels=in_ch,
                channel_plan=default_channel_plan(conv_layer_count(size),
                                                  cfg.base_channels),
                dropout_keep=cfg.dropout_keep,
            )
            cls = MaskBaseNet if cfg.mask_enabled else BaseNet
            self.nets.append(cls(ncfg, rng, dtype=dtype, name=f"net{k}"))
        self.dropout_rng = np.random.default_rng(cfg.seed + 1)

    # -- bookkeeping --------------------------------------------------------

    def parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for net in self.nets:
            out.update(net.parameters())
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for net in self.nets:
            out.update(net.buffers())
        return out

    def load_arrays(self, params: dict[str, np.ndarray],
                    buffers: dict[str, np.ndarray],
                    opt: dict | None = None) -> None:
        own = self.parameters()
        if set(own) != set(params):
            missing = set(own) ^ set(params)
            raise ShapeMismatch(f"parameter name mismatch: {sorted(missing)[:4]}")
        for name, p in own.items():
            arr = params[name].astype(p.data.dtype)
            if arr.shape != p.data.shape:
                raise ShapeMismatch(f"{name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()
            if opt and name in opt:
                p.m = opt[name]["m"].astype(p.data.dtype).copy()
                p.v = opt[name]["v"].astype(p.data.dtype).copy()
                p.step = int(opt[name]["step"])
        for net in self.nets:
            net.load_buffers(buffers)

    def zero_grads(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward_batch(self, i1: np.ndarray, i2: np.ndarray,
                      mode: str = "infer") -> EstimationResult:
        """i1, i2: (B, s, s) grayscale batches.  The returned homography
        re-aligns i1 onto i2 (per sample)."""
        if i1.shape != i2.shape or i1.ndim != 3:
            raise ShapeMismatch(f"batch shapes {i1.shape} vs {i2.shape}")
        s = self.cfg.patch_size
        if i1.shape[1] != s or i1.shape[2] != s:
            raise ShapeMismatch(f"expected {s}px patches, got {i1.shape[1:]}")
        b = i1.shape[0]
        dtype = np.dtype(self.cfg.dtype).type
        n = self.cfg.n_scales

        pyr1 = [np.asarray(i1, dtype=np.float64)]
        pyr2 = [np.asarray(i2, dtype=np.float64)]
        for _ in range(n - 1):
            pyr1.append(_batch_downscale(pyr1[-1]))
            pyr2.append(_batch_downscale(pyr2[-1]))

        per_scale_h: list[np.ndarray] = [None] * n
        pre_cascades: list[np.ndarray] = [None] * n
        disp_tensors: list[Tensor] = [None] * n
        mask_tensors: list[Tensor] = [None] * n if self.cfg.mask_enabled else None
        mask_inputs: list[np.ndarray | None] = [None] * n

        cascade = None          # (B,3,3) running estimate at current level
        masks_prev = None       # (B,2,s,s) numpy masks from the coarser level
        for k in range(n - 1, -1, -1):
            size = s >> k
            frame = PatchFrame(size, size)
            if cascade is None:
                pre = np.tile(np.eye(3), (b, 1, 1))
                i1_in = pyr1[k]
            else:
                pre = np.stack([to_finer_level(cascade[j]) for j in range(b)])
                i1_in = np.stack([
                    imaging.warp(pyr1[k][j], pre[j], size, size) for j in range(b)])
            pre_cascades[k] = pre
            x_img = np.stack([i1_in, pyr2[k]], axis=1).astype(dtype)

            net = self.nets[k]
            if self.cfg.mask_enabled:
                if masks_prev is None:
                    incoming = None
                else:
                    up = _upsample_pair_batch(masks_prev)
                    m1 = np.stack([
                        np.clip(imaging.warp_any(up[j, 0], pre[j], size, size),
                                0.0, 1.0)
                        for j in range(b)])
                    incoming = np.stack([m1, up[:, 1]], axis=1).astype(dtype)
                mask_inputs[k] = incoming
                x_in = (np.concatenate([x_img, incoming], axis=1)
                        if incoming is not None else x_img)
                disp_t, mask_t = net.forward_with_masks(
                    Tensor(x_in), incoming, mode, self.dropout_rng)
                mask_tensors[k] = mask_t
                masks_prev = np.asarray(mask_t.data, dtype=np.float64)
            else:
                disp_t = net.forward(Tensor(x_img), mode, self.dropout_rng)
            disp_tensors[k] = disp_t

            d = np.asarray(disp_t.data, dtype=np.float64).reshape(b, 8)
            hhat = np.stack([displacement_to_homography(d[j], frame)
                             for j in range(b)])
            per_scale_h[k] = hhat
            if cascade is None:
                cascade = hhat
            else:
                cascade = np.stack([
                    compose_across_scale(hhat[j], cascade[j]) for j in range(b)])

        return EstimationResult(
            homography=cascade,
            per_scale_h=per_scale_h,
            pre_cascades=pre_cascades,
            displacements=disp_tensors,
            masks=mask_tensors,
            mask_inputs=mask_inputs,
        )

    def estimate(self, i1: np.ndarray, i2: np.ndarray,
                 mode: str = "infer") -> EstimationResult:
        """Single-pair convenience wrapper around forward_batch."""
        return self.forward_batch(i1[None], i2[None], mode=mode)


def zero_prediction_layers(model: MhnModel) -> None:
    """Zero every final prediction layer (displacement heads and, when
    present, mask-decoder heads), so the cascade returns the identity."""
    for net in model.nets:
        net.head_w.data[:] = 0
        net.head_b.data[:] = 0
        if isinstance(net, MaskBaseNet):
            net.dec_w3.data[:] = 0
            net.dec_b3.data[:] = 0


# ---------------------------------------------------------------------------
# functional entry points mirroring the per-module operations
# ---------------------------------------------------------------------------

def base_net_forward(net: BaseNet, x: Tensor, mode: str,
                     rng: np.random.Generator | None = None) -> Tensor:
    return net.forward(x, mode, rng or np.random.default_rng(0))


def mask_base_net_forward(net: MaskBaseNet, x: Tensor,
                          incoming_masks: np.ndarray | None, mode: str,
                          rng: np.random.Generator | None = None):
    return net.forward_with_masks(x, incoming_masks, mode,
                                  rng or np.random.default_rng(0))


def mhn_forward(model: MhnModel, i1: np.ndarray, i2: np.ndarray,
                mode: str = "infer") -> EstimationResult:
    if model.cfg.mask_enabled:
        raise ConfigInvalid("model has the mask branch enabled; use mhn_m_forward")
    return model.estimate(i1, i2, mode=mode)


def mhn_m_forward(model: MhnModel, i1: np.ndarray, i2: np.ndarray,
                  mode: str = "infer") -> EstimationResult:
    if not model.cfg.mask_enabled:
        raise ConfigInvalid("model lacks the mask branch; use mhn_forward")
    return model.estimate(i1, i2, mode=mode)
