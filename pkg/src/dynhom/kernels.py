"""Hot numeric kernels with two interchangeable implementations.

Every kernel here exists twice: a numba ``@njit`` version (default when numba
imports cleanly) and a pure-numpy version.  Set ``DYNHOM_NO_NUMBA=1`` in the
environment to force the numpy path; ``dynhom.kernels.USING_NUMBA`` reports
which path is live.  ``benchmarks/bench_kernels.py`` times both.

The two paths agree numerically: warping is written identically per pixel,
block matching scans candidates in the same order so tie-breaks resolve the
same way, and the conv kernels differ only in floating-point summation order.

Coordinate convention: sample location (x, y) addresses the center of pixel
(column x, row y); arrays are indexed [row, col].
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("DYNHOM_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _FORCE_NUMPY:
        raise ImportError
    from numba import njit, prange
    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False

    def njit(*args, **kwargs):  # no-op decorator so the numba defs still import
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range


# ---------------------------------------------------------------------------
# bilinear inverse warp
# ---------------------------------------------------------------------------

@njit(cache=True)
def _warp_bilinear_numba_impl(src, hinv, out_h, out_w):
    sh, sw = src.shape
    out = np.zeros((out_h, out_w), dtype=src.dtype)
    for y in range(out_h):
        for x in range(out_w):
            den = hinv[2, 0] * x + hinv[2, 1] * y + hinv[2, 2]
            if abs(den) <= 1e-12:
                continue
            sx = (hinv[0, 0] * x + hinv[0, 1] * y + hinv[0, 2]) / den
            sy = (hinv[1, 0] * x + hinv[1, 1] * y + hinv[1, 2]) / den
            x0 = int(np.floor(sx))
            y0 = int(np.floor(sy))
            fx = sx - x0
            fy = sy - y0
            acc = 0.0
            if 0 <= y0 < sh:
                if 0 <= x0 < sw:
                    acc += (1.0 - fx) * (1.0 - fy) * src[y0, x0]
                if 0 <= x0 + 1 < sw:
                    acc += fx * (1.0 - fy) * src[y0, x0 + 1]
            if 0 <= y0 + 1 < sh:
                if 0 <= x0 < sw:
                    acc += (1.0 - fx) * fy * src[y0 + 1, x0]
                if 0 <= x0 + 1 < sw:
                    acc += fx * fy * src[y0 + 1, x0 + 1]
            out[y, x] = acc
    return out


def warp_bilinear_numba(src, hinv, out_h, out_w):
    return _warp_bilinear_numba_impl(
        np.ascontiguousarray(src), np.ascontiguousarray(hinv), out_h, out_w
    )


def warp_bilinear_numpy(src, hinv, out_h, out_w):
    sh, sw = src.shape
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    den = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    good = np.abs(den) > 1e-12
    safe_den = np.where(good, den, 1.0)
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / safe_den
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / safe_den
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0

    out = np.zeros((out_h, out_w), dtype=src.dtype)
    for dy, dx, wgt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                        (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        yi = y0 + dy
        xi = x0 + dx
        ok = good & (yi >= 0) & (yi < sh) & (xi >= 0) & (xi < sw)
        vals = np.zeros((out_h, out_w), dtype=src.dtype)
        vals[ok] = src[yi[ok], xi[ok]]
        out += wgt.astype(src.dtype) * vals
    return out


# ---------------------------------------------------------------------------
# block-matching SAD search over a grid of block centers
# ---------------------------------------------------------------------------

def _candidate_order(radius):
    """All integer displacements in the search window, sorted so the first
    SAD minimum encountered is the preferred one: smallest magnitude first,
    then lexicographic (u, v)."""
    us, vs = np.meshgrid(np.arange(-radius, radius + 1),
                         np.arange(-radius, radius + 1), indexing="ij")
    u = us.ravel()
    v = vs.ravel()
    order = np.lexsort((v, u, u * u + v * v))
    return u[order].astype(np.int64), v[order].astype(np.int64)


@njit(cache=True)
def _block_match_numba_impl(a, b, block, cand_u, cand_v, by0, bx0, ngy, ngx):
    h, w = a.shape
    flow_u = np.zeros((ngy, ngx), dtype=np.float64)
    flow_v = np.zeros((ngy, ngx), dtype=np.float64)
    nc = cand_u.shape[0]
    for gy in range(ngy):
        for gx in range(ngx):
            y0 = by0 + gy * block
            x0 = bx0 + gx * block
            best = 1e300
            bu = 0
            bv = 0
            for c in range(nc):
                du = cand_u[c]
                dv = cand_v[c]
                ty = y0 + dv
                tx = x0 + du
                if ty < 0 or tx < 0 or ty + block > h or tx + block > w:
                    continue
                sad = 0.0
                for yy in range(block):
                    arow = a[y0 + yy]
                    brow = b[ty + yy]
                    for xx in range(block):
                        sad += abs(arow[x0 + xx] - brow[tx + xx])
                if sad < best:
                    best = sad
                    bu = du
                    bv = dv
            flow_u[gy, gx] = bu
            flow_v[gy, gx] = bv
    return flow_u, flow_v


def block_match_grid_numba(a, b, block, radius):
    cand_u, cand_v = _candidate_order(radius)
    h, w = a.shape
    ngy = h // block
    ngx = w // block
    by0 = (h - ngy * block) // 2
    bx0 = (w - ngx * block) // 2
    fu, fv = _block_match_numba_impl(
        np.ascontiguousarray(a), np.ascontiguousarray(b),
        block, cand_u, cand_v, by0, bx0, ngy, ngx)
    return fu, fv, by0, bx0


def block_match_grid_numpy(a, b, block, radius):
    cand_u, cand_v = _candidate_order(radius)
    h, w = a.shape
    ngy = h // block
    ngx = w // block
    by0 = (h - ngy * block) // 2
    bx0 = (w - ngx * block) // 2
    # reference blocks: (ngy, ngx, block, block)
    ref = a[by0:by0 + ngy * block, bx0:bx0 + ngx * block]
    ref = ref.reshape(ngy, block, ngx, block).transpose(0, 2, 1, 3)

    best = np.full((ngy, ngx), np.inf)
    best_u = np.zeros((ngy, ngx))
    best_v = np.zeros((ngy, ngx))
    ys = by0 + np.arange(ngy) * block
    xs = bx0 + np.arange(ngx) * block
    for du, dv in zip(cand_u, cand_v):
        ty = ys + dv
        tx = xs + du
        oky = (ty >= 0) & (ty + block <= h)
        okx = (tx >= 0) & (tx + block <= w)
        if not (oky.any() and okx.any()):
            continue
        sub_y = np.where(oky)[0]
        sub_x = np.where(okx)[0]
        for gy in sub_y:
            rows = b[ty[gy]:ty[gy] + block]
            for gx in sub_x:
                sad = np.abs(ref[gy, gx] - rows[:, tx[gx]:tx[gx] + block]).sum()
                if sad < best[gy, gx]:
                    best[gy, gx] = sad
                    best_u[gy, gx] = du
                    best_v[gy, gx] = dv
    return best_u, best_v, by0, bx0


# ---------------------------------------------------------------------------
# 3x3 same-padding convolution (cross-correlation), forward and backward
# ---------------------------------------------------------------------------

@njit(cache=True, fastmath=True)
def _conv3x3_fwd_numba_impl(xpad, w, bias, out):
    B, C, Hp, Wp = xpad.shape
    O = w.shape[0]
    H = Hp - 2
    W = Wp - 2
    for bi in range(B):
        for oc in range(O):
            for y in range(H):
                row = out[bi, oc, y]
                for x in range(W):
                    row[x] = bias[oc]
            for ic in range(C):
                for ky in range(3):
                    w0 = w[oc, ic, ky, 0]
                    w1 = w[oc, ic, ky, 1]
                    w2 = w[oc, ic, ky, 2]
                    for y in range(H):
                        xrow = xpad[bi, ic, y + ky]
                        row = out[bi, oc, y]
                        for x in range(W):
                            row[x] += w0 * xrow[x] + w1 * xrow[x + 1] + w2 * xrow[x + 2]


def conv3x3_fwd_numba(xpad, w, bias):
    B, C, Hp, Wp = xpad.shape
    out = np.empty((B, w.shape[0], Hp - 2, Wp - 2), dtype=xpad.dtype)
    _conv3x3_fwd_numba_impl(xpad, w, bias, out)
    return out


def conv3x3_fwd_numpy(xpad, w, bias):
    B, C, Hp, Wp = xpad.shape
    H, W = Hp - 2, Wp - 2
    out = np.zeros((B, w.shape[0], H, W), dtype=xpad.dtype)
    for ky in range(3):
        for kx in range(3):
            view = xpad[:, :, ky:ky + H, kx:kx + W]
            out += np.tensordot(view, w[:, :, ky, kx],
                                axes=([1], [1])).transpose(0, 3, 1, 2)
    out += bias[None, :, None, None]
    return out


def conv3x3_bwd_input_numba(grad, w):
    # input gradient of a same-padding 3x3 correlation is itself a 3x3
    # correlation of the padded output gradient with the channel-transposed,
    # spatially flipped kernel
    gpad = np.pad(np.ascontiguousarray(grad), ((0, 0), (0, 0), (1, 1), (1, 1)))
    wt = np.ascontiguousarray(
        w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]).astype(grad.dtype, copy=False)
    zero_bias = np.zeros(w.shape[1], dtype=grad.dtype)
    return conv3x3_fwd_numba(gpad, wt, zero_bias)


def conv3x3_bwd_input_numpy(grad, w):
    B, O, H, W = grad.shape
    dxpad = np.zeros((B, w.shape[1], H + 2, W + 2), dtype=grad.dtype)
    for ky in range(3):
        for kx in range(3):
            contrib = np.tensordot(grad, w[:, :, ky, kx],
                                   axes=([1], [0])).transpose(0, 3, 1, 2)
            dxpad[:, :, ky:ky + H, kx:kx + W] += contrib
    return dxpad[:, :, 1:-1, 1:-1]


@njit(cache=True, fastmath=True)
def _conv3x3_bwd_weight_numba_impl(grad, xpad, dw):
    B, O, H, W = grad.shape
    C = xpad.shape[1]
    zero = dw[0, 0, 0, 0]
    for oc in range(O):
        for ic in range(C):
            s00 = zero
            s01 = zero
            s02 = zero
            s10 = zero
            s11 = zero
            s12 = zero
            s20 = zero
            s21 = zero
            s22 = zero
            for bi in range(B):
                for y in range(H):
                    grow = grad[bi, oc, y]
                    x0 = xpad[bi, ic, y]
                    x1 = xpad[bi, ic, y + 1]
                    x2 = xpad[bi, ic, y + 2]
                    for x in range(W):
                        g = grow[x]
                        s00 += g * x0[x]
                        s01 += g * x0[x + 1]
                        s02 += g * x0[x + 2]
                        s10 += g * x1[x]
                        s11 += g * x1[x + 1]
                        s12 += g * x1[x + 2]
                        s20 += g * x2[x]
                        s21 += g * x2[x + 1]
                        s22 += g * x2[x + 2]
            dw[oc, ic, 0, 0] = s00
            dw[oc, ic, 0, 1] = s01
            dw[oc, ic, 0, 2] = s02
            dw[oc, ic, 1, 0] = s10
            dw[oc, ic, 1, 1] = s11
            dw[oc, ic, 1, 2] = s12
            dw[oc, ic, 2, 0] = s20
            dw[oc, ic, 2, 1] = s21
            dw[oc, ic, 2, 2] = s22


def conv3x3_bwd_weight_numba(grad, xpad):
    O = grad.shape[1]
    C = xpad.shape[1]
    dw = np.zeros((O, C, 3, 3), dtype=grad.dtype)
    _conv3x3_bwd_weight_numba_impl(np.ascontiguousarray(grad),
                                   np.ascontiguousarray(xpad), dw)
    return dw


def conv3x3_bwd_weight_numpy(grad, xpad):
    B, O, H, W = grad.shape
    C = xpad.shape[1]
    dw = np.empty((O, C, 3, 3), dtype=grad.dtype)
    for ky in range(3):
        for kx in range(3):
            view = xpad[:, :, ky:ky + H, kx:kx + W]
            dw[:, :, ky, kx] = np.tensordot(grad, view, axes=([0, 2, 3], [0, 2, 3]))
    return dw


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USING_NUMBA:
    warp_bilinear = warp_bilinear_numba
    block_match_grid = block_match_grid_numba
    conv3x3_fwd = conv3x3_fwd_numba
    conv3x3_bwd_input = conv3x3_bwd_input_numba
    conv3x3_bwd_weight = conv3x3_bwd_weight_numba
else:
    warp_bilinear = warp_bilinear_numpy
    block_match_grid = block_match_grid_numpy
    conv3x3_fwd = conv3x3_fwd_numpy
    conv3x3_bwd_input = conv3x3_bwd_input_numpy
    conv3x3_bwd_weight = conv3x3_bwd_weight_numpy
