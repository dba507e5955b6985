"""Dense float64 tensor kernels.

Everything here is a pure function of its inputs: 2D cross-correlation and
its adjoints, kernel flipping, ReLU, 2x2 max-pooling with argmax routing,
and row-major flattening.  Tensors are plain C-contiguous ``numpy`` arrays
of ``float64``; a feature map is ``(C, H, W)`` and a filter bank is
``(K, C, kh, kw)``.

``conv2d`` is cross-correlation: no kernel flip happens inside it.  The
decoder's 180-degree flip is explicit, via :func:`flip180` and
:func:`tied_decoder_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def _as_f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


@dataclass(frozen=True)
class ConvSpec:
    """Stride and symmetric zero-padding width of a convolution."""

    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ShapeError(f"stride must be >= 1, got {self.stride}")
        if self.pad < 0:
            raise ShapeError(f"pad must be >= 0, got {self.pad}")

    def out_extent(self, extent: int, kernel: int) -> int:
        out = (extent + 2 * self.pad - kernel) // self.stride + 1
        if out < 1:
            raise ShapeError(
                f"kernel {kernel} does not fit input extent {extent} "
                f"with pad {self.pad} (output extent would be {out})"
            )
        return out


def im2col(x: np.ndarray, kh: int, kw: int, spec: ConvSpec) -> np.ndarray:
    """Unfold a padded (C, H, W) map into a (C*kh*kw, Ho*Wo) patch matrix.

    Column p holds the receptive field of output position p (row-major over
    the output grid); rows run over (c, u, v) in row-major order, so a
    filter bank reshaped to (K, C*kh*kw) multiplies it directly.
    """
    c, h, w = x.shape
    ho = spec.out_extent(h, kh)
    wo = spec.out_extent(w, kw)
    p, s = spec.pad, spec.stride
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    patches = np.empty((c, kh, kw, ho, wo))
    for u in range(kh):
        for v in range(kw):
            patches[:, u, v] = xp[:, u : u + s * ho : s, v : v + s * wo : s]
    return patches.reshape(c * kh * kw, ho * wo)


def col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, spec: ConvSpec) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch columns back to (C, H, W)."""
    c, h, w = shape
    ho = spec.out_extent(h, kh)
    wo = spec.out_extent(w, kw)
    p, s = spec.pad, spec.stride
    patches = cols.reshape(c, kh, kw, ho, wo)
    xp = np.zeros((c, h + 2 * p, w + 2 * p))
    for u in range(kh):
        for v in range(kw):
            xp[:, u : u + s * ho : s, v : v + s * wo : s] += patches[:, u, v]
    return xp[:, p : p + h, p : p + w] if p else xp


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Cross-correlate a (C, H, W) map with a (K, C, kh, kw) bank.

    out[k, i, j] = bias[k]
                 + sum_{c,u,v} xpad[c, i*stride + u, j*stride + v] * weights[k, c, u, v]

    with xpad the zero-padded input.  Bias is one scalar per output map.
    """
    x = _as_f64(x)
    w = _as_f64(weights)
    b = _as_f64(bias)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be C x H x W, got {x.ndim}-D shape {x.shape}")
    if w.ndim != 4:
        raise ShapeError(f"conv2d weights must be K x C x kh x kw, got {w.ndim}-D shape {w.shape}")
    k, c, kh, kw = w.shape
    if x.shape[0] != c:
        raise ShapeError(f"input has {x.shape[0]} channels but weights expect {c}")
    if b.shape != (k,):
        raise ShapeError(f"bias has length {b.size} but there are {k} filters")
    ho = spec.out_extent(x.shape[1], kh)
    wo = spec.out_extent(x.shape[2], kw)
    cols = im2col(x, kh, kw, spec)
    out = w.reshape(k, c * kh * kw) @ cols
    out += b[:, None]
    return out.reshape(k, ho, wo)


def conv2d_weight_grad(x: np.ndarray, dout: np.ndarray, kh: int, kw: int, spec: ConvSpec) -> np.ndarray:
    """Gradient of conv2d w.r.t. its weights, given dL/dout of shape (K, Ho, Wo)."""
    k = dout.shape[0]
    cols = im2col(_as_f64(x), kh, kw, spec)
    return (dout.reshape(k, -1) @ cols.T).reshape(k, x.shape[0], kh, kw)


def conv2d_input_grad(dout: np.ndarray, weights: np.ndarray, x_shape: tuple, spec: ConvSpec) -> np.ndarray:
    """Gradient of conv2d w.r.t. its input, given dL/dout of shape (K, Ho, Wo)."""
    k, c, kh, kw = weights.shape
    dcols = weights.reshape(k, c * kh * kw).T @ dout.reshape(k, -1)
    return col2im(dcols, x_shape, kh, kw, spec)


def conv2d_bias_grad(dout: np.ndarray) -> np.ndarray:
    """Gradient of conv2d w.r.t. its per-map bias: sum over each output map."""
    return dout.sum(axis=(1, 2))


def _check_4d(w, opname: str) -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 4:
        raise ShapeError(f"{opname} expects a 4-D filter bank, got {w.ndim}-D shape {w.shape}")
    return w


def flip180(weights: np.ndarray) -> np.ndarray:
    """Rotate every kernel of a (K, C, kh, kw) bank by 180 degrees."""
    w = _check_4d(weights, "flip180")
    return _as_f64(w[:, :, ::-1, ::-1])


def tied_decoder_weights(w_e: np.ndarray) -> np.ndarray:
    """Derive decoder filters from encoder filters: transpose the filter and
    channel axes and rotate each kernel 180 degrees.

    out[c, k, u, v] = w_e[k, c, kh-1-u, kw-1-v].  Applying the map twice
    returns the original bank.
    """
    w = _check_4d(w_e, "tied_decoder_weights")
    return _as_f64(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(_as_f64(x), 0.0)


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max-pool with stride 2 over a (K, H, W) map.

    Odd extents keep a final window truncated at the border.  Returns the
    pooled map of shape (K, ceil(H/2), ceil(W/2)) and an int64 index map of
    the same shape whose entries are the flat row-major position in ``x``
    of each window's maximum.  Ties go to the first occurrence in row-major
    window scan order.
    """
    x = _as_f64(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool2 input must be K x H x W, got {x.ndim}-D shape {x.shape}")
    k, h, w = x.shape
    ho, wo = (h + 1) // 2, (w + 1) // 2
    padded = np.full((k, 2 * ho, 2 * wo), -np.inf)
    padded[:, :h, :w] = x
    windows = padded.reshape(k, ho, 2, wo, 2).transpose(0, 1, 3, 2, 4).reshape(k, ho, wo, 4)
    arg = windows.argmax(axis=3)
    pooled = np.take_along_axis(windows, arg[..., None], axis=3)[..., 0]
    rows = 2 * np.arange(ho)[None, :, None] + arg // 2
    cols = 2 * np.arange(wo)[None, None, :] + arg % 2
    index_map = (np.arange(k)[:, None, None] * h + rows) * w + cols
    return pooled, index_map.astype(np.int64)


def maxpool2_route_back(grad: np.ndarray, index_map: np.ndarray, input_shape: tuple) -> np.ndarray:
    """Scatter a pooled-shape gradient back to the pooling input.

    Each window's gradient lands on the position its argmax was recorded
    from; overlaps cannot occur because windows are disjoint.
    """
    out = np.zeros(int(np.prod(input_shape)))
    np.add.at(out, index_map.ravel(), np.asarray(grad, dtype=np.float64).ravel())
    return out.reshape(input_shape)


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major linearization to a 1-D vector."""
    return _as_f64(x).reshape(-1)
