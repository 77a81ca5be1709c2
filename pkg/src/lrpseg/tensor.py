"""Dense tensor kernels shared by inference, training, and relevance propagation.

All activation tensors are 4-D numpy arrays in (batch, channels, height, width)
order, stored as float32. Reductions inside conv2d and linear accumulate in
float64 before casting back, which keeps summation error negligible even for
224x224 feature maps. Kernels follow the dtype of their input, so callers that
need a full float64 path (relevance propagation) simply pass float64 arrays.

Every function here is a pure function of its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

# Type alias for readability; a Tensor4 is a C-contiguous 4-D ndarray.
Tensor4 = np.ndarray


def tensor4(data, dtype=np.float32) -> Tensor4:
    """Coerce ``data`` to a contiguous 4-D array of the given dtype."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4-D (batch, channel, height, width) tensor, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ConvParams:
    """Convolution weights: kernel (out_ch, in_ch, kh, kw), bias (out_ch,)."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv kernel must be 4-D (out, in, kh, kw), got shape {self.kernel.shape}")
        if self.kernel.shape[2] < 1 or self.kernel.shape[3] < 1:
            raise ShapeError(f"conv kernel spatial dims must be >= 1, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match out_channels {self.kernel.shape[0]}"
            )
        if self.stride < 1:
            raise ShapeError(f"conv stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"conv padding must be >= 0, got {self.padding}")


def conv_output_hw(h: int, w: int, kh: int, kw: int, stride: int, padding: int) -> tuple[int, int]:
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    return oh, ow


def _window_view(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Strided sliding-window view of shape (b, c, oh, ow, kh, kw)."""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    sb, sc, sh, sw = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, (b, c, oh, ow, kh, kw), (sb, sc, stride * sh, stride * sw, sh, sw), writeable=False
    )
    return view, oh, ow


def conv2d_core(x: np.ndarray, kernel: np.ndarray, bias, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation with float64 accumulation; result keeps x's dtype."""
    b, c, h, w = x.shape
    oc, ic, kh, kw = kernel.shape
    if c != ic:
        raise ShapeError(f"input channels {c} do not match kernel input channels {ic} (input {x.shape}, kernel {kernel.shape})")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"input {x.shape} too small for kernel {kernel.shape} with padding {padding}")
    view, oh, ow = _window_view(x, kh, kw, stride, padding)
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kh * kw).astype(np.float64)
    kmat = kernel.reshape(oc, c * kh * kw).astype(np.float64)
    out = cols @ kmat.T
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)
    out = out.transpose(0, 2, 1).reshape(b, oc, oh, ow)
    return out.astype(x.dtype)


def conv2d(x: Tensor4, params: ConvParams) -> Tensor4:
    """2-D convolution (cross-correlation) with bias."""
    return conv2d_core(x, params.kernel, params.bias, params.stride, params.padding)


def conv2d_input_grad(grad_out: np.ndarray, kernel: np.ndarray, stride: int, padding: int,
                      input_hw: tuple[int, int]) -> np.ndarray:
    """Gradient of conv2d w.r.t. its input (also the transpose map used by LRP).

    Computed as a stride-1 convolution of the (dilated, padded) upstream
    gradient with the flipped, channel-transposed kernel.
    """
    b, oc, oh, ow = grad_out.shape
    koc, ic, kh, kw = kernel.shape
    if oc != koc:
        raise ShapeError(f"grad channels {oc} do not match kernel output channels {koc}")
    h, w = input_hw
    g = grad_out
    if stride > 1:
        dil = np.zeros((b, oc, (oh - 1) * stride + 1, (ow - 1) * stride + 1), dtype=grad_out.dtype)
        dil[:, :, ::stride, ::stride] = g
        g = dil
    # Right/bottom slack when the strided output did not cover the padded input.
    slack_h = (h + 2 * padding) - (g.shape[2] + kh - 1)
    slack_w = (w + 2 * padding) - (g.shape[3] + kw - 1)
    g = np.pad(g, ((0, 0), (0, 0), (kh - 1, kh - 1 + slack_h), (kw - 1, kw - 1 + slack_w)))
    kflip = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    full = conv2d_core(g, kflip, None, 1, 0)
    return full[:, :, padding:padding + h, padding:padding + w]


def conv2d_param_grads(x: np.ndarray, grad_out: np.ndarray, kernel_shape, stride: int,
                       padding: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. kernel and bias, accumulated in float64."""
    oc, ic, kh, kw = kernel_shape
    b, _, oh, ow = grad_out.shape
    view, voh, vow = _window_view(x, kh, kw, stride, padding)
    if (voh, vow) != (oh, ow):
        raise ShapeError(f"grad spatial dims {(oh, ow)} do not match conv output {(voh, vow)}")
    cols = view.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, ic * kh * kw).astype(np.float64)
    gmat = grad_out.reshape(b, oc, oh * ow).astype(np.float64)
    gk = np.einsum("bop,bpk->ok", gmat, cols).reshape(oc, ic, kh, kw)
    gb = gmat.sum(axis=(0, 2))
    return gk, gb


def maxpool2x2(x: Tensor4) -> tuple[Tensor4, np.ndarray]:
    """2x2 max pooling with stride 2.

    Returns the pooled tensor and an int64 index tensor of the same shape
    whose entries are flat indices into ``x`` of the winning elements. Ties
    are broken by the lowest flat index, so results are deterministic.
    """
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 requires even spatial dims, got {x.shape}")
    oh, ow = h // 2, w // 2
    win = x.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
    local = win.argmax(axis=-1)  # first occurrence wins, i.e. lowest flat index
    pooled = np.take_along_axis(win, local[..., None], axis=-1)[..., 0]
    dy, dx = local // 2, local % 2
    bi, ci, yi, xi = np.meshgrid(np.arange(b), np.arange(c), np.arange(oh), np.arange(ow), indexing="ij")
    rows = 2 * yi + dy
    cols = 2 * xi + dx
    indices = ((bi * c + ci) * h + rows) * w + cols
    return np.ascontiguousarray(pooled), indices.astype(np.int64)


def pool_scatter(values: np.ndarray, indices: np.ndarray, input_shape) -> np.ndarray:
    """Scatter pooled-grid values back to their argmax positions (zeros elsewhere)."""
    out = np.zeros(int(np.prod(input_shape)), dtype=values.dtype)
    np.add.at(out, indices.reshape(-1), values.reshape(-1))
    return out.reshape(input_shape)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def linear(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map y = W x + b. Accepts a vector (f,) or a batch (n, f)."""
    if weights.ndim != 2:
        raise ShapeError(f"linear weights must be 2-D (out, in), got shape {weights.shape}")
    if x.shape[-1] != weights.shape[1]:
        raise ShapeError(
            f"linear input length {x.shape[-1]} does not match weight columns {weights.shape[1]} "
            f"(input {x.shape}, weights {weights.shape})"
        )
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"linear bias shape {bias.shape} does not match out features {weights.shape[0]}")
    out = x.astype(np.float64) @ weights.T.astype(np.float64) + bias.astype(np.float64)
    return out.astype(x.dtype)
