"""Batched forward/backward kernels on (N, C, H, W) arrays."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (N, C, OH, OW, K, K) view; OH = (H - K) // stride + 1
    return sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]


def conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, padding: int):
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    win = _windows(xp, weight.shape[2], stride)
    out = np.einsum("nchwij,ocij->nohw", win, weight, optimize=True) + bias[None, :, None, None]
    return out, (x.shape, xp.shape, win, weight, stride, padding)


def conv_backward(dout: np.ndarray, cache):
    x_shape, xp_shape, win, weight, stride, padding = cache
    kernel = weight.shape[2]
    out_h, out_w = dout.shape[2], dout.shape[3]
    d_weight = np.einsum("nchwij,nohw->ocij", win, dout, optimize=True)
    d_bias = dout.sum(axis=(0, 2, 3))
    dxp = np.zeros(xp_shape)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += np.einsum(
                "nohw,oc->nchw", dout, weight[:, :, i, j], optimize=True
            )
    dx = dxp[:, :, padding:padding + x_shape[2], padding:padding + x_shape[3]]
    return dx, d_weight, d_bias


def maxpool_forward(x: np.ndarray, kernel: int, stride: int):
    win = _windows(x, kernel, stride)
    n, c, out_h, out_w = win.shape[:4]
    flat = win.reshape(n, c, out_h, out_w, kernel * kernel)
    # argmax returns the first maximal index in scan order
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, kernel, stride)


def maxpool_backward(dout: np.ndarray, cache):
    x_shape, arg, kernel, stride = cache
    out_h, out_w = dout.shape[2], dout.shape[3]
    dx = np.zeros(x_shape)
    for index in range(kernel * kernel):
        i, j = divmod(index, kernel)
        dx[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += dout * (arg == index)
    return dx


def _channel_window_sum(x: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0:
        return x.copy()
    channels = x.shape[1]
    padded = np.pad(x, ((0, 0), (radius, radius), (0, 0), (0, 0)))
    return sum(padded[:, offset:offset + channels] for offset in range(2 * radius + 1))


def response_norm_forward(x: np.ndarray, radius: int, alpha: float, beta: float, k: float):
    size = 2 * radius + 1
    scale = k + (alpha / size) * _channel_window_sum(x * x, radius)
    out = x * scale ** (-beta)
    return out, (x, scale, radius, alpha, beta, size)


def response_norm_backward(dout: np.ndarray, cache):
    x, scale, radius, alpha, beta, size = cache
    spread = _channel_window_sum(dout * x * scale ** (-beta - 1.0), radius)
    return dout * scale ** (-beta) - (2.0 * alpha * beta / size) * x * spread


def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    flat = x.reshape(x.shape[0], -1)
    return flat @ weight + bias, (x.shape, flat, weight)


def fc_backward(dz: np.ndarray, cache):
    x_shape, flat, weight = cache
    return (dz @ weight.T).reshape(x_shape), flat.T @ dz, dz.sum(axis=0)
