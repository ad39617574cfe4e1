"""
Differentiable operators.

Every operator is pure: inputs are never mutated and a fresh result array is allocated. Image-like tensors use
the batch x channel x height x width axis order.
"""
import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor.core import record, as_tensor


__all__ = ['add', 'sub', 'mul', 'scale', 'square', 'absolute', 'sigmoid', 'relu', 'leaky_relu',
           'sum_all', 'mean_all', 'concat', 'reshape', 'crop_axis', 'diff_axis', 'repeat_axis',
           'conv2d', 'dense', 'global_pool_spatial', 'pool_across_channels',
           'batched_width_scores', 'softmax_last_axis', 'transpose_last_two', 'matmul_last_two',
           'apply_width_attention', 'pixel_shuffle', 'pixel_unshuffle']


POOL_MODES = ('max', 'mean')


def _require_shape(a, b, op):
    if a.shape != b.shape:
        raise InvalidArgumentError('{}: shape mismatch {} vs {}'.format(op, a.shape, b.shape))


def _require_rank(x, rank, op):
    if x.ndim != rank:
        raise InvalidArgumentError('{}: expected a rank {} tensor, got shape {}'.format(op, rank, x.shape))


def _reduce_to(grad, shape):
    """Sum a broadcast gradient back down to the singleton axes of shape."""
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ===== Elementwise =====
def add(a, b):
    """Elementwise sum of two equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _require_shape(a, b, 'add')

    def vjp(g):
        return g, g
    return record('add', a.data + b.data, (a, b), vjp)


def sub(a, b):
    """Elementwise difference of two equally shaped tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _require_shape(a, b, 'sub')

    def vjp(g):
        return g, -g
    return record('sub', a.data - b.data, (a, b), vjp)


def mul(a, b):
    """Elementwise product.

    The second operand may have singleton axes where the first does not (attention gating), but both must have
    the same rank.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or any(sb not in (sa, 1) for sa, sb in zip(a.shape, b.shape)):
        raise InvalidArgumentError('mul: cannot broadcast {} onto {}'.format(b.shape, a.shape))
    a_data, b_data = a.data, b.data

    def vjp(g):
        grad_a = g * b_data if a.requires_grad else None
        grad_b = _reduce_to(g * a_data, b_data.shape) if b.requires_grad else None
        return grad_a, grad_b
    return record('mul', a_data * b_data, (a, b), vjp)


def scale(a, factor):
    """Multiply by a Python scalar."""
    a = as_tensor(a)
    factor = float(factor)

    def vjp(g):
        return (g * factor,)
    return record('scale', a.data * a.data.dtype.type(factor), (a,), vjp)


def square(a):
    a = as_tensor(a)
    a_data = a.data

    def vjp(g):
        return (2 * a_data * g,)
    return record('square', a_data * a_data, (a,), vjp)


def absolute(a):
    """Elementwise absolute value. The adjoint uses sign(x), which is 0 at 0."""
    a = as_tensor(a)
    a_data = a.data

    def vjp(g):
        return (np.sign(a_data) * g,)
    return record('absolute', np.abs(a_data), (a,), vjp)


def sigmoid(a):
    a = as_tensor(a)
    decay = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1 / (1 + decay), decay / (1 + decay)).astype(a.dtype)

    def vjp(g):
        return (g * out * (1 - out),)
    return record('sigmoid', out, (a,), vjp)


def relu(a):
    a = as_tensor(a)
    positive = a.data > 0

    def vjp(g):
        return (g * positive,)
    return record('relu', np.where(positive, a.data, 0).astype(a.dtype), (a,), vjp)


def leaky_relu(a, slope=0.1):
    """Leaky rectifier: x for x > 0, slope * x otherwise."""
    a = as_tensor(a)
    positive = a.data > 0
    factor = np.where(positive, 1, slope).astype(a.dtype)

    def vjp(g):
        return (g * factor,)
    return record('leaky_relu', a.data * factor, (a,), vjp)


# ===== Reductions and structure =====
def sum_all(a):
    """Sum of all elements as a scalar tensor."""
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy(),)
    return record('sum_all', np.asarray(a.data.sum(), dtype=a.dtype), (a,), vjp)


def mean_all(a):
    """Arithmetic mean of all elements as a scalar tensor."""
    a = as_tensor(a)
    shape = a.shape
    count = max(a.size, 1)

    def vjp(g):
        return (np.full(shape, g / count, dtype=g.dtype),)
    return record('mean_all', np.asarray(a.data.mean() if a.size else 0, dtype=a.dtype), (a,), vjp)


def concat(tensors, axis=1):
    """Concatenate along an axis (the channel axis by default)."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidArgumentError('concat: nothing to concatenate')
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise InvalidArgumentError('concat: incompatible shapes {} and {}'.format(ref, t.shape))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))
    return record('concat', np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def reshape(a, shape):
    a = as_tensor(a)
    in_shape = a.shape
    try:
        out = a.data.reshape(shape).copy()
    except ValueError as err:
        raise InvalidArgumentError('reshape: cannot reshape {} to {}'.format(in_shape, shape)) from err

    def vjp(g):
        return (g.reshape(in_shape),)
    return record('reshape', out, (a,), vjp)


def crop_axis(a, axis, start, stop):
    """Keep the elements start:stop along one axis."""
    a = as_tensor(a)
    axis = axis % a.ndim
    n = a.shape[axis]
    if not 0 <= start <= stop <= n:
        raise InvalidArgumentError('crop_axis: range {}:{} outside extent {}'.format(start, stop, n))
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        grad = np.zeros(shape, dtype=dtype)
        grad[index] = g
        return (grad,)
    return record('crop_axis', a.data[index].copy(), (a,), vjp)


def diff_axis(a, axis):
    """Forward difference x[i + 1] - x[i] along an axis."""
    a = as_tensor(a)
    axis = axis % a.ndim
    n = a.shape[axis]
    head = [slice(None)] * a.ndim
    tail = [slice(None)] * a.ndim
    head[axis] = slice(1, n)
    tail[axis] = slice(0, n - 1)
    head, tail = tuple(head), tuple(tail)
    shape, dtype = a.shape, a.dtype

    def vjp(g):
        grad = np.zeros(shape, dtype=dtype)
        grad[head] += g
        grad[tail] -= g
        return (grad,)
    return record('diff_axis', a.data[head] - a.data[tail], (a,), vjp)


def repeat_axis(a, axis, repeats):
    """Nearest neighbor replication: every element along the axis is repeated ``repeats`` times."""
    a = as_tensor(a)
    axis = axis % a.ndim
    repeats = int(repeats)
    if repeats < 1:
        raise InvalidArgumentError('repeat_axis: repeats must be >= 1, got {}'.format(repeats))
    shape = a.shape

    def vjp(g):
        grouped = g.reshape(shape[:axis] + (shape[axis], repeats) + shape[axis + 1:])
        return (grouped.sum(axis=axis + 1),)
    return record('repeat_axis', np.repeat(a.data, repeats, axis=axis), (a,), vjp)


# ===== Convolution and pooling =====
def _tap_slice(start, stride, count):
    return slice(start, start + stride * (count - 1) + 1, stride)


def conv2d(x, weight, bias=None, stride=1, padding=0, dilation=1):
    """2-D cross-correlation with zero padding.

    Args:
        x (Tensor): Input B x C_in x H x W.
        weight (Tensor): Kernel C_out x C_in x k x k with odd k.
        bias (Tensor)[None]: Bias of length C_out.
        stride (int)[1]: Step between output positions.
        padding (int)[0]: Zeros added on every spatial border.
        dilation (int)[1]: Spacing between kernel taps.

    Returns:
        out (Tensor): B x C_out x H' x W' with H' = (H + 2 padding - dilation (k - 1) - 1) // stride + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _require_rank(x, 4, 'conv2d')
    _require_rank(weight, 4, 'conv2d')
    if stride < 1 or dilation < 1:
        raise InvalidArgumentError('conv2d: stride and dilation must be positive, got {} and {}'
                                   .format(stride, dilation))
    if padding < 0:
        raise InvalidArgumentError('conv2d: padding must be >= 0, got {}'.format(padding))
    c_out, c_in, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise InvalidArgumentError('conv2d: kernel must be square with odd size, got {}x{}'.format(kh, kw))
    if x.shape[1] != c_in:
        raise InvalidArgumentError('conv2d: input has {} channels, weight expects {}'.format(x.shape[1], c_in))
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise InvalidArgumentError('conv2d: bias shape {} != ({},)'.format(bias.shape, c_out))

    batch, _, height, width = x.shape
    out_h = (height + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError('conv2d: input {} too small for kernel {} at dilation {}'
                                   .format(x.shape, kh, dilation))

    x_pad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    w_data = weight.data
    taps = [(i, j, _tap_slice(i * dilation, stride, out_h), _tap_slice(j * dilation, stride, out_w))
            for i in range(kh) for j in range(kw)]

    # Accumulate as C_out x B x H' x W' then move the batch axis to the front
    acc = np.zeros((c_out, batch, out_h, out_w), dtype=np.result_type(x.dtype, weight.dtype))
    for i, j, rows, cols in taps:
        acc += np.tensordot(w_data[:, :, i, j], x_pad[:, :, rows, cols], axes=([1], [1]))
    out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))
    if bias is not None:
        out += bias.data[None, :, None, None]

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        g_t = g.transpose(1, 0, 2, 3)
        grad_x = grad_w = grad_b = None
        if x.requires_grad:
            grad_pad = np.zeros((c_in, batch) + x_pad.shape[2:], dtype=g.dtype)
            for i, j, rows, cols in taps:
                grad_pad[:, :, rows, cols] += np.tensordot(w_data[:, :, i, j], g_t, axes=([0], [0]))
            grad_pad = grad_pad.transpose(1, 0, 2, 3)
            grad_x = grad_pad[:, :, padding:padding + height, padding:padding + width]
        if weight.requires_grad:
            grad_w = np.zeros_like(w_data)
            for i, j, rows, cols in taps:
                grad_w[:, :, i, j] = np.tensordot(g_t, x_pad[:, :, rows, cols], axes=([1, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            grad_b = g.sum(axis=(0, 2, 3))
        return grad_x, grad_w, grad_b
    return record('conv2d', out, inputs, vjp)


def dense(x, weight, bias=None):
    """Fully connected layer applied to pooled B x C_in x 1 x 1 vectors.

    Args:
        x (Tensor): B x C_in x 1 x 1.
        weight (Tensor): C_out x C_in.
        bias (Tensor)[None]: C_out.

    Returns:
        out (Tensor): B x C_out x 1 x 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _require_rank(x, 4, 'dense')
    _require_rank(weight, 2, 'dense')
    if x.shape[2:] != (1, 1) or x.shape[1] != weight.shape[1]:
        raise InvalidArgumentError('dense: input {} does not match weight {}'.format(x.shape, weight.shape))
    batch = x.shape[0]
    vec = x.data.reshape(batch, -1)
    out = vec @ weight.data.T
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise InvalidArgumentError('dense: bias shape {} != ({},)'.format(bias.shape, weight.shape[0]))
        out = out + bias.data
    w_data = weight.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        g2 = g.reshape(batch, -1)
        grad_x = (g2 @ w_data).reshape(batch, -1, 1, 1)
        grad_w = g2.T @ vec
        grad_b = g2.sum(axis=0)
        return grad_x, grad_w, grad_b
    return record('dense', out.reshape(batch, -1, 1, 1), inputs, vjp)


def _check_mode(mode):
    if mode not in POOL_MODES:
        raise InvalidArgumentError('Pooling mode must be one of {}, got "{}"'.format(POOL_MODES, mode))


def global_pool_spatial(x, mode):
    """Per-channel max or mean over all spatial positions: B x C x H x W -> B x C x 1 x 1.

    The max adjoint routes the gradient to the first (lowest row-major index) maximum.
    """
    x = as_tensor(x)
    _require_rank(x, 4, 'global_pool_spatial')
    _check_mode(mode)
    batch, channels, height, width = x.shape
    if height < 1 or width < 1:
        raise InvalidArgumentError('global_pool_spatial: empty spatial extent {}'.format(x.shape))
    flat = x.data.reshape(batch, channels, height * width)

    if mode == 'mean':
        def vjp(g):
            return (np.broadcast_to(g / (height * width), x.shape).astype(g.dtype),)
        return record('global_pool_spatial', flat.mean(axis=2).reshape(batch, channels, 1, 1), (x,), vjp)

    index = flat.argmax(axis=2)[..., None]

    def vjp(g):
        grad = np.zeros_like(flat)
        np.put_along_axis(grad, index, g.reshape(batch, channels, 1), axis=2)
        return (grad.reshape(x.shape),)
    out = np.take_along_axis(flat, index, axis=2).reshape(batch, channels, 1, 1)
    return record('global_pool_spatial', out, (x,), vjp)


def pool_across_channels(x, mode):
    """Max or mean over the channel axis: B x C x H x W -> B x 1 x H x W.

    The max adjoint routes the gradient to the lowest channel index among ties.
    """
    x = as_tensor(x)
    _require_rank(x, 4, 'pool_across_channels')
    _check_mode(mode)
    channels = x.shape[1]

    if mode == 'mean':
        def vjp(g):
            return (np.broadcast_to(g / channels, x.shape).astype(g.dtype),)
        return record('pool_across_channels', x.data.mean(axis=1, keepdims=True), (x,), vjp)

    index = x.data.argmax(axis=1)[:, None]

    def vjp(g):
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, index, g, axis=1)
        return (grad,)
    return record('pool_across_channels', np.take_along_axis(x.data, index, axis=1), (x,), vjp)


# ===== Attention =====
def batched_width_scores(q, k):
    """Row-wise correlation of width positions: out[b, h, i, j] = sum_c q[b, c, h, i] k[b, c, h, j]."""
    q, k = as_tensor(q), as_tensor(k)
    _require_rank(q, 4, 'batched_width_scores')
    _require_shape(q, k, 'batched_width_scores')
    q_rows = q.data.transpose(0, 2, 3, 1)  # B x H x W x C
    k_cols = k.data.transpose(0, 2, 1, 3)  # B x H x C x W

    def vjp(g):
        grad_q = grad_k = None
        if q.requires_grad:
            grad_q = np.ascontiguousarray((g @ k.data.transpose(0, 2, 3, 1)).transpose(0, 3, 1, 2))
        if k.requires_grad:
            grad_k = np.ascontiguousarray((q.data.transpose(0, 2, 1, 3) @ g).transpose(0, 2, 1, 3))
        return grad_q, grad_k
    return record('batched_width_scores', q_rows @ k_cols, (q, k), vjp)


def softmax_last_axis(x):
    """Softmax over the last axis, stabilized by subtracting the row maximum."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)
    return record('softmax_last_axis', out, (x,), vjp)


def transpose_last_two(x):
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise InvalidArgumentError('transpose_last_two: rank must be >= 2, got shape {}'.format(x.shape))

    def vjp(g):
        return (np.ascontiguousarray(np.swapaxes(g, -1, -2)),)
    return record('transpose_last_two', np.ascontiguousarray(np.swapaxes(x.data, -1, -2)), (x,), vjp)


def matmul_last_two(a, b):
    """Batched matrix product over the last two axes: (..., M, K) @ (..., K, N)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise InvalidArgumentError('matmul_last_two: incompatible shapes {} and {}'.format(a.shape, b.shape))
    a_data, b_data = a.data, b.data

    def vjp(g):
        grad_a = g @ np.swapaxes(b_data, -1, -2) if a.requires_grad else None
        grad_b = np.swapaxes(a_data, -1, -2) @ g if b.requires_grad else None
        return grad_a, grad_b
    return record('matmul_last_two', a_data @ b_data, (a, b), vjp)


def apply_width_attention(m, f):
    """Mix width positions of f by an attention map: out[b, c, h, i] = sum_j m[b, h, i, j] f[b, c, h, j]."""
    m, f = as_tensor(m), as_tensor(f)
    _require_rank(m, 4, 'apply_width_attention')
    _require_rank(f, 4, 'apply_width_attention')
    batch, channels, height, width = f.shape
    if m.shape != (batch, height, width, width):
        raise InvalidArgumentError('apply_width_attention: map {} does not match features {}'
                                   .format(m.shape, f.shape))
    m_data = m.data
    f_rows = f.data.transpose(0, 2, 3, 1)  # B x H x W x C

    def vjp(g):
        g_rows = g.transpose(0, 2, 3, 1)
        grad_m = g_rows @ np.swapaxes(f_rows, -1, -2) if m.requires_grad else None
        grad_f = None
        if f.requires_grad:
            grad_f = np.ascontiguousarray((np.swapaxes(m_data, -1, -2) @ g_rows).transpose(0, 3, 1, 2))
        return grad_m, grad_f
    out = np.ascontiguousarray((m_data @ f_rows).transpose(0, 3, 1, 2))
    return record('apply_width_attention', out, (m, f), vjp)


# ===== Sub-pixel rearrangement =====
def _shuffle(data, s):
    batch, channels, height, width = data.shape
    c = channels // (s * s)
    out = data.reshape(batch, c, s, s, height, width).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out.reshape(batch, c, height * s, width * s))


def _unshuffle(data, s):
    batch, c, height, width = data.shape
    out = data.reshape(batch, c, height // s, s, width // s, s).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out.reshape(batch, c * s * s, height // s, width // s))


def pixel_shuffle(x, s):
    """Rearrange B x (C s^2) x H x W into B x C x sH x sW.

    Channel c * s^2 + dy * s + dx of the input lands at spatial offset (dy, dx) of output channel c.
    """
    x = as_tensor(x)
    _require_rank(x, 4, 'pixel_shuffle')
    s = int(s)
    if s < 1 or x.shape[1] % (s * s):
        raise InvalidArgumentError('pixel_shuffle: {} channels not divisible by {}^2'.format(x.shape[1], s))

    def vjp(g):
        return (_unshuffle(g, s),)
    return record('pixel_shuffle', _shuffle(x.data, s), (x,), vjp)


def pixel_unshuffle(x, s):
    """Exact inverse of pixel_shuffle."""
    x = as_tensor(x)
    _require_rank(x, 4, 'pixel_unshuffle')
    s = int(s)
    if s < 1 or x.shape[2] % s or x.shape[3] % s:
        raise InvalidArgumentError('pixel_unshuffle: extents {} not divisible by {}'.format(x.shape[2:], s))

    def vjp(g):
        return (_shuffle(g, s),)
    return record('pixel_unshuffle', _unshuffle(x.data, s), (x,), vjp)
