"""
Dense tensor kernels for the autodiff engine.
Each kernel computes its forward value and returns a context that its
backward rule uses to produce one gradient per input.
"""

import numpy as np
from scipy.special import expit, log_softmax

from utils.errors import NumericalError, ShapeError

KERNELS = {}


def register(kind):
    def wrap(cls):
        KERNELS[kind] = cls()
        return cls
    return wrap


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_arity(kind, inputs, n):
    if len(inputs) != n:
        raise ShapeError(f"{kind} takes {n} inputs, got {len(inputs)}")


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast")


@register('add')
class Add:
    def forward(self, inputs, attrs):
        _check_arity('add', inputs, 2)
        a, b = inputs
        _broadcast_shape('add', a, b)
        return a + b, (a.shape, b.shape)

    def backward(self, grad, ctx):
        a_shape, b_shape = ctx
        return [unbroadcast(grad, a_shape), unbroadcast(grad, b_shape)]


@register('mul')
class Mul:
    def forward(self, inputs, attrs):
        _check_arity('mul', inputs, 2)
        a, b = inputs
        _broadcast_shape('mul', a, b)
        return a * b, (a, b)

    def backward(self, grad, ctx):
        a, b = ctx
        return [unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)]


@register('matmul')
class MatMul:
    """Batched matmul with optional transposition of the last two axes"""

    def forward(self, inputs, attrs):
        _check_arity('matmul', inputs, 2)
        a, b = inputs
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
        left = np.swapaxes(a, -1, -2) if attrs.get('transpose_a') else a
        right = np.swapaxes(b, -1, -2) if attrs.get('transpose_b') else b
        if left.shape[-1] != right.shape[-2]:
            raise ShapeError(f"matmul: inner dimensions differ ({left.shape} @ {right.shape})")
        try:
            out = np.matmul(left, right)
        except ValueError as e:
            raise ShapeError(f"matmul: {e}")
        return out, (left, right, attrs.get('transpose_a', False), attrs.get('transpose_b', False))

    def backward(self, grad, ctx):
        left, right, transpose_a, transpose_b = ctx
        grad_left = unbroadcast(np.matmul(grad, np.swapaxes(right, -1, -2)), left.shape)
        grad_right = unbroadcast(np.matmul(np.swapaxes(left, -1, -2), grad), right.shape)
        if transpose_a:
            grad_left = np.swapaxes(grad_left, -1, -2)
        if transpose_b:
            grad_right = np.swapaxes(grad_right, -1, -2)
        return [grad_left, grad_right]


@register('relu')
class Relu:
    def forward(self, inputs, attrs):
        _check_arity('relu', inputs, 1)
        x = inputs[0]
        return np.maximum(x, 0), x > 0

    def backward(self, grad, ctx):
        return [grad * ctx]


@register('tanh')
class Tanh:
    def forward(self, inputs, attrs):
        _check_arity('tanh', inputs, 1)
        out = np.tanh(inputs[0])
        return out, out

    def backward(self, grad, ctx):
        return [grad * (1.0 - ctx * ctx)]


@register('sigmoid')
class Sigmoid:
    def forward(self, inputs, attrs):
        _check_arity('sigmoid', inputs, 1)
        out = expit(inputs[0])
        return out, out

    def backward(self, grad, ctx):
        return [grad * ctx * (1.0 - ctx)]


@register('exp')
class Exp:
    def forward(self, inputs, attrs):
        _check_arity('exp', inputs, 1)
        with np.errstate(over='ignore'):
            out = np.exp(inputs[0])
        if not np.all(np.isfinite(out)):
            raise NumericalError("exp overflow: input too large")
        return out, out

    def backward(self, grad, ctx):
        return [grad * ctx]


@register('log')
class Log:
    """log(x), or log(|x| + eps) when attrs['magnitude'] is set"""

    def forward(self, inputs, attrs):
        _check_arity('log', inputs, 1)
        x = inputs[0]
        eps = float(attrs.get('eps', 0.0))
        if attrs.get('magnitude'):
            base = np.abs(x) + eps
            if np.any(base <= 0):
                raise NumericalError("log of zero magnitude; pass eps > 0")
            return np.log(base), (np.sign(x), base)
        base = x + eps
        if np.any(base <= 0):
            raise NumericalError("log of non-positive input")
        return np.log(base), (None, base)

    def backward(self, grad, ctx):
        sign, base = ctx
        if sign is None:
            return [grad / base]
        return [grad * sign / base]


@register('softmax')
class Softmax:
    def forward(self, inputs, attrs):
        _check_arity('softmax', inputs, 1)
        axis = attrs.get('axis', -1)
        x = inputs[0]
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        out = e / np.sum(e, axis=axis, keepdims=True)
        return out, (out, axis)

    def backward(self, grad, ctx):
        out, axis = ctx
        inner = np.sum(grad * out, axis=axis, keepdims=True)
        return [out * (grad - inner)]


@register('concat')
class Concat:
    def forward(self, inputs, attrs):
        if not inputs:
            raise ShapeError("concat needs at least one input")
        axis = attrs.get('axis', -1)
        try:
            out = np.concatenate(inputs, axis=axis)
        except ValueError as e:
            raise ShapeError(f"concat: {e}")
        sizes = [x.shape[axis] for x in inputs]
        return out, (axis, np.cumsum(sizes)[:-1])

    def backward(self, grad, ctx):
        axis, splits = ctx
        return list(np.split(grad, splits, axis=axis))


@register('slice')
class Slice:
    def forward(self, inputs, attrs):
        _check_arity('slice', inputs, 1)
        x = inputs[0]
        axis = attrs.get('axis', -1) % x.ndim
        start, stop = attrs['start'], attrs['stop']
        if not 0 <= start < stop <= x.shape[axis]:
            raise ShapeError(f"slice [{start}:{stop}] out of range for axis of size {x.shape[axis]}")
        index = [slice(None)] * x.ndim
        index[axis] = slice(start, stop)
        index = tuple(index)
        return x[index].copy(), (x.shape, index)

    def backward(self, grad, ctx):
        shape, index = ctx
        full = np.zeros(shape, dtype=grad.dtype)
        full[index] = grad
        return [full]


@register('reshape')
class Reshape:
    def forward(self, inputs, attrs):
        _check_arity('reshape', inputs, 1)
        x = inputs[0]
        try:
            out = x.reshape(attrs['shape'])
        except ValueError as e:
            raise ShapeError(f"reshape: {e}")
        return out, x.shape

    def backward(self, grad, ctx):
        return [grad.reshape(ctx)]


@register('embedding-lookup')
class EmbeddingLookup:
    """
    Mixture-weighted lookup of per-field embedding tables.
    inputs: x (B, D) one-hot or fractional rows, table (D, E)
    attrs['blocks']: (start, stop) column range per field
    output: (B, F, E) with out[:, f] = x[:, start:stop] @ table[start:stop]
    """

    def forward(self, inputs, attrs):
        _check_arity('embedding-lookup', inputs, 2)
        x, table = inputs
        if x.ndim != 2 or table.ndim != 2 or x.shape[1] != table.shape[0]:
            raise ShapeError(f"embedding-lookup: x {x.shape} does not match table {table.shape}")
        blocks = attrs['blocks']
        out = np.stack([x[:, s:e] @ table[s:e] for s, e in blocks], axis=1)
        return out, (x, table, blocks)

    def backward(self, grad, ctx):
        x, table, blocks = ctx
        grad_x = np.zeros_like(x)
        grad_table = np.zeros_like(table)
        for f, (s, e) in enumerate(blocks):
            grad_x[:, s:e] = grad[:, f] @ table[s:e].T
            grad_table[s:e] = x[:, s:e].T @ grad[:, f]
        return [grad_x, grad_table]


@register('conv1d')
class Conv1d:
    """
    Stride-1 convolution over a sequence with symmetric zero padding.
    inputs: x (B, T, C_in), weight (W, C_in, C_out), bias (C_out,)
    """

    def forward(self, inputs, attrs):
        _check_arity('conv1d', inputs, 3)
        x, weight, bias = inputs
        if x.ndim != 3 or weight.ndim != 3 or bias.shape != (weight.shape[2],):
            raise ShapeError(f"conv1d: bad shapes x {x.shape}, weight {weight.shape}, bias {bias.shape}")
        width = weight.shape[0]
        if width % 2 == 0:
            raise ShapeError(f"conv1d width must be odd for symmetric padding, got {width}")
        if weight.shape[1] != x.shape[2]:
            raise ShapeError(f"conv1d: {x.shape[2]} input channels but weight expects {weight.shape[1]}")
        pad = (width - 1) // 2
        steps = x.shape[1]
        padded = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        out = np.zeros((x.shape[0], steps, weight.shape[2]), dtype=np.result_type(x, weight))
        for k in range(width):
            out += padded[:, k:k + steps, :] @ weight[k]
        out += bias
        return out, (padded, weight, pad, steps)

    def backward(self, grad, ctx):
        padded, weight, pad, steps = ctx
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight)
        flat_grad = grad.reshape(-1, grad.shape[-1])
        for k in range(weight.shape[0]):
            window = padded[:, k:k + steps, :]
            grad_weight[k] = window.reshape(-1, window.shape[-1]).T @ flat_grad
            grad_padded[:, k:k + steps, :] += grad @ weight[k].T
        grad_x = grad_padded[:, pad:pad + steps, :]
        return [grad_x, grad_weight, grad.sum(axis=(0, 1))]


@register('lstm-cell')
class LstmCell:
    """
    One LSTM step, gate order (input, forget, cell, output).
    inputs: x (B, I), h (B, H), c (B, H), weight (I + H, 4H), bias (4H,)
    output: (B, 2H) = [h_next, c_next]
    """

    def forward(self, inputs, attrs):
        _check_arity('lstm-cell', inputs, 5)
        x, h, c, weight, bias = inputs
        hidden = h.shape[1]
        if c.shape != h.shape or weight.shape != (x.shape[1] + hidden, 4 * hidden) or bias.shape != (4 * hidden,):
            raise ShapeError(
                f"lstm-cell: bad shapes x {x.shape}, h {h.shape}, c {c.shape}, weight {weight.shape}, bias {bias.shape}"
            )
        xh = np.concatenate([x, h], axis=1)
        z = xh @ weight + bias
        i = expit(z[:, :hidden])
        f = expit(z[:, hidden:2 * hidden])
        g = np.tanh(z[:, 2 * hidden:3 * hidden])
        o = expit(z[:, 3 * hidden:])
        c_next = f * c + i * g
        tanh_c = np.tanh(c_next)
        h_next = o * tanh_c
        return np.concatenate([h_next, c_next], axis=1), (xh, c, weight, i, f, g, o, tanh_c, x.shape[1])

    def backward(self, grad, ctx):
        xh, c, weight, i, f, g, o, tanh_c, n_in = ctx
        hidden = c.shape[1]
        grad_h = grad[:, :hidden]
        grad_c = grad[:, hidden:] + grad_h * o * (1.0 - tanh_c * tanh_c)
        dz = np.concatenate([
            grad_c * g * i * (1.0 - i),
            grad_c * c * f * (1.0 - f),
            grad_c * i * (1.0 - g * g),
            grad_h * tanh_c * o * (1.0 - o),
        ], axis=1)
        grad_xh = dz @ weight.T
        return [grad_xh[:, :n_in], grad_xh[:, n_in:], grad_c * f, xh.T @ dz, dz.sum(axis=0)]


@register('dropout')
class Dropout:
    """Inverted dropout; identity in eval mode"""

    def forward(self, inputs, attrs):
        _check_arity('dropout', inputs, 1)
        x = inputs[0]
        rate = float(attrs.get('rate', 0.0))
        if not 0.0 <= rate < 1.0:
            raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
        if attrs.get('mode', 'eval') != 'train' or rate == 0.0:
            return x, None
        rng = np.random.default_rng(attrs['seed'])
        scale = ((rng.random(x.shape) >= rate) / (1.0 - rate)).astype(x.dtype)
        return x * scale, scale

    def backward(self, grad, ctx):
        if ctx is None:
            return [grad]
        return [grad * ctx]


@register('layernorm')
class LayerNorm:
    """Normalize over the last axis, then scale and shift"""

    def forward(self, inputs, attrs):
        _check_arity('layernorm', inputs, 3)
        x, gamma, beta = inputs
        if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
            raise ShapeError(f"layernorm: gamma/beta must have shape ({x.shape[-1]},)")
        eps = float(attrs.get('eps', 1e-5))
        mean = x.mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
        x_hat = (x - mean) * inv_std
        return x_hat * gamma + beta, (x_hat, inv_std, gamma)

    def backward(self, grad, ctx):
        x_hat, inv_std, gamma = ctx
        grad_hat = grad * gamma
        grad_x = inv_std * (
            grad_hat
            - grad_hat.mean(axis=-1, keepdims=True)
            - x_hat * (grad_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(grad.ndim - 1))
        return [grad_x, (grad * x_hat).sum(axis=reduce_axes), grad.sum(axis=reduce_axes)]


@register('weighted-cross-entropy')
class WeightedCrossEntropy:
    """
    Class-weighted mean cross-entropy over softmax logits.
    attrs['labels']: (B,) integer targets; attrs['weights']: (C,) or None
    loss = -sum_i w[y_i] log softmax(z_i)[y_i] / sum_i w[y_i]
    """

    def forward(self, inputs, attrs):
        _check_arity('weighted-cross-entropy', inputs, 1)
        logits = inputs[0]
        labels = np.asarray(attrs['labels'], dtype=np.int64)
        if logits.ndim != 2 or labels.shape != (logits.shape[0],):
            raise ShapeError(f"weighted-cross-entropy: logits {logits.shape} vs labels {labels.shape}")
        n_classes = logits.shape[1]
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ShapeError("weighted-cross-entropy: label out of range")
        weights = attrs.get('weights')
        weights = np.ones(n_classes, dtype=logits.dtype) if weights is None else np.asarray(weights, dtype=logits.dtype)
        row_weights = weights[labels]
        total = row_weights.sum()
        if total <= 0:
            raise NumericalError("weighted-cross-entropy: total weight is zero")
        log_probs = log_softmax(logits, axis=1)
        picked = log_probs[np.arange(labels.size), labels]
        loss = -(row_weights * picked).sum() / total
        return np.asarray(loss, dtype=logits.dtype), (log_probs, labels, row_weights, total)

    def backward(self, grad, ctx):
        log_probs, labels, row_weights, total = ctx
        probs = np.exp(log_probs)
        probs[np.arange(labels.size), labels] -= 1.0
        return [grad * probs * (row_weights / total)[:, None]]


@register('mean')
class Mean:
    def forward(self, inputs, attrs):
        _check_arity('mean', inputs, 1)
        x = inputs[0]
        axis = attrs.get('axis')
        out = np.asarray(x.mean(axis=axis, keepdims=attrs.get('keepdims', False)))
        return out, (x.shape, axis, attrs.get('keepdims', False))

    def backward(self, grad, ctx):
        shape, axis, keepdims = ctx
        if axis is None:
            count = int(np.prod(shape))
            return [np.broadcast_to(grad / count, shape).copy()]
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(a % len(shape) for a in axes)
        count = int(np.prod([shape[a] for a in axes]))
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return [np.broadcast_to(grad / count, shape).copy()]
