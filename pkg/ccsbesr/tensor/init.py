import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor.core import Tensor, DEFAULT_DTYPE


__all__ = ['make_rng', 'xavier_fans', 'xavier_bound', 'xavier_init', 'zeros_init']


def make_rng(seed=None):
    """Return a numpy Generator for an int seed, or the given Generator unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def xavier_fans(shape):
    """Return (fan_in, fan_out) for a dense (out, in) or convolution (out, in, k, k) weight shape."""
    shape = tuple(int(s) for s in shape)
    if len(shape) < 2 or any(s < 1 for s in shape):
        raise InvalidArgumentError('Xavier init needs a weight shape of rank >= 2, got {}'.format(shape))
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    return shape[1] * receptive, shape[0] * receptive


def xavier_bound(shape):
    """Return a = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = xavier_fans(shape)
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(shape, seed=None, dtype=DEFAULT_DTYPE):
    """Sample a weight uniformly on [-a, a] with the Xavier bound a.

    Args:
        shape (tuple): Dense (out, in) or convolution (out, in, k, k) shape.
        seed (int/np.random.Generator)[None]: Seed or generator. A fixed int gives identical tensors.
        dtype (numpy.dtype)[float32]: Element type.

    Returns:
        weight (Tensor): New parameter tensor with requires_grad set.
    """
    bound = xavier_bound(shape)
    values = make_rng(seed).uniform(-bound, bound, size=tuple(shape))
    return Tensor(np.clip(values, -bound, bound), requires_grad=True, dtype=dtype)


def zeros_init(shape, dtype=DEFAULT_DTYPE):
    """Return a zero parameter tensor (biases)."""
    return Tensor(np.zeros(tuple(shape)), requires_grad=True, dtype=dtype)
