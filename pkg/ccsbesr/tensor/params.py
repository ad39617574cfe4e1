"""
Named parameter containers.

A ParamGroup lists its tensors and sub-groups in ``FIELDS``; the order of FIELDS fixes the parameter order used by
the optimizer, the checkpoint manifest and gradient checking.
"""
import copy

import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor.core import Tensor
from ccsbesr.tensor.init import make_rng, xavier_init, zeros_init


__all__ = ['ParamGroup', 'ConvParams']


class ParamGroup(object):
    """Base class for nested parameter sets."""

    FIELDS = ()

    def iter_children(self):
        """Yield (name, value) for every field. Lists yield one entry per item named by its index."""
        for field in self.FIELDS:
            value = getattr(self, field)
            if isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    yield '{}.{}'.format(field, i), item
            else:
                yield field, value

    def named_parameters(self, prefix=''):
        """Yield (dotted name, Tensor) pairs in a fixed order."""
        for name, value in self.iter_children():
            full_name = prefix + name
            if isinstance(value, ParamGroup):
                yield from value.named_parameters(full_name + '.')
            elif isinstance(value, Tensor):
                yield full_name, value

    def parameters(self):
        return [tensor for _, tensor in self.named_parameters()]

    def state_dict(self):
        """Return an ordered dict of name -> array copies."""
        return {name: tensor.data.copy() for name, tensor in self.named_parameters()}

    def load_state_dict(self, state):
        """Copy arrays into the parameters. Names and shapes must match exactly.

        Raises:
            InvalidArgumentError: On a missing, extra or mis-shaped entry.
        """
        names = [name for name, _ in self.named_parameters()]
        extra = sorted(set(state) - set(names))
        if extra:
            raise InvalidArgumentError('Unexpected parameters: {}'.format(', '.join(extra)))
        for name, tensor in self.named_parameters():
            if name not in state:
                raise InvalidArgumentError('Missing parameter "{}"'.format(name))
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise InvalidArgumentError('Parameter "{}" has shape {}, expected {}'
                                           .format(name, value.shape, tensor.shape))
            tensor.data = np.array(value, dtype=value.dtype)
            tensor.grad = None
        return self

    def num_parameters(self):
        return int(sum(tensor.size for tensor in self.parameters()))

    def astype(self, dtype):
        """Return a deep copy with every tensor converted to the given element type."""
        clone = copy.deepcopy(self)
        for tensor in clone.parameters():
            tensor.data = tensor.data.astype(dtype)
            tensor.grad = None
        return clone

    def copy(self):
        return copy.deepcopy(self)


class ConvParams(ParamGroup):
    """Convolution kernel and bias.

    Args:
        weight (Tensor): C_out x C_in x k x k.
        bias (Tensor): C_out.
    """

    FIELDS = ('weight', 'bias')

    def __init__(self, weight, bias):
        self.weight = weight
        self.bias = bias

    @classmethod
    def create(cls, c_out, c_in, kernel_size, rng=None):
        """Xavier-initialized kernel with a zero bias."""
        rng = make_rng(rng)
        return cls(xavier_init((c_out, c_in, kernel_size, kernel_size), rng), zeros_init((c_out,)))

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def kernel_size(self):
        return self.weight.shape[-1]
