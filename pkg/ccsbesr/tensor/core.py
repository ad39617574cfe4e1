"""
Tensor storage and the gradient tape.

Operations record themselves on the innermost active GradientTape when any input requires a gradient.
``backward`` replays the recorded adjoints in exact reverse execution order.
"""
import threading

import numpy as np

from ccsbesr.utils import InvalidArgumentError, InvalidStateError


__all__ = ['DEFAULT_DTYPE', 'Tensor', 'GradientTape', 'current_tape', 'record', 'backward', 'as_tensor']


DEFAULT_DTYPE = np.float32
FLOAT_TYPES = (np.float32, np.float64)

_STATE = threading.local()


class Tensor(object):
    """Dense floating point array with an optional accumulated gradient.

    Args:
        data (array_like): Values. The array is copied.
        requires_grad (bool)[False]: If True backward accumulates a gradient into ``grad``.
        dtype (numpy.dtype)[None]: Element type. Defaults to the data's float type or float32.
    """

    __slots__ = ('data', 'requires_grad', 'grad', 'name', '__weakref__')

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = getattr(data, 'dtype', None)
            if dtype not in FLOAT_TYPES:
                dtype = DEFAULT_DTYPE
        if np.dtype(dtype) not in FLOAT_TYPES:
            raise InvalidArgumentError('Tensor element type must be float32 or float64, got {}'.format(dtype))

        self.data = np.array(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @classmethod
    def wrap(cls, data, requires_grad=False):
        """Create a tensor that takes ownership of an operation's freshly allocated result array."""
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        return tensor

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        """Return the value of a single element tensor as a Python float."""
        if self.data.size != 1:
            raise InvalidArgumentError('item() needs a single element tensor, got shape {}'.format(self.shape))
        return float(self.data.reshape(()))

    def astype(self, dtype):
        """Return a new leaf tensor with the given element type and the same requires_grad flag."""
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype, name=self.name)

    def __add__(self, other):
        from ccsbesr.tensor.ops import add
        return add(self, other)

    def __sub__(self, other):
        from ccsbesr.tensor.ops import sub
        return sub(self, other)

    def __mul__(self, other):
        from ccsbesr.tensor.ops import mul, scale
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from ccsbesr.tensor.ops import scale
        return scale(self, -1.0)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        grad = ', requires_grad=True' if self.requires_grad else ''
        return 'Tensor(shape={}, dtype={}{})'.format(self.shape, self.dtype.name, grad)


def as_tensor(value, dtype=None):
    """Return the value if it is already a Tensor, else wrap it as a constant."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


class _Record(object):
    __slots__ = ('name', 'output', 'inputs', 'vjp')

    def __init__(self, name, output, inputs, vjp):
        self.name = name
        self.output = output
        self.inputs = inputs
        self.vjp = vjp


class GradientTape(object):
    """Ordered record of executed operations.

    Use as a context manager. Tapes nest per thread; operations record on the innermost one.

    Args:
        adjoint_hook (callable)[None]: Called as ``hook(op_name, input_grads)`` for every replayed
            record; the returned sequence replaces the input gradients. Used to inject faulty adjoints.
    """

    def __init__(self, adjoint_hook=None):
        self.adjoint_hook = adjoint_hook
        self.records = []
        self._produced = {}

    def __enter__(self):
        stack = getattr(_STATE, 'stack', None)
        if stack is None:
            stack = _STATE.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _STATE.stack.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def __contains__(self, tensor):
        return id(tensor) in self._produced

    def record(self, name, output, inputs, vjp):
        """Append an executed operation.

        Args:
            name (str): Operation name.
            output (Tensor): Result tensor.
            inputs (tuple): Input tensors in the order ``vjp`` returns their gradients.
            vjp (callable): Maps the output gradient array to a tuple of input gradient arrays (or None).
        """
        self._produced[id(output)] = len(self.records)
        self.records.append(_Record(name, output, tuple(inputs), vjp))

    def reset(self):
        self.records = []
        self._produced = {}


def current_tape():
    """Return the innermost active tape of this thread or None."""
    stack = getattr(_STATE, 'stack', None)
    if stack:
        return stack[-1]
    return None


def record(name, data, inputs, vjp):
    """Wrap an operation result and record it on the active tape when a gradient is needed.

    Args:
        name (str): Operation name.
        data (np.ndarray): Freshly allocated result values.
        inputs (tuple): Input tensors.
        vjp (callable): Adjoint function, see GradientTape.record.

    Returns:
        output (Tensor): Result tensor.
    """
    requires_grad = any(t.requires_grad for t in inputs)
    output = Tensor.wrap(data, requires_grad)
    if requires_grad:
        tape = current_tape()
        if tape is not None:
            tape.record(name, output, inputs, vjp)
    return output


def backward(loss, tape=None):
    """Accumulate d(loss)/d(leaf) into ``grad`` of every requires-grad leaf reachable from the loss.

    Gradients accumulate. Calling backward twice without resetting the leaves adds the gradients twice.

    Args:
        loss (Tensor): Scalar produced under the tape.
        tape (GradientTape)[None]: Tape holding the loss. Defaults to the active tape.

    Raises:
        InvalidArgumentError: If the loss is not a scalar.
        InvalidStateError: If the loss was not recorded on the tape.
    """
    if tape is None:
        tape = current_tape()
    if loss.data.size != 1:
        raise InvalidArgumentError('backward() needs a scalar loss, got shape {}'.format(loss.shape))
    if tape is None or loss not in tape:
        raise InvalidStateError('The loss was not produced under the given gradient tape')

    pending = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        grad = pending.pop(id(rec.output), None)
        if grad is None:
            continue

        input_grads = rec.vjp(grad)
        if tape.adjoint_hook is not None:
            input_grads = tape.adjoint_hook(rec.name, input_grads)

        for tensor, input_grad in zip(rec.inputs, input_grads):
            if not tensor.requires_grad:
                continue
            if input_grad is None:
                input_grad = np.zeros_like(tensor.data)
            input_grad = np.asarray(input_grad, dtype=tensor.dtype)

            if tensor in tape:
                key = id(tensor)
                if key in pending:
                    pending[key] = pending[key] + input_grad
                else:
                    pending[key] = input_grad
            elif tensor.grad is None:
                tensor.grad = input_grad.copy()
            else:
                tensor.grad = tensor.grad + input_grad
