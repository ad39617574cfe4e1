import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor.core import Tensor


__all__ = ['AdamState', 'adam_step', 'Adam']


class AdamState(object):
    """Moment estimates and step counter of the Adam update rule.

    Args:
        lr (float)[3e-4]: Learning rate.
        beta1 (float)[0.9]: First moment decay.
        beta2 (float)[0.999]: Second moment decay.
        eps (float)[1e-8]: Denominator offset.
        step (int)[0]: Number of updates applied so far.
        m (list)[None]: First moment per parameter. Created as zeros on the first update.
        v (list)[None]: Second moment per parameter. Created as zeros on the first update.
    """

    def __init__(self, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8, step=0, m=None, v=None):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = int(step)
        self.m = m
        self.v = v

    def copy(self):
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         None if self.m is None else [m.copy() for m in self.m],
                         None if self.v is None else [v.copy() for v in self.v])

    def __repr__(self):
        return 'AdamState(lr={}, beta1={}, beta2={}, eps={}, step={})'.format(
            self.lr, self.beta1, self.beta2, self.eps, self.step)


def _values(items):
    return [np.asarray(item.data if isinstance(item, Tensor) else item) for item in items]


def adam_step(params, grads, state):
    """Apply one bias-corrected Adam update without mutating the arguments.

    Args:
        params (list): Parameter arrays or Tensors.
        grads (list): Gradient arrays, one per parameter.
        state (AdamState): Current optimizer state.

    Returns:
        new_params (list): Updated parameter arrays.
        new_state (AdamState): State with the step counter advanced by one.

    Raises:
        InvalidArgumentError: If counts or shapes of params, grads and moments disagree.
    """
    params = _values(params)
    grads = _values(grads)
    if len(params) != len(grads):
        raise InvalidArgumentError('adam_step: {} parameters but {} gradients'.format(len(params), len(grads)))
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise InvalidArgumentError('adam_step: parameter {} has shape {} but gradient {}'
                                       .format(i, p.shape, g.shape))

    new_state = state.copy()
    if new_state.m is None:
        new_state.m = [np.zeros_like(p) for p in params]
        new_state.v = [np.zeros_like(p) for p in params]
    if len(new_state.m) != len(params) or any(m.shape != p.shape for m, p in zip(new_state.m, params)):
        raise InvalidArgumentError('adam_step: moment shapes do not match the parameters')

    new_state.step += 1
    beta1, beta2 = new_state.beta1, new_state.beta2
    correction1 = 1.0 - beta1 ** new_state.step
    correction2 = 1.0 - beta2 ** new_state.step

    new_params = []
    for i, (p, g) in enumerate(zip(params, grads)):
        m = beta1 * new_state.m[i] + (1.0 - beta1) * g
        v = beta2 * new_state.v[i] + (1.0 - beta2) * (g * g)
        new_state.m[i] = m.astype(p.dtype)
        new_state.v[i] = v.astype(p.dtype)
        update = new_state.lr * (m / correction1) / (np.sqrt(v / correction2) + new_state.eps)
        new_params.append((p - update).astype(p.dtype))
    return new_params, new_state


class Adam(object):
    """Adam optimizer bound to a list of parameter tensors (or a ParamGroup).

    Args:
        params (list/ParamGroup): Tensors to update in place.
        lr (float)[3e-4]: Learning rate.
        beta1 (float)[0.9]: First moment decay.
        beta2 (float)[0.999]: Second moment decay.
        eps (float)[1e-8]: Denominator offset.
    """

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if hasattr(params, 'parameters'):
            params = params.parameters()
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def zero_grad(self):
        for tensor in self.params:
            tensor.grad = None

    def step(self):
        """Update every parameter from its accumulated gradient. Missing gradients count as zero."""
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in self.params]
        new_params, self.state = adam_step(self.params, grads, self.state)
        for tensor, value in zip(self.params, new_params):
            tensor.data = value
        return self.state
