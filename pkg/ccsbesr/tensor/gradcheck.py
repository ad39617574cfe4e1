"""
Finite-difference gradient checking.

The checked function's outputs are reduced to the scalar ``sum(out * R)`` with a fixed random projection R, so
every output element contributes. Analytic gradients come from one backward pass; numeric gradients from central
differences on a sample of coordinates per input tensor.

Coordinate rules, per input tensor:
  * Only coordinates whose analytic gradient is at least 1e-3 of the tensor's largest gradient are candidates, then
    at most ``max_coords`` of them are drawn at random.
  * A candidate whose one-sided differences disagree by more than ``kink_tol`` of their size sits on a kink and is
    skipped.
  * The relative error is ``|a - n| / max(|a|, |n|, floor)`` with ``floor`` at 1% of the tensor's largest gradient,
    so a coordinate much smaller than its neighbours is held to an absolute bound instead of a relative one.
"""
import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor.core import Tensor, GradientTape, backward
from ccsbesr.tensor.ops import mul, sum_all, add


__all__ = ['GradcheckResult', 'check_gradients']


class GradcheckResult(object):
    """Outcome of one gradient check.

    Args:
        name (str): Name of the checked block.
        max_rel_error (float): Worst relative error over all checked coordinates.
        worst (tuple): (tensor name, index, analytic, numeric) of the worst coordinate or None.
        checked (int): Number of compared coordinates.
        skipped (int): Coordinates skipped because the function is not smooth there.
        tol (float): Relative error tolerance.
    """

    def __init__(self, name, max_rel_error, worst, checked, skipped, tol):
        self.name = name
        self.max_rel_error = max_rel_error
        self.worst = worst
        self.checked = checked
        self.skipped = skipped
        self.tol = tol

    @property
    def passed(self):
        return self.checked > 0 and self.max_rel_error < self.tol

    def __bool__(self):
        return self.passed

    def __repr__(self):
        return '<GradcheckResult {} {} max_rel_error={:.3e} checked={} skipped={}>'.format(
            self.name, 'PASS' if self.passed else 'FAIL', self.max_rel_error, self.checked, self.skipped)


def _as_outputs(outputs):
    if isinstance(outputs, Tensor):
        return [outputs]
    return [out for out in outputs if isinstance(out, Tensor)]


def _projected(outputs, projections):
    return float(sum(np.sum(out.data * proj) for out, proj in zip(outputs, projections)))


def check_gradients(fn, inputs, names=None, eps=1e-3, tol=1e-4, max_coords=16, seed=0,
                    adjoint_hook=None, name='', kink_tol=0.1):
    """Compare backward() against central finite differences.

    Args:
        fn (callable): Called as ``fn(*inputs)``; returns a Tensor or a sequence of Tensors.
        inputs (list): 64-bit Tensors to differentiate. They must be leaves used by fn.
        names (list)[None]: Display names of the inputs.
        eps (float)[1e-3]: Central difference step.
        tol (float)[1e-4]: Relative error tolerance.
        max_coords (int)[16]: Coordinates sampled per input tensor (0 checks all of them).
        seed (int)[0]: Seed of the projection and the coordinate sampling.
        adjoint_hook (callable)[None]: Hook installed on the tape, see GradientTape.
        name (str)['']: Result name.
        kink_tol (float)[0.1]: Coordinates whose one-sided differences disagree by more than this fraction are
            treated as non-smooth and skipped.

    Returns:
        result (GradcheckResult): Worst relative error and counts.
    """
    inputs = list(inputs)
    if names is None:
        names = ['input{}'.format(i) for i in range(len(inputs))]
    for tensor in inputs:
        if tensor.dtype != np.float64:
            raise InvalidArgumentError('Gradient checking needs float64 tensors, got {}'.format(tensor.dtype))
    rng = np.random.default_rng(seed)

    # Analytic pass
    saved_flags = [t.requires_grad for t in inputs]
    for tensor in inputs:
        tensor.requires_grad = True
        tensor.grad = None
    with GradientTape(adjoint_hook=adjoint_hook) as tape:
        outputs = _as_outputs(fn(*inputs))
        projections = [rng.standard_normal(out.shape) for out in outputs]
        loss = None
        for out, proj in zip(outputs, projections):
            term = sum_all(mul(out, Tensor(proj, dtype=np.float64)))
            loss = term if loss is None else add(loss, term)
        backward(loss, tape)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    for tensor, flag in zip(inputs, saved_flags):
        tensor.requires_grad = flag
        tensor.grad = None

    def evaluate():
        return _projected(_as_outputs(fn(*inputs)), projections)

    base = evaluate()
    max_rel, worst, checked, skipped = 0.0, None, 0, 0
    for tensor, tensor_name, grad in zip(inputs, names, analytic):
        flat_grad = grad.reshape(-1)
        largest = float(np.abs(flat_grad).max()) if flat_grad.size else 0.0
        candidates = np.flatnonzero(np.abs(flat_grad) >= 1e-3 * largest) if largest > 0 else \
            np.arange(flat_grad.size)
        if max_coords and candidates.size > max_coords:
            candidates = np.sort(rng.choice(candidates, size=max_coords, replace=False))

        tensor.data = np.ascontiguousarray(tensor.data)
        flat = tensor.data.reshape(-1)
        numeric = {}
        for index in candidates:
            original = flat[index]
            flat[index] = original + eps
            plus = evaluate()
            flat[index] = original - eps
            minus = evaluate()
            flat[index] = original

            forward_diff = (plus - base) / eps
            backward_diff = (base - minus) / eps
            spread = max(abs(forward_diff), abs(backward_diff), 1e-2 * largest, 1e-12)
            if abs(forward_diff - backward_diff) > kink_tol * spread + 1e-6 * max(abs(base), 1.0):
                skipped += 1
                continue
            numeric[int(index)] = (plus - minus) / (2 * eps)

        if not numeric:
            continue
        scale = max(largest, max(abs(v) for v in numeric.values()))
        floor = max(1e-2 * scale, 1e-10)
        for index, value in numeric.items():
            a = float(flat_grad[index])
            rel = abs(a - value) / max(abs(a), abs(value), floor)
            checked += 1
            if rel >= max_rel:
                max_rel = rel
                worst = (tensor_name, np.unravel_index(index, tensor.shape), a, value)

    return GradcheckResult(name, max_rel, worst, checked, skipped, tol)
