"""
Finite-difference check suite over every block of the network.

Each registered check builds a small 64-bit instance of one block and returns ``(fn, inputs, names)`` for
:func:`ccsbesr.tensor.check_gradients`. The module itself is callable and runs the suite::

    from ccsbesr import gradcheck
    results = gradcheck(names=['cab', 'pam_scores'])
"""
import sys
import logging
from collections import OrderedDict

import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.config import ModelConfig
from ccsbesr.tensor import Tensor, make_rng, softmax_last_axis, check_gradients
from ccsbesr.blocks import CABParams, SABParams, CCSBParams, ASPPGroupParams, ResASPPBlockParams, ResBlockParams, \
    ExtractorParams, channel_attention, spatial_attention, ccsb, aspp_group, res_aspp_block, res_block, \
    feature_extractor
from ccsbesr.pam import PAMParams, AttentionMaps, pam_scores, attention_from_scores, warp, pam_forward
from ccsbesr.model import UpsamplerParams, init_model, upsampler, forward
from ccsbesr.losses import total_loss


__all__ = ['GRADCHECK_CONFIG', 'GRADCHECK_EXTENT', 'CHECKS', 'register_check', 'remove_check', 'get_check',
           'check_names', 'corrupt_adjoint', 'run_gradcheck', 'format_report']


LOG = logging.getLogger(__name__)

MY_MODULE = sys.modules[__name__]

GRADCHECK_CONFIG = ModelConfig(channels=8, reduction=2, aspp_groups=1, extraction_pairs=1, upsampler_ccsbs=1)
GRADCHECK_EXTENT = 8

CHECKS = OrderedDict()


def register_check(name, check_func=None):
    """Register a gradient check.

    Args:
        name (str): Block name shown in the report.
        check_func (callable)[None]: If None decorator. Function taking (config, rng) and returning
            (fn, inputs, names).

    Returns:
        check_func (callable): Decorator or check_func.
    """
    if check_func is None:
        def decorator(check_func):
            return register_check(name, check_func)
        return decorator

    CHECKS[name] = check_func
    return check_func


def remove_check(name):
    """Remove a registered check."""
    CHECKS.pop(name, None)


def get_check(name):
    try:
        return CHECKS[name]
    except KeyError as err:
        raise InvalidArgumentError('Unknown gradient check "{}". Available: {}'
                                   .format(name, ', '.join(CHECKS))) from err


def check_names():
    return list(CHECKS)


# ===== Helpers =====
def _features(rng, channels, extent=GRADCHECK_EXTENT, batch=1):
    return Tensor(rng.standard_normal((batch, channels, extent, extent)), requires_grad=True, dtype=np.float64)


def _images(rng, extent=GRADCHECK_EXTENT, batch=1):
    return Tensor(rng.uniform(0, 1, (batch, 3, extent, extent)), requires_grad=True, dtype=np.float64)


def _block(params, fn, *tensors):
    """Check fn(*tensors, params) against the block inputs and every parameter."""
    params = params.astype(np.float64)
    names = ['input{}'.format(i) for i in range(len(tensors))]
    named = list(params.named_parameters())
    inputs = list(tensors) + [tensor for _, tensor in named]
    names += [name for name, _ in named]
    return (lambda *args: fn(*tensors, params)), inputs, names


# ===== Checks =====
@register_check('cab')
def check_cab(config, rng):
    return _block(CABParams.create(config.channels, config.reduction, rng), channel_attention,
                  _features(rng, config.channels))


@register_check('sab')
def check_sab(config, rng):
    return _block(SABParams.create(rng), spatial_attention, _features(rng, config.channels))


@register_check('ccsb')
def check_ccsb(config, rng):
    return _block(CCSBParams.create(config.channels, config.reduction, rng), ccsb, _features(rng, config.channels))


@register_check('aspp_group')
def check_aspp_group(config, rng):
    return _block(ASPPGroupParams.create(config.channels, config.dilations, rng), aspp_group,
                  _features(rng, config.channels))


@register_check('res_aspp_block')
def check_res_aspp_block(config, rng):
    params = ResASPPBlockParams.create(config.channels, max(config.aspp_groups, 2), config.dilations, rng)
    return _block(params, res_aspp_block, _features(rng, config.channels))


@register_check('res_block')
def check_res_block(config, rng):
    return _block(ResBlockParams.create(config.channels, rng), res_block, _features(rng, config.channels))


@register_check('feature_extractor')
def check_feature_extractor(config, rng):
    params = ExtractorParams.create(config.channels, config.reduction, config.extraction_pairs, config.aspp_groups,
                                    config.dilations, rng)
    return _block(params, feature_extractor, _images(rng))


@register_check('pam_scores')
def check_pam_scores(config, rng):
    return _block(PAMParams.create(config.channels, rng), pam_scores,
                  _features(rng, config.channels), _features(rng, config.channels))


@register_check('softmax')
def check_softmax(config, rng):
    scores = Tensor(rng.standard_normal((1, 4, GRADCHECK_EXTENT, GRADCHECK_EXTENT)), requires_grad=True,
                    dtype=np.float64)
    return (lambda s: attention_from_scores(s)), [scores], ['scores']


@register_check('warp')
def check_warp(config, rng):
    width = GRADCHECK_EXTENT
    m = Tensor(rng.standard_normal((1, 4, width, width)), requires_grad=True, dtype=np.float64)
    f = Tensor(rng.standard_normal((1, 3, 4, width)), requires_grad=True, dtype=np.float64)
    return (lambda m, f: warp(softmax_last_axis(m), f)), [m, f], ['scores', 'features']


@register_check('pam_fusion')
def check_pam_fusion(config, rng):
    params = PAMParams.create(config.channels, rng)

    def fn(f_left, f_right, p):
        out_left, out_right, _ = pam_forward(f_left, f_right, p, config.tau)
        return out_left, out_right
    return _block(params, fn, _features(rng, config.channels), _features(rng, config.channels))


@register_check('upsampler')
def check_upsampler(config, rng):
    params = UpsamplerParams.create(config.channels, config.reduction, config.scale, config.upsampler_ccsbs, rng)
    return _block(params, lambda f, p: upsampler(f, p, config.scale), _features(rng, config.channels))


@register_check('total_loss')
def check_total_loss(config, rng):
    s, extent = config.scale, GRADCHECK_EXTENT
    lr_left, lr_right = rng.uniform(0, 1, (2, 1, 3, extent, extent))
    hr_left, hr_right = rng.uniform(0, 1, (2, 1, 3, s * extent, s * extent))
    sr_left = Tensor(rng.uniform(0, 1, hr_left.shape), requires_grad=True, dtype=np.float64)
    sr_right = Tensor(rng.uniform(0, 1, hr_right.shape), requires_grad=True, dtype=np.float64)
    scores = Tensor(rng.standard_normal((1, extent, extent, extent)), requires_grad=True, dtype=np.float64)

    def fn(sr_left, sr_right, scores):
        maps = AttentionMaps.from_maps(*attention_from_scores(scores), tau=config.tau)
        loss, _ = total_loss(sr_left, sr_right, hr_left, hr_right, lr_left, lr_right, maps)
        return loss
    return fn, [sr_left, sr_right, scores], ['sr_left', 'sr_right', 'scores']


@register_check('model')
def check_model(config, rng):
    params = init_model(config.replace(seed=int(rng.integers(0, 2 ** 31)))).astype(np.float64)

    def fn(lr_left, lr_right, p):
        sr_left, sr_right, _ = forward(p, lr_left, lr_right)
        return sr_left, sr_right
    return _block(params, fn, _images(rng), _images(rng))


# ===== Runner =====
def corrupt_adjoint(op_name, factor=1.5):
    """Return a tape adjoint hook that scales the input gradients of one operation."""
    def hook(name, grads):
        if name != op_name:
            return grads
        return tuple(None if g is None else g * factor for g in grads)
    return hook


def run_gradcheck(config=None, names=None, corrupt_op=None, eps=1e-3, tol=1e-4, max_coords=16, seed=0):
    """Run the registered checks.

    Args:
        config (ModelConfig)[None]: Block sizes. Defaults to GRADCHECK_CONFIG (C = 8, r = 2).
        names (list)[None]: Checks to run. Defaults to every registered check.
        corrupt_op (str)[None]: Operation whose adjoint is scaled by 1.5 (negative control).
        eps (float)[1e-3]: Central difference step.
        tol (float)[1e-4]: Relative error tolerance.
        max_coords (int)[16]: Coordinates sampled per tensor.
        seed (int)[0]: Seed of the block parameters, inputs and sampled coordinates.

    Returns:
        results (list): GradcheckResult per check in registration order.
    """
    config = (config or GRADCHECK_CONFIG).validate()
    names = list(names or CHECKS)
    hook = corrupt_adjoint(corrupt_op) if corrupt_op else None

    results = []
    for i, name in enumerate(names):
        fn, inputs, input_names = get_check(name)(config, make_rng([seed, i]))
        result = check_gradients(fn, inputs, input_names, eps=eps, tol=tol, max_coords=max_coords, seed=seed,
                                 adjoint_hook=hook, name=name)
        LOG.info('%s', result)
        results.append(result)
    return results


def format_report(results):
    """One line per check: name, PASS/FAIL, worst relative error and the worst coordinate."""
    width = max([len(r.name) for r in results] + [4])
    lines = []
    for r in results:
        line = '{:<{}}  {}  max_rel_error={:.3e}  checked={}  skipped={}'.format(
            r.name, width, 'PASS' if r.passed else 'FAIL', r.max_rel_error, r.checked, r.skipped)
        if not r.passed and r.worst is not None:
            line += '  worst={}{} analytic={:.6g} numeric={:.6g}'.format(r.worst[0], list(r.worst[1]), *r.worst[2:])
        lines.append(line)
    return '\n'.join(lines)


class GradcheckModule(MY_MODULE.__class__):
    """Make this module callable."""
    def __call__(self, config=None, names=None, corrupt_op=None, eps=1e-3, tol=1e-4, max_coords=16, seed=0):
        """Run the registered gradient checks and return their GradcheckResults."""
        return run_gradcheck(config, names, corrupt_op, eps, tol, max_coords, seed)


# Override the module make it callable
try:
    MY_MODULE.__class__ = GradcheckModule  # Override __class__ (Python 3.6+)
    MY_MODULE.__doc__ = GradcheckModule.__call__.__doc__
except (TypeError, Exception):
    # < Python 3.6 Create the module and make the attributes accessible
    sys.modules[__name__] = MY_MODULE = GradcheckModule(__name__)
    for ATTR in __all__:
        setattr(MY_MODULE, ATTR, vars()[ATTR])
