"""
Training loss: super-resolution term, parallax attention terms and stereo consistency.
"""
import logging

import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor import Tensor, as_tensor, add, sub, mul, scale, square, absolute, sum_all, mean_all, \
    crop_axis, diff_axis, repeat_axis
from ccsbesr.pam import warp


__all__ = ['LossBreakdown', 'sr_loss', 'pam_loss', 'stereo_consistency_loss', 'total_loss', 'upscale_maps',
           'masked_mean_abs']


LOG = logging.getLogger(__name__)


class LossBreakdown(object):
    """Scalar loss terms of one step.

    ``l_pam`` is the sum of the photometric, smoothness and cycle terms. ``total`` is the weighted sum of
    ``l_sr``, ``l_pam`` and ``l_stereo``.
    """

    FIELDS = ('l_sr', 'l_photometric', 'l_smooth', 'l_cycle', 'l_pam', 'l_stereo', 'total')

    def __init__(self, l_sr=0.0, l_photometric=0.0, l_smooth=0.0, l_cycle=0.0, l_stereo=0.0, weights=(1.0, 1.0, 1.0)):
        self.l_sr = float(l_sr)
        self.l_photometric = float(l_photometric)
        self.l_smooth = float(l_smooth)
        self.l_cycle = float(l_cycle)
        self.l_pam = self.l_photometric + self.l_smooth + self.l_cycle
        self.l_stereo = float(l_stereo)
        self.weights = tuple(float(w) for w in weights)
        w_sr, w_pam, w_stereo = self.weights
        self.total = w_sr * self.l_sr + w_pam * self.l_pam + w_stereo * self.l_stereo

    def as_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}

    def __repr__(self):
        return 'LossBreakdown({})'.format(', '.join('{}={:.6g}'.format(k, v) for k, v in self.as_dict().items()))


def _require_same(*tensors, what):
    shapes = [t.shape for t in tensors]
    if any(shape != shapes[0] for shape in shapes[1:]):
        raise InvalidArgumentError('{}: shape mismatch {}'.format(what, shapes))


def masked_mean_abs(diff, mask, what='loss'):
    """Mean of |diff| over the positions where the B x 1 x H x W mask is 1 (all channels).

    Returns None when the mask is empty.
    """
    mask_data = np.asarray(mask.data if isinstance(mask, Tensor) else mask)
    count = float(mask_data.sum()) * diff.shape[1]
    if count == 0:
        LOG.warning('%s: valid mask is empty, the term contributes 0', what)
        return None
    gate = Tensor(mask_data, dtype=diff.dtype)
    return scale(sum_all(mul(absolute(diff), gate)), 1.0 / count)


def _zero(dtype):
    return Tensor(np.zeros((), dtype=dtype), dtype=dtype)


def _sum_terms(terms, dtype):
    terms = [t for t in terms if t is not None]
    if not terms:
        return _zero(dtype)
    out = terms[0]
    for term in terms[1:]:
        out = add(out, term)
    return out


def sr_loss(sr_l, sr_r, hr_l, hr_r):
    """Mean squared error averaged over both views."""
    sr_l, sr_r, hr_l, hr_r = (as_tensor(t) for t in (sr_l, sr_r, hr_l, hr_r))
    _require_same(sr_l, sr_r, hr_l, hr_r, what='sr_loss')
    return scale(add(mean_all(square(sub(sr_l, hr_l))), mean_all(square(sub(sr_r, hr_r)))), 0.5)


def _identity_like(m):
    width = m.shape[-1]
    return Tensor(np.broadcast_to(np.eye(width, dtype=m.dtype), m.shape), dtype=m.dtype)


def _smoothness(m):
    """Mean |m[h + 1] - m[h]| plus mean |m[i + 1, j + 1] - m[i, j]|."""
    width = m.shape[-1]
    vertical = mean_all(absolute(diff_axis(m, 1)))
    shifted = crop_axis(crop_axis(m, 2, 1, width), 3, 1, width)
    base = crop_axis(crop_axis(m, 2, 0, width - 1), 3, 0, width - 1)
    horizontal = mean_all(absolute(sub(shifted, base)))
    return add(vertical, horizontal)


def pam_loss(maps, lr_l, lr_r):
    """Parallax attention loss terms.

    Args:
        maps (AttentionMaps): Maps from the forward pass at LR resolution.
        lr_l (Tensor): B x 3 x H x W left LR view.
        lr_r (Tensor): B x 3 x H x W right LR view.

    Returns:
        l_photometric (Tensor): Masked mean |warp(m_r2l, lr_r) - lr_l| plus the mirrored term.
        l_smooth (Tensor): Smoothness of both maps along rows and along the diagonal.
        l_cycle (Tensor): Masked mean |cycle - I| over both cycle maps.
    """
    lr_l, lr_r = as_tensor(lr_l), as_tensor(lr_r)
    _require_same(lr_l, lr_r, what='pam_loss')
    batch, _, height, width = lr_l.shape
    if maps.m_r2l.shape != (batch, height, width, width):
        raise InvalidArgumentError('pam_loss: maps {} do not match images {}'.format(maps.m_r2l.shape, lr_l.shape))
    dtype = maps.m_r2l.dtype

    photometric = _sum_terms([
        masked_mean_abs(sub(warp(maps.m_r2l, lr_r), lr_l), maps.v_left, 'pam_loss photometric (left)'),
        masked_mean_abs(sub(warp(maps.m_l2r, lr_l), lr_r), maps.v_right, 'pam_loss photometric (right)'),
        ], dtype)

    smooth = add(_smoothness(maps.m_r2l), _smoothness(maps.m_l2r))

    # Row i of a cycle map is kept when position i of its view is valid
    row_l = np.repeat(maps.v_left.data[:, 0, :, :, None], width, axis=3)
    row_r = np.repeat(maps.v_right.data[:, 0, :, :, None], width, axis=3)
    count = float(row_l.sum() + row_r.sum())
    if count == 0:
        LOG.warning('pam_loss cycle: valid masks are empty, the term contributes 0')
        cycle = _zero(dtype)
    else:
        cycle_l = sum_all(mul(absolute(sub(maps.cycle_l, _identity_like(maps.cycle_l))), Tensor(row_l, dtype=dtype)))
        cycle_r = sum_all(mul(absolute(sub(maps.cycle_r, _identity_like(maps.cycle_r))), Tensor(row_r, dtype=dtype)))
        cycle = scale(add(cycle_l, cycle_r), 1.0 / count)
    return photometric, smooth, cycle


def upscale_maps(m, s):
    """Upscale a B x H x W x W map to B x sH x sW x sW.

    Entries are replicated by nearest neighbor along H, i and j. Within every s x s block only the entries with
    equal sub-pixel phase (i mod s == j mod s) are kept, which renormalizes every row to a sum of 1 and maps the
    identity to the identity.
    """
    m = as_tensor(m)
    s = int(s)
    if s < 1:
        raise InvalidArgumentError('upscale_maps: scale must be >= 1, got {}'.format(s))
    out = repeat_axis(repeat_axis(repeat_axis(m, 1, s), 2, s), 3, s)
    positions = np.arange(m.shape[-1] * s) % s
    phase = (positions[:, None] == positions[None, :]).astype(m.dtype)
    return mul(out, Tensor(phase[None, None], dtype=m.dtype))


def _upscale_mask(mask, s):
    data = np.repeat(np.repeat(np.asarray(mask.data), s, axis=2), s, axis=3)
    return Tensor(data, dtype=mask.dtype)


def stereo_consistency_loss(sr_l, sr_r, maps):
    """Masked mean |warp(up(m_r2l), sr_r) - sr_l| plus the mirrored term at SR resolution."""
    sr_l, sr_r = as_tensor(sr_l), as_tensor(sr_r)
    _require_same(sr_l, sr_r, what='stereo_consistency_loss')
    batch, height, width, _ = maps.m_r2l.shape
    if sr_l.ndim != 4 or sr_l.shape[0] != batch or sr_l.shape[2] % height or sr_l.shape[3] % width:
        raise InvalidArgumentError('stereo_consistency_loss: SR images {} incompatible with maps {}'
                                   .format(sr_l.shape, maps.m_r2l.shape))
    s = sr_l.shape[3] // width
    if sr_l.shape[2] != s * height:
        raise InvalidArgumentError('stereo_consistency_loss: unequal scale factors for {} and maps {}'
                                   .format(sr_l.shape, maps.m_r2l.shape))

    up_r2l = upscale_maps(maps.m_r2l, s)
    up_l2r = upscale_maps(maps.m_l2r, s)
    return _sum_terms([
        masked_mean_abs(sub(warp(up_r2l, sr_r), sr_l), _upscale_mask(maps.v_left, s), 'stereo loss (left)'),
        masked_mean_abs(sub(warp(up_l2r, sr_l), sr_r), _upscale_mask(maps.v_right, s), 'stereo loss (right)'),
        ], maps.m_r2l.dtype)


def total_loss(sr_l, sr_r, hr_l, hr_r, lr_l, lr_r, maps, weights=(1.0, 1.0, 1.0), terms=('sr', 'pam', 'stereo')):
    """Weighted sum of the loss terms.

    Args:
        sr_l, sr_r (Tensor): Network outputs.
        hr_l, hr_r (Tensor): Ground truth HR views.
        lr_l, lr_r (Tensor): LR inputs.
        maps (AttentionMaps): Maps from the forward pass.
        weights (tuple)[(1, 1, 1)]: Weights of the SR, PAM and stereo terms.
        terms (tuple)[('sr', 'pam', 'stereo')]: Enabled terms. Disabled terms are reported as 0.

    Returns:
        loss (Tensor): Differentiable scalar.
        breakdown (LossBreakdown): Float values of every term.
    """
    w_sr, w_pam, w_stereo = weights
    dtype = as_tensor(sr_l).dtype
    zero = _zero(dtype)

    l_sr = sr_loss(sr_l, sr_r, hr_l, hr_r) if 'sr' in terms else zero
    if 'pam' in terms:
        l_photo, l_smooth, l_cycle = pam_loss(maps, lr_l, lr_r)
    else:
        l_photo = l_smooth = l_cycle = zero
    l_stereo = stereo_consistency_loss(sr_l, sr_r, maps) if 'stereo' in terms else zero

    l_pam = add(add(l_photo, l_smooth), l_cycle)
    loss = add(add(scale(l_sr, w_sr), scale(l_pam, w_pam)), scale(l_stereo, w_stereo))
    breakdown = LossBreakdown(l_sr.item(), l_photo.item(), l_smooth.item(), l_cycle.item(), l_stereo.item(), weights)
    return loss, breakdown
