"""
Parallax attention between the two views of a rectified stereo pair.

Attention is computed independently per epipolar row. For row h the map ``m_r2l[b, h, i, :]`` distributes left
column i over the right columns, and ``m_l2r`` does the reverse. Both maps are row-stochastic.
"""
from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor import Tensor, as_tensor, add, scale, concat, batched_width_scores, softmax_last_axis, \
    transpose_last_two, matmul_last_two, apply_width_attention, ParamGroup, ConvParams, make_rng
from ccsbesr.blocks import ResBlockParams, res_block, same_conv


__all__ = ['DEFAULT_TAU', 'PAMParams', 'AttentionMaps', 'pam_scores', 'attention_from_scores', 'warp',
           'cycle_maps', 'valid_mask', 'pam_forward']


DEFAULT_TAU = 0.1


class PAMParams(ParamGroup):
    """Transition residual block, 1x1 query and key convs and the 1x1 fusion conv ((2C + 1) -> C).

    The transition block and the fusion conv are applied to both views.
    """

    FIELDS = ('transition', 'query', 'key', 'fuse')

    def __init__(self, transition, query, key, fuse):
        self.transition = transition
        self.query = query
        self.key = key
        self.fuse = fuse

    @classmethod
    def create(cls, channels, rng=None):
        rng = make_rng(rng)
        return cls(ResBlockParams.create(channels, rng),
                   ConvParams.create(channels, channels, 1, rng),
                   ConvParams.create(channels, channels, 1, rng),
                   ConvParams.create(channels, 2 * channels + 1, 1, rng))

    @property
    def channels(self):
        return self.query.out_channels


class AttentionMaps(object):
    """Products of the parallax attention module.

    Args:
        m_r2l (Tensor): B x H x W x W, left column i attends right column j.
        m_l2r (Tensor): B x H x W x W, right column j attends left column i.
        cycle_l (Tensor): m_r2l @ m_l2r per row (left -> right -> left).
        cycle_r (Tensor): m_l2r @ m_r2l per row.
        v_left (Tensor): B x 1 x H x W binary mask of left positions visible from the right view.
        v_right (Tensor): B x 1 x H x W binary mask of right positions visible from the left view.
        tau (float): Mask threshold.
    """

    def __init__(self, m_r2l, m_l2r, cycle_l, cycle_r, v_left, v_right, tau):
        self.m_r2l = m_r2l
        self.m_l2r = m_l2r
        self.cycle_l = cycle_l
        self.cycle_r = cycle_r
        self.v_left = v_left
        self.v_right = v_right
        self.tau = tau

    @classmethod
    def from_maps(cls, m_r2l, m_l2r, tau=DEFAULT_TAU):
        """Derive the cycle maps and valid masks from the two attention maps."""
        m_r2l, m_l2r = as_tensor(m_r2l), as_tensor(m_l2r)
        cycle_l, cycle_r = cycle_maps(m_r2l, m_l2r)
        return cls(m_r2l, m_l2r, cycle_l, cycle_r, valid_mask(m_l2r, tau), valid_mask(m_r2l, tau), tau)

    @property
    def shape(self):
        return self.m_r2l.shape

    def swapped(self):
        """Return the maps seen with the two views exchanged."""
        return AttentionMaps(self.m_l2r, self.m_r2l, self.cycle_r, self.cycle_l, self.v_right, self.v_left, self.tau)

    def __repr__(self):
        return '<AttentionMaps shape={} tau={}>'.format(self.shape, self.tau)


def _require_pair(f_left, f_right, what):
    f_left, f_right = as_tensor(f_left), as_tensor(f_right)
    if f_left.ndim != 4 or f_left.shape != f_right.shape:
        raise InvalidArgumentError('{}: left {} and right {} features must share one B x C x H x W shape'
                                   .format(what, f_left.shape, f_right.shape))
    return f_left, f_right


def pam_scores(f_left, f_right, p):
    """Row-wise correspondence scores between left column i and right column j.

    Query and key features come from the shared transition block followed by the 1x1 query/key convs. The score is
    the mean of q_left . k_right and k_left . q_right, so exchanging the views transposes the score matrix.

    Args:
        f_left (Tensor): B x C x H x W left features.
        f_right (Tensor): B x C x H x W right features.
        p (PAMParams): Module parameters.

    Returns:
        scores (Tensor): B x H x W x W.
    """
    f_left, f_right = _require_pair(f_left, f_right, 'pam_scores')
    t_left = res_block(f_left, p.transition)
    t_right = res_block(f_right, p.transition)
    forward = batched_width_scores(same_conv(t_left, p.query), same_conv(t_right, p.key))
    reverse = transpose_last_two(batched_width_scores(same_conv(t_right, p.query), same_conv(t_left, p.key)))
    return scale(add(forward, reverse), 0.5)


def attention_from_scores(scores):
    """Return (m_r2l, m_l2r). The transpose is taken before the softmax so both maps are row-stochastic."""
    scores = as_tensor(scores)
    return softmax_last_axis(scores), softmax_last_axis(transpose_last_two(scores))


def warp(m, f):
    """out[b, c, h, i] = sum_j m[b, h, i, j] f[b, c, h, j]."""
    return apply_width_attention(m, f)


def cycle_maps(m_r2l, m_l2r):
    """Return (m_r2l @ m_l2r, m_l2r @ m_r2l) per epipolar row."""
    m_r2l, m_l2r = as_tensor(m_r2l), as_tensor(m_l2r)
    if m_r2l.shape != m_l2r.shape:
        raise InvalidArgumentError('cycle_maps: map shapes {} and {} differ'.format(m_r2l.shape, m_l2r.shape))
    return matmul_last_two(m_r2l, m_l2r), matmul_last_two(m_l2r, m_r2l)


def valid_mask(m, tau=DEFAULT_TAU):
    """Binary B x 1 x H x W mask: position j is valid when the column sum of m over rows exceeds tau.

    The mask is a constant and never recorded on a gradient tape.
    """
    m = as_tensor(m)
    if not tau > 0:
        raise InvalidArgumentError('valid_mask: tau must be > 0, got {}'.format(tau))
    if m.ndim != 4 or m.shape[2] != m.shape[3]:
        raise InvalidArgumentError('valid_mask: expected a B x H x W x W map, got {}'.format(m.shape))
    mask = (m.data.sum(axis=2) > tau)[:, None, :, :]
    return Tensor(mask.astype(m.dtype), dtype=m.dtype)


def pam_forward(f_left, f_right, p, tau=DEFAULT_TAU):
    """Exchange information between the views.

    Args:
        f_left (Tensor): B x C x H x W left features.
        f_right (Tensor): B x C x H x W right features.
        p (PAMParams): Module parameters.
        tau (float)[0.1]: Valid mask threshold.

    Returns:
        out_left (Tensor): fuse(concat[f_left, warp(m_r2l, f_right), v_left]).
        out_right (Tensor): fuse(concat[f_right, warp(m_l2r, f_left), v_right]).
        maps (AttentionMaps): Maps, cycle maps and masks for the loss.
    """
    f_left, f_right = _require_pair(f_left, f_right, 'pam_forward')
    if f_left.shape[1] != p.channels:
        raise InvalidArgumentError('pam_forward: {} channels, parameters expect {}'
                                   .format(f_left.shape[1], p.channels))
    m_r2l, m_l2r = attention_from_scores(pam_scores(f_left, f_right, p))
    maps = AttentionMaps.from_maps(m_r2l, m_l2r, tau)

    out_left = same_conv(concat([f_left, warp(m_r2l, f_right), maps.v_left], axis=1), p.fuse)
    out_right = same_conv(concat([f_right, warp(m_l2r, f_left), maps.v_right], axis=1), p.fuse)
    return out_left, out_right, maps
