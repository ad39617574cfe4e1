"""
Feature extraction blocks.

Channel attention (CAB) gates channels from pooled global statistics. Spatial attention (SAB) gates positions from
channel-pooled maps. A CCSB applies CAB then SAB. The residual ASPP block widens the receptive field with dilated
convolutions. The feature extractor chains them and is shared by the left and right views.
"""
from ccsbesr.utils import InvalidArgumentError
from ccsbesr.tensor import as_tensor, add, mul, concat, sigmoid, relu, leaky_relu, \
    conv2d, dense, global_pool_spatial, pool_across_channels, \
    ParamGroup, ConvParams, make_rng, xavier_init, zeros_init


__all__ = ['LEAKY_SLOPE', 'CABParams', 'SABParams', 'CCSBParams', 'ASPPGroupParams', 'ResASPPBlockParams',
           'ResBlockParams', 'ExtractorParams', 'same_conv',
           'channel_gate', 'channel_attention', 'spatial_gate', 'spatial_attention', 'ccsb',
           'aspp_group', 'res_aspp_block', 'res_block', 'feature_extractor']


LEAKY_SLOPE = 0.1


def _require_channels(f, channels, what):
    f = as_tensor(f)
    if f.ndim != 4 or f.shape[1] != channels:
        raise InvalidArgumentError('{}: expected B x {} x H x W features, got {}'.format(what, channels, f.shape))
    return f


def same_conv(x, p, dilation=1):
    """Stride 1 convolution with the padding that keeps H and W."""
    return conv2d(x, p.weight, p.bias, stride=1, padding=dilation * (p.kernel_size - 1) // 2, dilation=dilation)


# ===== Attention =====
class CABParams(ParamGroup):
    """Shared bottleneck MLP of channel attention: w1 is C/r x C, w2 is C x C/r."""

    FIELDS = ('w1', 'b1', 'w2', 'b2')

    def __init__(self, w1, b1, w2, b2):
        self.w1 = w1
        self.b1 = b1
        self.w2 = w2
        self.b2 = b2

    @classmethod
    def create(cls, channels, reduction, rng=None):
        if reduction < 1 or channels % reduction:
            raise InvalidArgumentError('Reduction {} must divide {} channels'.format(reduction, channels))
        rng = make_rng(rng)
        hidden = channels // reduction
        return cls(xavier_init((hidden, channels), rng), zeros_init((hidden,)),
                   xavier_init((channels, hidden), rng), zeros_init((channels,)))

    @property
    def channels(self):
        return self.w1.shape[1]

    @property
    def reduction(self):
        return self.w1.shape[1] // self.w1.shape[0]


class SABParams(ParamGroup):
    """3x3 convolution from the stacked (max, mean) channel pools to one gate channel."""

    FIELDS = ('conv',)

    def __init__(self, conv):
        self.conv = conv

    @classmethod
    def create(cls, rng=None):
        return cls(ConvParams.create(1, 2, 3, rng))


class CCSBParams(ParamGroup):
    FIELDS = ('cab', 'sab')

    def __init__(self, cab, sab):
        self.cab = cab
        self.sab = sab

    @classmethod
    def create(cls, channels, reduction, rng=None):
        rng = make_rng(rng)
        return cls(CABParams.create(channels, reduction, rng), SABParams.create(rng))


def _mlp(x, p):
    return dense(relu(dense(x, p.w1, p.b1)), p.w2, p.b2)


def channel_gate(f, p):
    """Return sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))) as a B x C x 1 x 1 tensor."""
    f = _require_channels(f, p.channels, 'channel_attention')
    return sigmoid(add(_mlp(global_pool_spatial(f, 'mean'), p), _mlp(global_pool_spatial(f, 'max'), p)))


def channel_attention(f, p):
    """Scale every channel of F by its gate in (0, 1).

    Args:
        f (Tensor): B x C x H x W features.
        p (CABParams): Bottleneck MLP for C channels.

    Returns:
        out (Tensor): B x C x H x W.

    Raises:
        InvalidArgumentError: If C does not match the parameters.
    """
    f = as_tensor(f)
    return mul(f, channel_gate(f, p))


def spatial_gate(f, p):
    """Return the B x 1 x H x W spatial attention map."""
    f = as_tensor(f)
    if f.ndim != 4:
        raise InvalidArgumentError('spatial_attention: expected B x C x H x W features, got {}'.format(f.shape))
    pooled = concat([pool_across_channels(f, 'max'), pool_across_channels(f, 'mean')], axis=1)
    return sigmoid(same_conv(pooled, p.conv))


def spatial_attention(f, p):
    """Scale every position of F by a gate computed from its channel max and mean."""
    f = as_tensor(f)
    return mul(f, spatial_gate(f, p))


def ccsb(f, p):
    """Combined channel and spatial attention: spatial_attention(channel_attention(F))."""
    return spatial_attention(channel_attention(f, p.cab), p.sab)


# ===== Residual ASPP =====
class ASPPGroupParams(ParamGroup):
    """Parallel dilated 3x3 branches and the 1x1 fusion conv. ``dilations`` is structure, not a parameter."""

    FIELDS = ('branches', 'fuse')

    def __init__(self, branches, fuse, dilations):
        if len(branches) != len(dilations):
            raise InvalidArgumentError('{} branches for {} dilations'.format(len(branches), len(dilations)))
        self.branches = list(branches)
        self.fuse = fuse
        self.dilations = tuple(int(d) for d in dilations)

    @classmethod
    def create(cls, channels, dilations=(1, 4, 8), rng=None):
        rng = make_rng(rng)
        branches = [ConvParams.create(channels, channels, 3, rng) for _ in dilations]
        fuse = ConvParams.create(channels, channels * len(dilations), 1, rng)
        return cls(branches, fuse, dilations)


class ResASPPBlockParams(ParamGroup):
    FIELDS = ('groups',)

    def __init__(self, groups):
        self.groups = list(groups)

    @classmethod
    def create(cls, channels, num_groups=3, dilations=(1, 4, 8), rng=None):
        rng = make_rng(rng)
        return cls([ASPPGroupParams.create(channels, dilations, rng) for _ in range(num_groups)])


class ResBlockParams(ParamGroup):
    FIELDS = ('conv1', 'conv2')

    def __init__(self, conv1, conv2):
        self.conv1 = conv1
        self.conv2 = conv2

    @classmethod
    def create(cls, channels, rng=None):
        rng = make_rng(rng)
        return cls(ConvParams.create(channels, channels, 3, rng), ConvParams.create(channels, channels, 3, rng))


def aspp_group(f, p):
    """F + fuse(concat[leaky_relu(conv_d(F)) for each dilation d])."""
    f = _require_channels(f, p.fuse.out_channels, 'aspp_group')
    branches = [leaky_relu(same_conv(f, branch, d), LEAKY_SLOPE) for branch, d in zip(p.branches, p.dilations)]
    return add(f, same_conv(concat(branches, axis=1), p.fuse))


def res_aspp_block(f, p):
    """Cascade of residual ASPP groups.

    Each group adds its residual onto the running features, so the block output is F plus the sum of all group
    residuals and the block is the identity when every weight is zero.
    """
    out = as_tensor(f)
    for group in p.groups:
        out = aspp_group(out, group)
    return out


def res_block(f, p):
    """F + conv(leaky_relu(conv(F)))."""
    f = _require_channels(f, p.conv1.in_channels, 'res_block')
    return add(f, same_conv(leaky_relu(same_conv(f, p.conv1), LEAKY_SLOPE), p.conv2))


# ===== Feature extractor =====
class ExtractorParams(ParamGroup):
    """Stem conv (3 -> C), one CCSB and the (residual ASPP block, residual block) pairs."""

    FIELDS = ('stem', 'ccsb', 'aspp_blocks', 'res_blocks')

    def __init__(self, stem, ccsb, aspp_blocks, res_blocks):
        if len(aspp_blocks) != len(res_blocks):
            raise InvalidArgumentError('Each residual ASPP block needs one residual block')
        self.stem = stem
        self.ccsb = ccsb
        self.aspp_blocks = list(aspp_blocks)
        self.res_blocks = list(res_blocks)

    @classmethod
    def create(cls, channels, reduction=16, pairs=2, aspp_groups=3, dilations=(1, 4, 8), rng=None):
        rng = make_rng(rng)
        stem = ConvParams.create(channels, 3, 3, rng)
        block = CCSBParams.create(channels, reduction, rng)
        aspp_blocks, res_blocks = [], []
        for _ in range(pairs):
            aspp_blocks.append(ResASPPBlockParams.create(channels, aspp_groups, dilations, rng))
            res_blocks.append(ResBlockParams.create(channels, rng))
        return cls(stem, block, aspp_blocks, res_blocks)

    @property
    def channels(self):
        return self.stem.out_channels


def feature_extractor(img, p):
    """Map a B x 3 x H x W image to B x C x H x W features.

    Args:
        img (Tensor): RGB image batch in [0, 1].
        p (ExtractorParams): Extractor parameters, shared by both views.

    Returns:
        features (Tensor): B x C x H x W.
    """
    img = _require_channels(img, 3, 'feature_extractor')
    out = ccsb(same_conv(img, p.stem), p.ccsb)
    for aspp_block, block in zip(p.aspp_blocks, p.res_blocks):
        out = res_block(res_aspp_block(out, aspp_block), block)
    return out
