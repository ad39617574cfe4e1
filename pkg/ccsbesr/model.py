"""
The full stereo super-resolution network.

Both views pass through the shared feature extractor, exchange information in the parallax attention module and
are upsampled by the shared upsampler.
"""
import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.config import ModelConfig
from ccsbesr.tensor import Tensor, as_tensor, pixel_shuffle, ParamGroup, ConvParams, make_rng
from ccsbesr.blocks import CCSBParams, ExtractorParams, ccsb, feature_extractor, same_conv
from ccsbesr.pam import PAMParams, pam_forward


__all__ = ['MIN_EXTENT', 'ModelConfig', 'UpsamplerParams', 'CCSBESRParams', 'init_model', 'upsampler', 'forward']


MIN_EXTENT = 8


class UpsamplerParams(ParamGroup):
    """CCSBs, one C -> 4C conv per x2 pixel shuffle stage and the 3x3 output conv (C -> 3)."""

    FIELDS = ('ccsbs', 'stages', 'out')

    def __init__(self, ccsbs, stages, out):
        self.ccsbs = list(ccsbs)
        self.stages = list(stages)
        self.out = out

    @classmethod
    def create(cls, channels, reduction=16, scale=2, num_ccsbs=4, rng=None):
        if scale not in (2, 4):
            raise InvalidArgumentError('Unsupported scale {}. Use 2 or 4'.format(scale))
        rng = make_rng(rng)
        ccsbs = [CCSBParams.create(channels, reduction, rng) for _ in range(num_ccsbs)]
        stages = [ConvParams.create(4 * channels, channels, 3, rng) for _ in range(scale // 2)]
        return cls(ccsbs, stages, ConvParams.create(3, channels, 3, rng))

    @property
    def scale(self):
        return 2 ** len(self.stages)


class CCSBESRParams(ParamGroup):
    """All learnable parameters of the network together with the ModelConfig that shaped them."""

    FIELDS = ('extractor', 'pam', 'upsampler')

    def __init__(self, extractor, pam, upsampler, config):
        self.extractor = extractor
        self.pam = pam
        self.upsampler = upsampler
        self.config = config


def init_model(config=None):
    """Create Xavier-initialized parameters (zero biases) from config.seed.

    Args:
        config (ModelConfig)[None]: Network hyperparameters. Defaults to ModelConfig().

    Returns:
        params (CCSBESRParams): Parameters in float32.

    Raises:
        ConfigError: If the config is invalid.
    """
    if config is None:
        config = ModelConfig()
    config.validate()
    rng = make_rng(config.seed)
    extractor = ExtractorParams.create(config.channels, config.reduction, config.extraction_pairs,
                                       config.aspp_groups, config.dilations, rng)
    pam = PAMParams.create(config.channels, rng)
    up = UpsamplerParams.create(config.channels, config.reduction, config.scale, config.upsampler_ccsbs, rng)
    return CCSBESRParams(extractor, pam, up, config)


def upsampler(f, params, scale):
    """Map B x C x H x W features to a B x 3 x sH x sW image.

    Args:
        f (Tensor): Features after the parallax attention module.
        params (UpsamplerParams): Upsampler parameters.
        scale (int): 2 (one pixel shuffle stage) or 4 (two stages).

    Returns:
        img (Tensor): Unclamped image.
    """
    if scale not in (2, 4) or params.scale != scale:
        raise InvalidArgumentError('Unsupported scale {} for an upsampler with {} x2 stages'
                                   .format(scale, len(params.stages)))
    out = as_tensor(f)
    for block in params.ccsbs:
        out = ccsb(out, block)
    for stage in params.stages:
        out = pixel_shuffle(same_conv(out, stage), 2)
    return same_conv(out, params.out)


def _clamped(img):
    return Tensor(np.clip(img.data, 0, 1), dtype=img.dtype)


def forward(params, lr_left, lr_right, clamp=False):
    """Super-resolve a stereo pair.

    Args:
        params (CCSBESRParams): Network parameters.
        lr_left (Tensor): B x 3 x H x W left view in [0, 1].
        lr_right (Tensor): B x 3 x H x W right view in [0, 1].
        clamp (bool)[False]: Clip the outputs to [0, 1]. Only for inference, the clipped result is not recorded.

    Returns:
        sr_left (Tensor): B x 3 x sH x sW.
        sr_right (Tensor): B x 3 x sH x sW.
        maps (AttentionMaps): Attention maps at LR resolution.

    Raises:
        InvalidArgumentError: On mismatched views, missing RGB channels or H or W below 8.
    """
    lr_left, lr_right = as_tensor(lr_left), as_tensor(lr_right)
    if lr_left.shape != lr_right.shape or lr_left.ndim != 4 or lr_left.shape[1] != 3:
        raise InvalidArgumentError('forward: views must both be B x 3 x H x W, got {} and {}'
                                   .format(lr_left.shape, lr_right.shape))
    if min(lr_left.shape[2:]) < MIN_EXTENT:
        raise InvalidArgumentError('forward: input extent {} is below the minimum of {}'
                                   .format(lr_left.shape[2:], MIN_EXTENT))
    config = params.config

    f_left = feature_extractor(lr_left, params.extractor)
    f_right = feature_extractor(lr_right, params.extractor)
    pam_left, pam_right, maps = pam_forward(f_left, f_right, params.pam, config.tau)
    sr_left = upsampler(pam_left, params.upsampler, config.scale)
    sr_right = upsampler(pam_right, params.upsampler, config.scale)
    if clamp:
        sr_left, sr_right = _clamped(sr_left), _clamped(sr_right)
    return sr_left, sr_right, maps
