from .__meta__ import version as __version__

from .utils import CCSBESRError, InvalidArgumentError, InvalidStateError, THREADS_ENV, get_thread_count

from .config import ConfigError, ModelConfig, RunConfig

from . import tensor

from .blocks import CABParams, SABParams, CCSBParams, ASPPGroupParams, ResASPPBlockParams, ResBlockParams, \
    ExtractorParams, channel_attention, spatial_attention, ccsb, aspp_group, res_aspp_block, res_block, \
    feature_extractor

from .pam import PAMParams, AttentionMaps, pam_scores, attention_from_scores, warp, cycle_maps, valid_mask, \
    pam_forward

from .model import UpsamplerParams, CCSBESRParams, init_model, upsampler, forward

from .checkpoint import CheckpointError, CheckpointVersionError, CheckpointTruncatedError, \
    CheckpointManifestError, IncompatibleCheckpointError, Checkpoint, save_checkpoint, read_checkpoint, \
    load_checkpoint

from .losses import LossBreakdown, sr_loss, pam_loss, stereo_consistency_loss, total_loss

from .metrics import mse, psnr, ssim

from .data import DatasetError, bicubic_resample, bicubic_upscale, read_png, write_png, StereoSample, \
    StereoBatch, DatasetManifest, load_manifest, load_samples, extract_patches, augment, synthetic_stereo, \
    make_synthetic_dataset, make_batches

from .evaluate import evaluate_samples, eval_checkpoint, eval_bicubic, infer_pair

from .train import Trainer, train

from . import gradcheck
from .gradcheck import register_check, run_gradcheck


__all__ = [
    # meta
    '__version__',

    # utils
    'CCSBESRError', 'InvalidArgumentError', 'InvalidStateError', 'THREADS_ENV', 'get_thread_count',

    # config
    'ConfigError', 'ModelConfig', 'RunConfig',

    # tensor engine
    'tensor',

    # blocks
    'CABParams', 'SABParams', 'CCSBParams', 'ASPPGroupParams', 'ResASPPBlockParams', 'ResBlockParams',
    'ExtractorParams', 'channel_attention', 'spatial_attention', 'ccsb', 'aspp_group', 'res_aspp_block',
    'res_block', 'feature_extractor',

    # pam
    'PAMParams', 'AttentionMaps', 'pam_scores', 'attention_from_scores', 'warp', 'cycle_maps', 'valid_mask',
    'pam_forward',

    # model
    'UpsamplerParams', 'CCSBESRParams', 'init_model', 'upsampler', 'forward',

    # checkpoint
    'CheckpointError', 'CheckpointVersionError', 'CheckpointTruncatedError', 'CheckpointManifestError',
    'IncompatibleCheckpointError', 'Checkpoint', 'save_checkpoint', 'read_checkpoint', 'load_checkpoint',

    # losses and metrics
    'LossBreakdown', 'sr_loss', 'pam_loss', 'stereo_consistency_loss', 'total_loss',
    'mse', 'psnr', 'ssim',

    # data
    'DatasetError', 'bicubic_resample', 'bicubic_upscale', 'read_png', 'write_png', 'StereoSample',
    'StereoBatch', 'DatasetManifest', 'load_manifest', 'load_samples', 'extract_patches', 'augment',
    'synthetic_stereo', 'make_synthetic_dataset', 'make_batches',

    # evaluate and train
    'evaluate_samples', 'eval_checkpoint', 'eval_bicubic', 'infer_pair', 'Trainer', 'train',

    # gradcheck
    'gradcheck',  # Callable module
    'register_check', 'run_gradcheck',
    ]
