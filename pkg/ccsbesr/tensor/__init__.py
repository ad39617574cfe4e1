from .core import DEFAULT_DTYPE, Tensor, GradientTape, current_tape, record, backward, as_tensor
from .ops import add, sub, mul, scale, square, absolute, sigmoid, relu, leaky_relu, \
    sum_all, mean_all, concat, reshape, crop_axis, diff_axis, repeat_axis, \
    conv2d, dense, global_pool_spatial, pool_across_channels, \
    batched_width_scores, softmax_last_axis, transpose_last_two, matmul_last_two, apply_width_attention, \
    pixel_shuffle, pixel_unshuffle
from .init import make_rng, xavier_fans, xavier_bound, xavier_init, zeros_init
from .params import ParamGroup, ConvParams
from .optim import AdamState, adam_step, Adam
from .gradcheck import GradcheckResult, check_gradients


__all__ = [
    # core
    'DEFAULT_DTYPE', 'Tensor', 'GradientTape', 'current_tape', 'record', 'backward', 'as_tensor',

    # ops
    'add', 'sub', 'mul', 'scale', 'square', 'absolute', 'sigmoid', 'relu', 'leaky_relu',
    'sum_all', 'mean_all', 'concat', 'reshape', 'crop_axis', 'diff_axis', 'repeat_axis',
    'conv2d', 'dense', 'global_pool_spatial', 'pool_across_channels',
    'batched_width_scores', 'softmax_last_axis', 'transpose_last_two', 'matmul_last_two',
    'apply_width_attention', 'pixel_shuffle', 'pixel_unshuffle',

    # init
    'make_rng', 'xavier_fans', 'xavier_bound', 'xavier_init', 'zeros_init',

    # params
    'ParamGroup', 'ConvParams',

    # optim
    'AdamState', 'adam_step', 'Adam',

    # gradcheck
    'GradcheckResult', 'check_gradients',
    ]
