import numpy as np
from skimage.metrics import structural_similarity

from ccsbesr.utils import InvalidArgumentError, as_array, check_shapes_equal


__all__ = ['SSIM_WINDOW', 'SSIM_SIGMA', 'SSIM_K1', 'SSIM_K2', 'mse', 'psnr', 'ssim']


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def mse(a, b):
    check_shapes_equal(a, b, what='mse inputs')
    diff = as_array(a, np.float64) - as_array(b, np.float64)
    return float(np.mean(diff * diff))


def psnr(a, b, peak=1.0):
    """Peak signal to noise ratio in dB.

    Args:
        a (np.ndarray/Tensor): Image.
        b (np.ndarray/Tensor): Reference image of the same shape.
        peak (float)[1.0]: Peak value, 1.0 for unit range and 255 for 8-bit images.

    Returns:
        db (float): 10 log10(peak^2 / MSE). Identical images give float('inf').
    """
    error = mse(a, b)
    if error == 0:
        return float('inf')
    return float(10 * np.log10(peak * peak / error))


def ssim(a, b, data_range=1.0):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01 and K2 = 0.03.

    H x W images are compared directly, C x H x W images are averaged over channels and B x C x H x W batches are
    averaged over images.

    Raises:
        InvalidArgumentError: On mismatched shapes or images smaller than the window.
    """
    shape = check_shapes_equal(a, b, what='ssim inputs')
    a, b = as_array(a, np.float64), as_array(b, np.float64)
    if len(shape) not in (2, 3, 4):
        raise InvalidArgumentError('ssim needs H x W, C x H x W or B x C x H x W images, got {}'.format(shape))
    if min(shape[-2:]) < SSIM_WINDOW:
        raise InvalidArgumentError('ssim needs images of at least {0}x{0} pixels, got {1}'
                                   .format(SSIM_WINDOW, shape[-2:]))
    if len(shape) == 4:
        return float(np.mean([ssim(x, y, data_range) for x, y in zip(a, b)]))

    return float(structural_similarity(a, b, data_range=data_range, gaussian_weights=True, sigma=SSIM_SIGMA,
                                       use_sample_covariance=False, K1=SSIM_K1, K2=SSIM_K2,
                                       channel_axis=0 if len(shape) == 3 else None))
