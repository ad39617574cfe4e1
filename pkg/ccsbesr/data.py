"""
Stereo data: PNG I/O, bicubic degradation, dataset manifests, patches, augmentation and synthetic pairs.

Images are float arrays in [0, 1] with the channel x height x width axis order.

A dataset directory holds ``left/<id>.png`` and ``right/<id>.png``. An optional ``manifest.tsv`` lists one
``id<TAB>left-path<TAB>right-path`` line per pair with paths relative to the directory.
"""
import os
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image

from ccsbesr.utils import CCSBESRError, InvalidArgumentError, as_array, get_thread_count
from ccsbesr.tensor import make_rng


__all__ = ['MANIFEST_NAME', 'BICUBIC_A', 'DatasetError', 'cubic_kernel', 'cubic_weights', 'resample_matrix',
           'bicubic_resample', 'bicubic_upscale', 'read_png', 'write_png', 'quantize',
           'StereoSample', 'StereoBatch', 'DatasetManifest', 'load_manifest', 'load_sample', 'load_samples',
           'extract_patches', 'augment', 'synthetic_stereo', 'make_synthetic_dataset', 'make_batches']


LOG = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.tsv'
BICUBIC_A = -0.5


class DatasetError(CCSBESRError):
    pass


# ===== Bicubic resampling =====
def cubic_kernel(x, a=BICUBIC_A):
    """Cubic convolution kernel W(x) with parameter a."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def cubic_weights(phase, a=BICUBIC_A):
    """Weights of the four taps at offsets -1, 0, 1, 2 for a sampling phase in [0, 1).

    Returns:
        weights (np.ndarray): Shape phase.shape + (4,). Every row sums to 1.
    """
    t = np.asarray(phase, dtype=np.float64)[..., None]
    return cubic_kernel(t - np.array([-1.0, 0.0, 1.0, 2.0]), a)


def resample_matrix(n_in, n_out, a=BICUBIC_A):
    """n_out x n_in matrix of one separable bicubic pass (align-corners false, edge clamp)."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src)
    weights = cubic_weights(src - base, a)
    taps = np.clip(base[:, None].astype(int) + np.arange(-1, 3), 0, n_in - 1)
    matrix = np.zeros((n_out, n_in))
    np.add.at(matrix, (np.repeat(np.arange(n_out), 4), taps.reshape(-1)), weights.reshape(-1))
    return matrix


def bicubic_resample(img, out_h, out_w):
    """Resize an image with separable bicubic interpolation.

    Args:
        img (np.ndarray): C x H x W or H x W image with H, W >= 4.
        out_h (int): Output height.
        out_w (int): Output width.

    Returns:
        out (np.ndarray): C x out_h x out_w. float64 input stays float64, anything else becomes float32.
    """
    img = as_array(img)
    if img.ndim not in (2, 3) or min(img.shape[-2:]) < 4:
        raise InvalidArgumentError('bicubic_resample needs an image of at least 4x4 pixels, got {}'
                                   .format(img.shape))
    if int(out_h) < 1 or int(out_w) < 1:
        raise InvalidArgumentError('Invalid bicubic target extent {}x{}'.format(out_h, out_w))
    dtype = np.float64 if img.dtype == np.float64 else np.float32
    rows = resample_matrix(img.shape[-2], int(out_h))
    cols = resample_matrix(img.shape[-1], int(out_w))
    out = np.einsum('oh,...hw,pw->...op', rows, img.astype(np.float64), cols)
    return out.astype(dtype)


def bicubic_upscale(lr, scale):
    """Bicubic baseline: resize by the scale factor and clip to [0, 1]."""
    lr = as_array(lr)
    return np.clip(bicubic_resample(lr, lr.shape[-2] * scale, lr.shape[-1] * scale), 0, 1)


# ===== PNG =====
def quantize(img):
    """Map [0, 1] floats to 8-bit with round-half-up."""
    return np.floor(np.clip(as_array(img, np.float64), 0, 1) * 255 + 0.5).astype(np.uint8)


def read_png(path):
    """Read an 8-bit RGB image as a float32 3 x H x W array in [0, 1].

    Raises:
        DatasetError: If the file is missing or cannot be decoded.
    """
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert('RGB'), dtype=np.float32)
    except (OSError, ValueError) as err:
        raise DatasetError('Cannot read image "{}": {}'.format(path, err)) from err
    return np.ascontiguousarray(data.transpose(2, 0, 1) / 255)


def write_png(path, img):
    """Write a 3 x H x W (or 1 x 3 x H x W) image in [0, 1] as an 8-bit RGB PNG."""
    data = as_array(img)
    if data.ndim == 4 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        raise InvalidArgumentError('write_png needs a 3 x H x W image, got {}'.format(data.shape))
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(quantize(data).transpose(1, 2, 0))).save(path, format='PNG')
    return path


# ===== Samples =====
class StereoSample(object):
    """A stereo pair at HR and LR resolution.

    Args:
        hr_left (np.ndarray): 3 x H x W.
        hr_right (np.ndarray): 3 x H x W.
        lr_left (np.ndarray): 3 x H/s x W/s.
        lr_right (np.ndarray): 3 x H/s x W/s.
        id (str): Sample name.
        scale (int): Scale factor s.
        meta (dict)[None]: Extra information such as the synthetic disparity or the patch origin.
    """

    def __init__(self, hr_left, hr_right, lr_left, lr_right, id, scale, meta=None):
        self.hr_left = hr_left
        self.hr_right = hr_right
        self.lr_left = lr_left
        self.lr_right = lr_right
        self.id = id
        self.scale = int(scale)
        self.meta = dict(meta or {})

        if hr_left.shape != hr_right.shape or lr_left.shape != lr_right.shape:
            raise InvalidArgumentError('Sample {}: left and right views differ in shape'.format(id))
        if lr_left.shape[-2] * self.scale != hr_left.shape[-2] or lr_left.shape[-1] * self.scale != hr_left.shape[-1]:
            raise InvalidArgumentError('Sample {}: LR extent {} is not HR extent {} divided by {}'
                                       .format(id, lr_left.shape, hr_left.shape, scale))

    @classmethod
    def from_hr(cls, hr_left, hr_right, id, scale, meta=None):
        """Create a sample, generating the LR views by bicubic downsampling clipped to [0, 1]."""
        height, width = hr_left.shape[-2:]
        if height % scale or width % scale:
            raise InvalidArgumentError('Sample {}: extent {}x{} is not divisible by scale {}'
                                       .format(id, height, width, scale))
        lr_left = np.clip(bicubic_resample(hr_left, height // scale, width // scale), 0, 1)
        lr_right = np.clip(bicubic_resample(hr_right, height // scale, width // scale), 0, 1)
        return cls(hr_left, hr_right, lr_left, lr_right, id, scale, meta)

    @property
    def lr_shape(self):
        return self.lr_left.shape

    @property
    def hr_shape(self):
        return self.hr_left.shape

    def __repr__(self):
        return '<StereoSample {} hr={} x{}>'.format(self.id, self.hr_shape, self.scale)


class StereoBatch(object):
    """Samples stacked into B x 3 x H x W arrays."""

    def __init__(self, lr_left, lr_right, hr_left, hr_right, ids):
        self.lr_left = lr_left
        self.lr_right = lr_right
        self.hr_left = hr_left
        self.hr_right = hr_right
        self.ids = list(ids)

    def __len__(self):
        return len(self.ids)


# ===== Manifests =====
class DatasetManifest(object):
    """Paired image files of one split.

    Args:
        root (str): Directory the entries are relative to.
        entries (list): (left path, right path, id) tuples sorted by id.
        split (str)['']: Split tag such as train, val or test.
        scale (int)[2]: Scale factor used when loading samples.
    """

    def __init__(self, root, entries, split='', scale=2):
        self.root = root
        self.entries = list(entries)
        self.split = split
        self.scale = int(scale)

        ids = [entry[2] for entry in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DatasetError('Duplicate sample ids in "{}": {}'.format(root, ', '.join(dupes)))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self):
        return [entry[2] for entry in self.entries]

    def write(self, path=None):
        """Write the manifest file (UTF-8, tab separated, paths relative to root)."""
        if path is None:
            path = os.path.join(self.root, MANIFEST_NAME)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            for left, right, name in self.entries:
                f.write('{}\t{}\t{}\n'.format(name, os.path.relpath(left, self.root).replace(os.sep, '/'),
                                              os.path.relpath(right, self.root).replace(os.sep, '/')))
        return path


def _read_manifest_file(directory, filename):
    entries = []
    with open(filename, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip('\r\n')
            if not line.strip() or line.startswith('#'):
                continue
            parts = line.split('\t')
            if len(parts) != 3:
                raise DatasetError('{}:{}: expected "id<TAB>left<TAB>right"'.format(filename, lineno))
            name, left, right = parts
            entries.append((os.path.join(directory, left), os.path.join(directory, right), name))
    return entries


def _scan_directory(directory):
    def pngs(side):
        folder = os.path.join(directory, side)
        if not os.path.isdir(folder):
            return {}
        return {os.path.splitext(f)[0]: os.path.join(folder, f)
                for f in os.listdir(folder) if f.lower().endswith('.png')}

    left, right = pngs('left'), pngs('right')
    for name in sorted(set(left) ^ set(right)):
        missing = os.path.join(directory, 'right' if name in left else 'left', name + '.png')
        raise DatasetError('Missing stereo partner "{}"'.format(missing))
    return [(left[name], right[name], name) for name in left]


def load_manifest(root, split='', scale=2):
    """List the stereo pairs of a split.

    Args:
        root (str): Dataset root.
        split (str)['']: Sub directory of the split. Empty uses root itself.
        scale (int)[2]: Scale factor stored in the manifest.

    Returns:
        manifest (DatasetManifest): Entries sorted by id.

    Raises:
        DatasetError: If the directory or a referenced file is missing, or ids repeat.
    """
    directory = os.path.join(root, split) if split else root
    if not os.path.isdir(directory):
        raise DatasetError('Dataset directory "{}" does not exist'.format(directory))

    filename = os.path.join(directory, MANIFEST_NAME)
    if os.path.isfile(filename):
        entries = _read_manifest_file(directory, filename)
    else:
        entries = _scan_directory(directory)
    for left, right, _ in entries:
        for path in (left, right):
            if not os.path.isfile(path):
                raise DatasetError('Missing image "{}"'.format(path))

    manifest = DatasetManifest(directory, sorted(entries, key=lambda e: e[2]), split, scale)
    LOG.debug('Loaded manifest %s with %d pairs', directory, len(manifest))
    return manifest


def load_sample(manifest, index, scale=None):
    """Decode pair ``index`` and generate its LR views.

    Raises:
        DatasetError: If a file cannot be decoded, the views differ in shape or the extent is not divisible by the
            scale.
    """
    scale = int(scale or manifest.scale)
    left, right, name = manifest.entries[index]
    hr_left, hr_right = read_png(left), read_png(right)
    if hr_left.shape != hr_right.shape:
        raise DatasetError('"{}" is {} but "{}" is {}'.format(left, hr_left.shape[1:], right, hr_right.shape[1:]))
    height, width = hr_left.shape[1:]
    if height % scale or width % scale:
        raise DatasetError('"{}" extent {}x{} is not divisible by scale {}'.format(left, height, width, scale))
    return StereoSample.from_hr(hr_left, hr_right, name, scale)


def load_samples(manifest, scale=None, threads=1):
    """Load every pair of a manifest in manifest order using a pool of worker threads."""
    threads = get_thread_count(threads)
    if threads == 1:
        return [load_sample(manifest, i, scale) for i in range(len(manifest))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: load_sample(manifest, i, scale), range(len(manifest))))


# ===== Patches and augmentation =====
def _grid(extent, patch, stride, rng):
    starts = list(range(0, extent - patch + 1, stride))
    if rng is not None:
        slack = extent - patch - starts[-1]
        offset = int(rng.integers(0, slack + 1))
        starts = [s + offset for s in starts]
    return starts


def extract_patches(sample, patch_h, patch_w, stride=None, rng=None):
    """Cut aligned crops out of a sample.

    The same window is cut from both views at both resolutions, so epipolar rows stay aligned.

    Args:
        sample (StereoSample): Source sample.
        patch_h (int): Patch height in LR pixels (>= 8).
        patch_w (int): Patch width in LR pixels (>= 8).
        stride (int)[None]: Step between patches in LR pixels. Defaults to the patch extent (no overlap).
        rng (np.random.Generator)[None]: If given, the patch grid is shifted by a random offset that keeps the
            patch count.

    Returns:
        patches (list): StereoSample crops with ``meta['origin'] = (y, x)`` in LR pixels.
    """
    lr_h, lr_w = sample.lr_shape[-2:]
    if min(patch_h, patch_w) < 8:
        raise InvalidArgumentError('Patch extent {}x{} is below 8 LR pixels'.format(patch_h, patch_w))
    if patch_h > lr_h or patch_w > lr_w:
        raise InvalidArgumentError('Patch {}x{} is larger than the LR image {}x{} of {}'
                                   .format(patch_h, patch_w, lr_h, lr_w, sample.id))
    stride_h = stride or patch_h
    stride_w = stride or patch_w
    if stride_h < 1 or stride_w < 1:
        raise InvalidArgumentError('Patch stride must be >= 1, got {}'.format(stride))
    if rng is not None:
        rng = make_rng(rng)

    s = sample.scale
    patches = []
    for y in _grid(lr_h, patch_h, stride_h, rng):
        for x in _grid(lr_w, patch_w, stride_w, rng):
            lr = (Ellipsis, slice(y, y + patch_h), slice(x, x + patch_w))
            hr = (Ellipsis, slice(y * s, (y + patch_h) * s), slice(x * s, (x + patch_w) * s))
            meta = dict(sample.meta, origin=(y, x))
            patches.append(StereoSample(sample.hr_left[hr].copy(), sample.hr_right[hr].copy(),
                                        sample.lr_left[lr].copy(), sample.lr_right[lr].copy(),
                                        '{}@{},{}'.format(sample.id, y, x), s, meta))
    return patches


def augment(sample, rng=None):
    """Random flips that keep the stereo geometry valid.

    With probability 1/2 all four images are flipped vertically. With probability 1/2 all four are flipped
    horizontally and the left and right views are exchanged.
    """
    rng = make_rng(rng)
    vflip = bool(rng.random() < 0.5)
    hflip = bool(rng.random() < 0.5)
    images = [sample.hr_left, sample.hr_right, sample.lr_left, sample.lr_right]
    if vflip:
        images = [img[..., ::-1, :] for img in images]
    if hflip:
        images = [img[..., ::-1] for img in images]
        images = [images[1], images[0], images[3], images[2]]
    images = [np.ascontiguousarray(img) for img in images]
    meta = dict(sample.meta, vflip=vflip, hflip=hflip)
    return StereoSample(images[0], images[1], images[2], images[3], sample.id, sample.scale, meta)


# ===== Synthetic data =====
def synthetic_stereo(seed, h, w, disparity_px, scale=2):
    """Render a seeded stereo pair with a known constant disparity.

    The right HR view is a smooth random texture. The left HR view is the same texture shifted right by
    ``disparity_px`` columns with edge clamp, so ``left[..., x + d] == right[..., x]``.

    Args:
        seed (int): Texture seed.
        h (int): HR height, divisible by scale.
        w (int): HR width, divisible by scale.
        disparity_px (int): Shift in HR pixels, 0 <= d < w / 4.
        scale (int)[2]: Scale factor.

    Returns:
        sample (StereoSample): Pair with ``meta['disparity']``.
    """
    h, w, disparity_px, scale = int(h), int(w), int(disparity_px), int(scale)
    if not 0 <= disparity_px < w / 4:
        raise InvalidArgumentError('Disparity must satisfy 0 <= d < w / 4, got {} for width {}'
                                   .format(disparity_px, w))
    if h % scale or w % scale or min(h, w) // scale < 4:
        raise InvalidArgumentError('Synthetic extent {}x{} must be divisible by {} and at least {} pixels'
                                   .format(h, w, scale, 4 * scale))

    rng = np.random.default_rng(seed)
    coarse = rng.random((3, max(h // 4, 4), max(w // 4, 4)))
    right = np.clip(bicubic_resample(coarse, h, w), 0, 1).astype(np.float32)
    columns = np.clip(np.arange(w) - disparity_px, 0, w - 1)
    left = np.ascontiguousarray(right[..., columns])
    meta = {'disparity': disparity_px, 'seed': seed}
    return StereoSample.from_hr(left, right, 'synthetic-{:06d}-d{}'.format(seed, disparity_px), scale, meta)


def make_synthetic_dataset(out_dir, seed=0, count=8, h=64, w=192, disparity_px=4, scale=2):
    """Write ``count`` synthetic pairs as PNGs with a manifest file.

    Sample i uses seed ``seed + i`` and is named ``<i:06d>-d<disparity_px>``.

    Returns:
        manifest (DatasetManifest): Manifest of the written directory.
    """
    entries = []
    for i in range(int(count)):
        sample = synthetic_stereo(seed + i, h, w, disparity_px, scale)
        name = '{:06d}-d{}'.format(i, disparity_px)
        left = write_png(os.path.join(out_dir, 'left', name + '.png'), sample.hr_left)
        right = write_png(os.path.join(out_dir, 'right', name + '.png'), sample.hr_right)
        entries.append((left, right, name))
    manifest = DatasetManifest(out_dir, entries, '', scale)
    manifest.write()
    LOG.info('Wrote %d synthetic pairs to %s', len(entries), out_dir)
    return manifest


# ===== Batching =====
def make_batches(samples, batch_size, rng=None):
    """Shuffle (when rng is given) and stack samples into StereoBatch objects. The last batch may be smaller."""
    if batch_size < 1:
        raise InvalidArgumentError('batch_size must be >= 1, got {}'.format(batch_size))
    samples = list(samples)
    order = make_rng(rng).permutation(len(samples)) if rng is not None else np.arange(len(samples))

    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start:start + batch_size]]
        shapes = {(s.lr_shape, s.hr_shape) for s in chunk}
        if len(shapes) != 1:
            raise InvalidArgumentError('Cannot stack samples of different shapes: {}'.format(sorted(shapes)))
        batches.append(StereoBatch(np.stack([s.lr_left for s in chunk]), np.stack([s.lr_right for s in chunk]),
                                   np.stack([s.hr_left for s in chunk]), np.stack([s.hr_right for s in chunk]),
                                   [s.id for s in chunk]))
    return batches
