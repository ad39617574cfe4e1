"""
Evaluation and inference.

Every metric value is the mean over the left and right views. Reports list one row per sample and a final
``mean`` row.
"""
import os
import csv
import logging

import numpy as np

from ccsbesr.utils import InvalidArgumentError
from ccsbesr.model import forward
from ccsbesr.metrics import psnr, ssim
from ccsbesr.checkpoint import read_checkpoint, IncompatibleCheckpointError
from ccsbesr.data import bicubic_upscale, read_png, write_png, load_manifest, load_samples


__all__ = ['REPORT_FIELDS', 'make_predictor', 'evaluate_samples', 'summarize', 'write_report', 'format_summary',
           'eval_checkpoint', 'eval_bicubic', 'infer_pair']


LOG = logging.getLogger(__name__)

REPORT_FIELDS = ('id', 'psnr', 'ssim', 'bicubic_psnr', 'bicubic_ssim')


def make_predictor(params):
    """Return ``predict(lr_left, lr_right) -> (sr_left, sr_right)`` on single 3 x H x W images, clamped to [0, 1]."""
    def predict(lr_left, lr_right):
        sr_left, sr_right, _ = forward(params, np.asarray(lr_left)[None], np.asarray(lr_right)[None], clamp=True)
        return sr_left.data[0], sr_right.data[0]
    return predict


def bicubic_predictor(scale):
    def predict(lr_left, lr_right):
        return bicubic_upscale(lr_left, scale), bicubic_upscale(lr_right, scale)
    return predict


def _pair_metrics(sr_left, sr_right, hr_left, hr_right, peak):
    return ((psnr(sr_left, hr_left, peak) + psnr(sr_right, hr_right, peak)) / 2,
            (ssim(sr_left, hr_left, peak) + ssim(sr_right, hr_right, peak)) / 2)


def evaluate_samples(predict, samples, peak=1.0):
    """Per-sample PSNR/SSIM of a predictor and of the bicubic baseline.

    Args:
        predict (callable): ``predict(lr_left, lr_right) -> (sr_left, sr_right)``. None evaluates bicubic only.
        samples (list): StereoSample objects.
        peak (float)[1.0]: Peak value of the images.

    Returns:
        rows (list): One dict per sample with the REPORT_FIELDS keys.
    """
    rows = []
    for sample in samples:
        base_psnr, base_ssim = _pair_metrics(*bicubic_predictor(sample.scale)(sample.lr_left, sample.lr_right),
                                             sample.hr_left, sample.hr_right, peak)
        if predict is None:
            model_psnr, model_ssim = base_psnr, base_ssim
        else:
            model_psnr, model_ssim = _pair_metrics(*predict(sample.lr_left, sample.lr_right),
                                                   sample.hr_left, sample.hr_right, peak)
        rows.append({'id': sample.id, 'psnr': model_psnr, 'ssim': model_ssim,
                     'bicubic_psnr': base_psnr, 'bicubic_ssim': base_ssim})
    return rows


def summarize(rows):
    """Mean of every metric column as a row with id ``mean``."""
    summary = {'id': 'mean'}
    for key in REPORT_FIELDS[1:]:
        summary[key] = float(np.mean([row[key] for row in rows])) if rows else float('nan')
    return summary


def write_report(rows, path):
    """Write the per-sample rows and the summary row as CSV."""
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in list(rows) + [summarize(rows)]:
            writer.writerow({key: repr(value) if isinstance(value, float) else value for key, value in row.items()})
    return path


def format_summary(summary, label='model'):
    return '{}: PSNR {:.2f} dB / SSIM {:.4f} (bicubic: {:.2f} dB / {:.4f})'.format(
        label, summary['psnr'], summary['ssim'], summary['bicubic_psnr'], summary['bicubic_ssim'])


def eval_checkpoint(checkpoint, data_root, split='test', out_path=None, scale=None, threads=1):
    """Evaluate a checkpoint on a dataset split.

    Args:
        checkpoint (str): Checkpoint filename.
        data_root (str): Dataset root.
        split (str)['test']: Split directory.
        out_path (str)[None]: CSV report filename.
        scale (int)[None]: Expected scale. Must match the checkpoint when given.
        threads (int)[1]: Loader threads.

    Returns:
        rows (list): Per-sample rows.
        summary (dict): Mean row.
    """
    ckpt = read_checkpoint(checkpoint)
    if scale is not None and int(scale) != ckpt.config.scale:
        raise IncompatibleCheckpointError('Checkpoint "{}" is x{} but the evaluation asks for x{}'
                                          .format(checkpoint, ckpt.config.scale, scale))
    samples = load_samples(load_manifest(data_root, split, ckpt.config.scale), threads=threads)
    rows = evaluate_samples(make_predictor(ckpt.params), samples)
    summary = summarize(rows)
    if out_path:
        write_report(rows, out_path)
    LOG.info(format_summary(summary))
    return rows, summary


def eval_bicubic(data_root, split='test', scale=2, out_path=None, threads=1):
    """Evaluate only the bicubic baseline on a dataset split."""
    samples = load_samples(load_manifest(data_root, split, scale), threads=threads)
    rows = evaluate_samples(None, samples)
    summary = summarize(rows)
    if out_path:
        write_report(rows, out_path)
    LOG.info(format_summary(summary, 'bicubic x{}'.format(scale)))
    return rows, summary


def infer_pair(checkpoint, left_path, right_path, out_dir):
    """Super-resolve one LR stereo pair and write ``sr_left.png`` and ``sr_right.png``.

    Returns:
        paths (tuple): The two written filenames.
    """
    params = read_checkpoint(checkpoint).params
    lr_left, lr_right = read_png(left_path), read_png(right_path)
    try:
        sr_left, sr_right = make_predictor(params)(lr_left, lr_right)
    except InvalidArgumentError as err:
        raise InvalidArgumentError('Cannot super-resolve "{}" and "{}": {}'.format(left_path, right_path, err)) \
            from err
    paths = (write_png(os.path.join(out_dir, 'sr_left.png'), sr_left),
             write_png(os.path.join(out_dir, 'sr_right.png'), sr_right))
    LOG.info('Wrote %s and %s', *paths)
    return paths
