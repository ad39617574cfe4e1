"""
Training loop.

Every epoch draws a fresh seeded shuffle of the (optionally patched and augmented) training samples, runs
forward -> total_loss -> backward -> Adam for every batch, validates once and writes a checkpoint.

Output directory contents::

    train_config.txt   the RunConfig text
    train_log.csv      step, epoch, l_sr, l_photometric, l_smooth, l_cycle, l_stereo, total
    val_log.csv        epoch, psnr, ssim
    epoch_001.ckpt ... one checkpoint per epoch
    best.ckpt          the checkpoint with the highest validation PSNR
"""
import os
import re
import csv
import logging

import numpy as np

from ccsbesr.utils import InvalidStateError, get_thread_count
from ccsbesr.config import RunConfig
from ccsbesr.tensor import GradientTape, backward, Adam
from ccsbesr.model import init_model, forward
from ccsbesr.losses import total_loss
from ccsbesr.checkpoint import save_checkpoint, read_checkpoint, IncompatibleCheckpointError
from ccsbesr.evaluate import evaluate_samples, make_predictor, summarize
from ccsbesr.data import DatasetError, synthetic_stereo, load_manifest, load_samples, extract_patches, augment, \
    make_batches


__all__ = ['TRAIN_LOG_FIELDS', 'VAL_LOG_FIELDS', 'CONFIG_NAME', 'TRAIN_LOG_NAME', 'VAL_LOG_NAME', 'BEST_NAME',
           'Trainer', 'train', 'checkpoint_name']


LOG = logging.getLogger(__name__)

TRAIN_LOG_FIELDS = ('step', 'epoch', 'l_sr', 'l_photometric', 'l_smooth', 'l_cycle', 'l_stereo', 'total')
VAL_LOG_FIELDS = ('epoch', 'psnr', 'ssim')
CONFIG_NAME = 'train_config.txt'
TRAIN_LOG_NAME = 'train_log.csv'
VAL_LOG_NAME = 'val_log.csv'
BEST_NAME = 'best.ckpt'

PROGRESS_TAG = re.compile(r'^# (epoch|step|best_psnr) = (\S+)$', re.MULTILINE)


def checkpoint_name(epoch):
    return 'epoch_{:03d}.ckpt'.format(epoch)


class Trainer(object):
    """Train a network from a RunConfig.

    Args:
        config (RunConfig): Run settings. Validated on creation.
        out_dir (str)[None]: Output directory. Defaults to config.out_dir.
    """

    def __init__(self, config, out_dir=None):
        self.config = config.validate()
        self.out_dir = out_dir or config.out_dir
        self.threads = get_thread_count(config.threads)

        self.params = init_model(config.model)
        self.optimizer = Adam(self.params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        self.step = 0
        self.epoch = 0
        self.best_psnr = -np.inf
        self.history = []

        self.train_samples = []
        self.val_samples = []

    def error(self, error):
        """Handle an error. Override to log and continue instead of raising."""
        raise error

    # ===== Data =====
    def load_data(self):
        """Load the training and validation samples.

        Synthetic runs generate ``synthetic_count`` pairs and validate on them. Dataset runs validate on the
        validation split when it exists, else on the training samples.

        Raises:
            DatasetError: If there are no training samples.
        """
        config = self.config
        if config.synthetic:
            self.train_samples = [synthetic_stereo(config.seed + i, config.synthetic_h, config.synthetic_w,
                                                   config.synthetic_disparity, config.scale)
                                  for i in range(config.synthetic_count)]
            self.val_samples = list(self.train_samples)
        else:
            manifest = load_manifest(config.data_root, config.train_split, config.scale)
            self.train_samples = load_samples(manifest, threads=self.threads)
            val_dir = os.path.join(config.data_root, config.val_split)
            if config.val_split and os.path.isdir(val_dir):
                self.val_samples = load_samples(load_manifest(config.data_root, config.val_split, config.scale),
                                                threads=self.threads)
            else:
                LOG.info('No validation split "%s", validating on the training samples', config.val_split)
                self.val_samples = list(self.train_samples)

        if not self.train_samples:
            raise DatasetError('The training set of "{}" is empty'.format(config.data_root or 'synthetic'))
        LOG.info('Loaded %d training and %d validation samples', len(self.train_samples), len(self.val_samples))
        return self.train_samples, self.val_samples

    def epoch_rng(self, epoch):
        return np.random.default_rng([self.config.seed, epoch])

    def epoch_batches(self, epoch):
        """Patch, augment and shuffle the training samples of one epoch."""
        config = self.config
        rng = self.epoch_rng(epoch)
        samples = []
        for sample in self.train_samples:
            if config.patch_h:
                samples.extend(extract_patches(sample, config.patch_h, config.patch_w, config.patch_stride or None,
                                               rng))
            else:
                samples.append(sample)
        if config.augment:
            samples = [augment(sample, rng) for sample in samples]
        return make_batches(samples, config.effective_batch_size, rng)

    # ===== Steps =====
    def learning_rate(self, epoch):
        """Learning rate of an epoch. Only the constant schedule exists."""
        return self.config.lr

    def train_step(self, batch):
        """Run one optimization step on a StereoBatch and return the LossBreakdown."""
        self.optimizer.zero_grad()
        with GradientTape() as tape:
            sr_left, sr_right, maps = forward(self.params, batch.lr_left, batch.lr_right)
            loss, breakdown = total_loss(sr_left, sr_right, batch.hr_left, batch.hr_right,
                                         batch.lr_left, batch.lr_right, maps, weights=self.config.loss_weights)
        if not np.isfinite(breakdown.total):
            self.error(InvalidStateError('Loss became non-finite at step {}: {}'.format(self.step + 1, breakdown)))
            return breakdown
        backward(loss, tape)
        self.optimizer.step()
        self.step += 1
        return breakdown

    def validate(self):
        """Mean PSNR and SSIM of the current parameters on the validation samples."""
        summary = summarize(evaluate_samples(make_predictor(self.params), self.val_samples))
        return summary['psnr'], summary['ssim']

    # ===== Checkpoints =====
    def provenance(self):
        return '{}# epoch = {}\n# step = {}\n# best_psnr = {!r}\n'.format(
            self.config.to_text(), self.epoch, self.step, float(self.best_psnr))

    def save(self, filename):
        return save_checkpoint(self.params, self.config.model, os.path.join(self.out_dir, filename),
                               self.provenance())

    def resume(self, path):
        """Load parameters from a checkpoint written by a run with the same ModelConfig.

        The epoch, step and best validation PSNR continue from the values stored with the checkpoint. The optimizer
        moments restart.

        Raises:
            IncompatibleCheckpointError: If the checkpoint was made with a different ModelConfig.
        """
        checkpoint = read_checkpoint(path)
        if checkpoint.config != self.config.model:
            raise IncompatibleCheckpointError('Cannot resume from "{}": its model config differs from the run config'
                                              .format(path))
        self.params = checkpoint.params
        self.optimizer = Adam(self.params, lr=self.config.lr, beta1=self.config.beta1, beta2=self.config.beta2,
                              eps=self.config.eps)
        progress = dict(PROGRESS_TAG.findall(checkpoint.provenance))
        self.epoch = int(progress.get('epoch', 0))
        self.step = int(progress.get('step', 0))
        self.best_psnr = float(progress.get('best_psnr', '-inf'))
        LOG.info('Resumed from %s at epoch %d', path, self.epoch)
        return self

    # ===== Run =====
    def _open_log(self, name, fields):
        path = os.path.join(self.out_dir, name)
        append = self.epoch > 0 and os.path.isfile(path)
        f = open(path, 'a' if append else 'w', newline='', encoding='utf-8')
        writer = csv.writer(f)
        if not append:
            writer.writerow(fields)
        return f, writer

    def run(self):
        """Train for the configured number of epochs.

        Returns:
            history (list): LossBreakdown of every step in order.
        """
        config = self.config
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, CONFIG_NAME), 'w', encoding='utf-8', newline='\n') as f:
            f.write(config.to_text())
        if config.resume:
            self.resume(config.resume)
        if not self.train_samples:
            self.load_data()

        train_file, train_log = self._open_log(TRAIN_LOG_NAME, TRAIN_LOG_FIELDS)
        val_file, val_log = self._open_log(VAL_LOG_NAME, VAL_LOG_FIELDS)
        try:
            while self.epoch < config.epochs:
                self.epoch += 1
                self.optimizer.lr = self.learning_rate(self.epoch)
                for batch in self.epoch_batches(self.epoch):
                    breakdown = self.train_step(batch)
                    self.history.append(breakdown)
                    train_log.writerow([self.step, self.epoch] + [repr(getattr(breakdown, name))
                                                                  for name in TRAIN_LOG_FIELDS[2:]])
                    if self.step % config.log_every == 0:
                        LOG.info('epoch %d step %d: total %.6g (sr %.6g, pam %.6g, stereo %.6g)', self.epoch,
                                 self.step, breakdown.total, breakdown.l_sr, breakdown.l_pam, breakdown.l_stereo)
                train_file.flush()

                psnr_value, ssim_value = self.validate()
                val_log.writerow([self.epoch, repr(psnr_value), repr(ssim_value)])
                val_file.flush()
                LOG.info('epoch %d: validation PSNR %.3f dB, SSIM %.4f', self.epoch, psnr_value, ssim_value)

                improved = psnr_value > self.best_psnr
                if improved:
                    self.best_psnr = psnr_value
                self.save(checkpoint_name(self.epoch))
                if improved:
                    self.save(BEST_NAME)
        finally:
            train_file.close()
            val_file.close()
        return self.history


def train(config, out_dir=None):
    """Train from a RunConfig (or config filename) and return the Trainer."""
    if not isinstance(config, RunConfig):
        config = RunConfig.from_file(config)
    trainer = Trainer(config, out_dir)
    trainer.run()
    return trainer
