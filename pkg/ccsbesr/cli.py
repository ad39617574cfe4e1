"""
Command line interface.

Commands: ``train``, ``eval``, ``infer``, ``gradcheck`` and ``make-synthetic``. Errors print a single line
``ccsbesr-error: <ErrorClass>: <message>`` to stderr and exit with 1. A failed gradient check exits with 2.
"""
import os
import sys
import logging
import argparse

from ccsbesr.__meta__ import version
from ccsbesr.utils import CCSBESRError
from ccsbesr.config import ModelConfig, RunConfig
from ccsbesr.train import Trainer
from ccsbesr.evaluate import eval_checkpoint, eval_bicubic, infer_pair, format_summary
from ccsbesr.data import make_synthetic_dataset
from ccsbesr.gradcheck import GRADCHECK_CONFIG, run_gradcheck, format_report, check_names


__all__ = ['ERROR_PREFIX', 'EXIT_ERROR', 'EXIT_GRADCHECK_FAILED', 'REPORT_NAME', 'UsageError', 'CLIParser',
           'make_parser', 'main', 'cmd_train', 'cmd_eval', 'cmd_infer', 'cmd_gradcheck', 'cmd_make_synthetic',
           'format_error']


LOG = logging.getLogger(__name__)

ERROR_PREFIX = 'ccsbesr-error'
EXIT_ERROR = 1
EXIT_GRADCHECK_FAILED = 2
REPORT_NAME = 'eval_report.csv'


def format_error(error):
    message = ' '.join(str(error).split())
    return '{}: {}: {}'.format(ERROR_PREFIX, error.__class__.__name__, message)


class UsageError(CCSBESRError):
    pass


class CLIParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as a single error line and exits with EXIT_ERROR."""
    def error(self, message):
        print(format_error(UsageError('{}: {}'.format(self.prog, message))), file=sys.stderr)
        sys.exit(EXIT_ERROR)


def cmd_train(args):
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    config = config.replace(seed=args.seed, scale=args.scale, out_dir=args.out, data_root=args.data,
                            epochs=args.epochs, resume=args.resume, threads=args.threads,
                            synthetic=True if args.synthetic else None)
    trainer = Trainer(config)
    trainer.run()
    print('Trained {} steps, best validation PSNR {:.3f} dB. Checkpoints in {}'
          .format(trainer.step, trainer.best_psnr, trainer.out_dir))
    return 0


def cmd_eval(args):
    out_path = os.path.join(args.out, REPORT_NAME) if args.out else None
    if args.bicubic_only:
        _, summary = eval_bicubic(args.data, args.split, args.scale or 2, out_path)
        print(format_summary(summary, 'bicubic'))
    else:
        if not args.checkpoint:
            raise CCSBESRError('eval needs --checkpoint unless --bicubic-only is given')
        _, summary = eval_checkpoint(args.checkpoint, args.data, args.split, out_path, args.scale)
        print(format_summary(summary))
    if out_path:
        print('Report written to {}'.format(out_path))
    return 0


def cmd_infer(args):
    for path in infer_pair(args.checkpoint, args.left, args.right, args.out):
        print(path)
    return 0


def cmd_gradcheck(args):
    config = ModelConfig.from_file(args.config) if args.config else GRADCHECK_CONFIG
    if args.scale:
        config = config.replace(scale=args.scale)
    results = run_gradcheck(config, args.names, args.corrupt_op, seed=args.seed or 0)
    print(format_report(results))
    if all(results):
        return 0
    return EXIT_GRADCHECK_FAILED


def cmd_make_synthetic(args):
    manifest = make_synthetic_dataset(args.out, args.seed or 0, args.count, args.height, args.width, args.disparity,
                                      args.scale or 2)
    print('Wrote {} pairs to {}'.format(len(manifest), args.out))
    return 0


def make_parser():
    p = CLIParser(prog='ccsbesr', description='Stereo endoscopic image super-resolution.')
    p.add_argument('--version', action='version', version='%(prog)s {}'.format(version))
    p.add_argument('-v', '--verbose', action='store_true', help='Log debug messages.')
    sub = p.add_subparsers(dest='command', metavar='command')
    sub.required = True

    def add_flags(parser, config=False, seed=False, scale=False, out_help=None):
        if config:
            parser.add_argument('--config', type=str, default=None, help='key = value config file.')
        if seed:
            parser.add_argument('--seed', type=int, default=None, help='Seed override.')
        if scale:
            parser.add_argument('--scale', type=int, choices=(2, 4), default=None, help='Scale factor override.')
        if out_help:
            parser.add_argument('--out', type=str, default=None, help=out_help)

    train = sub.add_parser('train', help='Train a network.')
    add_flags(train, config=True, seed=True, scale=True, out_help='Output directory for logs and checkpoints.')
    train.add_argument('--data', type=str, default=None, help='Dataset root with train/ and val/ splits.')
    train.add_argument('--synthetic', action='store_true', help='Train on generated stereo pairs.')
    train.add_argument('--epochs', type=int, default=None, help='Epoch count override.')
    train.add_argument('--resume', type=str, default=None, help='Checkpoint to continue from.')
    train.add_argument('--threads', type=int, default=None, help='Data loading threads.')
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser('eval', help='Report PSNR/SSIM of a checkpoint and of bicubic upscaling.')
    add_flags(evaluate, scale=True, out_help='Directory for {}.'.format(REPORT_NAME))
    evaluate.add_argument('--checkpoint', type=str, default=None, help='Checkpoint file.')
    evaluate.add_argument('--data', type=str, required=True, help='Dataset root.')
    evaluate.add_argument('--split', type=str, default='test', help='Split directory (empty for the root).')
    evaluate.add_argument('--bicubic-only', action='store_true', help='Evaluate the bicubic baseline only.')
    evaluate.set_defaults(func=cmd_eval)

    infer = sub.add_parser('infer', help='Super-resolve one stereo pair.')
    add_flags(infer, out_help='Directory for sr_left.png and sr_right.png.')
    infer.add_argument('--checkpoint', type=str, required=True, help='Checkpoint file.')
    infer.add_argument('left', type=str, help='Left LR PNG.')
    infer.add_argument('right', type=str, help='Right LR PNG.')
    infer.set_defaults(func=cmd_infer, out='.')

    check = sub.add_parser('gradcheck', help='Finite-difference check of every block.')
    add_flags(check, config=True, seed=True, scale=True)
    check.add_argument('--names', type=str, nargs='+', default=None, choices=check_names(), help='Checks to run.')
    check.add_argument('--corrupt-op', type=str, default=None, help='Scale the adjoint of one op (negative control).')
    check.set_defaults(func=cmd_gradcheck)

    synth = sub.add_parser('make-synthetic', help='Write a synthetic stereo dataset.')
    add_flags(synth, seed=True, scale=True, out_help='Dataset directory.')
    synth.add_argument('--count', type=int, default=8, help='Number of pairs.')
    synth.add_argument('--height', type=int, default=64, help='HR height.')
    synth.add_argument('--width', type=int, default=192, help='HR width.')
    synth.add_argument('--disparity', type=int, default=4, help='Disparity in HR pixels.')
    synth.set_defaults(func=cmd_make_synthetic, out='synthetic')
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except (CCSBESRError, OSError) as err:
        LOG.debug('Command failed', exc_info=True)
        print(format_error(err), file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
