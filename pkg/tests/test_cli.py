import io
import os
import tempfile
import pathlib
import contextlib


def run(*argv):
    from ccsbesr.cli import main

    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = main([str(arg) for arg in argv])
        except SystemExit as exit_:
            code = exit_.code
    return code, out.getvalue(), err.getvalue()


def test_make_synthetic(tmp_path):
    from ccsbesr.data import load_manifest

    code, out, _ = run('make-synthetic', '--out', tmp_path / 'data', '--count', 2, '--height', 32, '--width', 64,
                       '--disparity', 2)
    assert code == 0
    assert 'Wrote 2 pairs' in out
    assert load_manifest(str(tmp_path / 'data')).ids == ['000000-d2', '000001-d2']


def test_error_line(tmp_path):
    from ccsbesr.cli import ERROR_PREFIX, EXIT_ERROR

    code, _, err = run('eval', '--bicubic-only', '--data', tmp_path / 'missing')
    assert code == EXIT_ERROR
    lines = [line for line in err.splitlines() if line.startswith(ERROR_PREFIX)]
    assert len(lines) == 1
    assert lines[0].startswith('{}: DatasetError:'.format(ERROR_PREFIX))

    code, _, err = run('eval', '--data', tmp_path)
    assert code == EXIT_ERROR and 'CCSBESRError' in err

    cfg = tmp_path / 'bad.cfg'
    cfg.write_text('unknown = 1\n', encoding='utf-8')
    code, _, err = run('train', '--config', cfg)
    assert code == EXIT_ERROR and 'ConfigError' in err


def test_usage_errors(tmp_path):
    from ccsbesr.cli import ERROR_PREFIX, EXIT_ERROR

    for argv in (('train', '--scale', 3), ('eval', '--bicubic-only'), ('eval', '--data', tmp_path, '--seed', 1),
                 ('gradcheck', '--out', tmp_path), ('infer', '--checkpoint', 'x.ckpt'), ()):
        code, out, err = run(*argv)
        assert code == EXIT_ERROR, argv
        lines = err.strip().splitlines()
        assert len(lines) == 1, argv
        assert lines[0].startswith('{}: UsageError: ccsbesr'.format(ERROR_PREFIX))
        assert out == ''

    _, _, err = run('train', '--scale', 3)
    assert '--scale' in err


def test_gradcheck_command():
    from ccsbesr.cli import EXIT_GRADCHECK_FAILED

    code, out, _ = run('gradcheck', '--names', 'cab')
    assert code == 0
    assert 'cab' in out

    code, _, _ = run('gradcheck', '--names', 'cab', '--corrupt-op', 'sigmoid')
    assert code == EXIT_GRADCHECK_FAILED


def test_train_eval_infer(tmp_path):
    from ccsbesr.cli import REPORT_NAME
    from ccsbesr.train import BEST_NAME
    from ccsbesr.data import read_png

    cfg = tmp_path / 'run.cfg'
    cfg.write_text('channels = 8\nreduction = 2\naspp_groups = 1\nextraction_pairs = 1\nupsampler_ccsbs = 1\n'
                   'synthetic_count = 1\nsynthetic_h = 32\nsynthetic_w = 64\nsynthetic_disparity = 2\n'
                   'patch_h = 0\npatch_w = 0\nbatch_size = 1\n', encoding='utf-8')
    runs = tmp_path / 'runs'
    code, out, _ = run('train', '--config', cfg, '--synthetic', '--epochs', 1, '--out', runs)
    assert code == 0, out
    best = runs / BEST_NAME
    assert best.is_file()

    data = tmp_path / 'data'
    assert run('make-synthetic', '--out', data / 'test', '--count', 2, '--height', 32, '--width', 64,
               '--disparity', 2)[0] == 0
    code, out, _ = run('eval', '--checkpoint', best, '--data', data, '--out', tmp_path / 'report')
    assert code == 0
    assert (tmp_path / 'report' / REPORT_NAME).is_file()

    code, out, _ = run('infer', '--checkpoint', best, '--out', tmp_path / 'sr',
                       data / 'test' / 'left' / '000000-d2.png', data / 'test' / 'right' / '000000-d2.png')
    assert code == 0
    # The inputs are treated as LR, so the outputs are twice their extent
    assert read_png(str(tmp_path / 'sr' / 'sr_left.png')).shape == (3, 64, 128)
    assert os.path.isfile(str(tmp_path / 'sr' / 'sr_right.png'))

    code, _, err = run('eval', '--checkpoint', best, '--data', data, '--scale', 4)
    assert code == 1 and 'IncompatibleCheckpointError' in err


if __name__ == '__main__':
    def make_dir():
        return pathlib.Path(tempfile.mkdtemp())

    test_make_synthetic(make_dir())
    test_error_line(make_dir())
    test_usage_errors(make_dir())
    test_gradcheck_command()
    test_train_eval_infer(make_dir())

    print('All tests finished successfully!')
