import os
import csv
import tempfile
import pathlib

import pytest


def small_run(out_dir, **kwargs):
    from ccsbesr.config import RunConfig

    values = dict(channels=8, reduction=2, aspp_groups=1, extraction_pairs=1, upsampler_ccsbs=1,
                  synthetic=True, synthetic_count=2, synthetic_h=32, synthetic_w=96, synthetic_disparity=4,
                  patch_h=0, patch_w=0, batch_size=1, augment=True, epochs=2, out_dir=str(out_dir))
    values.update(kwargs)
    return RunConfig(**values)


def read_rows(path):
    with open(str(path), 'r', newline='', encoding='utf-8') as f:
        return list(csv.reader(f))


def test_train_outputs(tmp_path):
    import numpy as np
    from ccsbesr.config import RunConfig
    from ccsbesr.checkpoint import read_checkpoint
    from ccsbesr.train import train, TRAIN_LOG_FIELDS, VAL_LOG_FIELDS, CONFIG_NAME, TRAIN_LOG_NAME, VAL_LOG_NAME, \
        BEST_NAME, checkpoint_name

    config = small_run(tmp_path)
    trainer = train(config)
    assert trainer.step == 4 and trainer.epoch == 2
    assert len(trainer.history) == 4

    assert RunConfig.from_file(str(tmp_path / CONFIG_NAME)) == config

    train_rows = read_rows(tmp_path / TRAIN_LOG_NAME)
    assert tuple(train_rows[0]) == TRAIN_LOG_FIELDS
    assert [row[:2] for row in train_rows[1:]] == [['1', '1'], ['2', '1'], ['3', '2'], ['4', '2']]
    assert all(np.isfinite(float(v)) for row in train_rows[1:] for v in row[2:])

    val_rows = read_rows(tmp_path / VAL_LOG_NAME)
    assert tuple(val_rows[0]) == VAL_LOG_FIELDS
    assert len(val_rows) == 1 + config.epochs

    for epoch in (1, 2):
        assert (tmp_path / checkpoint_name(epoch)).is_file()
    assert read_checkpoint(str(tmp_path / checkpoint_name(2))).config == config.model

    # best.ckpt holds the parameters of the first epoch with the highest validation PSNR
    psnrs = [float(row[1]) for row in val_rows[1:]]
    best_epoch = psnrs.index(max(psnrs)) + 1
    assert trainer.best_psnr == max(psnrs)
    best = read_checkpoint(str(tmp_path / BEST_NAME)).params.state_dict()
    expected = read_checkpoint(str(tmp_path / checkpoint_name(best_epoch))).params.state_dict()
    assert best.keys() == expected.keys()
    assert all(np.array_equal(best[name], expected[name]) for name in best)


def test_train_deterministic(tmp_path):
    from ccsbesr.train import train, TRAIN_LOG_NAME

    train(small_run(tmp_path / 'a', epochs=3))
    train(small_run(tmp_path / 'b', epochs=3))
    first = read_rows(tmp_path / 'a' / TRAIN_LOG_NAME)
    second = read_rows(tmp_path / 'b' / TRAIN_LOG_NAME)
    assert len(first) == 1 + 6
    assert first[:11] == second[:11]


def test_epoch_batches():
    from ccsbesr.train import Trainer

    trainer = Trainer(small_run('unused', patch_h=8, patch_w=16, batch_size=2))
    trainer.load_data()
    batches = trainer.epoch_batches(1)
    # 2 frames of 16x48 LR tiled into 2 x 3 patches
    assert sum(len(b) for b in batches) == 2 * 2 * 3
    assert batches[0].lr_left.shape == (2, 3, 8, 16)
    assert [b.ids for b in trainer.epoch_batches(1)] == [b.ids for b in batches]
    assert trainer.learning_rate(5) == trainer.config.lr


def test_resume(tmp_path):
    import numpy as np
    from ccsbesr.checkpoint import read_checkpoint, IncompatibleCheckpointError
    from ccsbesr.train import Trainer, train, checkpoint_name, VAL_LOG_NAME, TRAIN_LOG_NAME, BEST_NAME

    train(small_run(tmp_path, epochs=1))
    first = str(tmp_path / checkpoint_name(1))
    first_psnr = float(read_rows(tmp_path / VAL_LOG_NAME)[1][1])

    restored = Trainer(small_run(tmp_path, epochs=2)).resume(first)
    assert (restored.epoch, restored.step) == (1, 2)
    assert restored.best_psnr == first_psnr

    resumed = Trainer(small_run(tmp_path, epochs=2, resume=first))
    resumed.run()
    assert resumed.epoch == 2 and resumed.step == 4
    assert (tmp_path / checkpoint_name(2)).is_file()

    steps = [row[0] for row in read_rows(tmp_path / TRAIN_LOG_NAME)[1:]]
    assert steps == ['1', '2', '3', '4']

    psnrs = [float(row[1]) for row in read_rows(tmp_path / VAL_LOG_NAME)[1:]]
    assert len(psnrs) == 2
    assert resumed.best_psnr == max(psnrs)
    best_epoch = psnrs.index(max(psnrs)) + 1
    best = read_checkpoint(str(tmp_path / BEST_NAME)).params.state_dict()
    expected = read_checkpoint(str(tmp_path / checkpoint_name(best_epoch))).params.state_dict()
    assert all(np.array_equal(best[name], expected[name]) for name in best)

    with pytest.raises(IncompatibleCheckpointError):
        Trainer(small_run(tmp_path / 'other', channels=16, resume=first)).run()


def test_empty_dataset(tmp_path):
    from ccsbesr.data import DatasetError
    from ccsbesr.train import Trainer

    os.makedirs(str(tmp_path / 'data' / 'train'))
    trainer = Trainer(small_run(tmp_path / 'out', synthetic=False, data_root=str(tmp_path / 'data')))
    with pytest.raises(DatasetError):
        trainer.load_data()


def test_dataset_without_val_split(tmp_path):
    from ccsbesr.data import make_synthetic_dataset
    from ccsbesr.train import Trainer

    make_synthetic_dataset(str(tmp_path / 'data' / 'train'), seed=3, count=2, h=32, w=64, disparity_px=2)
    trainer = Trainer(small_run(tmp_path / 'out', synthetic=False, data_root=str(tmp_path / 'data')))
    train_samples, val_samples = trainer.load_data()
    assert [s.id for s in val_samples] == [s.id for s in train_samples] == ['000000-d2', '000001-d2']


def test_non_finite_loss(tmp_path):
    import numpy as np
    from ccsbesr.utils import InvalidStateError
    from ccsbesr.data import make_batches
    from ccsbesr.train import Trainer

    trainer = Trainer(small_run(tmp_path))
    samples, _ = trainer.load_data()
    batch = make_batches(samples[:1], 1)[0]
    batch.hr_left[...] = np.nan
    with pytest.raises(InvalidStateError):
        trainer.train_step(batch)
    assert trainer.step == 0


@pytest.mark.slow
def test_overfit_tiny_set():
    from ccsbesr.data import make_batches
    from ccsbesr.evaluate import evaluate_samples, summarize
    from ccsbesr.train import Trainer

    trainer = Trainer(small_run('unused', channels=16, reduction=4, synthetic_h=32, synthetic_w=96,
                                augment=False, batch_size=2, lr=3e-4))
    trainer.load_data()
    batch = make_batches(trainer.train_samples, 2)[0]
    losses = [trainer.train_step(batch).l_sr for _ in range(500)]
    assert losses[-1] <= 0.1 * losses[0]

    psnr_value, _ = trainer.validate()
    baseline = summarize(evaluate_samples(None, trainer.val_samples))['bicubic_psnr']
    assert psnr_value >= baseline + 1.0


if __name__ == '__main__':
    def make_dir():
        return pathlib.Path(tempfile.mkdtemp())

    test_train_outputs(make_dir())
    test_train_deterministic(make_dir())
    test_epoch_batches()
    test_resume(make_dir())
    test_empty_dataset(make_dir())
    test_dataset_without_val_split(make_dir())
    test_non_finite_loss(make_dir())
    # test_overfit_tiny_set()

    print('All tests finished successfully!')
