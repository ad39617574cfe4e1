import os
import tempfile
import pathlib


def scalar_kernel(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x ** 3 - (a + 3) * x ** 2 + 1
    elif x < 2:
        return a * x ** 3 - 5 * a * x ** 2 + 8 * a * x - 4 * a
    return 0.0


def reference_resize_1d(values, n_out):
    n_in = len(values)
    out = []
    for o in range(n_out):
        src = (o + 0.5) * n_in / n_out - 0.5
        base = int(src // 1)
        total = 0.0
        for tap in range(base - 1, base + 3):
            total += scalar_kernel(src - tap) * values[min(max(tap, 0), n_in - 1)]
        out.append(total)
    return out


def reference_resize(img, out_h, out_w):
    import numpy as np

    rows = np.array([reference_resize_1d(list(row), out_w) for row in img])
    return np.array([reference_resize_1d(list(col), out_h) for col in rows.T]).T


def test_cubic_weights_partition_of_unity():
    import numpy as np
    from ccsbesr.data import cubic_weights

    phases = np.linspace(0, 1, 101, endpoint=False)
    weights = cubic_weights(phases)
    assert weights.shape == (101, 4)
    assert np.allclose(weights.sum(axis=-1), 1, atol=1e-6)
    assert np.allclose(cubic_weights(0.0), [0, 1, 0, 0])


def test_bicubic_matches_reference():
    import numpy as np
    from ccsbesr.data import bicubic_resample

    ramp = np.add.outer(np.arange(8.0), 2 * np.arange(8.0)) / 22
    noise = np.random.default_rng(0).uniform(0, 1, (8, 8))
    for img in (ramp, noise):
        for out_h, out_w in ((4, 4), (16, 16), (4, 16)):
            out = bicubic_resample(img, out_h, out_w)
            assert out.dtype == np.float64
            assert np.allclose(out, reference_resize(img, out_h, out_w), atol=1e-6)


def test_bicubic_identity_and_channels():
    import numpy as np
    from ccsbesr.data import bicubic_resample, bicubic_upscale

    img = np.random.default_rng(1).uniform(0, 1, (3, 8, 12)).astype(np.float32)
    same = bicubic_resample(img, 8, 12)
    assert same.dtype == np.float32
    assert np.allclose(same, img, atol=1e-6)
    up = bicubic_upscale(img, 2)
    assert up.shape == (3, 16, 24)
    assert up.min() >= 0 and up.max() <= 1


def test_quantize_round_half_up():
    import numpy as np
    from ccsbesr.data import quantize

    assert np.array_equal(quantize(np.array([0.0, 0.5, 1.0, -1.0, 2.0])), [0, 128, 255, 0, 255])


def test_png_round_trip(tmp_path):
    import numpy as np
    import pytest
    from ccsbesr.data import read_png, write_png, quantize, DatasetError

    img = np.random.default_rng(2).uniform(0, 1, (3, 5, 7))
    path = write_png(str(tmp_path / 'deep' / 'img.png'), img)
    loaded = read_png(path)
    assert loaded.shape == (3, 5, 7) and loaded.dtype == np.float32
    assert np.array_equal(quantize(loaded), quantize(img))

    missing = str(tmp_path / 'missing.png')
    with pytest.raises(DatasetError) as info:
        read_png(missing)
    assert missing in str(info.value)


def test_synthetic_disparity():
    import numpy as np
    from ccsbesr.data import synthetic_stereo

    d = 6
    sample = synthetic_stereo(3, 32, 96, d)
    assert sample.meta['disparity'] == d
    assert sample.lr_shape == (3, 16, 48)
    assert np.array_equal(sample.hr_left[..., d:], sample.hr_right[..., :-d])

    again = synthetic_stereo(3, 32, 96, d)
    assert np.array_equal(again.hr_right, sample.hr_right) and again.id == sample.id
    assert not np.array_equal(synthetic_stereo(4, 32, 96, d).hr_right, sample.hr_right)


def test_synthetic_errors():
    import pytest
    from ccsbesr.utils import InvalidArgumentError
    from ccsbesr.data import synthetic_stereo

    with pytest.raises(InvalidArgumentError):
        synthetic_stereo(0, 32, 96, 24)
    with pytest.raises(InvalidArgumentError):
        synthetic_stereo(0, 33, 96, 2)


def test_make_synthetic_dataset(tmp_path):
    from ccsbesr.data import make_synthetic_dataset, load_manifest, load_samples, MANIFEST_NAME

    def snapshot(root):
        files = {}
        for dirpath, _, filenames in os.walk(root):
            for name in filenames:
                path = os.path.join(dirpath, name)
                with open(path, 'rb') as f:
                    files[os.path.relpath(path, root)] = f.read()
        return files

    first = make_synthetic_dataset(str(tmp_path / 'a'), seed=1, count=3, h=32, w=64, disparity_px=2)
    make_synthetic_dataset(str(tmp_path / 'b'), seed=1, count=3, h=32, w=64, disparity_px=2)
    assert len(first) == 3
    assert snapshot(str(tmp_path / 'a')) == snapshot(str(tmp_path / 'b'))

    with open(str(tmp_path / 'a' / MANIFEST_NAME), 'r', encoding='utf-8') as f:
        assert len(f.read().splitlines()) == 3

    manifest = load_manifest(str(tmp_path / 'a'))
    assert manifest.ids == ['000000-d2', '000001-d2', '000002-d2']
    samples = load_samples(manifest, threads=2)
    assert [s.id for s in samples] == manifest.ids
    assert samples[0].hr_shape == (3, 32, 64) and samples[0].lr_shape == (3, 16, 32)


def test_load_manifest_errors(tmp_path):
    import numpy as np
    import pytest
    from ccsbesr.data import DatasetManifest, DatasetError, load_manifest, load_sample, write_png

    with pytest.raises(DatasetError):
        load_manifest(str(tmp_path / 'nope'))

    img = np.zeros((3, 8, 8))
    write_png(str(tmp_path / 'scan' / 'left' / 'a.png'), img)
    with pytest.raises(DatasetError) as info:
        load_manifest(str(tmp_path / 'scan'))
    assert 'a.png' in str(info.value)

    with pytest.raises(DatasetError):
        DatasetManifest(str(tmp_path), [('l', 'r', 'x'), ('l2', 'r2', 'x')])

    write_png(str(tmp_path / 'odd' / 'left' / 'a.png'), np.zeros((3, 9, 8)))
    write_png(str(tmp_path / 'odd' / 'right' / 'a.png'), np.zeros((3, 9, 8)))
    manifest = load_manifest(str(tmp_path / 'odd'))
    with pytest.raises(DatasetError):
        load_sample(manifest, 0, 2)


def test_extract_patches():
    import numpy as np
    from ccsbesr.data import synthetic_stereo, extract_patches

    sample = synthetic_stereo(0, 32, 64, 2)
    patches = extract_patches(sample, 8, 16)
    assert len(patches) == 2 * 2
    patch = patches[-1]
    assert patch.meta['origin'] == (8, 16)
    assert patch.id == '{}@8,16'.format(sample.id)
    assert np.array_equal(patch.lr_left, sample.lr_left[:, 8:16, 16:32])
    assert np.array_equal(patch.hr_right, sample.hr_right[:, 16:32, 32:64])

    shifted = extract_patches(sample, 8, 12, rng=0)
    assert len(shifted) == 2 * 2
    assert all(p.lr_shape == (3, 8, 12) for p in shifted)


def test_augment_keeps_geometry():
    import numpy as np
    from ccsbesr.data import synthetic_stereo, augment

    sample = synthetic_stereo(0, 32, 64, 4)
    seen = set()
    for seed in range(64):
        out = augment(sample, seed)
        vflip, hflip = out.meta['vflip'], out.meta['hflip']
        seen.add((vflip, hflip))
        left, right = sample.hr_left, sample.hr_right
        if vflip:
            left, right = left[..., ::-1, :], right[..., ::-1, :]
        if hflip:
            left, right = right[..., ::-1], left[..., ::-1]
        assert np.array_equal(out.hr_left, left) and np.array_equal(out.hr_right, right)
        # The view named left is always the one displaced to the right
        d = 4
        assert np.array_equal(out.hr_left[..., d:], out.hr_right[..., :-d])
    assert len(seen) == 4


def test_make_batches():
    import numpy as np
    import pytest
    from ccsbesr.utils import InvalidArgumentError
    from ccsbesr.data import synthetic_stereo, make_batches

    samples = [synthetic_stereo(i, 16, 32, 2) for i in range(5)]
    batches = make_batches(samples, 2)
    assert [len(b) for b in batches] == [2, 2, 1]
    assert batches[0].lr_left.shape == (2, 3, 8, 16)
    assert batches[0].ids == [samples[0].id, samples[1].id]

    a = make_batches(samples, 2, np.random.default_rng(3))
    b = make_batches(samples, 2, np.random.default_rng(3))
    assert [x.ids for x in a] == [x.ids for x in b]
    assert sorted(i for x in a for i in x.ids) == sorted(s.id for s in samples)

    with pytest.raises(InvalidArgumentError):
        make_batches(samples, 0)
    with pytest.raises(InvalidArgumentError):
        make_batches(samples + [synthetic_stereo(9, 16, 64, 2)], 8)


def test_thread_count_cap(monkeypatch):
    from ccsbesr.utils import get_thread_count, THREADS_ENV

    monkeypatch.setenv(THREADS_ENV, '2')
    assert get_thread_count(8) == 2
    assert get_thread_count(1) == 1
    monkeypatch.delenv(THREADS_ENV)
    assert get_thread_count(8) == 8


if __name__ == '__main__':
    import pytest

    def make_dir():
        return pathlib.Path(tempfile.mkdtemp())

    test_cubic_weights_partition_of_unity()
    test_bicubic_matches_reference()
    test_bicubic_identity_and_channels()
    test_quantize_round_half_up()
    test_png_round_trip(make_dir())
    test_synthetic_disparity()
    test_synthetic_errors()
    test_make_synthetic_dataset(make_dir())
    test_load_manifest_errors(make_dir())
    test_extract_patches()
    test_augment_keeps_geometry()
    test_make_batches()
    with pytest.MonkeyPatch.context() as mp:
        test_thread_count_cap(mp)

    print('All tests finished successfully!')
