def identity_maps(batch=1, height=2, width=4, tau=0.1):
    import numpy as np
    from ccsbesr.pam import AttentionMaps

    eye = np.broadcast_to(np.eye(width), (batch, height, width, width)).copy()
    return AttentionMaps.from_maps(eye, eye, tau)


def test_sr_loss():
    import numpy as np
    from ccsbesr.losses import sr_loss

    zeros = np.zeros((1, 3, 4, 4))
    ones = np.ones((1, 3, 4, 4))
    assert sr_loss(zeros, zeros, zeros, zeros).item() == 0
    assert np.isclose(sr_loss(zeros, zeros, ones, ones).item(), 1.0)
    assert np.isclose(sr_loss(zeros, ones, ones, ones).item(), 0.5)


def test_sr_loss_matches_loops():
    import numpy as np
    from ccsbesr.losses import sr_loss

    rng = np.random.default_rng(7)
    sr_l, sr_r, hr_l, hr_r = (rng.uniform(0, 1, (1, 3, 2, 2)) for _ in range(4))
    per_view = []
    for sr, hr in ((sr_l, hr_l), (sr_r, hr_r)):
        total = 0.0
        for c in range(3):
            for y in range(2):
                for x in range(2):
                    total += (sr[0, c, y, x] - hr[0, c, y, x]) ** 2
        per_view.append(total / 12)
    assert np.isclose(sr_loss(sr_l, sr_r, hr_l, hr_r).item(), sum(per_view) / 2, rtol=1e-12)

    d = 0.3
    assert np.isclose(sr_loss(hr_l + d, hr_r + d, hr_l, hr_r).item(), d ** 2)


def test_pam_loss_identity():
    import numpy as np
    from ccsbesr.losses import pam_loss

    img = np.random.default_rng(0).uniform(0, 1, (1, 3, 2, 4))
    photometric, smooth, cycle = pam_loss(identity_maps(), img, img)
    assert np.isclose(photometric.item(), 0)
    assert np.isclose(smooth.item(), 0)
    assert np.isclose(cycle.item(), 0)


def test_pam_loss_uniform_cycle():
    import numpy as np
    from ccsbesr.pam import AttentionMaps
    from ccsbesr.losses import pam_loss

    uniform = np.full((1, 1, 2, 2), 0.5)
    maps = AttentionMaps.from_maps(uniform, uniform)
    img = np.zeros((1, 3, 1, 2))
    _, smooth, cycle = pam_loss(maps, img, img)
    # The cycle map is uniform again, every entry is 0.5 away from the identity
    assert np.isclose(cycle.item(), 0.5)
    assert np.isclose(smooth.item(), 0)


def test_pam_loss_empty_mask():
    import numpy as np
    from ccsbesr.pam import AttentionMaps
    from ccsbesr.losses import pam_loss

    uniform = np.full((1, 2, 2, 2), 0.5)
    maps = AttentionMaps.from_maps(uniform, uniform, tau=10.0)
    assert not np.any(maps.v_left.data)
    img = np.random.default_rng(1).uniform(0, 1, (1, 3, 2, 2))
    photometric, _, cycle = pam_loss(maps, img, img[..., ::-1])
    assert photometric.item() == 0
    assert cycle.item() == 0


def test_pam_loss_photometric_shift():
    import numpy as np
    from ccsbesr.pam import AttentionMaps
    from ccsbesr.losses import pam_loss

    # Left column i sees right column i - 1, columns outside the shift are masked out by the valid masks
    width = 4
    right = np.random.default_rng(2).uniform(0, 1, (1, 3, 1, width))
    left = np.zeros_like(right)
    left[..., 1:] = right[..., :-1]
    left[..., 0] = right[..., 0]
    m_r2l = np.zeros((1, 1, width, width))
    m_l2r = np.zeros((1, 1, width, width))
    for i in range(width):
        m_r2l[0, 0, i, max(i - 1, 0)] = 1
        m_l2r[0, 0, i, min(i + 1, width - 1)] = 1
    photometric, _, _ = pam_loss(AttentionMaps.from_maps(m_r2l, m_l2r), left, right)
    assert np.isclose(photometric.item(), 0, atol=1e-12)


def test_upscale_maps():
    import numpy as np
    from ccsbesr.pam import attention_from_scores
    from ccsbesr.losses import upscale_maps

    eye = np.broadcast_to(np.eye(3), (1, 2, 3, 3)).copy()
    up = upscale_maps(eye, 2).data
    assert up.shape == (1, 4, 6, 6)
    assert np.array_equal(up[0, 0], np.eye(6))

    m, _ = attention_from_scores(np.random.default_rng(3).standard_normal((2, 2, 4, 4)))
    for s in (2, 4):
        up = upscale_maps(m, s).data
        assert np.allclose(up.sum(axis=-1), 1)


def test_stereo_consistency_identity():
    import numpy as np
    from ccsbesr.losses import stereo_consistency_loss

    sr = np.random.default_rng(4).uniform(0, 1, (1, 3, 4, 8))
    assert np.isclose(stereo_consistency_loss(sr, sr, identity_maps()).item(), 0)
    assert stereo_consistency_loss(sr, sr + 0.25, identity_maps()).item() > 0.4


def test_stereo_consistency_matches_loops():
    import numpy as np
    from ccsbesr.pam import AttentionMaps, attention_from_scores
    from ccsbesr.losses import stereo_consistency_loss

    rng = np.random.default_rng(8)
    s, height, width = 2, 1, 2
    m_r2l, m_l2r = attention_from_scores(rng.standard_normal((1, height, width, width)) * 2)
    maps = AttentionMaps.from_maps(m_r2l, m_l2r)
    sr_l = rng.uniform(0, 1, (1, 3, s * height, s * width))
    sr_r = rng.uniform(0, 1, (1, 3, s * height, s * width))

    def term(m, mask, target, source):
        # SR column x reads SR columns x2 of the same sub-pixel phase, weighted by the LR map entry
        total, count = 0.0, 0
        for y in range(s * height):
            for x in range(s * width):
                if not mask[0, 0, y // s, x // s]:
                    continue
                for c in range(3):
                    warped = sum(m[0, y // s, x // s, x2 // s] * source[0, c, y, x2]
                                 for x2 in range(s * width) if x2 % s == x % s)
                    total += abs(warped - target[0, c, y, x])
                    count += 1
        return total / count if count else 0.0

    expected = term(maps.m_r2l.data, maps.v_left.data, sr_l, sr_r) + \
        term(maps.m_l2r.data, maps.v_right.data, sr_r, sr_l)
    assert expected > 0
    assert np.isclose(stereo_consistency_loss(sr_l, sr_r, maps).item(), expected, rtol=1e-12)

    flat = np.full((1, 3, s * height, s * width), 0.4)
    assert np.isclose(stereo_consistency_loss(flat, flat, maps).item(), 0, atol=1e-12)


def test_total_loss_breakdown():
    import numpy as np
    from ccsbesr.tensor import Tensor, GradientTape, backward
    from ccsbesr.losses import total_loss, LossBreakdown

    rng = np.random.default_rng(5)
    lr = rng.uniform(0, 1, (2, 1, 3, 2, 4))
    hr = rng.uniform(0, 1, (2, 1, 3, 4, 8))
    sr_left = Tensor(rng.uniform(0, 1, (1, 3, 4, 8)), requires_grad=True)
    sr_right = Tensor(rng.uniform(0, 1, (1, 3, 4, 8)), requires_grad=True)
    weights = (1.0, 0.5, 2.0)
    with GradientTape() as tape:
        loss, parts = total_loss(sr_left, sr_right, hr[0], hr[1], lr[0], lr[1], identity_maps(), weights)
    assert isinstance(parts, LossBreakdown)
    assert np.isclose(parts.total, parts.l_sr + 0.5 * parts.l_pam + 2.0 * parts.l_stereo)
    assert np.isclose(loss.item(), parts.total)
    assert np.isclose(parts.l_pam, parts.l_photometric + parts.l_smooth + parts.l_cycle)
    assert set(parts.as_dict()) == set(LossBreakdown.FIELDS)

    backward(loss, tape)
    assert sr_left.grad is not None and np.any(sr_left.grad)

    loss, parts = total_loss(sr_left, sr_right, hr[0], hr[1], lr[0], lr[1], identity_maps(), terms=('sr',))
    assert parts.l_stereo == 0 and parts.l_pam == 0
    assert np.isclose(loss.item(), parts.l_sr)


def test_shape_errors():
    import numpy as np
    import pytest
    from ccsbesr.utils import InvalidArgumentError
    from ccsbesr.losses import sr_loss, pam_loss, stereo_consistency_loss

    with pytest.raises(InvalidArgumentError):
        sr_loss(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)), np.zeros((1, 3, 4, 5)))
    with pytest.raises(InvalidArgumentError):
        pam_loss(identity_maps(), np.zeros((1, 3, 3, 4)), np.zeros((1, 3, 3, 4)))
    with pytest.raises(InvalidArgumentError):
        stereo_consistency_loss(np.zeros((1, 3, 4, 9)), np.zeros((1, 3, 4, 9)), identity_maps())


if __name__ == '__main__':
    test_sr_loss()
    test_sr_loss_matches_loops()
    test_pam_loss_identity()
    test_pam_loss_uniform_cycle()
    test_pam_loss_empty_mask()
    test_pam_loss_photometric_shift()
    test_upscale_maps()
    test_stereo_consistency_identity()
    test_stereo_consistency_matches_loops()
    test_total_loss_breakdown()
    test_shape_errors()

    print('All tests finished successfully!')
