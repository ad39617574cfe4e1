def make_features(seed=0, shape=(2, 8, 8, 10)):
    import numpy as np
    from ccsbesr.tensor import Tensor

    return Tensor(np.random.default_rng(seed).standard_normal(shape))


def zeroed(params):
    import numpy as np

    for tensor in params.parameters():
        tensor.data = np.zeros_like(tensor.data)
    return params


def test_shapes_preserved():
    from ccsbesr.blocks import CABParams, SABParams, CCSBParams, ASPPGroupParams, ResASPPBlockParams, \
        ResBlockParams, channel_attention, spatial_attention, ccsb, aspp_group, res_aspp_block, res_block

    f = make_features()
    assert channel_attention(f, CABParams.create(8, 2, 0)).shape == f.shape
    assert spatial_attention(f, SABParams.create(0)).shape == f.shape
    assert ccsb(f, CCSBParams.create(8, 2, 0)).shape == f.shape
    assert aspp_group(f, ASPPGroupParams.create(8, (1, 4, 8), 0)).shape == f.shape
    assert res_aspp_block(f, ResASPPBlockParams.create(8, 3, (1, 4, 8), 0)).shape == f.shape
    assert res_block(f, ResBlockParams.create(8, 0)).shape == f.shape


def test_gates_in_unit_interval():
    import numpy as np
    from ccsbesr.blocks import CABParams, SABParams, channel_gate, spatial_gate

    f = make_features(1)
    gate = channel_gate(f, CABParams.create(8, 4, 1)).data
    assert gate.shape == (2, 8, 1, 1)
    assert np.all((gate > 0) & (gate < 1))

    gate = spatial_gate(f, SABParams.create(1)).data
    assert gate.shape == (2, 1, 8, 10)
    assert np.all((gate > 0) & (gate < 1))


def test_zero_weights():
    import numpy as np
    from ccsbesr.blocks import CABParams, SABParams, ResASPPBlockParams, ResBlockParams, channel_attention, \
        spatial_attention, res_aspp_block, res_block

    f = make_features(2)
    # A zero MLP or conv gives sigmoid(0) = 0.5 everywhere
    assert np.allclose(channel_attention(f, zeroed(CABParams.create(8, 2, 0))).data, 0.5 * f.data)
    assert np.allclose(spatial_attention(f, zeroed(SABParams.create(0))).data, 0.5 * f.data)
    # Residual blocks reduce to the identity
    assert np.allclose(res_aspp_block(f, zeroed(ResASPPBlockParams.create(8, 2, (1, 4), 0))).data, f.data)
    assert np.allclose(res_block(f, zeroed(ResBlockParams.create(8, 0))).data, f.data)


def conv_taps(x, w, b, dilation=1):
    """Same-padded stride 1 convolution summed tap by tap."""
    import numpy as np

    k = w.shape[-1]
    pad = dilation * (k - 1) // 2
    height, width = x.shape[2:]
    x_pad = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((x.shape[0], w.shape[0], height, width)) + b[None, :, None, None]
    for u in range(k):
        for v in range(k):
            patch = x_pad[:, :, u * dilation:u * dilation + height, v * dilation:v * dilation + width]
            out += np.einsum('oc,bchw->bohw', w[:, :, u, v], patch)
    return out


def aspp_taps(x, p):
    import numpy as np
    from ccsbesr.blocks import LEAKY_SLOPE

    branches = []
    for branch, dilation in zip(p.branches, p.dilations):
        y = conv_taps(x, branch.weight.data, branch.bias.data, dilation)
        branches.append(np.where(y > 0, y, LEAKY_SLOPE * y))
    return x + conv_taps(np.concatenate(branches, axis=1), p.fuse.weight.data, p.fuse.bias.data)


def test_aspp_matches_taps():
    import numpy as np
    from ccsbesr.blocks import ASPPGroupParams, ResASPPBlockParams, aspp_group, res_aspp_block

    f = make_features(4, shape=(1, 4, 9, 11))
    group = ASPPGroupParams.create(4, (1, 2, 4), 0).astype(np.float64)
    assert np.allclose(aspp_group(f, group).data, aspp_taps(f.data, group), atol=1e-10)

    block = ResASPPBlockParams.create(4, 3, (1, 2, 4), 1).astype(np.float64)
    expected = f.data
    for group in block.groups:
        expected = aspp_taps(expected, group)
    assert np.allclose(res_aspp_block(f, block).data, expected, atol=1e-10)


def test_saturated_gates_pass_features():
    import numpy as np
    from ccsbesr.blocks import CCSBParams, ccsb

    f = make_features(5)
    params = zeroed(CCSBParams.create(8, 2, 0).astype(np.float64))
    # Zero weights with large biases push both sigmoid gates to exactly 1
    params.cab.b2.data = np.full_like(params.cab.b2.data, 50.0)
    params.sab.conv.bias.data = np.full_like(params.sab.conv.bias.data, 50.0)
    assert np.array_equal(ccsb(f, params).data, f.data)


def test_feature_extractor():
    import numpy as np
    from ccsbesr.tensor import Tensor
    from ccsbesr.blocks import ExtractorParams, feature_extractor

    params = ExtractorParams.create(8, 2, pairs=1, aspp_groups=1, rng=3)
    img = Tensor(np.random.default_rng(3).uniform(0, 1, (1, 3, 8, 12)))
    out = feature_extractor(img, params)
    assert out.shape == (1, 8, 8, 12)
    assert np.all(np.isfinite(out.data))


def test_invalid_arguments():
    import pytest
    from ccsbesr.utils import InvalidArgumentError
    from ccsbesr.blocks import CABParams, ASPPGroupParams, ExtractorParams, channel_attention, feature_extractor

    with pytest.raises(InvalidArgumentError):
        CABParams.create(8, 3)
    with pytest.raises(InvalidArgumentError):
        channel_attention(make_features(shape=(1, 4, 8, 8)), CABParams.create(8, 2, 0))
    with pytest.raises(InvalidArgumentError):
        feature_extractor(make_features(shape=(1, 4, 8, 8)), ExtractorParams.create(8, 2, 1, 1, rng=0))
    with pytest.raises(InvalidArgumentError):
        params = ASPPGroupParams.create(8, (1, 4), 0)
        ASPPGroupParams(params.branches, params.fuse, (1, 4, 8))


def test_deterministic_creation():
    import numpy as np
    from ccsbesr.blocks import CCSBParams

    a = CCSBParams.create(8, 2, 7).state_dict()
    b = CCSBParams.create(8, 2, 7).state_dict()
    assert list(a) == ['cab.w1', 'cab.b1', 'cab.w2', 'cab.b2', 'sab.conv.weight', 'sab.conv.bias']
    assert all(np.array_equal(a[k], b[k]) for k in a)


if __name__ == '__main__':
    test_shapes_preserved()
    test_gates_in_unit_interval()
    test_zero_weights()
    test_aspp_matches_taps()
    test_saturated_gates_pass_features()
    test_feature_extractor()
    test_invalid_arguments()
    test_deterministic_creation()

    print('All tests finished successfully!')
