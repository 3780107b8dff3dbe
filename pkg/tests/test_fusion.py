import pytest
import torch
from hypothesis import given, settings, strategies as st

from sdpsfnet.fusion import EnhancedCSFF, GatedFusion, ShallowFeatures, enhanced_csff, gated_fuse

from oracles import gradient_check


def _pair(shape, seed, dtype=torch.float32):
    gen = torch.Generator().manual_seed(seed)
    return (torch.randn(shape, generator=gen, dtype=dtype) * 3,
            torch.randn(shape, generator=gen, dtype=dtype) * 3)


@pytest.mark.parametrize("value", [0, 1])
def test_forced_endpoints_exact(value):
    fusion = GatedFusion(8).force(value)
    a, b = _pair((2, 8, 5, 5), 0)
    assert torch.equal(gated_fuse(a, b, fusion), a if value else b)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.integers(1, 12))
def test_fuse_of_equals_is_bit_exact(seed, c):
    torch.manual_seed(seed)
    fusion = GatedFusion(c)
    f, _ = _pair((2, c, 4, 4), seed)
    assert torch.equal(gated_fuse(f, f.clone(), fusion), f)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.integers(1, 12))
def test_convex_bounds(seed, c):
    torch.manual_seed(seed)
    fusion = GatedFusion(c)
    a, b = _pair((2, c, 4, 3), seed)
    out = gated_fuse(a, b, fusion)
    assert (out >= torch.minimum(a, b)).all() and (out <= torch.maximum(a, b)).all()
    g = fusion.weights(a, b)
    assert g.shape == (2, c, 1, 1) and ((g >= 0) & (g <= 1)).all()


def test_width_projection():
    fusion = GatedFusion(8, prev_channels=5)
    out = fusion(torch.randn(1, 8, 4, 4), torch.randn(1, 5, 4, 4))
    assert out.shape == (1, 8, 4, 4)
    with pytest.raises(ValueError):
        GatedFusion(8)(torch.randn(1, 8, 4, 4), torch.randn(1, 8, 2, 2))


def test_modes():
    a, b = _pair((1, 4, 3, 3), 1)
    assert torch.equal(GatedFusion(4, mode="off")(a, b), a)
    assert torch.equal(GatedFusion(4, mode="add")(a, b), a + b)
    assert torch.equal(GatedFusion(4)(a, None), a)
    with pytest.raises(ValueError):
        GatedFusion(4, mode="mean")
    with pytest.raises(ValueError):
        GatedFusion(4, mode="add").force(1)
    with pytest.raises(ValueError):
        GatedFusion(4).force(0.5)


def test_gated_fuse_gradient():
    torch.manual_seed(0)
    fusion = GatedFusion(4).double()
    a, b = (t.requires_grad_() for t in _pair((1, 4, 3, 3), 2, torch.float64))
    first, last = fusion.gate[1], fusion.gate[3]
    params = [a, b, first.weight, first.bias, last.weight, last.bias]
    assert gradient_check(lambda: gated_fuse(a, b, fusion), params) < 1e-3


# --- shallow features ---------------------------------------------------------------

def test_shallow_stage_in_and_width():
    sf = ShallowFeatures(40)
    img = torch.rand(1, 3, 8, 8)
    out = sf(img)
    assert out.shape == (1, 40, 8, 8)
    assert torch.equal(out, sf.extract(img))


def test_shallow_history_of_equals():
    sf = ShallowFeatures(40, history_channels=40)
    img = torch.rand(2, 3, 8, 8)
    plain = sf.extract(img)
    assert torch.equal(sf(img, plain.clone()), plain)


# --- enhanced CSFF ------------------------------------------------------------------

def _scales(b=1, widths=(4, 6, 8), size=8, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return [torch.randn(b, w, size >> i, size >> i, generator=gen) for i, w in enumerate(widths)]


def test_csff_stage_in_single_gate():
    csff = EnhancedCSFF((4, 6, 8))
    enc, dec = _scales(seed=0), _scales(seed=1)
    out = enhanced_csff(enc, dec, None, csff)
    for i, o in enumerate(out):
        assert torch.equal(o, csff.out[i](csff.mid[i](csff.first[i](enc[i], dec[i]))))
        assert o.shape == enc[i].shape


def test_csff_equal_inputs_conv_conv():
    csff = EnhancedCSFF((4, 6, 8), history=True)
    enc = _scales(seed=3)
    out = csff(enc, [e.clone() for e in enc])
    for i, o in enumerate(out):
        assert torch.equal(o, csff.out[i](csff.mid[i](enc[i])))


def test_csff_history_gate_used():
    csff = EnhancedCSFF((4, 6, 8), history=True)
    for g in csff.second:
        g.force(0)
    enc, dec, prev = _scales(seed=0), _scales(seed=1), _scales(seed=2)
    out = csff(enc, dec, prev)
    for i, o in enumerate(out):
        assert torch.equal(o, csff.out[i](prev[i]))


def test_csff_plain_and_errors():
    csff = EnhancedCSFF((4, 6, 8), enhanced=False)
    enc, dec = _scales(seed=0), _scales(seed=1)
    out = csff(enc, dec)
    assert torch.equal(out[1], csff.enc_proj[1](enc[1]) + csff.dec_proj[1](dec[1]))
    with pytest.raises(ValueError):
        csff(enc[:2], dec)
    with pytest.raises(ValueError):
        EnhancedCSFF((4, 6, 8), history=True)(enc, dec, enc[:1])
