import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bitkernel import binq
from bitkernel.errors import DimensionError, InvalidInputError


def test_quantize_centered_example():
    qv = binq.quantize([3.0, 1.0, -1.0, -3.0])
    assert qv.stats.mean == 0.0
    # direct evaluation of the stats definitions: mean 0, scale sqrt((9+1+1+9)/4)
    assert qv.stats.scale == math.sqrt(5.0)
    assert list(qv.bits.unpack()) == [1, 1, -1, -1]


def test_quantize_tie_maps_to_plus_one():
    qv = binq.quantize([2.0, 4.0, 6.0])
    assert qv.stats.mean == 4.0
    assert qv.stats.scale == pytest.approx(math.sqrt(8.0 / 3.0), abs=1e-15)
    # middle entry equals the mean: tie resolves to +1
    assert list(qv.bits.unpack()) == [-1, 1, 1]


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5, 0.1, 1e-12, 3e7])
def test_quantize_constant_vector(c):
    qv = binq.quantize([c] * 5)
    assert qv.stats.mean == c
    assert qv.stats.scale == 0.0
    assert list(qv.bits.unpack()) == [1] * 5


@pytest.mark.parametrize("bad", [[1.0, float("nan")], [float("inf"), 0.0], []])
def test_quantize_rejects_bad_input(bad):
    with pytest.raises(InvalidInputError):
        binq.quantize(bad)


def test_binary_dot_examples():
    b = binq.BinaryVector.pack(np.array([1, -1, 1]))
    assert binq.binary_dot(b, [0.5, 0.25, -0.125]) == 0.125
    ones = binq.BinaryVector.pack(np.ones(6, dtype=bool))
    x = np.array([0.3, -1.2, 4.0, 0.0, 2.5, -0.7])
    assert binq.binary_dot(ones, x) == x.sum()


def test_binary_dot_matches_float_dot_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        signs = np.where(rng.integers(0, 2, 64) == 1, 1, -1)
        x = rng.standard_normal(64)
        got = binq.binary_dot(binq.BinaryVector.pack(signs), x)
        want = float(np.dot(signs.astype(float), x))
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


def test_binary_dot_length_mismatch():
    b = binq.BinaryVector.pack(np.array([1, -1]))
    with pytest.raises(DimensionError):
        binq.binary_dot(b, [1.0, 2.0, 3.0])


def test_dequantize_dot_examples():
    qv = binq.quantize([3.0, 1.0, -1.0, -3.0])
    assert binq.dequantize_dot(qv, [1.0, 0.0, 0.0, 0.0]) == math.sqrt(5.0)
    assert binq.dequantize_dot(qv, [1.0, 1.0, 1.0, 1.0]) == 0.0
    const = binq.quantize([2.5, 2.5, 2.5])
    x = np.array([0.1, -0.4, 2.0])
    assert binq.dequantize_dot(const, x) == 2.5 * x.sum()
    with pytest.raises(DimensionError):
        binq.dequantize_dot(qv, [1.0, 2.0])


def test_quant_error_vector_example():
    u = binq.quant_error_vector([3.0, 1.0, -1.0, -3.0])
    s5 = math.sqrt(5.0)
    assert np.allclose(u, [s5 - 3.0, s5 - 1.0, 1.0 - s5, 3.0 - s5], atol=1e-15)
    assert np.array_equal(binq.quant_error_vector([7.0] * 4), np.zeros(4))


def test_quant_error_inner_product_identity():
    rng = np.random.default_rng(7)
    for _ in range(25):
        w = rng.standard_normal(16)
        x = rng.standard_normal(16)
        x /= np.linalg.norm(x)
        lhs = float(np.dot(binq.quant_error_vector(w), x))
        rhs = binq.dequantize_dot(binq.quantize(w), x) - float(np.dot(w, x))
        assert abs(lhs - rhs) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**32 - 1))
def test_reconstruction_identity_property(d, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d) * rng.uniform(0.1, 10.0)
    x = rng.standard_normal(d)
    qv = binq.quantize(w)
    wx = float(np.dot(w, x))
    resid = binq.dequantize_dot(qv, x) - wx - float(np.dot(binq.quant_error_vector(w), x))
    assert abs(resid) <= 1e-12 * max(1.0, abs(wx))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_sign_antisymmetry_off_ties(d, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    centered = w - w.mean()
    if np.any(centered == 0.0) or np.all(w == w[0]):
        return
    plus = binq.quantize(centered)
    minus = binq.quantize(-centered)
    assert np.array_equal(plus.bits.unpack(), -minus.bits.unpack())


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**32 - 1),
       st.sampled_from([0.5, 2.0, 0.03125, 1024.0]))
def test_bits_invariant_under_positive_scaling(d, seed, c):
    # dyadic factors scale exactly, so bit equality is exact even at ties
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    assert np.array_equal(binq.quantize(c * w).bits.unpack(),
                          binq.quantize(w).bits.unpack())


def test_bits_invariant_under_generic_scaling_with_margin():
    rng = np.random.default_rng(11)
    for c in (1.7, 3.33, 977.1):
        for _ in range(20):
            w = rng.standard_normal(12)
            margin = np.abs(w - w.mean()).min()
            if margin < 1e-6:
                continue
            assert np.array_equal(binq.quantize(c * w).bits.unpack(),
                                  binq.quantize(w).bits.unpack())


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_pack_unpack_roundtrip(length, seed):
    rng = np.random.default_rng(seed)
    signs = np.where(rng.integers(0, 2, length) == 1, 1, -1).astype(np.int8)
    bv = binq.BinaryVector.pack(signs)
    assert bv.length == length
    assert np.array_equal(bv.unpack(), signs)
    # padding bits stay zero
    if length % 64:
        tail = int(bv.words[-1]) >> (length % 64)
        assert tail == 0


def test_pack_rejects_non_sign_values():
    with pytest.raises(InvalidInputError):
        binq.BinaryVector.pack(np.array([1, 0, -1]))
