import math

import numpy as np
import pytest
from dataclasses import replace

from bitkernel import binq
from bitkernel.errors import DimensionError, InvalidConfigError
from bitkernel.net import (ActivationPattern, NetworkState, activation_pattern,
                           batch_forward, forward_1bit, forward_fp, forward_ste,
                           init_network)


def single_neuron(w, a=1.0, kappa=1.0):
    W = np.asarray(w, dtype=float)[:, None]
    return NetworkState(W=W, a=np.array([a]), kappa=kappa)


def test_init_deterministic():
    n1 = init_network(4, 8, 1.0, seed=7)
    n2 = init_network(4, 8, 1.0, seed=7)
    assert np.array_equal(n1.W, n2.W)
    assert np.array_equal(n1.a, n2.a)


def test_init_statistics():
    net = init_network(2, 100_000, 1.0, seed=1)
    # 3-sigma bounds for iid standard normals / uniform signs
    assert abs(net.W.mean()) <= 3.0 / math.sqrt(2 * 100_000)
    assert abs(net.a.mean()) <= 3.0 / math.sqrt(100_000)
    assert set(np.unique(net.a)) == {-1.0, 1.0}


def test_init_rejects_bad_kappa():
    with pytest.raises(InvalidConfigError):
        init_network(4, 8, 1.5, seed=7)
    with pytest.raises(InvalidConfigError):
        init_network(4, 8, 0.0, seed=7)


def test_forward_1bit_single_neuron():
    net = single_neuron([3.0, 1.0, -1.0, -3.0])
    assert forward_1bit([1.0, 0.0, 0.0, 0.0], net) == math.sqrt(5.0)


def test_forward_1bit_gate_closed():
    net = single_neuron([3.0, 1.0, -1.0, -3.0])
    # dq(<q(w), -e1>) = -sqrt(5) < 0 -> ReLU kills it
    assert forward_1bit([-1.0, 0.0, 0.0, 0.0], net) == 0.0


def test_forward_fp_examples():
    net = single_neuron([3.0, 1.0, -1.0, -3.0])
    assert forward_fp([1.0, 0.0, 0.0, 0.0], net) == 3.0
    assert forward_fp([0.0, 0.0, 0.0, 0.0], net) == 0.0
    w = np.array([0.4, -1.1, 2.2])
    cancel = NetworkState(W=np.column_stack([w, w]), a=np.array([1.0, -1.0]), kappa=1.0)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert forward_fp(rng.standard_normal(3), cancel) == 0.0


def test_forward_ste_examples():
    net = single_neuron([3.0, 1.0, -1.0, -3.0])
    # gate open (dq = sqrt(5) >= 0), passes through <w, x> = 3
    assert forward_ste([1.0, 0.0, 0.0, 0.0], net) == 3.0
    assert forward_ste([-1.0, 0.0, 0.0, 0.0], net) == 0.0


def test_forward_ste_gate_saturation():
    # all-positive weights and input keep every dq gate open, so the STE
    # output collapses to kappa/sqrt(m) * sum_r <w_r, x>
    rng = np.random.default_rng(3)
    d, m = 4, 16
    W = rng.uniform(1.0, 2.0, size=(d, m))
    net = NetworkState(W=W, a=np.ones(m), kappa=1.0)
    x = np.ones(d)
    want = float((W.T @ x).sum()) / math.sqrt(m)
    got = forward_ste(x, net)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(forward_fp(x, net), rel=1e-12)


def test_kappa_linearity_exact():
    rng = np.random.default_rng(5)
    base = init_network(6, 33, 1.0, seed=42)
    x = rng.standard_normal(6)
    for kappa in (0.5, 0.25, 0.7, 0.113):
        scaled = replace(base, kappa=kappa)
        for fwd in (forward_1bit, forward_fp, forward_ste):
            assert fwd(x, scaled) == kappa * fwd(x, base)


@pytest.mark.parametrize("mode", ["one_bit", "full_precision", "ste"])
@pytest.mark.parametrize("d", [3, 17])
def test_batch_forward_equals_scalar_loop_bitwise(mode, d):
    rng = np.random.default_rng(9)
    net = init_network(d, 21, 1.0, seed=8)
    X = rng.standard_normal((8, d))
    batch = batch_forward(X, net, mode)
    loop = np.array([batch_forward(X[i:i + 1], net, mode)[0] for i in range(8)])
    assert np.array_equal(batch, loop)


def test_batch_forward_scalar_matches_binq_composition():
    # the scalar op realizes kappa/sqrt(m) * sum_r a_r ReLU(dequantize_dot(...))
    rng = np.random.default_rng(13)
    d, m = 5, 9
    net = init_network(d, m, 1.0, seed=77)
    x = rng.standard_normal(d)
    per_neuron = np.array([
        max(binq.dequantize_dot(binq.quantize(net.W[:, r]), x), 0.0)
        for r in range(m)
    ])
    want = net.kappa * float(np.dot(per_neuron, net.a)) / math.sqrt(m)
    assert forward_1bit(x, net) == pytest.approx(want, rel=1e-13, abs=1e-13)


def test_batch_forward_duplicated_rows():
    net = init_network(3, 10, 1.0, seed=2)
    x = np.array([0.3, -0.2, 0.9])
    out = batch_forward(np.vstack([x, x, x]), net, "one_bit")
    assert out[0] == out[1] == out[2]


def test_batch_forward_errors():
    net = init_network(3, 4, 1.0, seed=0)
    with pytest.raises(DimensionError):
        batch_forward(np.zeros((2, 4)), net, "one_bit")
    with pytest.raises(InvalidConfigError):
        batch_forward(np.zeros((2, 3)), net, "bogus")


def test_activation_pattern_examples():
    net = single_neuron([3.0, 1.0, -1.0, -3.0])
    pat = activation_pattern(np.array([[1.0, 0.0, 0.0, 0.0]]), net, "one_bit")
    assert pat.indicators[0, 0]
    zero = activation_pattern(np.zeros((2, 4)), net, "one_bit")
    assert zero.indicators.all()  # preactivation 0 counts as active
    net2 = init_network(3, 7, 1.0, seed=1)
    x = np.array([0.5, -0.1, 0.2])
    dup = activation_pattern(np.vstack([x, x]), net2, "full_precision")
    assert np.array_equal(dup.indicators[0], dup.indicators[1])
    with pytest.raises(InvalidConfigError):
        activation_pattern(np.zeros((1, 3)), net2, "ste")


def test_patterns_coincide_when_quantization_is_identity():
    # balanced +-1 columns are fixed points of the quantizer (mean 0, scale 1,
    # bits = w), so 1-bit gates equal full-precision gates
    rng = np.random.default_rng(21)
    d, m = 8, 12
    cols = []
    for _ in range(m):
        signs = np.array([1.0] * (d // 2) + [-1.0] * (d // 2))
        rng.shuffle(signs)
        cols.append(signs)
    net = NetworkState(W=np.column_stack(cols),
                       a=np.where(rng.integers(0, 2, m) == 1, 1.0, -1.0), kappa=1.0)
    X = rng.standard_normal((9, d))
    one_bit = activation_pattern(X, net, "one_bit")
    fp = activation_pattern(X, net, "full_precision")
    assert np.array_equal(one_bit.indicators, fp.indicators)


def test_output_bound_at_init():
    # loose envelope: |f(x)| <= 10 d sqrt(log m) for unit x, < 1% failures
    d, m = 4, 64
    bound = 10.0 * d * math.sqrt(math.log(m))
    x = np.zeros(d)
    x[0] = 1.0
    failures = sum(
        abs(forward_1bit(x, init_network(d, m, 1.0, seed=s))) > bound
        for s in range(1000)
    )
    assert failures < 10


def test_network_state_validation():
    with pytest.raises(DimensionError):
        NetworkState(W=np.zeros((3, 4)), a=np.ones(3), kappa=1.0)
    bad_a = np.ones(4)
    bad_a[0] = 0.5
    with pytest.raises(Exception):
        NetworkState(W=np.zeros((3, 4)), a=bad_a, kappa=1.0)
    with pytest.raises(InvalidConfigError):
        ActivationPattern(indicators=np.zeros((2, 2), dtype=bool), step=0, mode="nope")
