import math

import numpy as np
import pytest

from bitkernel.data import generate_dataset, split, target_function
from bitkernel.errors import (DimensionError, DivergenceError,
                              InvalidConfigError, InvalidInputError)
from bitkernel.kernel import gram_matrix, min_max_eigenvalues
from bitkernel.net import (NetworkState, activation_pattern, batch_forward,
                           init_network)
from bitkernel.train import (Diagnostics, Hyperparams, flip_partition_from_patterns,
                             fp_gradient, loss, loss_decomposition, ste_gradient,
                             train_twin, weight_drift)


def f3_data(n=20, n_test=10, seed=1, mode="unit_norm"):
    ds = generate_dataset(target_function("f3"), n, seed, mode)
    return split(ds, n_test, 1234)


def test_loss_examples():
    assert loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert loss([2.0, 3.0], [1.0, 2.0]) == 1.0
    rng = np.random.default_rng(0)
    F, y = rng.standard_normal(10), rng.standard_normal(10)
    want = 0.5 * sum((float(F[i]) - float(y[i])) ** 2 for i in range(10))
    assert loss(F, y) == pytest.approx(want, abs=1e-14)
    with pytest.raises(DimensionError):
        loss([1.0], [1.0, 2.0])


def test_ste_gradient_zero_residual():
    net = init_network(3, 8, 1.0, seed=2)
    X = np.random.default_rng(1).standard_normal((5, 3))
    y = batch_forward(X, net, "one_bit")
    assert np.array_equal(ste_gradient(X, y, net), np.zeros((3, 8)))


def test_gradient_column_zero_when_gated_off():
    # a constant very-negative column has dq = c * sum(x) < 0 on positive inputs
    rng = np.random.default_rng(3)
    W = rng.standard_normal((3, 4))
    W[:, 2] = -50.0
    net = NetworkState(W=W, a=np.array([1.0, -1.0, 1.0, -1.0]), kappa=1.0)
    X = np.abs(rng.standard_normal((6, 3))) + 0.1
    y = np.zeros(6)
    grad = ste_gradient(X, y, net)
    assert np.array_equal(grad[:, 2], np.zeros(3))


def test_ste_gradient_single_neuron_formula():
    w = np.array([0.5, 0.2, 0.1])
    net = NetworkState(W=w[:, None], a=np.array([1.0]), kappa=1.0)
    x = np.array([[0.8, 0.1, 0.4]])
    F = batch_forward(x, net, "one_bit")
    rho = F[0] - (-1.0)
    grad = ste_gradient(x, np.array([-1.0]), net)
    assert np.allclose(grad[:, 0], rho * 1.0 * x[0], rtol=1e-14)


def frozen_residual_surrogate(X, rho, net):
    """sum_i rho_i * f_ste(x_i, W) with rho held fixed."""
    vals = batch_forward(X, net, "ste")
    return float(np.dot(rho, vals))


def min_abs_preacts(X, net):
    from bitkernel.net import _dq_preacts, _fp_preacts, _quant_columns
    mask, means, scales = _quant_columns(net.W)
    dq = _dq_preacts(X, mask, means, scales)
    fp = _fp_preacts(X, net.W)
    return np.abs(dq).min(), np.abs(fp).min()


def test_ste_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    checked = 0
    seed = 0
    while checked < 5:
        seed += 1
        net = init_network(3, 6, 1.0, seed=seed)
        X = rng.standard_normal((4, 3))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        if min(min_abs_preacts(X, net)) < 1e-3:
            continue
        y = rng.standard_normal(4)
        rho = batch_forward(X, net, "one_bit") - y
        grad = ste_gradient(X, y, net)
        h = 1e-6
        for k in range(3):
            for r in range(6):
                Wp, Wm = net.W.copy(), net.W.copy()
                Wp[k, r] += h
                Wm[k, r] -= h
                up = frozen_residual_surrogate(X, rho, NetworkState(Wp, net.a, 1.0))
                dn = frozen_residual_surrogate(X, rho, NetworkState(Wm, net.a, 1.0))
                num = (up - dn) / (2 * h)
                assert abs(num - grad[k, r]) <= 1e-5 * max(1.0, abs(grad[k, r]))
        checked += 1


def test_fp_gradient_matches_loss_finite_differences():
    rng = np.random.default_rng(8)
    checked = 0
    seed = 100
    while checked < 5:
        seed += 1
        net = init_network(3, 6, 1.0, seed=seed)
        X = rng.standard_normal((4, 3))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        if min_abs_preacts(X, net)[1] < 1e-3:
            continue
        y = rng.standard_normal(4)
        grad = fp_gradient(X, y, net)
        h = 1e-6
        for k in range(3):
            for r in range(6):
                Wp, Wm = net.W.copy(), net.W.copy()
                Wp[k, r] += h
                Wm[k, r] -= h
                up = loss(batch_forward(X, NetworkState(Wp, net.a, 1.0), "full_precision"), y)
                dn = loss(batch_forward(X, NetworkState(Wm, net.a, 1.0), "full_precision"), y)
                num = (up - dn) / (2 * h)
                assert abs(num - grad[k, r]) <= 1e-5 * max(1.0, abs(grad[k, r]))
        checked += 1


def test_per_column_gradient_bound():
    # ||grad column r|| <= kappa sqrt(n/m) ||F - y|| for unit-norm inputs
    rng = np.random.default_rng(9)
    for seed in range(20):
        d, m, n = 4, 24, 9
        net = init_network(d, m, 0.7, seed=seed)
        X = rng.standard_normal((n, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        y = rng.standard_normal(n)
        resid = batch_forward(X, net, "one_bit") - y
        grad = ste_gradient(X, y, net)
        bound = net.kappa * math.sqrt(n / m) * float(np.linalg.norm(resid))
        col_norms = np.sqrt((grad ** 2).sum(axis=0))
        assert (col_norms <= bound + 1e-9).all()


def test_train_twin_eta_zero_freezes():
    tr, te = f3_data()
    hp = Hyperparams(eta=0.0, steps=5, kappa=1.0, seed=3)
    traj = train_twin(tr, te, 3, 16, hp)
    first = traj.records[0]
    for rec in traj.records:
        assert rec.weight_drift == 0.0
        assert rec.flip_fraction == 0.0
        assert rec.loss_1bit == first.loss_1bit
        assert rec.max_train_diff == first.max_train_diff
        assert rec.max_test_diff == first.max_test_diff
    base = init_network(3, 16, 1.0, seed=3)
    assert np.array_equal(traj.final_1bit.W, base.W)
    assert np.array_equal(traj.final_fp.W, base.W)


def test_train_twin_deterministic():
    tr, te = f3_data()
    hp = Hyperparams(eta=0.05, steps=30, kappa=1.0, seed=5)
    t1 = train_twin(tr, te, 3, 32, hp)
    t2 = train_twin(tr, te, 3, 32, hp)
    assert np.array_equal(t1.final_1bit.W, t2.final_1bit.W)
    assert np.array_equal(t1.final_fp.W, t2.final_fp.W)
    assert t1.records == t2.records


def test_train_twin_shared_init_and_branches_diverge():
    tr, te = f3_data()
    hp = Hyperparams(eta=0.05, steps=20, kappa=1.0, seed=6)
    traj = train_twin(tr, te, 3, 32, hp)
    assert traj.records[0].weight_drift == 0.0
    # after training the branches are different networks
    assert not np.array_equal(traj.final_1bit.W, traj.final_fp.W)


def test_train_twin_auto_eta_matches_kernel():
    tr, te = f3_data()
    hp = Hyperparams(eta=None, steps=2, kappa=1.0, seed=7)
    traj = train_twin(tr, te, 3, 64, hp)
    net0 = init_network(3, 64, 1.0, seed=7)
    _, lam_max = min_max_eigenvalues(gram_matrix(tr.X, net0, "one_bit"))
    assert traj.eta == 1.0 / lam_max
    # user value is capped by the same rule
    hp2 = Hyperparams(eta=1e9, steps=2, kappa=1.0, seed=7)
    assert train_twin(tr, te, 3, 64, hp2).eta == 1.0 / lam_max
    # probing disabled: fall back to 0.1
    hp3 = Hyperparams(eta=None, steps=2, kappa=1.0, seed=7)
    traj3 = train_twin(tr, te, 3, 64, hp3, Diagnostics(kernel_probes=False))
    assert traj3.eta == 0.1


def test_train_twin_divergence_error():
    # with kernel probing disabled the 0.1 fallback rate is far above the
    # stability threshold for large-norm inputs, so the loss blows up
    rng = np.random.default_rng(8)
    from bitkernel.data import Dataset, DatasetMeta
    X = 100.0 * rng.standard_normal((12, 3))
    y = rng.standard_normal(12)
    meta = DatasetMeta(target="f3", seed=8, mode="box", n=12, d=3)
    big = Dataset(X=X, y=y, meta=meta)
    hp = Hyperparams(eta=None, steps=500, kappa=1.0, seed=8)
    with pytest.raises(DivergenceError) as err:
        train_twin(big, big, 3, 16, hp, Diagnostics(kernel_probes=False))
    assert err.value.step > 0


def test_train_twin_rejects_bad_hyperparams():
    with pytest.raises(InvalidConfigError):
        Hyperparams(eta=-0.1, steps=5, kappa=1.0, seed=1)
    with pytest.raises(InvalidConfigError):
        Hyperparams(eta=0.1, steps=0, kappa=1.0, seed=1)
    with pytest.raises(InvalidConfigError):
        Hyperparams(eta=0.1, steps=5, kappa=1.4, seed=1)


def test_weight_drift_examples():
    net0 = init_network(3, 8, 1.0, seed=9)
    assert weight_drift(net0, net0) == 0.0
    tr, _ = f3_data()
    grad = ste_gradient(tr.X, tr.y, net0)
    eta = 0.125
    stepped = NetworkState(net0.W - eta * grad, net0.a, 1.0)
    want = float(np.sqrt(((eta * grad) ** 2).sum(axis=0)).max())
    assert weight_drift(net0, stepped) == want
    doubled = NetworkState(net0.W - 2 * eta * grad, net0.a, 1.0)
    assert weight_drift(net0, doubled) == 2.0 * weight_drift(net0, stepped)
    with pytest.raises(DimensionError):
        weight_drift(net0, init_network(3, 9, 1.0, seed=1))


def one_gd_step(net, X, y, eta):
    grad = ste_gradient(X, y, net)
    return NetworkState(net.W - eta * grad, net.a, net.kappa)


def test_loss_decomposition_frozen_step():
    net = init_network(4, 16, 1.0, seed=10)
    X = np.random.default_rng(2).standard_normal((6, 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = np.zeros(6)
    partition = [(list(range(16)), []) for _ in range(6)]
    c = loss_decomposition(net, net, X, y, partition)
    assert c == (0.0, 0.0, 0.0, 0.0)


def test_loss_decomposition_identity_random_instance():
    rng = np.random.default_rng(11)
    n, m, d = 16, 128, 4
    net = init_network(d, m, 1.0, seed=12)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.uniform(-1, 1, n)
    stepped = one_gd_step(net, X, y, 0.05)
    P0 = activation_pattern(X, net, "one_bit", step=0)
    P1 = activation_pattern(X, stepped, "one_bit", step=1)
    partition = flip_partition_from_patterns(P0, P1)
    c1, c2, c3, c4 = loss_decomposition(net, stepped, X, y, partition)
    assert c4 >= 0.0
    L0 = loss(batch_forward(X, net, "one_bit"), y)
    L1 = loss(batch_forward(X, stepped, "one_bit"), y)
    assert abs(L1 - L0 - (c1 + c2 + c3 + c4)) <= 1e-8 * max(1.0, L0)


def test_loss_decomposition_partition_independent_sum():
    rng = np.random.default_rng(13)
    n, m, d = 5, 12, 3
    net = init_network(d, m, 1.0, seed=14)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.uniform(-1, 1, n)
    stepped = one_gd_step(net, X, y, 0.1)
    totals = []
    for pseed in range(3):
        prng = np.random.default_rng(pseed)
        parts = []
        for _ in range(n):
            flip = prng.integers(0, 2, m).astype(bool)
            ids = np.arange(m)
            parts.append((ids[~flip], ids[flip]))
        c = loss_decomposition(net, stepped, X, y, parts)
        totals.append(sum(c))
        assert c[3] >= 0.0
    assert max(totals) - min(totals) <= 1e-10 * max(1.0, abs(totals[0]))


def test_loss_decomposition_rejects_bad_partition():
    net = init_network(3, 4, 1.0, seed=15)
    X = np.eye(3)
    y = np.zeros(3)
    overlap = [([0, 1, 2], [2, 3])] * 3
    with pytest.raises(InvalidInputError):
        loss_decomposition(net, net, X, y, overlap)
    missing = [([0, 1], [2])] * 3
    with pytest.raises(InvalidInputError):
        loss_decomposition(net, net, X, y, missing)
    with pytest.raises(DimensionError):
        loss_decomposition(net, net, X, y, [([0, 1, 2, 3], [])] * 2)


def test_trajectory_decomposition_records():
    tr, te = f3_data(n=8, n_test=4)
    hp = Hyperparams(eta=0.05, steps=10, kappa=1.0, seed=16)
    traj = train_twin(tr, te, 3, 16, hp, Diagnostics(decomposition=True))
    for t in range(10):
        rec, nxt = traj.records[t], traj.records[t + 1]
        assert rec.decomposition is not None
        dl = nxt.loss_1bit - rec.loss_1bit
        assert abs(dl - sum(rec.decomposition)) <= 1e-8 * max(1.0, rec.loss_1bit)
    assert traj.records[-1].decomposition is None
