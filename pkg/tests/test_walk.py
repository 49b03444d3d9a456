import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qwrg import networks as nw
from qwrg import walk as wk


@pytest.mark.parametrize("d", range(2, 7))
def test_grover_coin(d):
    G = wk.grover_coin(d)
    assert np.allclose(G, G.T)
    assert np.allclose(G @ G, np.eye(d), atol=1e-15)
    assert np.allclose(np.diag(G), 2 / d - 1)


def test_grover_small_cases():
    assert np.allclose(wk.grover_coin(2), [[0, 1], [1, 0]])
    G = wk.grover_coin(3)
    assert np.isclose(G[0, 0], -1 / 3) and np.isclose(G[0, 1], 2 / 3)
    with pytest.raises(wk.WalkError):
        wk.grover_coin(1)


CASES = [("ring", 2), ("ring", 5), ("dsg", 1), ("dsg", 3), ("hn3", 4), ("mk3", 2), ("mk4", 2)]


@pytest.mark.parametrize("kind,g", CASES)
def test_unitary_and_stochastic(kind, g):
    net = nw.build(kind, g)
    assert wk.build_propagator(net).unitarity_residual() < 1e-12
    P = wk.build_propagator(net, mode="stochastic")
    assert P.matrix.min() >= 0
    assert np.abs(P.column_sums() - 1).max() < 1e-12


def test_hadamard_one_step():
    net = nw.build_ring(2)
    U = wk.build_propagator(net, "hadamard")
    f = wk.evolve(U, wk.initial_state(net, ic=0), 1)
    rho = wk.pdf(f, net)
    assert np.allclose(np.abs(f.psi[np.abs(f.psi) > 0]), 1 / np.sqrt(2))
    assert np.allclose(rho, [0, 0.5, 0, 0.5])


def test_grover_ring_one_step_density():
    net = nw.build_ring(2)
    rho = wk.pdf(wk.evolve(wk.build_propagator(net), wk.initial_state(net), 1), net)
    assert np.allclose(rho, [0, 0.5, 0, 0.5])


def test_coin_degree_mismatch():
    with pytest.raises(wk.WalkError):
        wk.build_propagator(nw.build_dsg(1), "hadamard")


def test_evolve_matches_dense_power():
    net = nw.build_ring(4)
    U = wk.build_propagator(net)
    psi0 = wk.initial_state(net)
    assert np.array_equal(wk.evolve(U, psi0, 0).psi, psi0.psi)
    ref = np.linalg.matrix_power(U.dense(), 3) @ psi0.psi
    assert np.abs(wk.evolve(U, psi0, 3).psi - ref).max() < 1e-12


def test_stochastic_conservation():
    net = nw.build_dsg(2)
    U = wk.build_propagator(net, mode="stochastic")
    rho = wk.pdf(wk.evolve(U, wk.initial_state(net, "stochastic"), 100), net, "stochastic")
    assert abs(rho.sum() - 1) < 1e-12


def test_localized_start_density():
    net = nw.build_dsg(1)
    rho = wk.pdf(wk.initial_state(net), net)
    assert rho[net.origin] == pytest.approx(1.0)
    assert rho.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("kind,g", [("ring", 5), ("dsg", 2), ("hn3", 5), ("mk3", 2)])
def test_spectral_matches_stepping(kind, g):
    net = nw.build(kind, g)
    U = wk.build_propagator(net)
    psi0 = wk.initial_state(net)
    sol = wk.spectral_solve(U, psi0)
    assert np.abs(np.abs(sol.eigenvalues) - 1).max() < 1e-10
    for t in (1, 17, 50):
        ref = wk.evolve(U, psi0, t).psi
        assert np.abs(sol.state(t) - ref).max() < 1e-10
        assert np.abs(sol.density(t) - wk.pdf(ref, net)).max() < 1e-10
    assert sol.gap > 0


def test_spectral_stochastic_unique_stationary():
    net = nw.build_ring(3)
    sol = wk.spectral_solve(wk.build_propagator(net, mode="stochastic"), wk.initial_state(net, "stochastic"))
    lam = sol.eigenvalues
    assert np.sum(np.abs(lam - 1) < 1e-10) == 1
    # the only other unimodular eigenvalue is -1, from bipartiteness of the even ring
    others = lam[np.abs(lam - 1) >= 1e-10]
    assert np.all((np.abs(others) < 1 - 1e-10) | (np.abs(others + 1) < 1e-10))


def test_spectral_cap():
    net = nw.build_dsg(6)
    with pytest.raises(wk.WalkError):
        wk.spectral_solve(wk.build_propagator(net), wk.initial_state(net))


def test_msd_series_basics():
    net = nw.build_ring(8)
    U = wk.build_propagator(net)
    s = wk.msd_series(U, wk.initial_state(net), 100, snapshot_times=[10], tail_probs=[1e-3])
    assert s.msd[0] == 0
    assert np.allclose(s.msd[1:], np.arange(1, 101) ** 2)  # Grover(2) is a pure swap: ballistic
    assert s.norm_residual.max() < 1e-12
    assert set(s.snapshots) == {10}
    assert s.fronts[1e-3][50] == 50


def test_estimate_dw_rings():
    net = nw.build_ring(10)
    s = wk.msd_series(wk.build_propagator(net, mode="stochastic"), wk.initial_state(net, "stochastic"), 2000)
    dw, se = wk.estimate_dw(s.t, s.msd, (200, 2000))
    assert dw == pytest.approx(2.0, rel=0.05)
    sq = wk.msd_series(wk.build_propagator(net, "hadamard"), wk.initial_state(net, ic=0), 400)
    assert 2 / wk.estimate_dw(sq.t, sq.msd, (40, 400))[0] == pytest.approx(2.0, rel=0.05)


def test_estimate_dw_short_window():
    with pytest.raises(wk.WalkError):
        wk.estimate_dw(np.arange(20), np.arange(20) ** 2.0, (3, 6))


def test_tail_front():
    prof = np.array([0.5, 0.2, 0.2, 0.1, 0.0])
    assert wk.tail_front(prof, 0.1) == 3
    assert wk.tail_front(prof, 0.35) == 1
    assert wk.tail_front(np.array([1.0, 0.0]), 0.1) == 0.5


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CASES), st.integers(0, 2 ** 32 - 1), st.integers(1, 200))
def test_norm_preserved_random_state(case, seed, t):
    net = nw.build(*case)
    U = wk.build_propagator(net)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=net.n_ports) + 1j * rng.normal(size=net.n_ports)
    psi /= np.linalg.norm(psi)
    out = wk.evolve(U, wk.AmplitudeField(psi), t)
    assert abs(np.linalg.norm(out.psi) - 1) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CASES), st.integers(0, 2 ** 32 - 1))
def test_stochastic_preserves_mass_random_state(case, seed):
    net = nw.build(*case)
    P = wk.build_propagator(net, mode="stochastic")
    p = np.random.default_rng(seed).random(net.n_ports)
    p /= p.sum()
    out = wk.evolve(P, wk.AmplitudeField(p), 37).psi
    assert out.min() >= 0
    assert abs(out.sum() - 1) < 1e-12


@pytest.mark.xfail(strict=True, reason="Grover DSG walk keeps a localized core; msd slope gives d_w ~ 2.6-3, "
                                      "the tail front gives log2 sqrt5 (see test_dsg_front_exponent)")
def test_dsg_msd_exponent():
    net = nw.build_dsg(7)
    s = wk.msd_series(wk.build_propagator(net), wk.initial_state(net), 2000)
    dw, _ = wk.estimate_dw(s.t, s.msd, wk.front_window(net))
    assert dw == pytest.approx(np.log2(np.sqrt(5)), rel=0.10)


def test_dsg_front_exponent():
    net = nw.build_dsg(7)
    s = wk.msd_series(wk.build_propagator(net), wk.initial_state(net), 2000, tail_probs=[1e-4])
    dw, _ = wk.estimate_dw_front(s, 1e-4, wk.front_window(net))
    assert dw == pytest.approx(np.log2(np.sqrt(5)), rel=0.10)
