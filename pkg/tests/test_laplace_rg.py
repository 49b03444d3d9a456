import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qwrg import laplace_rg as rg
from qwrg import networks as nw
from qwrg import rational_poles as rp
from qwrg import walk as wk

S5, S17 = math.sqrt(5), math.sqrt(17)
EXPECTED = {
    ("ring", "unitary"): [2, 2],
    ("dsg", "unitary"): [3, 5 / 3, 1],
    ("mk3", "unitary"): [7, 3],
    ("mk4", "unitary"): [13, 19 / 7],
    ("hn3", "unitary"): [2, (1 + S17) / 4],
    ("ring", "stochastic"): [4],
    ("dsg", "stochastic"): [5, 0.6],
    ("mk3", "stochastic"): [21],
    ("mk4", "stochastic"): [247 / 7],
    ("hn3", "stochastic"): [2 * (S5 - 1), (1 + S5) / 4],
}


@lru_cache(maxsize=None)
def report(kind, mode):
    return rg.fixed_point_report(kind, mode)


@pytest.mark.parametrize("kind,mode", list(EXPECTED))
def test_fixed_point_eigenvalues(kind, mode):
    r = report(kind, mode)
    got = np.abs(r.eigenvalues[:len(EXPECTED[kind, mode])])
    assert np.abs(got - EXPECTED[kind, mode]).max() < 1e-9
    assert r.residuals["fixed_point"] < 1e-10


def test_line_fixed_point_and_degeneracy():
    r = report("ring", "unitary")
    assert np.allclose(np.abs(r.a_inf), 1 / math.sqrt(2), atol=1e-12)
    assert r.degenerate
    assert r.dw_qw == pytest.approx(1.0, abs=1e-10)


def test_derived_dimensions():
    q, c = report("dsg", "unitary"), report("dsg", "stochastic")
    assert q.dw_qw == pytest.approx(math.log2(S5), abs=1e-10)
    assert c.dw_rw == pytest.approx(math.log2(5), abs=1e-10)
    assert q.dw_qw / c.dw_rw == pytest.approx(0.5, abs=1e-9)
    assert q.df_check == pytest.approx(math.log2(3), abs=1e-9)
    assert report("ring", "unitary").df_check == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("kind", ["mk3", "mk4"])
def test_mk_product_rule(kind):
    q, c = report(kind, "unitary"), report(kind, "stochastic")
    l1, l2 = np.abs(q.eigenvalues[:2])
    assert l1 * l2 == pytest.approx(abs(c.eigenvalues[0]), abs=1e-6)


def test_report_json_fields():
    d = report("dsg", "unitary").to_dict()
    for key in ("a_inf", "jacobian", "eigenvalues", "amplitudes", "dw_qw", "df_check", "degenerate", "residuals"):
        assert key in d


def test_line_flow_matches_exact_recursion():
    t = rg.get_template("ring")
    rng = np.random.default_rng(3)
    for k in (1, 3, 6):
        z = 0.8 * np.exp(1j * rng.uniform(0, 2 * np.pi))
        a, b = rg.flow(t, z, k)[-1].values
        ea, eb = rp.line_params(z, k)
        assert abs(a - ea) < 1e-12 and abs(b - eb) < 1e-12


def test_linearization_grows_like_lambda1():
    g = rg.linearization_growth(rg.get_template("dsg"), 1e-9, 4)
    r = g[1:] / g[:-1]
    assert r[-1] == pytest.approx(3.0, rel=0.02)


@pytest.mark.parametrize("variant", ["mk3", "mk4"])
@pytest.mark.parametrize("g", [1, 2])
def test_mk_template_matches_brute_force(variant, g):
    z = 0.3 + 0.4j
    net = nw.build_mk(variant, g, close_anchors=False)
    W = rg.effective_coupling(net, z, [net.offset[0], net.offset[1]], identity_nodes=(0, 1))
    t = rg.get_template(variant)
    assert abs(W[0, 1] - rg.flow(t, z, g)[-1].values[0]) < 1e-12


@pytest.mark.parametrize("g", [0, 1, 2])
def test_dsg_template_matches_brute_force(g):
    z = 0.9 * np.exp(0.7j)
    net = nw.build_dsg(g)
    W = rg.effective_coupling(net, z, [net.offset[c] + 2 for c in net.boundary])
    r, tc, ta = rg.flow(rg.get_template("dsg"), z, g + 1)[-1].values
    assert np.isclose(W[0, 0], r, atol=1e-12)
    assert sorted(np.round([W[0, 1], W[0, 2]], 10), key=abs) == sorted(np.round([tc, ta], 10), key=abs)


CASES = [("ring", 3), ("dsg", 2), ("hn3", 4), ("mk3", 2), ("mk4", 2)]


@pytest.mark.parametrize("kind,g", CASES)
@pytest.mark.parametrize("mode", ["unitary", "stochastic"])
def test_decimation_matches_direct_solve(kind, g, mode):
    net = nw.build(kind, g)
    keep = nw.retained_sites(net)
    interior = np.setdiff1d(np.arange(net.n_nodes), keep)
    rng = np.random.default_rng(11)
    for _ in range(3):
        z = 0.95 * rng.uniform() ** 0.5 * np.exp(2j * np.pi * rng.uniform())
        sys_ = rg.assemble(net, z, mode=mode)
        full = sys_.solve()
        red = rg.decimate(sys_, interior)
        x = red.solve()
        mask = np.isin(sys_.sites, keep)
        assert np.abs(x - full[mask]).max() < 1e-12


def test_decimate_singular_raises():
    W = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=complex)
    with pytest.raises(rg.DecimationSingular):
        rg.decimate(rg.cell_system(W, [0, 1, 2]), [1])
    rg.decimate(rg.cell_system(W, [0, 1, 2]), [1], singular="lstsq")


def test_laplace_equals_power_sum():
    net = nw.build_dsg(2)
    U = wk.build_propagator(net)
    psi0 = wk.initial_state(net)
    z = 0.5 * np.exp(0.3j)
    x = rg.assemble(net, z).solve()
    acc = np.zeros(net.n_ports, complex)
    for t, f in enumerate(wk.trajectory(U, psi0, 80)):
        acc += z ** t * f.psi
    assert np.abs(x - acc).max() < 1e-10


def test_fd_jacobian_methods_on_polynomial_map():
    f = lambda v: np.array([v[0] ** 2 + v[1], 3 * v[0] * v[1]])
    x = np.array([0.7, -0.4], dtype=complex)
    J = np.array([[2 * x[0], 1], [3 * x[1], 3 * x[0]]])
    for m, tol in (("central", 1e-7), ("richardson", 1e-9), ("cauchy", 1e-12)):
        step = 1e-7 if m == "central" else 1e-3
        assert np.abs(rg.fd_jacobian(f, x, step, m) - J).max() < tol


def test_aitken_geometric():
    seq = 5 + 0.5 ** np.arange(10)
    assert rg.aitken(seq) == pytest.approx(5.0, abs=1e-12)


def test_classical_ring_pole_matches_exact():
    for k in (3, 5):
        assert rg.classical_pole("ring", k) == pytest.approx(rp.classical_line_poles(k).real_pole, abs=1e-12)


def test_classical_pole_scaling_ring():
    ps = rg.classical_pole_scaling("ring", range(4, 9))
    assert ps.last_ratio == pytest.approx(0.25, rel=0.05)
    assert ps.lambda1 == pytest.approx(4.0, rel=0.01)
    slope, _ = rg.moment_scaling(ps, 1)
    assert slope == pytest.approx(2.0, rel=0.05)


def test_classical_moments():
    assert rg.classical_moments(0.1, 0) == 1.0
    assert rg.classical_moments(0.1, 2) == pytest.approx(200.0)


def test_fixed_point_failure_reports_trajectory():
    t = rg.get_template("ring")
    with pytest.raises(rg.FixedPointError) as e:
        rg.find_fixed_point(t, init=np.array([5.0, -3.0]), warmup=0, max_iter=2, tol=1e-30)
    assert e.value.trajectory is not None


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0, 2 * np.pi), st.sampled_from(CASES[:3]))
def test_decimation_exact_random_z(r, phi, case):
    net = nw.build(*case)
    z = r * np.exp(1j * phi)
    sys_ = rg.assemble(net, z)
    keep = nw.retained_sites(net)
    red = rg.decimate(sys_, np.setdiff1d(np.arange(net.n_nodes), keep))
    mask = np.isin(sys_.sites, keep)
    assert np.abs(red.solve() - sys_.solve()[mask]).max() < 1e-11


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 0.9), st.floats(0, 2 * np.pi), st.sampled_from(["ring", "dsg", "mk3", "hn3"]))
def test_flow_conjugation_symmetry(r, phi, kind):
    # real coins: couplings at conj(z) are the conjugates of those at z
    t = rg.get_template(kind)
    z = r * np.exp(1j * phi)
    a = rg.flow(t, z, 3)[-1].values
    b = rg.flow(t, np.conj(z), 3)[-1].values
    assert np.abs(a - np.conj(b)).max() < 1e-10 * max(1, np.abs(a).max())
