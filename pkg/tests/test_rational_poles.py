from functools import lru_cache

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from qwrg import laplace_rg as rg
from qwrg import rational_poles as rp


@lru_cache(maxsize=None)
def levels(k_max):
    return rp.line_rg_symbolic(k_max)


cplx = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


def test_poly_roots_small():
    r = np.sort_complex(rp.poly_roots([-1, 0, 1]))
    assert np.allclose(r, [-1, 1])
    with pytest.raises(rp.PoleError):
        rp.poly_roots([3.0])


def test_poly_roots_aberth_degree_200():
    p = rp.Polynomial(np.r_[-0.5, np.zeros(199), 1])
    got, ok = rp.poly_roots(p, method="aberth", full_output=True)
    assert ok and got.size == 200
    assert np.abs(np.abs(got) - 0.5 ** (1 / 200)).max() < 1e-14
    assert rp.dedup(got).size == 200


def test_aberth_matches_companion():
    rng = np.random.default_rng(0)
    roots = np.exp(2j * np.pi * rng.random(50)) * (1 + 0.1 * rng.random(50))
    p = rp.Polynomial.from_roots(roots)
    a, ok = rp.poly_roots(p, method="aberth", full_output=True)
    c = rp.poly_roots(p, method="companion")
    assert ok
    assert np.abs(a[:, None] - c[None]).min(1).max() < 1e-8


def test_rational_cancellation():
    num = rp.Polynomial.from_roots([0.5, 2.0])
    den = rp.Polynomial.from_roots([0.5, -1.5, 3.0])
    f = rp.RationalFunction(num, den)
    assert f.den.degree == 2
    assert np.allclose(np.sort_complex(f.poles()), [-1.5, 3.0])
    z = 0.3 + 0.2j
    assert abs(f(z) - num(z) / den(z)) < 1e-12
    with pytest.raises(ZeroDivisionError):
        rp.RationalFunction(num, rp.Polynomial([0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=6), st.lists(cplx, min_size=1, max_size=6), cplx)
def test_polynomial_arithmetic(a, b, z):
    p, q = rp.Polynomial(a), rp.Polynomial(b)
    pa, qa = np.polynomial.Polynomial(a), np.polynomial.Polynomial(b)
    scale = 1 + sum(abs(x) for x in a) * sum(abs(x) for x in b) * max(1, abs(z)) ** 12
    assert abs((p * q)(z) - pa(z) * qa(z)) <= 1e-10 * scale
    assert abs((p + q)(z) - pa(z) - qa(z)) <= 1e-10 * scale
    assert abs((p - q)(z) - pa(z) + qa(z)) <= 1e-10 * scale
    assert abs(p.deriv()(z) - pa.deriv()(z)) <= 1e-10 * scale


@settings(max_examples=50, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=8, unique=True))
def test_roots_of_product_of_factors(roots):
    roots = np.array(roots)
    d = np.abs(roots[:, None] - roots[None]) + np.eye(roots.size) * 10
    assume(d.min() > 0.05)
    got = rp.Polynomial.from_roots(roots).roots()
    assert np.abs(got[:, None] - roots[None]).min(1).max() < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=20))
def test_dedup_idempotent_and_separated(zs):
    z = np.concatenate([np.array(zs), np.array(zs) + 1e-9])
    out = rp.dedup(z)
    assert out.size <= len(set(zs))
    assert np.array_equal(np.sort_complex(rp.dedup(out)), np.sort_complex(out))
    if out.size > 1:
        d = np.abs(out[:, None] - out[None]) + np.eye(out.size)
        assert d.min() >= rp.DEDUP_TOL
    assert np.abs(z[:, None] - out[None]).min(1).max() < rp.DEDUP_TOL


@settings(max_examples=30, deadline=None)
@given(st.lists(cplx, min_size=1, max_size=10))
def test_pairing_error_zero_for_conjugate_closed(zs):
    z = np.array(zs)
    ps = rp.PoleSet(1, np.concatenate([z, np.conj(z)]), "hopping")
    # dedup may merge a near-real pair into one pole off the axis
    assert ps.conjugate_pairing_error() < 2 * rp.DEDUP_TOL


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.lists(st.floats(0, 2 * np.pi), min_size=1, max_size=20))
def test_line_unitarity_on_circle(k, phis):
    z = np.exp(1j * np.array(phis))
    a, b = rp.line_params(z, k)
    assert np.abs(np.abs(a) ** 2 + np.abs(b) ** 2 - 1).max() < 1e-10
    assert np.abs(np.abs(a * a + b * b) - 1).max() < 1e-10


@pytest.mark.parametrize("k", [1, 3, 6, 10])
def test_line_float_matches_exact(k):
    rng = np.random.default_rng(k)
    for _ in range(3):
        z = rng.uniform(0.3, 1.2) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        a, b = rp.line_params(z, k)
        ea, eb = levels(10)[k - 1].evaluate(z)
        assert abs(a - ea) < 1e-10 * max(1, abs(ea))
        assert abs(b - eb) < 1e-10 * max(1, abs(eb))


def test_line_rational_objects():
    fa, fb = levels(6)[3].rational()
    z = 0.6 * np.exp(0.4j)
    a, b = rp.line_params(z, 4)
    assert abs(fa(z) - a) < 1e-9 and abs(fb(z) - b) < 1e-9


def test_line_block_det_unimodular():
    z = np.exp(1j * np.linspace(0.1, 6, 50))
    for k in (1, 4, 8):
        for zz in z:
            A, B, M = rp.line_blocks(zz, k)
            assert abs(abs(np.linalg.det(A + B + M)) - 1) < 1e-10


@pytest.mark.parametrize("k", range(1, 9))
def test_pole_structure(k):
    h = rp.hopping_poles(k, levels=levels(8))
    a = rp.amplitude_poles(k, levels=levels(8))
    # w = z^2 roots: +-i and the 2^(k-1) - 1 roots of G (the 2-site ring has only z = +-1)
    assert a.poles.size == (2 if k == 1 else 2 ** k + 2)
    assert np.abs(np.abs(a.poles) - 1).max() < 1e-8
    assert a.conjugate_pairing_error() < rp.DEDUP_TOL
    assert h.poles.size == 2 * (2 ** k - 2)
    if h.poles.size:
        assert np.abs(h.poles).min() > 1
        assert h.conjugate_pairing_error() < rp.DEDUP_TOL


def test_amplitude_poles_match_dense_spectrum():
    U = rp.line_propagator(4)
    ev = np.linalg.eigvals(U)
    am = rp.amplitude_poles(2)
    assert np.abs(np.abs(ev[:, None] - am.poles[None]).min(1)).max() < 1e-10


@pytest.mark.parametrize("k", [6, 7])
def test_aberth_agrees_with_exact(k):
    ha, he = rp.hopping_poles(k, "aberth"), rp.hopping_poles(k, "exact", levels(8))
    aa, ae = rp.amplitude_poles(k, "aberth"), rp.amplitude_poles(k, "exact", levels(8))
    for x, y in ((ha, he), (aa, ae)):
        assert x.poles.size == y.poles.size
        assert np.abs(x.poles[:, None] - y.poles[None]).min(1).max() < 1e-9


def test_theta_flow_ratio():
    ff = rp.flow_fit([rp.hopping_poles(k) for k in range(4, 10)])
    assert ff.geometric
    assert ff.theta_ratio[-1] == pytest.approx(0.5, rel=0.05)
    assert ff.sqrt_l1l2 == pytest.approx(2.0, rel=0.02)
    assert all(o["theta_lt_1"] and o["eps_lt_theta"] for o in ff.ordering)


def test_flow_fit_needs_levels():
    with pytest.raises(rp.PoleError):
        rp.flow_fit([rp.hopping_poles(k) for k in (3, 4, 5)])
    with pytest.raises(rp.PoleError):
        rp.flow_fit([rp.hopping_poles(k) for k in (2, 3, 5, 6)])


@pytest.mark.parametrize("k", range(2, 8))
def test_classical_line_poles_real_and_match_scan(k):
    c = rp.classical_line_poles(k)
    assert np.abs(c.poles.imag).max() < 1e-12
    assert c.real_pole == pytest.approx(rg.classical_pole("ring", k), abs=1e-12)


def test_classical_line_ratio():
    eps = np.array([rp.classical_line_poles(k).real_pole - 1 for k in range(4, 9)])
    assert eps[-1] / eps[-2] == pytest.approx(0.25, rel=0.05)


def test_degree_cap():
    with pytest.raises(rp.DegreeOverflow):
        rp.classical_line_levels(rp.K_CAP + 1)


def test_annulus_finds_known_poles():
    zs = np.array([1.1 * np.exp(0.5j), 1.1 * np.exp(-0.5j), 1.2])
    f = lambda z: np.array([np.sum(1 / (z - zs))])
    ps = rp.annulus_poles(f, (1.0, 1.3), n_r=30, n_phi=360)
    assert np.abs(ps.poles[:, None] - zs[None]).min(0).max() < 1e-8


def test_residue_character_simple_poles():
    zp = 1.05 * np.exp(0.2j)
    zs = np.array([zp, np.conj(zp), 1.3])
    R = np.array([0.5, 0.5, 1.0])
    f = lambda z: np.sum(R / (z - zs))
    rep = rp.residue_character(rp.PoleSet(3, zs, "hopping"), f)
    assert rep.p == pytest.approx(0.5, abs=1e-8)
    assert rep.branch == "phi_zero"
    assert not rep.higher_order
    assert abs(rep.model_at_1) < 1e-8
