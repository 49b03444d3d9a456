"""Exact line RG as rational functions, root finding and pole-flow analysis.

For the Hadamard walk on the line the renormalized couplings are rational in
``w = z**2``. With ``alpha = sqrt(2) a`` and ``beta = sqrt(2) b`` one has
``alpha_k = N_alpha / Q``, ``beta_k = N_beta / Q`` with integer polynomials
obeying (from ``alpha_1 = beta_1 = w``)::

    R       = (N_alpha**2 + N_beta**2) / Q            (exact division)
    Q'      = 2 Q**2 - 2 N_beta Q + N_beta**2
    N_beta' = 2 N_beta Q - 2 N_beta**2 - N_alpha**2 + N_beta R
    N_alpha'= N_alpha**2

Poles of the hopping parameters are the roots of ``Q``. The site amplitude of
a ring of ``2**k`` sites, reduced to one site, has denominator
``g = det(I - (A+B+M)) = 1 - (alpha+beta) + (alpha**2+beta**2)/2``; its
numerator ``2 Q g = 2Q - 2(N_alpha+N_beta) + R`` factors as
``(w**2 + 1) G**2`` with ``G`` squarefree.

Integer coefficients reach ~1300 bits at k=10, so floating evaluation uses the
equivalent recursion in (alpha, beta) with forward-mode derivatives, and roots
beyond ``EXACT_K_MAX`` come from Aberth iterations driven by that
log-derivative.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import flint
import numpy as np

TRIM_TOL = 1e-13
CANCEL_TOL = 1e-9
DEDUP_TOL = 1e-7
COMPANION_MAX = 60
EXACT_K_MAX = 7
K_CAP = 14


class PoleError(RuntimeError):
    """Root finding or pole classification failed."""


class DegreeOverflow(PoleError):
    pass


# --------------------------------------------------------------------------
# Polynomials
# --------------------------------------------------------------------------

class Polynomial:
    """Complex polynomial, coefficients in ascending degree."""

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        self.coeffs = self._trim(c)

    @staticmethod
    def _trim(c: np.ndarray) -> np.ndarray:
        if c.size == 0:
            return np.zeros(1, dtype=complex)
        m = np.abs(c).max()
        if m == 0:
            return np.zeros(1, dtype=complex)
        nz = np.flatnonzero(np.abs(c) > TRIM_TOL * m)
        return c[:nz[-1] + 1].copy()

    @classmethod
    def from_roots(cls, roots, lead: complex = 1.0) -> "Polynomial":
        return cls(lead * np.poly(np.asarray(roots, dtype=complex))[::-1])

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def deriv(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0])
        return Polynomial(self.coeffs[1:] * np.arange(1, self.coeffs.size))

    def _coerce(self, o) -> "Polynomial":
        return o if isinstance(o, Polynomial) else Polynomial([o])

    def __add__(self, o):
        o = self._coerce(o)
        n = max(self.coeffs.size, o.coeffs.size)
        a = np.zeros(n, complex)
        a[:self.coeffs.size] += self.coeffs
        a[:o.coeffs.size] += o.coeffs
        return Polynomial(a)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self.coeffs)

    def __sub__(self, o):
        return self + (-self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        o = self._coerce(o)
        return Polynomial(np.convolve(self.coeffs, o.coeffs))

    __rmul__ = __mul__

    def __eq__(self, o):
        return isinstance(o, Polynomial) and np.array_equal(self.coeffs, o.coeffs)

    def __repr__(self):
        return f"Polynomial(degree={self.degree})"

    def roots(self, **kw) -> np.ndarray:
        return poly_roots(self, **kw)


@dataclass
class AberthResult:
    roots: np.ndarray
    converged: np.ndarray
    iterations: int

    @property
    def ok(self) -> bool:
        return bool(self.converged.all())


def aberth(logderiv: Callable[[np.ndarray], np.ndarray], n: int, init=None, tol: float = 1e-14,
           max_iter: int = 500, radius: float = 1.05, seed: int = 0) -> AberthResult:
    """Aberth-Ehrlich iteration for the ``n`` roots of a function given ``f'/f``.

    Roots whose Newton correction falls below ``tol * max(1, |z|)`` are frozen;
    an iteration that stops improving counts as converged once the correction is
    below ``1e3 * tol``. Non-finite corrections (landing on a pole of
    ``f'/f``) are replaced by a small fixed kick.
    """
    rng = np.random.default_rng(seed)
    if init is None:
        ang = 2 * np.pi * (np.arange(n) + 0.5) / n + 0.01 * rng.standard_normal(n)
        z = radius * np.exp(1j * ang)
    else:
        z = np.asarray(init, dtype=complex).copy()
    done = np.zeros(n, dtype=bool)
    last = np.full(n, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        with np.errstate(all="ignore"):
            L = logderiv(z[act])
            diff = z[act, None] - z[None, :]
            diff[np.arange(act.size), act] = np.inf
            S = (1.0 / diff).sum(axis=1)
            step = 1.0 / (L - S)
        bad = ~np.isfinite(step)
        step[bad] = -1e-6 * (1 + 1j)
        z[act] -= step
        a = np.abs(step)
        scale = np.maximum(1.0, np.abs(z[act]))
        stalled = (a >= 0.5 * last[act]) & (a < 1e3 * tol * scale)
        done[act] = (~bad) & ((a < tol * scale) | stalled)
        last[act] = a
    return AberthResult(z, done, it)


def poly_roots(p: Polynomial | Sequence, method: str = "auto", tol: float = 1e-14,
               max_iter: int = 500, full_output: bool = False):
    """All roots of ``p``.

    ``method="auto"`` uses companion-matrix eigenvalues up to degree
    ``COMPANION_MAX`` and Aberth iteration above. Aberth non-convergence emits a
    warning (or returns the flag with ``full_output=True``).
    """
    p = p if isinstance(p, Polynomial) else Polynomial(p)
    n = p.degree
    if n < 1:
        raise PoleError("polynomial of degree < 1 has no roots")
    if method == "auto":
        method = "companion" if n <= COMPANION_MAX else "aberth"
    if method == "companion":
        r = np.roots(p.coeffs[::-1])
        ok = True
    elif method == "aberth":
        dp = p.deriv()
        # Cauchy bound scaled start radius
        c = p.coeffs
        rad = float(np.exp(np.mean(np.log(np.abs(c[0] / c[-1]) + 1e-300)) / n)) if c[0] != 0 else 1.0
        res = aberth(lambda z: dp(z) / p(z), n, tol=tol, max_iter=max_iter, radius=max(rad, 1e-3))
        r = res.roots
        # a root is as good as double precision allows once |p(z)| is within
        # the rounding bound of Horner evaluation
        bound = 64 * np.finfo(float).eps * Polynomial(np.abs(p.coeffs))(np.abs(r)).real
        ok = bool(np.all(res.converged | (np.abs(p(r)) <= bound)))
    else:
        raise ValueError(f"unknown method {method!r}")
    if not ok:
        if full_output:
            return r, False
        warnings.warn("Aberth iteration did not converge for all roots", RuntimeWarning)
    return (r, bool(ok)) if full_output else r


class RationalFunction:
    """``num / den`` with monic denominator and common roots cancelled."""

    def __init__(self, num: Polynomial, den: Polynomial, cancel: bool = True):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.degree == 0 and den.coeffs[0] == 0:
            raise ZeroDivisionError("zero denominator")
        if cancel and num.degree > 0 and den.degree > 0:
            num, den = self._cancel(num, den)
        lead = den.coeffs[-1]
        self.num = Polynomial(num.coeffs / lead)
        self.den = Polynomial(den.coeffs / lead)

    @staticmethod
    def _cancel(num, den):
        rn, rd = list(poly_roots(num)), list(poly_roots(den))
        keep_d = []
        for r in rd:
            j = next((i for i, s in enumerate(rn) if abs(s - r) < CANCEL_TOL * max(1, abs(r))), None)
            if j is None:
                keep_d.append(r)
            else:
                rn.pop(j)
        if len(keep_d) == len(rd):
            return num, den
        return (Polynomial.from_roots(rn, num.coeffs[-1]) if rn else Polynomial([num.coeffs[-1]]),
                Polynomial.from_roots(keep_d, den.coeffs[-1]) if keep_d else Polynomial([den.coeffs[-1]]))

    def __call__(self, z):
        return self.num(z) / self.den(z)

    def poles(self) -> np.ndarray:
        return poly_roots(self.den) if self.den.degree else np.zeros(0, complex)


# --------------------------------------------------------------------------
# Exact line recursion
# --------------------------------------------------------------------------

@dataclass
class LineLevel:
    """Level-k line couplings ``a = N_alpha/(sqrt2 Q)``, ``b = N_beta/(sqrt2 Q)`` in ``w = z**2``."""

    k: int
    n_alpha: flint.fmpz_poly
    n_beta: flint.fmpz_poly
    q: flint.fmpz_poly

    @property
    def r(self) -> flint.fmpz_poly:
        R, rem = divmod(self.n_alpha ** 2 + self.n_beta ** 2, self.q)
        if rem != 0:
            raise PoleError("inexact division in line recursion")
        return R

    @property
    def amplitude_numerator(self) -> flint.fmpz_poly:
        """``2 Q g``: vanishes where A+B+M has eigenvalue 1."""
        return 2 * self.q - 2 * (self.n_alpha + self.n_beta) + self.r

    def _prec(self) -> int:
        h = max(self.q.height_bits(), self.n_beta.height_bits(), self.n_alpha.height_bits())
        return 2 * int(h) + 128

    def evaluate(self, z) -> tuple[complex, complex]:
        """(a_k(z), b_k(z)) in high-precision ball arithmetic."""
        old = flint.ctx.prec
        flint.ctx.prec = self._prec()
        try:
            w = flint.acb(complex(z)) ** 2
            Q = flint.acb_poly(self.q.coeffs())(w)
            a = flint.acb_poly(self.n_alpha.coeffs())(w) / Q / flint.acb(2).sqrt()
            b = flint.acb_poly(self.n_beta.coeffs())(w) / Q / flint.acb(2).sqrt()
            return complex(a.mid()), complex(b.mid())
        finally:
            flint.ctx.prec = old

    def rational(self) -> tuple[RationalFunction, RationalFunction]:
        """Floating rational functions of z (only sensible for small k)."""
        if self.k > 6:
            raise DegreeOverflow("floating coefficients overflow beyond k=6; use evaluate()")
        s = 1 / math.sqrt(2)

        def inz(p):
            c = np.zeros(2 * max(p.degree(), 0) + 1, dtype=complex)
            c[::2] = [float(x) for x in p.coeffs()] or [0.0]
            return Polynomial(c)

        Q = inz(self.q)
        return (RationalFunction(inz(self.n_alpha) * s, Q, cancel=False),
                RationalFunction(inz(self.n_beta) * s, Q, cancel=False))


def line_rg_symbolic(k_max: int) -> list[LineLevel]:
    """Exact levels 1..k_max of the Hadamard line RG (level 0 is ``a=z, b=0``)."""
    if k_max > K_CAP:
        raise DegreeOverflow(f"k_max={k_max} exceeds cap {K_CAP}")
    w = flint.fmpz_poly([0, 1])
    lv = LineLevel(1, w, w, flint.fmpz_poly([1]))
    out = [lv]
    for k in range(2, k_max + 1):
        Na, Nb, Q, R = lv.n_alpha, lv.n_beta, lv.q, lv.r
        lv = LineLevel(k, Na * Na, 2 * Nb * Q - 2 * Nb * Nb - Na * Na + Nb * R,
                       2 * Q * Q - 2 * Nb * Q + Nb * Nb)
        out.append(lv)
    return out


def _line_forward(w: np.ndarray, k: int):
    """alpha_k, beta_k, dlogQ/dw and their w-derivatives for levels >= 1."""
    w = np.asarray(w, dtype=complex)
    a, b = w.copy(), w.copy()
    da = np.ones_like(w)
    db = np.ones_like(w)
    L = np.zeros_like(w)
    for _ in range(1, k):
        D = 2 - 2 * b + b * b
        dD = (-2 + 2 * b) * db
        L = 2 * L + dD / D
        a2 = a * a / D
        da2 = (2 * a * da * D - a * a * dD) / D ** 2
        num = a * a * (1 - b)
        dnum = 2 * a * da * (1 - b) - a * a * db
        b2 = b - num / D
        db2 = db - (dnum * D - num * dD) / D ** 2
        a, da, b, db = a2, da2, b2, db2
    return a, da, b, db, L


def line_params(z, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(a_k(z), b_k(z)) by the stable float recursion; vectorized over z."""
    z = np.asarray(z, dtype=complex)
    if k == 0:
        return z, np.zeros_like(z)
    a, _, b, _, _ = _line_forward(z * z, k)
    return a / math.sqrt(2), b / math.sqrt(2)


def line_blocks(z, k: int, coin: np.ndarray | None = None):
    """A_k, B_k, M_k site blocks of the Hadamard line walk at level k."""
    from .walk import hadamard_coin

    C = hadamard_coin() if coin is None else coin
    a, b = (complex(x) for x in line_params(z, k))
    sign = 1.0 if k == 0 else -1.0
    E11, E22, X = np.diag([1.0, 0]), np.diag([0, 1.0]), np.array([[0, 1.0], [1.0, 0]])
    return a * E11 @ C, sign * a * E22 @ C, b * X @ C


def _hop_logderiv(k: int):
    return lambda w: _line_forward(w, k)[4]


def _amp_g_logderiv(k: int):
    """d log G / dw where 2 Q g = (w^2+1) G^2."""
    def f(w):
        a, da, b, db, L = _line_forward(w, k)
        g = 1 - (a + b) + (a * a + b * b) / 2
        dg = -(da + db) + a * da + b * db
        return (L + dg / g - 2 * w / (w * w + 1)) / 2
    return f


def line_propagator(N: int, coin: np.ndarray | None = None) -> np.ndarray:
    """Dense ``2N x 2N`` line-walk operator on a ring of N sites.

    Row block x: ``psi_x(t+1) = A psi_{x+1} + B psi_{x-1}`` with ``A = E11 C``,
    ``B = E22 C``.
    """
    from .walk import hadamard_coin

    C = hadamard_coin() if coin is None else coin
    U = np.zeros((2 * N, 2 * N), dtype=complex)
    for x in range(N):
        r, up, dn = slice(2 * x, 2 * x + 2), 2 * ((x + 1) % N), 2 * ((x - 1) % N)
        U[r, up:up + 2] += np.diag([1.0, 0]) @ C
        U[r, dn:dn + 2] += np.diag([0, 1.0]) @ C
    return U


# --------------------------------------------------------------------------
# Pole sets
# --------------------------------------------------------------------------

def dedup(z: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out: list[complex] = []
    for v in z[np.lexsort((z.imag, z.real))]:
        if not any(abs(v - u) < tol for u in out[-8:]):
            out.append(v)
    out_a = np.array(out)
    # second pass for neighbours separated by the sort order
    keep = np.ones(out_a.size, dtype=bool)
    for i in range(out_a.size):
        if keep[i]:
            close = np.abs(out_a[i + 1:] - out_a[i]) < tol
            keep[i + 1:][close] = False
    return out_a[keep]


@dataclass
class PoleSet:
    """Poles of one level, with nearest-to-real-axis markers."""

    k: int
    poles: np.ndarray
    kind: str
    mode: str = "quantum"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        z = dedup(self.poles)
        # snap numerically real poles onto the axis so arg is 0 or pi
        real = np.abs(z.imag) < 1e-13 * np.maximum(1, np.abs(z))
        z[real] = z[real].real + 0j
        self.poles = z

    @property
    def radial(self) -> np.ndarray:
        return np.abs(self.poles) - 1

    @property
    def arg(self) -> np.ndarray:
        return np.angle(self.poles)

    @property
    def nearest(self) -> complex:
        """Pole with the smallest positive arg (its conjugate is implied)."""
        m = self.arg > 1e-12
        if not m.any():
            raise PoleError("no pole above the real axis")
        i = np.flatnonzero(m)[np.argmin(self.arg[m])]
        return complex(self.poles[i])

    @property
    def eps(self) -> float:
        return float(abs(self.nearest) - 1)

    @property
    def theta(self) -> float:
        return float(np.angle(self.nearest))

    @property
    def real_pole(self) -> float | None:
        """Real pole > 1 nearest to 1, if any."""
        r = self.poles[(np.abs(self.poles.imag) < 1e-9) & (self.poles.real > 1)].real
        return float(r.min()) if r.size else None

    def conjugate_pairing_error(self) -> float:
        if self.poles.size == 0:
            return 0.0
        d = np.abs(np.conj(self.poles)[:, None] - self.poles[None, :]).min(axis=1)
        return float(d.max())

    def rows(self) -> list[tuple]:
        return [(self.k, float(p.real), float(p.imag), float(abs(p)), float(np.angle(p)), self.kind)
                for p in self.poles]


def _z_from_w(wroots: np.ndarray) -> np.ndarray:
    s = np.sqrt(np.asarray(wroots, dtype=complex))
    return np.concatenate([s, -s])


def _flint_roots(p: flint.fmpz_poly) -> np.ndarray:
    return np.array([complex(r.mid()) for r, m in p.complex_roots() for _ in range(m)])


def hopping_poles(k: int, method: str = "auto", levels: list[LineLevel] | None = None) -> PoleSet:
    """Poles of the quantum-line hopping parameters a_k, b_k (roots of Q_k)."""
    if k < 1:
        return PoleSet(k, np.zeros(0, complex), "hopping")
    if method == "auto":
        method = "exact" if k <= EXACT_K_MAX else "aberth"
    n = 2 ** k - 2
    if n == 0:
        return PoleSet(k, np.zeros(0, complex), "hopping", meta={"method": method})
    if method == "exact":
        lv = (levels or line_rg_symbolic(k))[k - 1]
        w = _flint_roots(lv.q)
        ok = True
    else:
        res = aberth(_hop_logderiv(k), n)
        w, ok = res.roots, res.ok
    return PoleSet(k, _z_from_w(w), "hopping", meta={"method": method, "converged": bool(ok)})


def amplitude_poles(k: int, method: str = "auto", levels: list[LineLevel] | None = None) -> PoleSet:
    """Poles of the origin amplitude of the ``2**k``-site ring (eigenvalue 1 of A_k+B_k+M_k)."""
    if k < 1:
        raise PoleError("amplitude poles need k >= 1")
    if method == "auto":
        method = "exact" if k <= EXACT_K_MAX + 1 else "aberth"
    if method == "exact":
        lv = (levels or line_rg_symbolic(k))[k - 1]
        P = lv.amplitude_numerator
        _, facs = P.factor_squarefree()
        w = np.concatenate([_flint_roots(f) for f, _ in facs])
        ok = True
    else:
        n = 2 ** (k - 1) - 1
        res = aberth(_amp_g_logderiv(k), n) if n > 0 else AberthResult(np.zeros(0, complex), np.ones(0, bool), 0)
        w = np.concatenate([res.roots, [1j, -1j]])
        ok = res.ok
    return PoleSet(k, _z_from_w(w), "amplitude", meta={"method": method, "converged": bool(ok)})


def classical_line_levels(k_max: int) -> list[tuple[flint.fmpz_poly, flint.fmpz_poly, flint.fmpz_poly]]:
    """Exact (M, P, D) with classical line couplings m = M/D, p = P/D.

    Recursion from (m, p) = (0, z/2): p' = p^2/(1-2m), m' = m + p^2/(1-2m).
    """
    if k_max > K_CAP:
        raise DegreeOverflow(f"k_max={k_max} exceeds cap {K_CAP}")
    z = flint.fmpz_poly([0, 1])
    M, P, D = flint.fmpz_poly([0]), z, flint.fmpz_poly([2])
    out = [(M, P, D)]
    for _ in range(k_max):
        u = D - 2 * M
        M, P, D = M * u + P * P, P * P, D * u
        g = flint.fmpz_poly.gcd(flint.fmpz_poly.gcd(M, P), D)
        if g.degree() > 0 or abs(int(g.coeffs()[0])) > 1:
            M, P, D = M // g, P // g, D // g
        out.append((M, P, D))
    return out


def classical_line_poles(k: int) -> PoleSet:
    """Poles of the classical line couplings at level k (all real, > 1)."""
    M, P, D = classical_line_levels(k)[k]
    roots = _flint_roots(D) if D.degree() > 0 else np.zeros(0, complex)
    return PoleSet(k, roots, "hopping", mode="classical")


# --------------------------------------------------------------------------
# Numeric poles for general templates
# --------------------------------------------------------------------------

def annulus_poles(f: Callable[[complex], np.ndarray], r_range=(0.9, 1.3), n_r: int = 40,
                  n_phi: int = 720, newton_iter: int = 50, tol: float = 1e-12, k: int = 0,
                  kind: str = "hopping") -> PoleSet:
    """Poles of a vector-valued ``f`` in an annulus.

    Local minima of ``1/max|f|`` on a polar grid seed Newton iterations on the
    reciprocal of the dominant component.
    """
    r = np.linspace(*r_range, n_r)
    phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
    Z = r[:, None] * np.exp(1j * phi[None, :])
    H = np.empty(Z.shape)
    for i in range(n_r):
        for j in range(n_phi):
            with np.errstate(all="ignore"):
                v = np.abs(f(Z[i, j]))
            H[i, j] = 1 / v.max() if np.all(np.isfinite(v)) and v.max() > 0 else 0.0
    seeds = []
    for i in range(1, n_r - 1):
        for j in range(n_phi):
            nb = H[i - 1:i + 2, [(j - 1) % n_phi, j, (j + 1) % n_phi]]
            if H[i, j] <= nb.min() and H[i, j] < 0.1:
                seeds.append(Z[i, j])
    poles = []
    for z in seeds:
        comp = int(np.argmax(np.abs(f(z))))
        g = lambda x: 1 / f(x)[comp]
        for _ in range(newton_iter):
            h = 1e-7 * max(1, abs(z))
            with np.errstate(all="ignore"):
                dg = (g(z + h) - g(z - h)) / (2 * h)
                step = g(z) / dg
            if not np.isfinite(step):
                break  # landed on the pole itself
            z = z - step
            if abs(step) < tol * max(1, abs(z)):
                break
        if np.all(np.isfinite(z)) and r_range[0] <= abs(z) <= r_range[1]:
            poles.append(z)
    return PoleSet(k, np.array(poles, dtype=complex), kind, meta={"method": "annulus"})


# --------------------------------------------------------------------------
# Flow fits and residues
# --------------------------------------------------------------------------

@dataclass
class FlowFit:
    ks: np.ndarray
    eps: np.ndarray
    theta: np.ndarray
    eps_ratio: np.ndarray
    theta_ratio: np.ndarray
    lambda1: float | None
    sqrt_l1l2: float | None
    ordering: list[dict]
    geometric: bool


def _limit(seq: np.ndarray) -> float:
    from .laplace_rg import aitken

    return aitken(seq) if seq.size >= 3 else float(seq[-1])


def flow_fit(polesets: Sequence[PoleSet], ratio_cv_max: float = 0.2) -> FlowFit:
    """Geometric-ratio fits of eps_k and theta_k over consecutive levels.

    ``lambda1`` estimates 1/lim(eps_{k+1}/eps_k) and ``sqrt_l1l2`` estimates
    1/lim(theta_{k+1}/theta_k). The sequence counts as geometric when the
    coefficient of variation of the last ratios is below ``ratio_cv_max``;
    otherwise no estimates are returned.
    """
    ps = sorted(polesets, key=lambda p: p.k)
    if len(ps) < 4:
        raise PoleError("flow_fit needs at least 4 consecutive levels")
    ks = np.array([p.k for p in ps])
    if np.any(np.diff(ks) != 1):
        raise PoleError("levels must be consecutive")
    eps = np.array([p.eps for p in ps])
    theta = np.array([p.theta for p in ps])
    er, tr = eps[1:] / eps[:-1], theta[1:] / theta[:-1]
    tail = slice(-3, None)
    cv = max(np.std(er[tail]) / abs(np.mean(er[tail])), np.std(tr[tail]) / abs(np.mean(tr[tail])))
    geometric = bool(cv < ratio_cv_max)
    ordering = [{"k": int(k), "theta_lt_1": bool(t < 1), "eps_lt_theta": bool(e < t),
                 "eps_gt_theta2": bool(e > t * t)} for k, e, t in zip(ks, eps, theta)]
    return FlowFit(ks, eps, theta, er, tr,
                   1 / _limit(er) if geometric else None,
                   1 / _limit(tr) if geometric else None, ordering, geometric)


@dataclass
class ResidueReport:
    poles: dict
    residues: dict
    p: float
    phi: float
    branch: str
    higher_order: bool
    value_at_1: complex
    model_at_1: complex
    slope_at_1: complex
    pole_slope_at_1: complex


def _residue(f, z0: complex, r: float, n: int = 64) -> tuple[complex, complex]:
    w = np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)
    vals = np.array([f(z0 + r * x) for x in w])
    c1 = np.mean(vals * r * w)
    c2 = np.mean(vals * (r * w) ** 2)
    return complex(c1), complex(c2)


def residue_character(ps: PoleSet, f: Callable[[complex], complex], phi_tol: float = 0.05) -> ResidueReport:
    """Residues of ``f`` at the nearest conjugate pair and the nearest real pole.

    ``p`` is the weight of the complex pair in the summed residue moduli and
    ``phi`` the phase of the upper residue. ``model_at_1`` evaluates the
    three-pole model ``f(1) - sum_j R_j/(1 - z_j)`` (the smooth remainder).
    """
    zp = ps.nearest
    sel = {"plus": zp, "minus": np.conj(zp)}
    z0 = ps.real_pole
    if z0 is not None:
        sel["zero"] = z0
    res, hi = {}, False
    for name, zc in sel.items():
        others = ps.poles[np.abs(ps.poles - zc) > DEDUP_TOL]
        r = 0.3 * float(np.abs(others - zc).min()) if others.size else 0.1
        c1, c2 = _residue(f, zc, r)
        res[name] = c1
        hi |= abs(c2) > 1e-6 * max(abs(c1), 1e-300) * r + 1e-14
    total = sum(abs(v) for v in res.values())
    p = (abs(res["plus"]) + abs(res["minus"])) / total if total else float("nan")
    phi = float(np.angle(res["plus"]))
    branch = "phi_zero" if min(abs(phi), abs(abs(phi) - np.pi)) < phi_tol else "phi_nonzero"
    f1 = complex(f(1.0))
    pole_part = sum(R / (1 - sel[nm]) for nm, R in res.items())
    h = 1e-6
    slope = (f(1 + h) - f(1 - h)) / (2 * h)
    pole_slope = sum(R / (1 - sel[nm]) ** 2 for nm, R in res.items())
    return ResidueReport({k: complex(v) for k, v in sel.items()}, res, float(p), phi, branch, bool(hi),
                         f1, complex(f1 - pole_part), complex(slope), complex(pole_slope))
