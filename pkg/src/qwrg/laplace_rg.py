"""Laplace-space renormalization of walks on self-similar networks.

The Laplace transform of ``psi(t+1) = U psi(t)`` is the linear system
``(I - W) psibar = psi_IC`` with ``W = zU``. Decimation eliminates interior
variables by a Schur complement; on a self-similar network the reduced ``W``
has the same shape as one generation lower, with renormalized couplings. Each
network/mode pair has a template that

* builds one motif cell ``W`` from level-k couplings (``cell``),
* reads the level-(k+1) couplings back from the reduced cell (``extract``).

``rg_step`` chains assemble -> decimate -> extract. Fixed points are found by
iteration plus Newton, Jacobians by central differences.

Couplings per template (all complex, flattened in the listed order):

ring/unitary   (a, b): site blocks A = a E11 C, B = -a E22 C, M = b X C
ring/stoch.    (p,): hop per bond with self-returns resummed
mk*/unitary    (tau, rho): bond transmission and reflection
mk*/stoch.     (p,): as the ring
dsg/unitary    (r, t_cw, t_ccw): 3-leg cluster S = r I + t_cw P + t_ccw P^T
dsg/stoch.     (t, q): cluster hop t and leak ratio q = (1 - r - 2t)/t
hn3/unitary    (A, B, C, D, E, F): symmetric 4-leg unit
hn3/stoch.     (P, A/P, C/P, (1-2P-Q)/P, (1-2A-2C-QJ)/P) of the resummed unit
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .networks import MOTIFS, Network, retained_sites
from .walk import build_propagator, grover_coin, hadamard_coin, initial_state

SINGULAR_RCOND = 1e-12
RESIDUAL_MAX = 1e-10
DEGENERACY_TOL = 1e-8


class RGError(RuntimeError):
    """Numerical failure in the RG pipeline."""


class DecimationSingular(RGError):
    """Interior block is singular at this z (a candidate pole)."""

    def __init__(self, z, msg: str = "singular interior block"):
        super().__init__(f"{msg} at z={z}")
        self.z = z


class TemplateMismatch(RGError):
    """Reduced system does not fit the coupling template."""


class FixedPointError(RGError):
    """Fixed-point search failed; ``trajectory`` holds the iterates."""

    def __init__(self, msg: str, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


# --------------------------------------------------------------------------
# Laplace systems and decimation
# --------------------------------------------------------------------------

@dataclass
class LaplaceSystem:
    """``matrix @ x = source``, one row per variable.

    ``sites[i]`` is the site that owns variable ``i``; decimation removes whole
    sites.
    """

    matrix: np.ndarray | sp.spmatrix
    source: np.ndarray
    sites: np.ndarray
    z: complex = 1.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return spla.spsolve(self.matrix.tocsc(), self.source)
        return np.linalg.solve(self.matrix, self.source)

    def coupling(self) -> np.ndarray:
        """``W = I - matrix`` as a dense array."""
        K = self.matrix.toarray() if sp.issparse(self.matrix) else self.matrix
        return np.eye(self.n) - K


def assemble(net: Network, z: complex, coin="grover", mode: str = "unitary",
             ic="symmetric") -> LaplaceSystem:
    """Bare system ``(I - zU) psibar = psi_IC`` on the port basis of ``net``."""
    U = build_propagator(net, coin, mode).matrix
    K = (sp.identity(U.shape[0], dtype=complex, format="csc") - z * U).tocsc()
    psi0 = initial_state(net, mode, ic).psi.astype(complex)
    return LaplaceSystem(K, psi0, net.port_node.copy(), z)


def _factor_dense(A: np.ndarray, z):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= SINGULAR_RCOND * max(d.max(), 1.0):
        raise DecimationSingular(z)
    return lu, piv


def decimate(sys_: LaplaceSystem, interior: Sequence[int], singular: str = "raise") -> LaplaceSystem:
    """Eliminate every variable owned by a site in ``interior``.

    Parameters
    ----------
    singular : {"raise", "lstsq"}
        On a singular interior block either raise ``DecimationSingular`` or use
        the minimum-norm least-squares solution (used at z=1, where bound states
        that never touch the retained sites make the block exactly singular).
    """
    interior = np.asarray(list(interior))
    drop = np.isin(sys_.sites, interior)
    if not drop.any():
        return sys_
    keep = ~drop
    K = sys_.matrix
    s = sys_.source
    if sp.issparse(K):
        K = K.tocsc()
        Kii = K[drop][:, drop].tocsc()
        Kir = K[drop][:, keep].toarray()
        Kri = K[keep][:, drop]
        Krr = K[keep][:, keep].toarray()
        try:
            lu = spla.splu(Kii)
        except RuntimeError as exc:
            raise DecimationSingular(sys_.z, str(exc)) from None
        X = lu.solve(np.column_stack([Kir, s[drop]]).astype(complex))
        if not np.all(np.isfinite(X)):
            raise DecimationSingular(sys_.z)
        Kr = Krr - Kri @ X[:, :-1]
        sr = s[keep] - Kri @ X[:, -1]
    else:
        Kii = K[np.ix_(drop, drop)]
        rhs = np.column_stack([K[np.ix_(drop, keep)], s[drop]])
        if singular == "lstsq":
            X = np.linalg.lstsq(Kii, rhs, rcond=SINGULAR_RCOND)[0]
        else:
            X = sla.lu_solve(_factor_dense(Kii, sys_.z), rhs)
        Kri = K[np.ix_(keep, drop)]
        Kr = K[np.ix_(keep, keep)] - Kri @ X[:, :-1]
        sr = s[keep] - Kri @ X[:, -1]
    return LaplaceSystem(Kr, sr, sys_.sites[keep], sys_.z)


def cell_system(W: np.ndarray, sites: Sequence[int], z=1.0) -> LaplaceSystem:
    W = np.asarray(W, dtype=complex)
    return LaplaceSystem(np.eye(W.shape[0]) - W, np.zeros(W.shape[0], complex), np.asarray(sites), z)


def schur(W: np.ndarray, keep: Sequence[int], singular: str = "lstsq") -> np.ndarray:
    """Effective coupling ``W_rr + W_ri (I - W_ii)^-1 W_ir`` on rows ``keep``."""
    n = W.shape[0]
    sites = np.arange(n)
    red = decimate(cell_system(W, sites), np.setdiff1d(sites, keep), singular)
    return red.coupling()


# --------------------------------------------------------------------------
# Templates
# --------------------------------------------------------------------------

_E11 = np.diag([1.0, 0.0])
_E22 = np.diag([0.0, 1.0])
_X = np.array([[0.0, 1.0], [1.0, 0.0]])


@dataclass
class Template:
    """One network/mode coupling template."""

    kind: str
    mode: str
    names: tuple[str, ...]
    retained: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    # subclasses fill these in
    def bare(self, z) -> np.ndarray:
        raise NotImplementedError

    def cell(self, params: np.ndarray, z, level: int = 1) -> LaplaceSystem:
        raise NotImplementedError

    def extract(self, reduced: LaplaceSystem, level: int = 1) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def step(self, params, z=1.0, level: int = 1, singular: str = "lstsq"):
        """One RG step; returns (new params, template residual)."""
        cell = self.cell(np.asarray(params, dtype=complex), z, level)
        interior = np.setdiff1d(np.unique(cell.sites), self.retained)
        red = decimate(cell, interior, singular)
        return self.extract(red, level)

    def __call__(self, params, z=1.0, level: int = 1) -> np.ndarray:
        out, res = self.step(params, z, level)
        if res > RESIDUAL_MAX * max(1.0, float(np.max(np.abs(out)))):
            raise TemplateMismatch(f"{self.kind}/{self.mode} residual {res:.2e}")
        return out

    @property
    def first_level(self) -> int:
        """Level of ``bare``."""
        return 0


class LineTemplate(Template):
    """Quantum walk on the line; ``level == 0`` uses the bare sign of B."""

    def __init__(self, coin: np.ndarray | None = None):
        super().__init__("ring", "unitary", ("a", "b"), retained=(0, 2, 4))
        self.C = hadamard_coin() if coin is None else np.asarray(coin, dtype=complex)
        self.Cinv = np.linalg.inv(self.C)

    def blocks(self, params, level: int = 1):
        a, b = params
        sign = 1.0 if level == 0 else -1.0
        return a * _E11 @ self.C, sign * a * _E22 @ self.C, b * _X @ self.C

    def bare(self, z) -> np.ndarray:
        return np.array([z, 0.0], dtype=complex)

    def cell(self, params, z, level=1):
        A, B, M = self.blocks(params, level)
        n = 6
        W = np.zeros((2 * n, 2 * n), dtype=complex)
        for x in range(n):
            r = slice(2 * x, 2 * x + 2)
            W[r, 2 * ((x + 1) % n):2 * ((x + 1) % n) + 2] += A
            W[r, 2 * ((x - 1) % n):2 * ((x - 1) % n) + 2] += B
            W[r, r] += M
        return cell_system(W, np.repeat(np.arange(n), 2), z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        blk = lambda i, j: W[2 * i:2 * i + 2, 2 * j:2 * j + 2]
        A, B, M = blk(0, 1), blk(0, 2), blk(0, 0)
        P, Q, R = A @ self.Cinv, B @ self.Cinv, M @ self.Cinv
        a, b = P[0, 0], R[0, 1]
        res = max(np.abs(P - a * _E11).max(), np.abs(Q + a * _E22).max(),
                  np.abs(R - b * _X).max(),
                  np.abs(blk(1, 2) - A).max(), np.abs(blk(1, 0) - B).max(),
                  np.abs(blk(1, 1) - M).max())
        return np.array([a, b]), float(res)


class BondTemplate(Template):
    """Quantum bond-replacement network: effective bond (tau, rho)."""

    def __init__(self, kind: str, motif: str | Sequence | None = None, coin=None):
        super().__init__(kind, "unitary", ("tau", "rho"), retained=(0, 1))
        self.edges = MOTIFS[motif or kind] if not isinstance(motif, (list, tuple)) else list(motif)
        self.coin = coin
        n = 1 + max(max(e) for e in self.edges)
        ports, owner = [], []
        for e, (u, v) in enumerate(self.edges):
            ports += [(e, u), (e, v)]
            owner += [u, v]
        self.ports = ports
        self.owner = np.array(owner)
        C = np.zeros((len(ports), len(ports)))
        for x in range(2, n):
            idx = np.flatnonzero(self.owner == x)
            C[np.ix_(idx, idx)] = grover_coin(len(idx)) if coin is None else coin(len(idx))
        for x in (0, 1):
            idx = np.flatnonzero(self.owner == x)
            C[idx, idx] = 1.0
        self.Ct = C

    def bare(self, z):
        return np.array([z, 0.0], dtype=complex)

    def cell(self, params, z, level=1):
        tau, rho = params
        m = len(self.ports)
        T = np.zeros((m, m), dtype=complex)
        for e in range(len(self.edges)):
            i, j = 2 * e, 2 * e + 1
            T[i, j] = T[j, i] = tau
            T[i, i] = T[j, j] = rho
        return cell_system(T @ self.Ct, self.owner, z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        tau, rho = W[0, 1], W[0, 0]
        res = max(abs(W[1, 0] - tau), abs(W[1, 1] - rho))
        return np.array([tau, rho]), float(res)


_I3 = np.eye(3)
_P3 = np.roll(np.eye(3), 1, axis=0)


def _legs_W(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Three clusters wired in a triangle; leg (X, Y) has index 3X + Y."""
    W = np.zeros((9, 9), dtype=complex)
    for X in range(3):
        for Y in range(3):
            # incoming at (X, Y) is outgoing at (Y, X); external legs feed back to themselves
            src = 3 * Y + X if X != Y else 3 * X + X
            W[3 * X + Y, 3 * (src // 3):3 * (src // 3) + 3] = S[src % 3]
    return W, np.arange(9)


class ClusterTemplate(Template):
    """DSG quantum walk: 3-leg cluster scattering matrix, chiral template."""

    def __init__(self, coin=None):
        super().__init__("dsg", "unitary", ("r", "t_cw", "t_ccw"), retained=(0, 4, 8))
        self.coin = grover_coin(3) if coin is None else np.asarray(coin)

    @staticmethod
    def matrix(params):
        r, tc, ta = params
        return r * _I3 + tc * _P3 + ta * _P3.T

    def bare(self, z):
        S = z * self.coin
        return np.array([S[0, 0], S[1, 0], S[0, 1]], dtype=complex)

    def cell(self, params, z, level=1):
        W, sites = _legs_W(self.matrix(params))
        return cell_system(W, sites, z)

    def extract(self, reduced, level=1):
        S = reduced.coupling()
        r = np.trace(S) / 3
        tc = (S[1, 0] + S[2, 1] + S[0, 2]) / 3
        ta = (S[0, 1] + S[1, 2] + S[2, 0]) / 3
        p = np.array([r, tc, ta])
        return p, float(np.abs(S - self.matrix(p)).max())


def _hn3_mat(v):
    A, B, C, D, E, F = v
    return np.array([[A, C, D, E], [C, B, F, D], [D, F, B, C], [E, D, C, A]], dtype=complex)


class HanoiTemplate(Template):
    """HN3 quantum walk: 4-leg unit (end, mid, mid, end)."""

    # variables: E1 J1 J2 E2 | a0 a1 a2 | b0 b1 b2
    _SITES = np.array([0, 1, 2, 3, 4, 4, 4, 5, 5, 5])

    def __init__(self, coin=None):
        super().__init__("hn3", "unitary", ("A", "B", "C", "D", "E", "F"), retained=(0, 1, 2, 3))
        self.coin = grover_coin(3) if coin is None else np.asarray(coin)
        Ct = np.eye(10)
        Ct[4:7, 4:7] = self.coin
        Ct[7:10, 7:10] = self.coin
        self.Ct = Ct

    def bare(self, z):
        return np.array([0, 0, z, 0, 0, 0], dtype=complex)

    def cell(self, params, z, level=1):
        U = _hn3_mat(params)
        T = np.zeros((10, 10), dtype=complex)
        for legs in ([0, 4, 5, 1], [2, 7, 8, 3]):
            T[np.ix_(legs, legs)] += U
        T[6, 9] = T[9, 6] = z
        return cell_system(T @ self.Ct, self._SITES, z)

    def extract(self, reduced, level=1):
        U = reduced.coupling()
        v = np.array([U[0, 0], U[1, 1], U[0, 1], U[0, 2], U[0, 3], U[1, 2]])
        return v, float(np.abs(U - _hn3_mat(v)).max())


class SiteTemplate(Template):
    """Classical walk on a two-terminal motif (ring or MK): normalized hop p.

    The raw step maps a per-bond (self-return m, hop p) to (m', p') at the
    anchors; the normalized map resums the self-returns of a degree-d site,
    ``p_hat = p' / (1 - d m')``.
    """

    def __init__(self, kind: str, motif=None):
        super().__init__(kind, "stochastic", ("p",), retained=(0, 1))
        self.edges = [(0, 2), (2, 1)] if kind == "ring" else MOTIFS[motif or kind]
        self.d = 2 if kind == "ring" else int(kind[-1])
        self.n = 1 + max(max(e) for e in self.edges)
        self.raw_names = ("m", "p")

    def raw_cell(self, m, p, z):
        W = np.zeros((self.n, self.n), dtype=complex)
        for u, v in self.edges:
            W[u, v] += p
            W[v, u] += p
            W[u, u] += m
            W[v, v] += m
        return cell_system(W, np.arange(self.n), z)

    def raw_bare(self, z):
        return np.array([0.0, z / self.d], dtype=complex)

    def raw_step(self, params, z, singular="raise"):
        m, p = params
        red = decimate(self.raw_cell(m, p, z), np.arange(2, self.n), singular)
        W = red.coupling()
        return np.array([W[0, 0], W[0, 1]]), float(max(abs(W[0, 0] - W[1, 1]), abs(W[0, 1] - W[1, 0])))

    def raw_interior(self, params, z):
        m, p = params
        W = self.raw_cell(m, p, z).coupling()
        return np.eye(self.n - 2) - W[2:, 2:]

    def bare(self, z):
        return np.array([z / self.d], dtype=complex)

    def cell(self, params, z, level=1):
        return self.raw_cell(0.0, params[0], z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        m, p = W[0, 0], W[0, 1]
        res = max(abs(W[0, 0] - W[1, 1]), abs(W[0, 1] - W[1, 0]))
        return np.array([p / (1 - self.d * m)]), float(res)


class RawSiteTemplate(Template):
    """Un-normalized two-terminal classical template (m, p)."""

    def __init__(self, kind: str, motif=None):
        self.base = SiteTemplate(kind, motif)
        super().__init__(kind, "stochastic", ("m", "p"), retained=(0, 1))

    def bare(self, z):
        return self.base.raw_bare(z)

    def cell(self, params, z, level=1):
        return self.base.raw_cell(params[0], params[1], z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        res = max(abs(W[0, 0] - W[1, 1]), abs(W[0, 1] - W[1, 0]))
        return np.array([W[0, 0], W[0, 1]]), float(res)


class ClassicalClusterRaw(Template):
    """Classical DSG cluster (r, t): same wiring as the quantum cluster, coin J/3."""

    def __init__(self):
        super().__init__("dsg", "stochastic", ("r", "t"), retained=(0, 4, 8))

    @staticmethod
    def matrix(params):
        r, t = params
        return r * _I3 + t * (np.ones((3, 3)) - _I3)

    def bare(self, z):
        return np.array([z / 3, z / 3], dtype=complex)

    def cell(self, params, z, level=1):
        W, sites = _legs_W(self.matrix(params))
        return cell_system(W, sites, z)

    def extract(self, reduced, level=1):
        S = reduced.coupling()
        r, t = np.trace(S) / 3, S[0, 1]
        p = np.array([r, t])
        return p, float(np.abs(S - self.matrix(p)).max())


class ClassicalHanoiRaw(Template):
    """Classical HN3 in site form.

    Unit rows (probability flowing into each site):
      end   e (self), ae (from its middle), c (from the junction)
      mid   mu (self), am (from each neighbouring end), z/3 (long bond)
    """

    def __init__(self):
        super().__init__("hn3", "stochastic", ("e", "ae", "c", "mu", "am"), retained=(0, 2, 4))

    def bare(self, z):
        return np.array([0, z / 3, 0, 0, z / 3], dtype=complex)

    def cell(self, params, z, level=1):
        e, ae, c, mu, am = params
        E1, ML, J, MR, E2 = range(5)
        W = np.zeros((5, 5), dtype=complex)
        W[ML, ML] = mu
        W[ML, E1] = W[ML, J] = am
        W[ML, MR] = z / 3
        W[MR, MR] = mu
        W[MR, J] = W[MR, E2] = am
        W[MR, ML] = z / 3
        W[E1, E1], W[E1, ML], W[E1, J] = e, ae, c
        W[E2, E2], W[E2, MR], W[E2, J] = e, ae, c
        W[J, J] = 2 * e
        W[J, ML] = W[J, MR] = ae
        W[J, E1] = W[J, E2] = c
        return cell_system(W, np.arange(5), z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        p = np.array([W[0, 0], W[0, 1], W[0, 2], W[1, 1], W[1, 0]])
        res = max(abs(W[2, 2] - W[0, 0]), abs(W[2, 1] - W[0, 1]), abs(W[1, 2] - W[1, 0]))
        return p, float(res)


class ClassicalHanoiNormalized(Template):
    """HN3 classical unit with self-returns resummed: (Pm, Qm, A, C, QJ)."""

    def __init__(self):
        super().__init__("hn3", "stochastic", ("Pm", "Qm", "A", "C", "QJ"), retained=(0, 2, 4))

    def bare(self, z):
        return np.array([z / 3, z / 3, z / 3, 0, z / 3], dtype=complex)

    def cell(self, params, z, level=1):
        Pm, Qm, A, C, QJ = params
        E1, ML, J, MR, E2 = range(5)
        W = np.zeros((5, 5), dtype=complex)
        W[ML, E1] = W[ML, J] = Pm
        W[ML, MR] = Qm
        W[MR, J] = W[MR, E2] = Pm
        W[MR, ML] = Qm
        W[J, ML] = W[J, MR] = A
        W[J, E1] = W[J, E2] = C
        W[E1, ML], W[E1, J] = A, C
        W[E2, MR], W[E2, J] = A, C
        return cell_system(W, np.arange(5), z)

    def extract(self, reduced, level=1):
        W = reduced.coupling()
        s, t, u = W[0, 0], W[0, 1], W[0, 2]
        mu, a = W[1, 1], W[1, 0]
        # QJ of the new unit is the long-bond hop of the old one, resummed
        QJ = self._qj / (1 - 2 * s)
        p = np.array([a / (1 - mu), self._qj / (1 - mu), t / (1 - 2 * s), u / (1 - 2 * s), QJ])
        res = max(abs(W[2, 2] - s), abs(W[1, 2] - W[1, 0]), abs(W[2, 1] - t))
        return p, float(res)

    def step(self, params, z=1.0, level=1, singular="lstsq"):
        self._qj = params[4]
        return super().step(params, z, level, singular)


class ChartTemplate(Template):
    """Classical template in blow-up coordinates.

    The classical fixed point sits where hops vanish and the raw coordinates
    degenerate. In chart coordinates the map is analytic with a removable
    singularity on ``axis = 0``; it is evaluated as the mean over a small circle
    in that coordinate (Cauchy), exact for analytic maps up to ``O(h**n)``.
    """

    def __init__(self, base: Template, names, to_raw, to_chart, h: float = 0.02, n: int = 32):
        super().__init__(base.kind, base.mode, tuple(names), retained=base.retained)
        self.base = base
        self.to_raw = to_raw
        self.to_chart = to_chart
        self.h = h
        self.nodes = np.exp(2j * np.pi * (np.arange(n) + 0.5) / n)

    def bare(self, z):
        return self.to_chart(self.base.bare(z))

    def _direct(self, x, z):
        y, res = self.base.step(self.to_raw(x), z)
        with np.errstate(all="ignore"):
            return self.to_chart(y), res

    def step(self, params, z=1.0, level=1, singular="lstsq"):
        x = np.asarray(params, dtype=complex)
        if abs(x[0]) > 2 * self.h:
            return self._direct(x, z)
        vals, res = [], 0.0
        for w in self.nodes:
            xs = x.copy()
            xs[0] += self.h * w
            v, r = self._direct(xs, z)
            vals.append(v)
            res = max(res, r)
        with np.errstate(all="ignore"):
            return np.mean(vals, axis=0), res


def _dsg_chart() -> ChartTemplate:
    def to_raw(x):
        t, q = x
        return np.array([1 - (2 + q) * t, t])

    def to_chart(p):
        r, t = p
        return np.array([t, (1 - r - 2 * t) / t])

    return ChartTemplate(ClassicalClusterRaw(), ("t", "q"), to_raw, to_chart)


def _hn3_chart() -> ChartTemplate:
    def to_raw(c):
        P, a, cc, u, v = c
        return np.array([P, 1 - 2 * P - u * P, a * P, cc * P, 1 - 2 * a * P - 2 * cc * P - v * P])

    def to_chart(x):
        Pm, Qm, A, C, QJ = x
        return np.array([Pm, A / Pm, C / Pm, (1 - 2 * Pm - Qm) / Pm, (1 - 2 * A - 2 * C - QJ) / Pm])

    return ChartTemplate(ClassicalHanoiNormalized(), ("P", "A/P", "C/P", "u", "v"), to_raw, to_chart,
                         h=0.05)


def get_template(kind: str, mode: str = "unitary", **kw) -> Template:
    """Template registry."""
    kind = kind.lower()
    if mode == "unitary":
        if kind == "ring":
            return LineTemplate(kw.get("coin"))
        if kind in ("mk3", "mk4"):
            return BondTemplate(kind, kw.get("motif"))
        if kind == "dsg":
            return ClusterTemplate()
        if kind == "hn3":
            return HanoiTemplate()
    elif mode == "stochastic":
        if kind in ("ring", "mk3", "mk4"):
            return SiteTemplate(kind, kw.get("motif"))
        if kind == "dsg":
            return _dsg_chart()
        if kind == "hn3":
            return _hn3_chart()
    raise RGError(f"no template for {kind}/{mode}")


def raw_template(kind: str, motif=None) -> Template:
    """Un-normalized classical template whose couplings carry the real poles."""
    kind = kind.lower()
    if kind in ("ring", "mk3", "mk4"):
        return RawSiteTemplate(kind, motif)
    if kind == "dsg":
        return ClassicalClusterRaw()
    if kind == "hn3":
        return ClassicalHanoiRaw()
    raise RGError(f"unknown kind {kind!r}")


# --------------------------------------------------------------------------
# RG flow
# --------------------------------------------------------------------------

@dataclass
class HoppingParams:
    """Couplings of ``template`` at RG level ``level`` and Laplace point ``z``."""

    values: np.ndarray
    level: int
    z: complex
    names: tuple[str, ...]
    residual: float = 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))


def bare_params(template: Template, z) -> HoppingParams:
    return HoppingParams(np.asarray(template.bare(z), dtype=complex), 0, z, template.names)


def rg_step(template: Template, params: HoppingParams) -> HoppingParams:
    """Assemble one motif generation from ``params``, decimate, extract."""
    out, res = template.step(params.values, params.z, params.level)
    scale = max(1.0, float(np.max(np.abs(out)))) if np.all(np.isfinite(out)) else 1.0
    if not res <= RESIDUAL_MAX * scale:
        raise TemplateMismatch(f"{template.kind}/{template.mode}: residual {res:.2e} at z={params.z}")
    return HoppingParams(out, params.level + 1, params.z, template.names, res)


def flow(template: Template, z, k: int, start: HoppingParams | None = None) -> list[HoppingParams]:
    """Levels 0..k starting from the bare couplings at ``z``."""
    p = bare_params(template, z) if start is None else start
    out = [p]
    for _ in range(k):
        p = rg_step(template, p)
        out.append(p)
    return out


def _level_map(template: Template, level: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    return lambda v: template.step(v, 1.0, level)[0]


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float = 1e-7,
                method: str = "central", n_nodes: int = 16) -> np.ndarray:
    """Jacobian of ``f`` at ``x`` with step ``rel_step * (1 + |x_j|)`` per component.

    Parameters
    ----------
    method : {"central", "richardson", "cauchy"}
        ``central``: plain central differences. ``richardson``: steps h and h/2
        combined to cancel the O(h^2) term. ``cauchy``: mean of
        ``f(x + h w e_j) / (h w)`` over ``n_nodes`` points on the unit circle;
        for maps analytic in a disc of radius > h the truncation error is
        O(h^n_nodes), so h can be large and cancellation stays small.
    """
    x = np.asarray(x, dtype=complex)
    if method == "richardson":
        J1 = fd_jacobian(f, x, rel_step)
        J2 = fd_jacobian(f, x, rel_step / 2)
        return (4 * J2 - J1) / 3
    if method == "cauchy":
        w = np.exp(2j * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes)
        J = np.zeros((x.size, x.size), dtype=complex)
        for j in range(x.size):
            h = rel_step * (1 + abs(x[j]))
            acc = 0
            for wk in w:
                e = np.zeros(x.size, dtype=complex)
                e[j] = h * wk
                acc = acc + f(x + e) / wk
            J[:, j] = acc / (n_nodes * h)
        return J
    if method != "central":
        raise ValueError(f"unknown method {method!r}")
    n = x.size
    J = np.zeros((n, n), dtype=complex)
    for j in range(n):
        h = rel_step * (1 + abs(x[j]))
        e = np.zeros(n, dtype=complex)
        e[j] = h
        J[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return J


@dataclass
class FixedPointResult:
    a_inf: np.ndarray
    residual: float
    iterations: int
    method: str
    trajectory: list = field(default_factory=list)


def find_fixed_point(template: Template, z: complex = 1.0, init=None, warmup: int = 30,
                     max_iter: int = 200, tol: float = 1e-12, rel_step: float = 1e-7) -> FixedPointResult:
    """Solve ``RG(a) = a`` at ``z``.

    Without ``init`` the flow is iterated ``warmup`` times from the bare
    couplings, then polished by Newton with a finite-difference Jacobian
    (least-squares steps, since marginal eigenvalues make ``J - I`` singular).
    Falls back to damped iteration if Newton stalls.
    """
    if init is None:
        # keep the iterate with the smallest residual: exact bare fixed points
        # are repelling and would drift away under further iteration
        x = np.asarray(template.bare(z), dtype=complex)
        x = template.step(x, z, 0)[0]
        best, best_r = x, np.inf
        for _ in range(warmup):
            y = template.step(x, z, 1)[0]
            if not np.all(np.isfinite(y)):
                break
            r = float(np.max(np.abs(y - x)))
            if r < best_r:
                best, best_r = x, r
            if r <= tol:
                break
            x = y
        x = best
    else:
        x = np.asarray(init, dtype=complex)
    f = lambda v: template.step(v, z, 1)[0]
    traj = [x.copy()]
    r = f(x) - x
    it = 0
    method = "newton"
    while np.max(np.abs(r)) > tol and it < max_iter:
        J = fd_jacobian(f, x, rel_step) - np.eye(x.size)
        dx = np.linalg.lstsq(J, -r, rcond=1e-10)[0]
        xn = x + dx
        rn = f(xn) - xn
        if not np.all(np.isfinite(rn)) or np.max(np.abs(rn)) > np.max(np.abs(r)):
            method = "damped"
            xn = x + 0.5 * r
            rn = f(xn) - xn
        x, r = xn, rn
        traj.append(x.copy())
        it += 1
    res = float(np.max(np.abs(r)))
    if not res <= tol:
        raise FixedPointError(f"{template.kind}/{template.mode}: residual {res:.2e} after {it} steps", traj)
    return FixedPointResult(x, res, it, method, traj)


@dataclass
class FixedPointReport:
    """Fixed point, Jacobian spectrum and derived walk dimensions."""

    kind: str
    mode: str
    names: tuple[str, ...]
    a_inf: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    amplitudes: np.ndarray
    dw_rw: float | None
    dw_qw: float | None
    df_check: float
    degenerate: bool
    residuals: dict

    @property
    def lam(self) -> np.ndarray:
        return self.eigenvalues

    def to_dict(self) -> dict:
        c = lambda v: [float(v.real), float(v.imag)]
        return {
            "kind": self.kind,
            "mode": self.mode,
            "names": list(self.names),
            "a_inf": [x for v in self.a_inf for x in c(v)],
            "jacobian": [[c(v) for v in row] for row in self.jacobian],
            "eigenvalues": [{"re": float(v.real), "im": float(v.imag), "modulus": float(abs(v))}
                            for v in self.eigenvalues],
            "amplitudes": [c(v) for v in self.amplitudes],
            "dw_rw": self.dw_rw,
            "dw_qw": self.dw_qw,
            "df_check": self.df_check,
            "degenerate": self.degenerate,
            "residuals": self.residuals,
        }


def jacobian_eigs(template: Template, fp: FixedPointResult | np.ndarray, rel_step: float = 1e-3,
                  method: str = "cauchy", dz: float = 1e-6) -> FixedPointReport:
    """Jacobian of the RG map at the fixed point and its spectrum.

    Eigenvalues are sorted by modulus (descending), eigenvectors have unit
    norm. ``amplitudes`` are the components of ``-d a_0/dz`` at z=1 in that
    eigenbasis, i.e. the coefficients of ``a_0(1 - delta) - a_inf`` per unit
    delta; they depend on the (unit-norm) basis choice.
    """
    a = fp.a_inf if isinstance(fp, FixedPointResult) else np.asarray(fp, dtype=complex)
    f = _level_map(template)
    J = fd_jacobian(f, a, rel_step, method)
    lam, V = np.linalg.eig(J)
    order = np.lexsort((-lam.real, -np.abs(lam)))
    lam, V = lam[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    da0 = (template.bare(1 + dz) - template.bare(1 - dz)) / (2 * dz)
    amps = np.linalg.lstsq(V, -da0, rcond=None)[0]
    l1 = abs(lam[0])
    l2 = abs(lam[1]) if lam.size > 1 else float("nan")
    degenerate = lam.size > 1 and abs(lam[0] - lam[1]) < DEGENERACY_TOL
    fixed_res = float(np.max(np.abs(f(a) - a)))
    tmpl_res = float(template.step(a, 1.0, 1)[1])
    quantum = template.mode == "unitary"
    return FixedPointReport(
        kind=template.kind, mode=template.mode, names=template.names, a_inf=a, jacobian=J,
        eigenvalues=lam, eigenvectors=V, amplitudes=amps,
        dw_rw=None if quantum else math.log2(l1),
        dw_qw=math.log2(math.sqrt(l1 * l2)) if quantum else None,
        df_check=math.log2(l1), degenerate=bool(degenerate),
        residuals={"fixed_point": fixed_res, "template": tmpl_res},
    )


def fixed_point_report(kind: str, mode: str = "unitary", **kw) -> FixedPointReport:
    t = get_template(kind, mode, **kw)
    return jacobian_eigs(t, find_fixed_point(t))


def linearization_growth(template: Template, delta: float, k: int) -> np.ndarray:
    """|a_k(1 - delta) - a_inf| / delta for levels 0..k (grows like lambda_1^k)."""
    a_inf = find_fixed_point(template).a_inf
    ps = flow(template, 1 - delta, k)
    return np.array([np.linalg.norm(p.values - a_inf) / delta for p in ps])


# --------------------------------------------------------------------------
# Classical pole flow
# --------------------------------------------------------------------------

def _interior_dets(template: Template, params, z) -> float:
    cell = template.cell(params, z)
    drop = ~np.isin(cell.sites, template.retained)
    K = cell.matrix[np.ix_(drop, drop)]
    return float(np.real(np.linalg.det(K)))


def _first_det_sign_change(template: Template, z: float, k: int) -> float:
    """min over levels j < k of det(I - W_ii) along the flow at real z."""
    p = np.asarray(template.bare(z), dtype=complex)
    dmin = np.inf
    for j in range(k):
        d = _interior_dets(template, p, z)
        dmin = min(dmin, d)
        if d <= 0:
            return d
        try:
            p = template.step(p, z, j, singular="raise")[0]
        except DecimationSingular:
            return 0.0
    return dmin


@dataclass
class PoleScaling:
    """Nearest real poles ``z_k = 1 + eps_k`` of the level-k classical couplings.

    ``lambda1`` is the Aitken-extrapolated limit of ``eps_k / eps_{k+1}``
    (falls back to the last ratio with fewer than three ratios);
    ``lambda1_fit`` is ``exp(-slope)`` of a straight-line fit of log eps_k.
    """

    kind: str
    ks: np.ndarray
    eps: np.ndarray
    ratios: np.ndarray
    lambda1: float
    lambda1_fit: float
    lambda1_stderr: float

    @property
    def last_ratio(self) -> float:
        return float(self.ratios[-1])


def aitken(seq: Sequence[float]) -> float:
    """Aitken delta-squared estimate of the limit from the last three terms."""
    a = np.asarray(seq, dtype=float)
    if a.size < 3:
        return float(a[-1])
    d1, d2 = a[-1] - a[-2], a[-2] - a[-3]
    if d1 == d2:
        return float(a[-1])
    return float(a[-1] - d1 ** 2 / (d1 - d2))


def classical_pole(kind: str, k: int, z_max: float = 3.0, n_grid: int = 400) -> float:
    """Real pole ``z_k > 1`` of the level-k classical couplings nearest 1."""
    t = raw_template(kind)
    grid = 1 + np.logspace(-15, np.log10(z_max - 1), n_grid)
    prev = 1.0
    for z in grid:
        try:
            s = _first_det_sign_change(t, z, k)
        except (DecimationSingular, np.linalg.LinAlgError):
            s = 0.0
        if s <= 0:
            g = lambda x: _first_det_sign_change(t, x, k)
            try:
                return float(brentq(g, prev, z, xtol=1e-15 * prev, rtol=4 * np.finfo(float).eps))
            except ValueError:
                return float(z)
        prev = z
    raise RGError(f"no pole bracketed for {kind} k={k} below z={z_max}")


def classical_pole_scaling(kind: str, ks: Sequence[int] = range(4, 9)) -> PoleScaling:
    """eps_k = z_k - 1 and the geometric-ratio fit eps_{k+1}/eps_k -> 1/lambda_1."""
    ks = np.asarray(list(ks))
    eps = np.array([classical_pole(kind, int(k)) - 1 for k in ks])
    ratios = eps[1:] / eps[:-1]
    slope, icpt = np.polyfit(ks, np.log(eps), 1)
    resid = np.log(eps) - (slope * ks + icpt)
    se = np.sqrt(np.sum(resid ** 2) / max(len(ks) - 2, 1) / np.sum((ks - ks.mean()) ** 2))
    lam_fit = float(np.exp(-slope))
    return PoleScaling(kind, ks, eps, ratios, aitken(1 / ratios), lam_fit, lam_fit * se)


def classical_moments(eps_k: float, n: int) -> float:
    """<t^n> from the dominant pole 1/(z_k - z): n! eps_k^-n (norm absorbed)."""
    if n == 0:
        return 1.0
    return math.gamma(n + 1) * eps_k ** (-n)


def moment_scaling(scaling: PoleScaling, n: int = 1) -> tuple[float, float]:
    """Slope of log T vs log L with T = <t^n>^(1/n), L = 2^k; estimates d_w."""
    T = np.array([classical_moments(e, n) ** (1 / n) for e in scaling.eps])
    L = 2.0 ** scaling.ks
    (slope, _), cov = np.polyfit(np.log(L), np.log(T), 1, cov=True) if len(L) > 3 else (
        np.polyfit(np.log(L), np.log(T), 1), np.zeros((2, 2)))
    return float(slope), float(np.sqrt(abs(cov[0, 0])))


# --------------------------------------------------------------------------
# Direct elimination on built networks (oracles for the templates)
# --------------------------------------------------------------------------

def effective_coupling(net: Network, z, keep_ports: Sequence[int], identity_nodes: Sequence[int] = (),
                       coin="grover") -> np.ndarray:
    """Schur reduction of ``W = z S C`` on the global ports ``keep_ports``.

    ``identity_nodes`` get the identity instead of the coin (open terminals).
    This is the brute-force counterpart of iterating a template.
    """
    blocks = []
    for u, d in enumerate(net.degree):
        if u in set(identity_nodes):
            blocks.append(np.eye(d))
        else:
            blocks.append(grover_coin(d) if coin == "grover" else np.asarray(coin(d)))
    C = sla.block_diag(*blocks)
    M = net.n_ports
    S = np.zeros((M, M))
    S[net.partner, np.arange(M)] = 1
    return schur(z * S @ C, list(keep_ports))
