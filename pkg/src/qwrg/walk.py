"""Time-domain quantum and classical walks on port-labelled networks.

The state lives on the (node, port) basis. One step applies the coin at every
node and then the flip-flop shift, which sends the amplitude on port
``(u, p)`` to the partner port across the edge. Self-loop ports map to
themselves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .networks import Network

DENSE_CAP = 2048


class WalkError(ValueError):
    """Invalid coin, state or dimension."""


def grover_coin(d: int) -> np.ndarray:
    """Grover reflection ``2/d J - I``."""
    if d < 2:
        raise WalkError("Grover coin needs d >= 2")
    return 2.0 / d * np.ones((d, d)) - np.eye(d)


def hadamard_coin() -> np.ndarray:
    return np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def classical_coin(d: int) -> np.ndarray:
    """Uniform redistribution ``J/d`` (column stochastic)."""
    return np.ones((d, d)) / d


def coin_matrix(coin, d: int, mode: str = "unitary") -> np.ndarray:
    if mode == "stochastic":
        return classical_coin(d)
    if isinstance(coin, str):
        name = coin.lower()
        if name == "grover":
            return grover_coin(d)
        if name == "hadamard":
            if d != 2:
                raise WalkError(f"Hadamard coin needs degree 2, node has {d}")
            return hadamard_coin()
        raise WalkError(f"unknown coin {coin!r}")
    c = np.asarray(coin, dtype=complex)
    if c.shape != (d, d):
        raise WalkError(f"coin shape {c.shape} does not match degree {d}")
    return c


@dataclass
class CoinedPropagator:
    """Sparse one-step operator ``U = S (I x C)`` on the port basis."""

    net: Network
    matrix: sp.csr_matrix
    mode: str
    coin: str = "grover"

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return self.matrix @ psi

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def unitarity_residual(self) -> float:
        """max |U^H U - I|, computed sparsely."""
        g = (self.matrix.conj().T @ self.matrix - sp.identity(self.M, format="csr")).tocoo()
        return float(np.abs(g.data).max()) if g.nnz else 0.0

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()


def shift_matrix(net: Network) -> sp.csr_matrix:
    """Flip-flop shift as a permutation on global ports."""
    M = net.n_ports
    return sp.csr_matrix((np.ones(M), (net.partner, np.arange(M))), shape=(M, M))


def coin_block(net: Network, coin="grover", mode: str = "unitary") -> sp.csr_matrix:
    blocks = {}
    mats = []
    for d in net.degree:
        if d not in blocks:
            blocks[d] = coin_matrix(coin, d, mode)
        mats.append(blocks[d])
    return sp.block_diag(mats, format="csr")


def build_propagator(net: Network, coin="grover", mode: str = "unitary") -> CoinedPropagator:
    """Assemble ``U`` for ``net``.

    Parameters
    ----------
    coin : {"grover", "hadamard"} or ndarray
        Ignored in stochastic mode, where every node redistributes uniformly.
    mode : {"unitary", "stochastic"}
    """
    if mode not in ("unitary", "stochastic"):
        raise WalkError(f"unknown mode {mode!r}")
    U = (shift_matrix(net) @ coin_block(net, coin, mode)).tocsr()
    if mode == "unitary":
        U = U.astype(complex)
    U.eliminate_zeros()
    U.sort_indices()
    name = coin if isinstance(coin, str) else "custom"
    return CoinedPropagator(net, U, mode, "classical" if mode == "stochastic" else name)


@dataclass
class AmplitudeField:
    """State vector over (node, port) at time ``t``."""

    psi: np.ndarray
    t: int = 0


def initial_state(net: Network, mode: str = "unitary", ic="symmetric") -> AmplitudeField:
    """Walker localized at ``net.origin``.

    ``ic="symmetric"`` puts ``1/sqrt(d)`` (unitary) or ``1/d`` (stochastic) on
    each origin port; an integer selects a single port; an array of length
    ``d`` is used as the origin coin state.
    """
    d = net.degree[net.origin]
    off = net.offset[net.origin]
    dtype = complex if mode == "unitary" else float
    psi = np.zeros(net.n_ports, dtype=dtype)
    if isinstance(ic, str):
        if ic != "symmetric":
            raise WalkError(f"unknown initial condition {ic!r}")
        psi[off:off + d] = 1 / np.sqrt(d) if mode == "unitary" else 1 / d
    elif np.isscalar(ic):
        psi[off + int(ic)] = 1.0
    else:
        c = np.asarray(ic, dtype=dtype)
        if c.shape != (d,):
            raise WalkError("coin state length must equal origin degree")
        psi[off:off + d] = c
    return AmplitudeField(psi, 0)


def evolve(U: CoinedPropagator, psi0: AmplitudeField, t: int) -> AmplitudeField:
    """``U**t psi0`` by repeated sparse products."""
    if psi0.psi.shape[0] != U.M:
        raise WalkError("state dimension does not match propagator")
    psi = psi0.psi.astype(U.matrix.dtype if U.mode == "unitary" else float, copy=True)
    for _ in range(int(t)):
        psi = U.matrix @ psi
    return AmplitudeField(psi, psi0.t + int(t))


def trajectory(U: CoinedPropagator, psi0: AmplitudeField, t_max: int):
    """Yield the field at t = 0, 1, ..., t_max."""
    psi = psi0.psi.copy()
    yield AmplitudeField(psi, psi0.t)
    for t in range(1, t_max + 1):
        psi = U.matrix @ psi
        yield AmplitudeField(psi, psi0.t + t)


def pdf(field: AmplitudeField | np.ndarray, net: Network, mode: str = "unitary") -> np.ndarray:
    """Per-node density: summed |psi|^2 (unitary) or summed psi (stochastic)."""
    psi = field.psi if isinstance(field, AmplitudeField) else field
    w = np.abs(psi) ** 2 if mode == "unitary" else np.real(psi)
    return np.bincount(net.port_node, weights=w, minlength=net.n_nodes)


@dataclass
class SpectralSolution:
    """Eigen-expansion ``psi(t) = sum_j a_j u_j^t phi_j``."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    coeffs: np.ndarray
    net: Network
    mode: str

    @property
    def phases(self) -> np.ndarray:
        return np.angle(self.eigenvalues)

    @property
    def gap(self) -> float:
        """Smallest positive separation between eigenphases (populated modes)."""
        th = np.sort(np.mod(self.phases[np.abs(self.coeffs) > 1e-12], 2 * np.pi))
        if th.size < 2:
            return 0.0
        d = np.diff(np.concatenate([th, th[:1] + 2 * np.pi]))
        d = d[d > 1e-12]
        return float(d.min()) if d.size else 0.0

    def state(self, t: int) -> np.ndarray:
        return self.vectors @ (self.coeffs * self.eigenvalues ** t)

    def density(self, t: int) -> np.ndarray:
        """rho(x, t) written as r(x) + sum_{j != l} s_jl(x) cos((theta_j - theta_l) t)."""
        if self.mode != "unitary":
            return pdf(self.state(t), self.net, self.mode)
        # amplitude per port for each mode j, then pair sums on each node
        amp = self.vectors * self.coeffs[None, :]
        ph = np.exp(1j * self.phases * t)
        return pdf(amp @ ph, self.net, "unitary")

    def stationary_part(self) -> np.ndarray:
        """r(x): diagonal (time-independent) contribution of each mode."""
        w = np.abs(self.vectors * self.coeffs[None, :]) ** 2
        return np.bincount(self.net.port_node, weights=w.sum(axis=1), minlength=self.net.n_nodes)


def spectral_solve(U: CoinedPropagator, psi0: AmplitudeField, cap: int = DENSE_CAP) -> SpectralSolution:
    """Full eigendecomposition of ``U`` (dense, ``M <= cap``)."""
    if U.M > cap:
        raise WalkError(f"dimension {U.M} exceeds dense cap {cap}")
    A = U.dense()
    if U.mode == "unitary":
        # complex Schur form of a normal matrix is diagonal with unitary vectors
        T, Z = sla.schur(A.astype(complex), output="complex")
        lam = np.diag(T).copy()
        coeffs = Z.conj().T @ psi0.psi
        vecs = Z
    else:
        lam, vecs = np.linalg.eig(A)
        coeffs = np.linalg.solve(vecs, psi0.psi.astype(complex))
    return SpectralSolution(lam, vecs, coeffs, U.net, U.mode)


@dataclass
class WalkSeries:
    """Per-step observables of one walk."""

    t: np.ndarray
    msd: np.ndarray
    norm_residual: np.ndarray
    return_prob: np.ndarray
    snapshots: dict = field(default_factory=dict)
    fronts: dict = field(default_factory=dict)


def tail_front(profile: np.ndarray, p: float) -> float:
    """Largest distance r with P(dist >= r) >= p, from a radial profile."""
    tail = np.cumsum(profile[::-1])[::-1]
    i = np.flatnonzero(tail >= p)
    return float(i.max()) if i.size and i.max() > 0 else 0.5


def msd_series(U: CoinedPropagator, psi0: AmplitudeField, t_max: int,
               snapshot_times: Iterable[int] = (), tail_probs: Sequence[float] = ()) -> WalkSeries:
    """<x^2>_t = sum_x d(origin, x)^2 rho(x, t) for t = 0 .. t_max.

    ``tail_probs`` additionally records the front position ``x_p(t)`` (see
    ``tail_front``) for each p; ``x_p ~ t^(1/d_w)`` is insensitive to the
    weight left behind near the origin by localized eigenstates.
    """
    net = U.net
    dist = net.distances_from(net.origin)
    d2 = dist.astype(float) ** 2
    snaps = set(int(s) for s in snapshot_times)
    n = t_max + 1
    msd = np.empty(n)
    res = np.empty(n)
    ret = np.empty(n)
    fronts = {float(p): np.empty(n) for p in tail_probs}
    out = {}
    psi = psi0.psi.copy()
    for t in range(n):
        if t:
            psi = U.matrix @ psi
        rho = pdf(psi, net, U.mode)
        msd[t] = d2 @ rho
        res[t] = abs(rho.sum() - 1.0)
        ret[t] = rho[net.origin]
        if fronts:
            prof = np.bincount(dist, weights=rho)
            for p, arr in fronts.items():
                arr[t] = tail_front(prof, p)
        if t in snaps:
            out[t] = rho
    return WalkSeries(np.arange(n), msd, res, ret, out, fronts)


def estimate_dw(t: Sequence[float], msd: Sequence[float], window=None, min_points: int = 10):
    """Fit log <x^2> = c + (2/d_w) log t on ``window = (t_lo, t_hi)``.

    Returns
    -------
    dw, stderr : float
    """
    t = np.asarray(t, dtype=float)
    msd = np.asarray(msd, dtype=float)
    lo, hi = window if window is not None else (t[t > 0].min(), t.max())
    m = (t >= lo) & (t <= hi) & (t > 0) & (msd > 0)
    if m.sum() < min_points:
        raise WalkError(f"fit window has {int(m.sum())} points, need {min_points}")
    x, y = np.log(t[m]), np.log(msd[m])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = coef[0]
    dof = max(len(x) - 2, 1)
    s2 = float(np.sum((y - A @ coef) ** 2)) / dof
    se_slope = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    dw = 2.0 / slope
    return float(dw), float(2.0 * se_slope / slope ** 2)


def estimate_dw_front(series: WalkSeries, p: float, window=None, min_points: int = 10):
    """d_w from the tail front: fit log x_p(t)^2 against log t."""
    if p not in series.fronts:
        raise WalkError(f"no front recorded for p={p}")
    return estimate_dw(series.t, series.fronts[p] ** 2, window, min_points)


def default_window(net: Network) -> tuple[float, float]:
    """t in [L/4, L] with L the graph diameter seen from the origin."""
    L = float(net.distances_from(net.origin).max())
    return L / 4, L


def front_window(net: Network) -> tuple[float, float]:
    """t in [L/8, L/2] for front fits: the front must stay inside the graph."""
    L = float(net.distances_from(net.origin).max())
    return L / 8, L / 2
