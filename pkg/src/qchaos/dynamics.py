"""Time evolution of a basis state, analytic decay laws and entropy growth.

Units have hbar = 1: times are inverse energies. Exact dynamics go through
the spectral decomposition of a :class:`~qchaos.spectral.Spectrum`; the
initial basis state only overlaps eigenvectors of its own parity sector, so
all work is done inside that sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .register import (DisorderRealization, diagonal_energies, second_moment,
                       up_parity)
from .spectral import Spectrum, shannon_entropy_bits

__all__ = [
    "ComponentsUnavailable", "NotDirectlyCoupled", "DomainError", "CyclicTopology",
    "Trajectory", "AnalyticModelParams", "evolve", "survival_probability",
    "entropy_trajectory", "analytic_survival", "ANALYTIC_MODELS",
    "perturbative_component", "StationaryComponent", "stationary_component",
    "stationary_distribution", "entropy_small_time", "entropy_from_survival",
    "EntropyEstimate", "entropy_estimates", "melting_survival", "critical_time",
    "lifetime_critical_time", "measure_critical_time", "default_time_grid",
    "densify_near_crossing", "time_average", "dephasing_time", "central_basis_state",
]

DEFAULT_MEMORY_BUDGET = 256 * 2**20


class ComponentsUnavailable(RuntimeError):
    """Full component probabilities were not stored in the trajectory."""


class NotDirectlyCoupled(ValueError):
    """The final state is not connected to the initial one by a single term."""


class DomainError(ValueError):
    """Parameters outside the validity range of an analytic formula."""


class CyclicTopology(DomainError):
    """Zero-field product formula requested for a coupling graph with a cycle."""


@dataclass
class Trajectory:
    """Survival probability, entropy and (optionally) all components vs time.

    ``components[t, f]`` is ``W_f(t)`` over the full basis; it is ``None`` when
    storage was disabled or exceeded the memory budget (``truncated`` then
    says which).
    """

    times: np.ndarray
    survival: np.ndarray
    entropy_bits: np.ndarray
    participation: np.ndarray
    initial_state: int
    components: Optional[np.ndarray] = None
    truncated: bool = False

    def __len__(self):
        return self.times.size


def _sector_data(s: Spectrum, i):
    """Eigen-indices, basis states and coefficient block of the sector of ``i``."""
    p = int(up_parity([i])[0])
    ks = s.sector(p)
    states = np.flatnonzero(up_parity(np.arange(s.dim)) == p)
    block = s.coefficients[np.ix_(states, ks)]
    return ks, states, block


def survival_probability(s: Spectrum, i: int, times) -> np.ndarray:
    """``W_i(t) = |sum_k |C_i^(k)|^2 exp(-i E_k t)|^2``.

    Negative times are allowed (the result is even in ``t``).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w = s.weights(i)
    keep = w > 0.0
    w, e = w[keep], s.eigenvalues[keep]
    # shift by the first moment to keep the phases small
    e0 = float(np.dot(w, e))
    phase = np.outer(times, e - e0)
    re = np.cos(phase) @ w
    im = np.sin(phase) @ w
    out = re * re + im * im
    out[times == 0.0] = 1.0
    return out


def evolve(s: Spectrum, i: int, times, store_components: bool = True,
           memory_budget: int = DEFAULT_MEMORY_BUDGET, chunk: int = 64) -> Trajectory:
    """Exact evolution of basis state ``i``.

    ``W_f(t) = |sum_k C_i^(k) C_f^(k) exp(-i E_k t)|^2`` for all ``f``. Entropy
    and participation of the evolving state are always computed; the full
    component array is kept only if ``store_components`` and it fits in
    ``memory_budget`` bytes.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValueError("times must be finite and non-negative")
    i = int(i)
    ks, states, block = _sector_data(s, i)
    row = int(np.searchsorted(states, i))
    ci = block[row]
    e = s.eigenvalues[ks]
    e0 = float(np.dot(ci * ci, e))
    nt = times.size
    keep = store_components and nt * s.dim * 8 <= memory_budget
    comps = np.zeros((nt, s.dim)) if keep else None
    entropy = np.empty(nt)
    part = np.empty(nt)
    for a in range(0, nt, chunk):
        t = times[a:a + chunk]
        phase = np.outer(e - e0, t)
        re = block @ (ci[:, None] * np.cos(phase))
        im = block @ (ci[:, None] * np.sin(phase))
        w = re * re + im * im
        zero = t == 0.0
        if zero.any():
            w[:, zero] = 0.0
            w[row, zero] = 1.0
        entropy[a:a + chunk] = shannon_entropy_bits(w, axis=0)
        part[a:a + chunk] = 1.0 / np.sum(w * w, axis=0)
        if keep:
            comps[a:a + chunk, states] = w.T
    surv = survival_probability(s, i, times)
    if keep:
        comps[:, i] = surv
    return Trajectory(times, surv, entropy, part, i, comps,
                      truncated=store_components and not keep)


def entropy_trajectory(traj: Trajectory) -> np.ndarray:
    """``S(t) = -sum_f W_f log2 W_f`` recomputed from the stored components."""
    if traj.components is None:
        raise ComponentsUnavailable(
            "trajectory has no stored components; re-run evolve with "
            "store_components=True (and a large enough memory budget)")
    return shannon_entropy_bits(traj.components, axis=1)


def dephasing_time(s: Spectrum, i: int, tol: float = 1e-8) -> float:
    """Inverse of the smallest gap between eigenstates that overlap ``i``.

    Only eigenstates with ``|C_i^(k)|^2 > tol`` count. Time averages over
    windows much shorter than this keep interference terms between
    near-degenerate levels, so they do not converge to
    :func:`stationary_distribution`.
    """
    w = s.weights(int(i))
    e = np.sort(s.eigenvalues[w > tol])
    if e.size < 2:
        return 0.0
    gap = float(np.min(np.diff(e)))
    return math.inf if gap == 0.0 else 1.0 / gap


def time_average(s: Spectrum, i: int, times, chunk: int = 64) -> tuple:
    """Mean and standard error of every ``W_f`` over the given sample times.

    Samples are treated as independent, which holds for times drawn at
    random from a window much longer than the inverse level spacing.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ks, states, block = _sector_data(s, int(i))
    ci = block[int(np.searchsorted(states, int(i)))]
    e = s.eigenvalues[ks]
    acc = np.zeros(states.size)
    acc2 = np.zeros(states.size)
    for a in range(0, times.size, chunk):
        phase = np.outer(e, times[a:a + chunk])
        re = block @ (ci[:, None] * np.cos(phase))
        im = block @ (ci[:, None] * np.sin(phase))
        w = re * re + im * im
        acc += w.sum(axis=1)
        acc2 += (w * w).sum(axis=1)
    m = times.size
    mean = acc / m
    var = np.maximum(acc2 / m - mean * mean, 0.0) * m / max(m - 1, 1)
    full_mean = np.zeros(s.dim)
    full_se = np.zeros(s.dim)
    full_mean[states] = mean
    full_se[states] = np.sqrt(var / m)
    return full_mean, full_se


@dataclass(frozen=True)
class AnalyticModelParams:
    """Inputs of the closed-form decay and entropy laws.

    ``n_f`` defaults to the pair count ``qn``.
    """

    delta_e2: float
    gamma: float = 0.0
    qn: int = 0
    n: int = 0
    e_i: float = 0.0
    n_f: Optional[float] = None
    couplings: tuple = field(default=(), repr=False)

    def __post_init__(self):
        for name in ("delta_e2", "gamma", "qn", "n"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_f is None:
            object.__setattr__(self, "n_f", float(self.qn))
        elif self.n_f < 0:
            raise ValueError("n_f must be non-negative")

    @property
    def delta_e(self):
        return math.sqrt(self.delta_e2)

    @property
    def jr2(self):
        """Mean squared coupling ``(Delta E)^2 / qn``."""
        return self.delta_e2 / self.qn if self.qn else 0.0

    @property
    def gamma0(self):
        """Single-qubit width ``Gamma / n``."""
        return self.gamma / self.n

    @property
    def tau0(self):
        """Single-qubit lifetime ``1 / Gamma_0``."""
        return self.n / self.gamma

    def refined_n_f(self, delta0):
        """Final-state count ``qn Gamma / delta0`` for ``Gamma << Delta E``."""
        return self.qn * self.gamma / delta0

    @classmethod
    def from_realization(cls, r: DisorderRealization, i: int, gamma: float = 0.0,
                         n_f: Optional[float] = None):
        return cls(second_moment(r), float(gamma), r.config.n_edges, r.n,
                   float(diagonal_energies(r.eps, [int(i)])[0]), n_f, r.couplings)


def _is_acyclic(couplings):
    parent = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b, _ in couplings:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def _small_time(p, t):
    return np.maximum(0.0, 1.0 - p.delta_e2 * t * t)


def _gaussian(p, t):
    return np.exp(-p.delta_e2 * t * t)


def _zero_field_exact(p, t):
    if not _is_acyclic(p.couplings):
        raise CyclicTopology("product-of-cosines survival is exact only for acyclic "
                             "coupling graphs")
    out = np.ones_like(t)
    for _, _, j in p.couplings:
        out = out * np.cos(j * t) ** 2
    return out


def _exponential(p, t):
    return np.exp(-p.gamma * np.abs(t))


def _interpolated(p, t):
    if not p.gamma < p.delta_e:
        raise DomainError(f"interpolation formula needs Gamma < Delta E "
                          f"(Gamma={p.gamma}, Delta E={p.delta_e})")
    a = p.gamma ** 2 / (2.0 * p.delta_e2)
    x = (p.gamma * t) ** 2
    # a - sqrt(a^2 + x) without cancellation
    return np.exp(-x / (a + np.sqrt(a * a + x)))


ANALYTIC_MODELS = {
    "small_time": _small_time,
    "gaussian": _gaussian,
    "zero_field_exact": _zero_field_exact,
    "exponential": _exponential,
    "interpolated": _interpolated,
}


def analytic_survival(model: str, params: AnalyticModelParams, t):
    """Closed-form survival probability.

    ``small_time``
        ``1 - (Delta E)^2 t^2`` clamped at 0.
    ``gaussian``
        ``exp(-(Delta E)^2 t^2)``.
    ``zero_field_exact``
        ``prod cos^2(J_ij t)``, exact at zero field on acyclic graphs.
    ``exponential``
        ``exp(-Gamma t)``.
    ``interpolated``
        Gaussian at small ``t``, exponential at large ``t``; needs
        ``Gamma < Delta E``.
    """
    try:
        fn = ANALYTIC_MODELS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; choose from "
                         f"{sorted(ANALYTIC_MODELS)}") from None
    t_arr = np.asarray(t, dtype=float)
    out = fn(params, t_arr)
    return float(out) if np.ndim(out) == 0 else out


def _coupling_between(r: DisorderRealization, i, f):
    flip = int(i) ^ int(f)
    for a, b, j in r.couplings:
        if flip == (1 << a) | (1 << b):
            return j
    raise NotDirectlyCoupled(f"states {i} and {f} are not connected by one coupling term")


def perturbative_component(r: DisorderRealization, i: int, f: int, gamma: float, t):
    """First-order population of a directly coupled state ``f``.

    ``|H_if|^2 / (w^2 + Gamma^2/4) |exp((i w - Gamma/2) t) - 1|^2`` with
    ``w = E_f - E_i`` from the diagonal energies.
    """
    h_if = _coupling_between(r, i, f)
    e_i, e_f = diagonal_energies(r.eps, [int(i), int(f)])
    w = e_f - e_i
    t = np.asarray(t, dtype=float)
    z = (1j * w - 0.5 * gamma) * t
    # |e^z - 1|^2 via expm1 keeps the small-t limit accurate
    out = h_if ** 2 / (w * w + 0.25 * gamma * gamma) * np.abs(np.expm1(z)) ** 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class StationaryComponent:
    exact: float
    breit_wigner: Optional[float]
    density: Optional[float]


def stationary_distribution(s: Spectrum, i: int) -> np.ndarray:
    """``W_f^s = sum_k |C_i^(k)|^2 |C_f^(k)|^2`` for every ``f``."""
    c2 = s.coefficients ** 2
    return c2 @ c2[int(i)]


def _sector_density(s: Spectrum, parity, energy, half_width):
    e = s.eigenvalues[s.parity == parity]
    count = np.count_nonzero(np.abs(e - energy) <= half_width)
    return count / (2.0 * half_width)


def stationary_component(s: Spectrum, i: int, f: int, gamma: Optional[float] = None,
                         r: Optional[DisorderRealization] = None) -> StationaryComponent:
    """Long-time average of ``W_f`` and its Breit-Wigner estimate.

    The estimate uses the doubled width ``2 Gamma`` and the empirical level
    density of the sector at ``(E_i + E_f) / 2`` (counted within
    ``+-2 Gamma``). It needs ``gamma`` and the realization.
    """
    c2i = s.coefficients[int(i)] ** 2
    c2f = s.coefficients[int(f)] ** 2
    exact = float(np.dot(c2i, c2f))
    r = r if r is not None else s.realization
    if gamma is None or gamma <= 0 or r is None:
        return StationaryComponent(exact, None, None)
    e_i, e_f = diagonal_energies(r.eps, [int(i), int(f)])
    gt = 2.0 * gamma
    rho = _sector_density(s, int(up_parity([i])[0]), 0.5 * (e_i + e_f), gt)
    if rho == 0:
        return StationaryComponent(exact, None, 0.0)
    bw = gt / (2.0 * np.pi * rho) / ((e_i - e_f) ** 2 + 0.25 * gt * gt)
    return StationaryComponent(exact, float(bw), float(rho))


def entropy_small_time(params: AnalyticModelParams, t):
    """Early entropy growth ``qn J_r^2 t^2 log2(1 / (J_r^2 t^2))``."""
    x = params.jr2 * np.asarray(t, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, params.qn * x * np.log2(1.0 / np.where(x > 0, x, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def entropy_from_survival(w_i, n_f):
    """Entropy when the lost probability spreads evenly over ``n_f`` states.

    Returns ``(full, shortcut)``: ``-w log2 w - (1-w) log2((1-w)/n_f)`` and its
    logarithmic-accuracy form ``(1-w) log2 n_f``.
    """
    if n_f < 2:
        raise DomainError("n_f must be at least 2")
    w = np.asarray(w_i, dtype=float)
    if np.any((w < 0) | (w > 1)):
        raise DomainError("w_i must lie in [0, 1]")
    full = shannon_entropy_bits(np.stack([w, 1.0 - w]), axis=0) \
        + (1.0 - w) * np.log2(n_f)
    short = (1.0 - w) * np.log2(n_f)
    if full.ndim == 0:
        return float(full), float(short)
    return full, short


@dataclass(frozen=True)
class EntropyEstimate:
    small_time: Optional[float]
    full: Optional[float]
    shortcut: Optional[float]


def entropy_estimates(params: AnalyticModelParams, t=None, w_i=None) -> EntropyEstimate:
    """Entropy estimates from time (early growth) and/or survival probability."""
    small = entropy_small_time(params, t) if t is not None else None
    full = short = None
    if w_i is not None:
        full, short = entropy_from_survival(w_i, params.n_f)
    return EntropyEstimate(small, full, short)


def melting_survival(n_f):
    """Survival probability at which the shortcut entropy reaches one bit."""
    return 1.0 - 1.0 / math.log2(n_f)


def critical_time(params: AnalyticModelParams, mode: str = "predicted") -> float:
    """Predicted time at which the entropy reaches one bit.

    ``predicted``: ``sqrt(1 + Gamma^2 L / (Delta E)^2) / (Gamma L)``;
    ``predicted_simple``: ``1 / (Gamma L)``; ``L = log2(n_f)``.
    """
    if not params.gamma > 0:
        raise DomainError("critical time needs Gamma > 0")
    if not params.n_f > 1:
        raise DomainError("critical time needs n_f > 1")
    L = math.log2(params.n_f)
    simple = 1.0 / (params.gamma * L)
    if mode == "predicted_simple":
        return simple
    if mode != "predicted":
        raise ValueError(f"unknown mode {mode!r}")
    if not params.delta_e2 > 0:
        raise DomainError("critical time needs Delta E > 0")
    return simple * math.sqrt(1.0 + params.gamma ** 2 * L / params.delta_e2)


def lifetime_critical_time(tau0: float, n: float) -> float:
    """``tau0 / (n log2 n)`` in terms of the single-qubit lifetime."""
    return tau0 / (n * math.log2(n))


def measure_critical_time(traj: Trajectory, level: float = 1.0) -> Optional[float]:
    """First time ``S(t)`` reaches ``level``, linearly interpolated.

    Returns ``None`` when the entropy stays below ``level`` on the grid.
    """
    s = traj.entropy_bits
    hit = np.flatnonzero(s >= level)
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return float(traj.times[0])
    t0, t1 = traj.times[k - 1], traj.times[k]
    s0, s1 = s[k - 1], s[k]
    return float(t0 + (level - s0) * (t1 - t0) / (s1 - s0))


def default_time_grid(delta_e: float, gamma: float, num: int = 400,
                      include_zero: bool = True) -> np.ndarray:
    """Geometric grid from ``1e-3 / Delta E`` to ``1e3 / Gamma``."""
    if not (delta_e > 0 and gamma > 0):
        raise ValueError("default grid needs Delta E > 0 and Gamma > 0")
    lo, hi = 1e-3 / delta_e, 1e3 / gamma
    if hi <= lo:
        hi = 10 * lo
    grid = np.geomspace(lo, hi, num - 1 if include_zero else num)
    return np.concatenate([[0.0], grid]) if include_zero else grid


def densify_near_crossing(s: Spectrum, traj: Trajectory, level: float = 1.0,
                          extra: int = 64, **evolve_kw) -> Trajectory:
    """Add ``extra`` evenly spaced times inside the bracket of the first crossing."""
    hit = np.flatnonzero(traj.entropy_bits >= level)
    if hit.size == 0 or hit[0] == 0:
        return traj
    k = int(hit[0])
    new = np.linspace(traj.times[k - 1], traj.times[k], extra + 2)[1:-1]
    times = np.union1d(traj.times, new)
    evolve_kw.setdefault("store_components", traj.components is not None)
    return evolve(s, traj.initial_state, times, **evolve_kw)


def central_basis_state(r: DisorderRealization) -> int:
    """Basis state whose diagonal energy is closest to the band centre (0)."""
    e = diagonal_energies(r.eps)
    return int(np.argmin(np.abs(e)))
