"""Level statistics and the chaos-boundary scan.

Spectra are unfolded one parity sector at a time: the two sectors are
independent, and superposing them hides level repulsion.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.optimize
import scipy.special
from numpy.polynomial import Polynomial

from .register import RegisterConfig, build_hamiltonian, sample_disorder
from .spectral import diagonalize, eigenstate_profiles

__all__ = [
    "POISSON_MEAN_RATIO", "GOE_MEAN_RATIO", "TooFewLevels", "unfold", "spacing_ratios",
    "mean_spacing_ratio", "brody_pdf", "fit_brody", "SpacingStats", "spacing_statistics",
    "ChaosScanResult", "RealizationChaos", "realization_chaos", "chaos_boundary_scan",
    "first_crossing",
]

#: ``2 ln 2 - 1``, mean of ``min(s, s')/max(s, s')`` for independent exponential gaps
POISSON_MEAN_RATIO = 2.0 * math.log(2.0) - 1.0
#: large-matrix GOE value (Atas et al., PRL 110, 084101)
GOE_MEAN_RATIO = 0.5307


class TooFewLevels(ValueError):
    pass


def unfold(eigenvalues, degree: int = 7, central: float = 0.8,
           min_levels: int = 50) -> np.ndarray:
    """Unit-mean spacings of one sector.

    The cumulative level count is fitted with a polynomial of ``degree`` over
    the ``central`` fraction of the levels; the spacings of the fitted
    staircase evaluated at those levels are returned.
    """
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if e.size < min_levels:
        raise TooFewLevels(f"need at least {min_levels} levels, got {e.size}")
    cut = int(round(0.5 * (1.0 - central) * e.size))
    sel = slice(cut, e.size - cut)
    x = e[sel]
    stair = np.arange(e.size, dtype=float)[sel]
    deg = min(degree, x.size - 1)
    fit = Polynomial.fit(x, stair, deg)
    return np.diff(fit(x))


def spacing_ratios(values, sorted_levels: bool = False) -> np.ndarray:
    """``min(s_k, s_k+1) / max(s_k, s_k+1)`` of consecutive gaps.

    ``values`` are levels (default) or, with ``sorted_levels=True``, already
    computed spacings. Pairs of zero gaps are dropped.
    """
    v = np.asarray(values, dtype=float)
    s = v if sorted_levels else np.diff(np.sort(v))
    a, b = s[:-1], s[1:]
    hi = np.maximum(a, b)
    ok = hi > 0
    return np.minimum(a, b)[ok] / hi[ok]


def mean_spacing_ratio(levels) -> float:
    return float(np.mean(spacing_ratios(levels)))


def _brody_b(eta):
    return scipy.special.gamma((eta + 2.0) / (eta + 1.0)) ** (eta + 1.0)


def brody_pdf(s, eta):
    """Brody spacing distribution; ``eta = 0`` Poisson, ``eta = 1`` Wigner."""
    s = np.asarray(s, dtype=float)
    b = _brody_b(eta)
    return (eta + 1.0) * b * s ** eta * np.exp(-b * s ** (eta + 1.0))


def fit_brody(spacings) -> float:
    """Maximum-likelihood Brody parameter in ``[0, 1]``."""
    s = np.asarray(spacings, dtype=float)
    s = np.maximum(s / s.mean(), 1e-12)
    logs = np.log(s)

    def nll(eta):
        b = _brody_b(eta)
        return -(s.size * math.log((eta + 1.0) * b) + eta * logs.sum()
                 - b * np.sum(s ** (eta + 1.0)))

    res = scipy.optimize.minimize_scalar(nll, bounds=(0.0, 1.0), method="bounded",
                                         options={"xatol": 1e-6})
    return float(res.x)


@dataclass(frozen=True)
class SpacingStats:
    unfolded_spacings: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    brody_parameter: float
    mean_ratio: float
    raw_mean_ratio: Optional[float] = None


def spacing_statistics(unfolded_spacings, raw_levels=None, bins: int = 30,
                       max_s: float = 4.0) -> SpacingStats:
    """Histogram, Brody fit and mean gap ratio of unfolded spacings.

    ``raw_levels`` (the sector's eigenvalues before unfolding) adds the
    unfolding-free gap ratio.
    """
    s = np.asarray(unfolded_spacings, dtype=float)
    if s.size < 50:
        raise TooFewLevels(f"need at least 50 spacings, got {s.size}")
    counts, edges = np.histogram(s, bins=bins, range=(0.0, max_s), density=True)
    raw = mean_spacing_ratio(raw_levels) if raw_levels is not None else None
    return SpacingStats(s, counts, edges, fit_brody(s),
                        float(np.mean(spacing_ratios(s, sorted_levels=True))), raw)


def first_crossing(x, y, level):
    """Linearly interpolated ``x`` of the first upward crossing of ``level``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hit = np.flatnonzero(y >= level)
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return None if y[0] > level else float(x[0])
    return float(x[k - 1] + (level - y[k - 1]) * (x[k] - x[k - 1]) / (y[k] - y[k - 1]))


def _central(n_levels, window):
    lo = int(round(0.5 * (1.0 - window) * n_levels))
    return slice(lo, n_levels - lo)


@dataclass(frozen=True)
class RealizationChaos:
    """Chaos indicators of one realization."""

    mean_entropy: float
    mean_participation: float
    mean_ratio: float


def realization_chaos(config: RegisterConfig, index: int,
                      energy_window: float = 0.25) -> RealizationChaos:
    """Mean eigenstate entropy and per-sector gap ratio in the central window."""
    s = diagonalize(build_hamiltonian(sample_disorder(config, index)))
    ent, part = eigenstate_profiles(s)
    mid = _central(s.dim, energy_window)
    ratios = []
    for p in (0, 1):
        lv = s.eigenvalues[s.sector(p)]
        ratios.append(spacing_ratios(lv[_central(lv.size, energy_window)]))
    r = np.concatenate(ratios)
    return RealizationChaos(float(ent[mid].mean()), float(part[mid].mean()),
                            float(r.mean()) if r.size else float("nan"))


@dataclass(frozen=True)
class ChaosScanResult:
    """Ensemble chaos indicators along a coupling grid.

    Crossings are ``None`` when the curve does not cross inside the grid.
    """

    j_grid: np.ndarray
    mean_eigenstate_entropy: np.ndarray
    entropy_stderr: np.ndarray
    mean_ratio: np.ndarray
    ratio_stderr: np.ndarray
    realizations: int
    j_c_entropy: Optional[float]
    j_c_ratio: Optional[float]

    @property
    def ratio_midpoint(self):
        return 0.5 * (POISSON_MEAN_RATIO + GOE_MEAN_RATIO)


def _stderr(v):
    v = np.asarray(v, dtype=float)
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("nan")


def chaos_boundary_scan(template: RegisterConfig, j_grid, realizations: int,
                        energy_window: float = 0.25, threads: int = 1) -> ChaosScanResult:
    """Eigenstate entropy and gap ratio versus coupling strength.

    Realization ``r`` at every grid point reuses the disorder stream
    ``(master_seed, r)``, so only the coupling scale changes along the grid.
    """
    j_grid = np.asarray(j_grid, dtype=float)
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    if np.any(np.diff(j_grid) <= 0):
        raise ValueError("j_grid must be strictly ascending")
    tasks = [(template.replace(j_scale=float(j)), r)
             for j in j_grid for r in range(realizations)]

    def work(task):
        return realization_chaos(task[0], task[1], energy_window)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(work, tasks))
    else:
        out = [work(t) for t in tasks]
    ent = np.array([o.mean_entropy for o in out]).reshape(j_grid.size, realizations)
    rat = np.array([o.mean_ratio for o in out]).reshape(j_grid.size, realizations)
    ment, mrat = ent.mean(axis=1), rat.mean(axis=1)
    return ChaosScanResult(
        j_grid, ment, np.array([_stderr(v) for v in ent]),
        mrat, np.array([_stderr(v) for v in rat]), realizations,
        first_crossing(j_grid, ment, 1.0),
        first_crossing(j_grid, mrat, 0.5 * (POISSON_MEAN_RATIO + GOE_MEAN_RATIO)))
