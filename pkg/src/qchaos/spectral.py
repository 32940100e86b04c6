"""Exact eigenstates and everything built from them.

Strength functions (local densities of states), Breit-Wigner fits, the
golden-rule spreading width, eigenstate entropy / participation numbers and
the density of states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .register import (DisorderRealization, Hamiltonian, diagonal_energies,
                       second_moment, split_by_parity, up_parity)

__all__ = [
    "EigensolverError", "FitUnavailable", "Spectrum", "StrengthFunction",
    "BreitWignerFit", "GoldenRuleWidth", "EigenstateProfile", "GaussianReference",
    "DensityOfStates", "diagonalize", "strength_function", "pooled_strength_function", "fit_breit_wigner",
    "breit_wigner", "golden_rule_width", "eigenstate_profile", "eigenstate_profiles",
    "shannon_entropy_bits", "density_of_states",
]


class EigensolverError(RuntimeError):
    """The dense symmetric eigensolver failed to converge."""


class FitUnavailable(RuntimeError):
    """Too little spectral weight to fit a Breit-Wigner profile."""


def shannon_entropy_bits(w, axis=-1):
    """``-sum w log2 w`` with ``0 log 0 = 0``."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0.0, -w * np.log2(np.where(w > 0.0, w, 1.0)), 0.0)
    return terms.sum(axis=axis)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and eigenvectors ``C[f, k]`` of one Hamiltonian.

    ``parity[k]`` is the up-spin parity sector of eigenvector ``k``; every
    eigenvector lives in a single sector.
    """

    eigenvalues: np.ndarray
    coefficients: np.ndarray
    parity: np.ndarray
    realization: Optional[DisorderRealization] = None

    @property
    def dim(self):
        return self.eigenvalues.size

    @property
    def n(self):
        return int(round(math.log2(self.dim)))

    def sector(self, parity):
        """Indices ``k`` of the eigenvectors in a parity sector."""
        return np.flatnonzero(self.parity == parity)

    def weights(self, i):
        """``|C_i^(k)|^2`` for all ``k``."""
        return self.coefficients[int(i), :] ** 2

    def orthogonality_error(self):
        c = self.coefficients
        eye = np.eye(self.dim)
        return max(np.abs(c.T @ c - eye).max(), np.abs(c @ c.T - eye).max())

    def residual(self, h):
        """``max_k ||H v_k - E_k v_k||``."""
        m = h.matrix if isinstance(h, Hamiltonian) else np.asarray(h)
        r = m @ self.coefficients - self.coefficients * self.eigenvalues
        return float(np.sqrt((r * r).sum(axis=0)).max())


def _eigh(m):
    try:
        return scipy.linalg.eigh(m, driver="evd", check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"dense symmetric eigensolver failed: {exc}") from exc


def diagonalize(h: Hamiltonian, use_parity: bool = True) -> Spectrum:
    """Full diagonalization, block by block in the two parity sectors.

    Set ``use_parity=False`` to diagonalize the full matrix in one call; both
    routes give the same spectrum.
    """
    m = np.asarray(h.matrix)
    if not np.all(np.isfinite(m)):
        raise ValueError("Hamiltonian has non-finite entries")
    dim = m.shape[0]
    if not use_parity or dim < 4:
        vals, vecs = _eigh(m)
        par = up_parity(np.argmax(np.abs(vecs), axis=0))
        return Spectrum(vals, vecs, par, h.realization)
    blocks = split_by_parity(h)
    vals = np.empty(dim)
    vecs = np.zeros((dim, dim))
    par = np.empty(dim, dtype=np.int64)
    col = 0
    for p in (0, 1):
        block, index = blocks.block(p)
        bv, bw = _eigh(block)
        sl = slice(col, col + bv.size)
        vals[sl] = bv
        vecs[index, sl] = bw
        par[sl] = p
        col += bv.size
    order = np.argsort(vals, kind="stable")
    return Spectrum(vals[order], np.ascontiguousarray(vecs[:, order]), par[order],
                    h.realization)


@dataclass
class StrengthFunction:
    """Energy distribution of a basis state over the exact eigenstates.

    ``density`` is the binned ``P_i(E)`` on ``bin_edges`` (weight per unit
    energy). The fit fields stay ``None`` until a Breit-Wigner fit succeeds.
    A pooled strength function (see :func:`pooled_strength_function`) has no
    single initial state and energies measured from each state's own ``E_i``.
    """

    initial_state: Optional[int]
    energies: np.ndarray
    weights: np.ndarray
    bin_edges: np.ndarray
    density: np.ndarray
    first_moment: float
    second_moment: float
    fitted_gamma: Optional[float] = None
    fitted_shift: Optional[float] = None

    @property
    def bin_width(self):
        return float(self.bin_edges[1] - self.bin_edges[0])

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @property
    def pairs(self):
        return list(zip(self.energies.tolist(), self.weights.tolist()))


def _histogram(energies, weights, bin_width):
    lo, hi = float(energies.min()), float(energies.max())
    nb = max(1, int(math.floor((hi - lo) / bin_width)) + 1)
    edges = lo + bin_width * np.arange(nb + 1)
    idx = np.minimum(((energies - lo) / bin_width).astype(np.int64), nb - 1)
    sums = np.bincount(idx, weights=weights, minlength=nb)
    return edges, sums


def strength_function(s: Spectrum, i: int, bin_width: float,
                      fit: bool = True) -> StrengthFunction:
    """Strength function of basis state ``i``.

    With ``fit=True`` a Breit-Wigner fit is attempted and stored when the
    profile supports one.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    w = s.weights(i)
    e = s.eigenvalues
    edges, sums = _histogram(e, w, bin_width)
    total = w.sum()
    mean = float(np.dot(w, e) / total)
    var = float(np.dot(w, (e - mean) ** 2) / total)
    sf = StrengthFunction(int(i), e.copy(), w, edges, sums / bin_width, mean, var)
    if fit:
        try:
            res = fit_breit_wigner(sf)
        except FitUnavailable:
            pass
        else:
            sf.fitted_gamma, sf.fitted_shift = res.gamma, res.shift
    return sf


def pooled_strength_function(items, bin_width: float,
                             fit: bool = True) -> StrengthFunction:
    """Average of the strength functions of several ``(spectrum, state)`` pairs.

    Energies are taken relative to each state's first moment ``E_i`` before
    averaging, so the pooled profile is centred at zero; its second moment is
    the mean of the individual ones. Averaging over realizations smooths the
    eigenvector-to-eigenvector fluctuations of single profiles.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    items = list(items)
    if not items:
        raise ValueError("no strength functions to pool")
    energies, weights = [], []
    for s, i in items:
        w = s.weights(i)
        keep = w > 0.0
        w = w[keep] / w.sum()
        e = s.eigenvalues[keep]
        energies.append(e - np.dot(w, e))
        weights.append(w / len(items))
    e = np.concatenate(energies)
    w = np.concatenate(weights)
    order = np.argsort(e, kind="stable")
    e, w = e[order], w[order]
    edges, sums = _histogram(e, w, bin_width)
    mean = float(np.dot(w, e))
    var = float(np.dot(w, (e - mean) ** 2))
    sf = StrengthFunction(None, e, w, edges, sums / bin_width, mean, var)
    if fit:
        try:
            res = fit_breit_wigner(sf)
        except FitUnavailable:
            pass
        else:
            sf.fitted_gamma, sf.fitted_shift = res.gamma, res.shift
    return sf


def breit_wigner(e, center, gamma, scale=1.0):
    """Normalized Lorentzian of full width ``gamma`` times ``scale``."""
    return scale * gamma / (2.0 * np.pi) / ((e - center) ** 2 + 0.25 * gamma ** 2)


@dataclass(frozen=True)
class BreitWignerFit:
    gamma: float
    shift: float
    scale: float
    residual: float
    n_bins: int


def fit_breit_wigner(sf: StrengthFunction, window: float = 4.0,
                     iterations: int = 2, free_scale: bool = False) -> BreitWignerFit:
    """Least-squares Lorentzian fit to the binned strength function.

    Only bins with ``|E - center| <= window * gamma`` enter the fit; the
    window is recentred after each of ``iterations`` passes, starting from
    the first moment as centre and the root second moment as width.

    By default the Lorentzian keeps unit area and only centre and width are
    fitted. ``free_scale=True`` also fits an overall amplitude; that variant
    tends to lock onto a single dominant eigenstate when the strength
    function is a narrow spike on broad wings.
    """
    occupied = sf.weights > 1e-12
    if occupied.sum() < 20:
        raise FitUnavailable(f"only {int(occupied.sum())} eigenstates carry weight")
    center = sf.first_moment
    gamma = max(math.sqrt(sf.second_moment), sf.bin_width)
    scale = 1.0
    x, y = sf.bin_centers, sf.density
    for _ in range(iterations):
        sel = np.abs(x - center) <= window * gamma
        if np.count_nonzero(y[sel] > 0) < 5:
            raise FitUnavailable("fewer than 5 occupied bins in the fit window")
        lo, hi = [x[sel].min(), sf.bin_width], [x[sel].max(), np.inf]
        try:
            if free_scale:
                popt, _ = scipy.optimize.curve_fit(
                    breit_wigner, x[sel], y[sel], p0=(center, gamma, scale),
                    bounds=(lo + [0.0], hi + [np.inf]), maxfev=20000)
            else:
                popt, _ = scipy.optimize.curve_fit(
                    lambda e, c, g: breit_wigner(e, c, g), x[sel], y[sel],
                    p0=(center, gamma), bounds=(lo, hi), maxfev=20000)
        except (RuntimeError, ValueError) as exc:
            raise FitUnavailable(f"Breit-Wigner fit did not converge: {exc}") from exc
        center, gamma = float(popt[0]), float(popt[1])
        if free_scale:
            scale = float(popt[2])
    sel = np.abs(x - center) <= window * gamma
    resid = float(np.linalg.norm(breit_wigner(x[sel], center, gamma, scale) - y[sel]))
    return BreitWignerFit(gamma, center - sf.first_moment, scale, resid,
                          int(sel.sum()))


@dataclass(frozen=True)
class GoldenRuleWidth:
    """Golden-rule width with its coarse scaling estimates.

    ``gamma`` uses the empirical density of directly coupled states within
    ``+-window`` of the initial energy. ``coarse`` is ``J_r^2 qn / delta0``
    and ``coarse_2pi`` the same with the ``2 pi`` factor kept.
    """

    gamma: float
    rho_f: float
    n_in_window: int
    window: float
    coarse: float
    coarse_2pi: float
    empty_window: bool


def golden_rule_width(r: DisorderRealization, i: int,
                      window: Optional[float] = None) -> GoldenRuleWidth:
    cfg = r.config
    if not cfg.delta0 > 0:
        raise ValueError("golden-rule width needs delta0 > 0")
    W = cfg.delta0 if window is None else float(window)
    j = r.j_values
    qn = j.size
    jr2 = float(np.mean(j * j)) if qn else 0.0
    partners = np.array([int(i) ^ ((1 << a) | (1 << b)) for a, b, _ in r.couplings],
                        dtype=np.int64)
    e_i = diagonal_energies(r.eps, [int(i)])[0]
    e_f = diagonal_energies(r.eps, partners) if qn else np.empty(0)
    count = int(np.count_nonzero(np.abs(e_f - e_i) <= W))
    rho_f = count / (2.0 * W)
    coarse = jr2 * qn / cfg.delta0
    return GoldenRuleWidth(2.0 * np.pi * jr2 * rho_f, rho_f, count, W, coarse,
                           2.0 * np.pi * coarse, count == 0)


@dataclass(frozen=True)
class EigenstateProfile:
    k: int
    energy: float
    entropy_bits: float
    participation: float


def eigenstate_profile(s: Spectrum, k: int) -> EigenstateProfile:
    w = s.coefficients[:, k] ** 2
    return EigenstateProfile(int(k), float(s.eigenvalues[k]),
                             float(shannon_entropy_bits(w)), float(1.0 / np.sum(w * w)))


def eigenstate_profiles(s: Spectrum):
    """Entropy (bits) and participation number of every eigenvector."""
    w = s.coefficients ** 2
    return shannon_entropy_bits(w, axis=0), 1.0 / np.sum(w * w, axis=0)


@dataclass(frozen=True)
class GaussianReference:
    """Gaussian density of states with total weight ``total``."""

    mean: float
    variance: float
    total: float

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        if self.variance == 0:
            return np.where(e == self.mean, np.inf, 0.0)
        return self.total * np.exp(-(e - self.mean) ** 2 / (2 * self.variance)) \
            / np.sqrt(2 * np.pi * self.variance)


@dataclass(frozen=True)
class DensityOfStates:
    bin_edges: np.ndarray
    counts: np.ndarray
    reference: Optional[GaussianReference]
    central_spacing: float
    coarse_spacing: float


def density_of_states(s: Spectrum, bin_width: float,
                      r: Optional[DisorderRealization] = None) -> DensityOfStates:
    """Eigenvalue histogram, Gaussian reference and central level spacing.

    The reference has mean 0 and variance ``n <eps^2> + (Delta E)^2``. The
    central spacing is the mean gap over the middle 10% of the levels; the
    coarse estimate is ``delta0 n 2^-n``.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    r = r if r is not None else s.realization
    e = s.eigenvalues
    edges, counts = _histogram(e, np.ones_like(e), bin_width)
    dim = e.size
    lo, hi = int(0.45 * dim), int(math.ceil(0.55 * dim)) - 1
    hi = max(hi, lo + 1)
    central = float((e[hi] - e[lo]) / (hi - lo)) if dim > 1 else 0.0
    ref, coarse = None, float("nan")
    if r is not None:
        var = r.n * float(np.mean(r.eps ** 2)) + second_moment(r)
        ref = GaussianReference(0.0, var, float(dim))
        coarse = r.config.delta0 * r.n * 2.0 ** (-r.n)
    return DensityOfStates(edges, counts, ref, central, coarse)
