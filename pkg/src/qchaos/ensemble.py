"""Run manifests, disorder ensembles and their CSV / JSON outputs.

A manifest is a YAML (or JSON) mapping::

    command: evolve            # spectrum | strength | evolve | tc-scan | jc-scan
    realizations: 8
    out: results/evolve
    threads: 1
    store_components: false
    top_m: 10                  # evolve: components written for the m largest W_f
    initial_state: central     # or an integer bitmask
    energy_window: 0.25        # central fraction of levels for eigenstate averages
    bin_width: null            # strength-function bin; default Delta E / 10
    register:
      n: 8
      topology: chain          # chain | ring | grid | grid:WxH | [[0, 1], [1, 2], ...]
      delta0: 1.0
      j_scale: 0.1
      j_law: uniform           # uniform | pm | fixed
      eps_law: uniform
      master_seed: 0
      max_qubits: 14
    time_grid: {t_min: null, t_max: null, num: 400, spacing: geometric}
    j_grid: {start: 0.1, stop: 3.0, num: 12, units: delta0_over_n}
    n_grid: [8, 10, 12]
    j_scale_per_n: null        # tc-scan: J = j_scale_per_n * delta0 / n

Every key except ``register.n`` and ``command`` has a default. Unknown keys
are errors. Realization ``r`` always draws its disorder from
``(master_seed, r)``, so outputs do not depend on the thread count.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import yaml

from . import __version__
from .chaos_stats import chaos_boundary_scan, first_crossing, spacing_ratios
from .dynamics import (AnalyticModelParams, central_basis_state, critical_time,
                       evolve, measure_critical_time, stationary_distribution,
                       lifetime_critical_time)
from .register import (ConfigError, DEFAULT_MAX_QUBITS, RegisterConfig,
                       build_hamiltonian, diagonal_energies, sample_disorder,
                       second_moment)
from .spectral import (FitUnavailable, diagonalize, eigenstate_profiles,
                       fit_breit_wigner, golden_rule_width, pooled_strength_function,
                       strength_function)

__all__ = [
    "COMMANDS", "ManifestError", "TimeGridSpec", "JGridSpec", "RunManifest",
    "parse_manifest", "manifest_from_dict", "Observable", "EnsembleSummary",
    "run_ensemble", "EnsembleDynamics", "ensemble_dynamics", "format_value",
    "CSV_HEADERS",
]

COMMANDS = ("spectrum", "strength", "evolve", "tc-scan", "jc-scan")

CSV_HEADERS = {
    "evolve": ["realization", "time", "W_i", "S_bits", "Np_t"],
    "spectrum": ["realization", "k", "energy", "S_k_bits", "participation", "parity"],
    "jc-scan": ["J", "mean_S_k", "stderr", "mean_ratio", "stderr_ratio"],
    "tc-scan": ["n", "tc_measured", "tc_eq24", "tc_eq25", "gamma_fit", "deltaE2"],
    "strength": ["realization", "energy", "weight"],
    "strength_fit": ["realization", "state", "E_i", "gamma_fit", "shift",
                     "gamma_golden", "gamma_coarse", "deltaE2"],
    "components": ["realization", "time", "state", "W_f"],
}


class ManifestError(ConfigError):
    """Every validation problem found in a manifest."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid manifest:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class TimeGridSpec:
    t_min: Optional[float] = None
    t_max: Optional[float] = None
    num: int = 400
    spacing: str = "geometric"


@dataclass(frozen=True)
class JGridSpec:
    start: float = 0.1
    stop: float = 3.0
    num: int = 12
    units: str = "delta0_over_n"

    def values(self, config: RegisterConfig):
        grid = np.linspace(self.start, self.stop, self.num)
        if self.units == "delta0_over_n":
            grid = grid * config.delta0 / config.n
        return grid


@dataclass(frozen=True)
class RunManifest:
    register: RegisterConfig
    command: str
    realizations: int = 1
    out: str = "out"
    threads: int = 1
    store_components: bool = False
    top_m: int = 10
    initial_state: Union[str, int] = "central"
    energy_window: float = 0.25
    bin_width: Optional[float] = None
    time_grid: TimeGridSpec = field(default_factory=TimeGridSpec)
    j_grid: JGridSpec = field(default_factory=JGridSpec)
    n_grid: tuple = ()
    j_scale_per_n: Optional[float] = None

    def to_dict(self):
        reg = self.register
        topo = reg.topology if isinstance(reg.topology, str) else [list(e) for e in reg.topology]
        return {
            "command": self.command,
            "realizations": self.realizations,
            "out": self.out,
            "threads": self.threads,
            "store_components": self.store_components,
            "top_m": self.top_m,
            "initial_state": self.initial_state,
            "energy_window": self.energy_window,
            "bin_width": self.bin_width,
            "register": {
                "n": reg.n, "topology": topo, "delta0": reg.delta0,
                "j_scale": reg.j_scale, "j_law": reg.j_law, "eps_law": reg.eps_law,
                "master_seed": reg.master_seed, "max_qubits": reg.max_qubits,
            },
            "time_grid": {"t_min": self.time_grid.t_min, "t_max": self.time_grid.t_max,
                          "num": self.time_grid.num, "spacing": self.time_grid.spacing},
            "j_grid": {"start": self.j_grid.start, "stop": self.j_grid.stop,
                       "num": self.j_grid.num, "units": self.j_grid.units},
            "n_grid": list(self.n_grid),
            "j_scale_per_n": self.j_scale_per_n,
        }

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return RunManifest(**d)


_TOP_KEYS = {"command", "realizations", "out", "threads", "store_components", "top_m",
             "initial_state", "energy_window", "bin_width", "register", "time_grid",
             "j_grid", "n_grid", "j_scale_per_n"}
_REGISTER_KEYS = {"n", "topology", "delta0", "j_scale", "j_law", "eps_law",
                  "master_seed", "max_qubits"}
_TIME_KEYS = {"t_min", "t_max", "num", "spacing"}
_JGRID_KEYS = {"start", "stop", "num", "units"}


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)
            and math.isfinite(v))


def manifest_from_dict(d, command: Optional[str] = None) -> RunManifest:
    """Validate a manifest mapping; raise :class:`ManifestError` listing all problems.

    ``command`` overrides the manifest's own ``command`` key.
    """
    errors = []
    if not isinstance(d, dict):
        raise ManifestError(["manifest must be a mapping"])
    for k in sorted(set(d) - _TOP_KEYS):
        errors.append(f"unknown key {k!r}")
    cmd = command if command is not None else d.get("command")
    if cmd is None:
        errors.append("missing required key 'command'")
    elif cmd not in COMMANDS:
        errors.append(f"command must be one of {COMMANDS}, got {cmd!r}")

    def check(key, ok, msg, default):
        v = d.get(key, default)
        if not ok(v):
            errors.append(f"{key}: {msg}, got {v!r}")
        return v

    realizations = check("realizations", lambda v: _is_int(v) and v >= 1,
                         "must be an integer >= 1", 1)
    out = check("out", lambda v: isinstance(v, str) and v, "must be a path", "out")
    threads = check("threads", lambda v: _is_int(v) and v >= 1,
                    "must be an integer >= 1", 1)
    store = check("store_components", lambda v: isinstance(v, bool), "must be a boolean",
                  False)
    top_m = check("top_m", lambda v: _is_int(v) and v >= 1, "must be an integer >= 1", 10)
    init = check("initial_state",
                 lambda v: v == "central" or (_is_int(v) and v >= 0),
                 "must be 'central' or a non-negative integer", "central")
    window = check("energy_window", lambda v: _is_num(v) and 0 < v <= 1,
                   "must lie in (0, 1]", 0.25)
    bin_width = check("bin_width", lambda v: v is None or (_is_num(v) and v > 0),
                      "must be null or positive", None)
    jpn = check("j_scale_per_n", lambda v: v is None or (_is_num(v) and v >= 0),
                "must be null or non-negative", None)
    n_grid = check("n_grid", lambda v: isinstance(v, list) and all(
        _is_int(x) and x >= 2 for x in v), "must be a list of integers >= 2", [])

    reg_d = d.get("register")
    register = None
    if reg_d is None:
        errors.append("missing required key 'register'")
    elif not isinstance(reg_d, dict):
        errors.append("register: must be a mapping")
    else:
        for k in sorted(set(reg_d) - _REGISTER_KEYS):
            errors.append(f"unknown key 'register.{k}'")
        if "n" not in reg_d:
            errors.append("missing required key 'register.n'")
        else:
            kw = {k: reg_d[k] for k in _REGISTER_KEYS & set(reg_d)}
            try:
                register = RegisterConfig(**kw)
            except (ConfigError, TypeError, ValueError) as exc:
                errors.append(f"register: {exc}")
        for v in n_grid if isinstance(n_grid, list) else []:
            cap = reg_d.get("max_qubits", DEFAULT_MAX_QUBITS)
            if _is_int(v) and _is_int(cap) and v > cap:
                errors.append(f"n_grid: n={v} exceeds the memory cap of {cap} qubits")

    tg = d.get("time_grid", {}) or {}
    time_grid = None
    if not isinstance(tg, dict):
        errors.append("time_grid: must be a mapping")
    else:
        for k in sorted(set(tg) - _TIME_KEYS):
            errors.append(f"unknown key 'time_grid.{k}'")
        try:
            time_grid = TimeGridSpec(**{k: tg[k] for k in _TIME_KEYS & set(tg)})
        except TypeError as exc:
            errors.append(f"time_grid: {exc}")
        else:
            if time_grid.spacing not in ("geometric", "linear"):
                errors.append("time_grid.spacing: must be 'geometric' or 'linear'")
            if not (_is_int(time_grid.num) and time_grid.num >= 2):
                errors.append("time_grid.num: must be an integer >= 2")
            for k in ("t_min", "t_max"):
                v = getattr(time_grid, k)
                if v is not None and not (_is_num(v) and v >= 0):
                    errors.append(f"time_grid.{k}: must be null or >= 0")
            if (_is_num(time_grid.t_min) and _is_num(time_grid.t_max)
                    and time_grid.t_max <= time_grid.t_min):
                errors.append("time_grid: t_max must exceed t_min")
            if time_grid.spacing == "geometric" and time_grid.t_min == 0:
                errors.append("time_grid.t_min: must be > 0 for geometric spacing")

    jg = d.get("j_grid", {}) or {}
    j_grid = None
    if not isinstance(jg, dict):
        errors.append("j_grid: must be a mapping")
    else:
        for k in sorted(set(jg) - _JGRID_KEYS):
            errors.append(f"unknown key 'j_grid.{k}'")
        try:
            j_grid = JGridSpec(**{k: jg[k] for k in _JGRID_KEYS & set(jg)})
        except TypeError as exc:
            errors.append(f"j_grid: {exc}")
        else:
            if j_grid.units not in ("delta0_over_n", "absolute"):
                errors.append("j_grid.units: must be 'delta0_over_n' or 'absolute'")
            if not (_is_int(j_grid.num) and j_grid.num >= 2):
                errors.append("j_grid.num: must be an integer >= 2")
            if not (_is_num(j_grid.start) and _is_num(j_grid.stop)
                    and 0 <= j_grid.start < j_grid.stop):
                errors.append("j_grid: need 0 <= start < stop")

    if cmd == "tc-scan":
        if not n_grid:
            errors.append("tc-scan needs a non-empty n_grid")
        if register is not None and not isinstance(register.topology, str):
            errors.append("tc-scan needs a named topology (it changes n)")
        elif register is not None and register.topology.lower().startswith("grid:"):
            errors.append("tc-scan changes n; use topology 'grid' instead of a fixed "
                          f"{register.topology!r}")
    if register is not None and _is_int(init) and init >= register.dim:
        errors.append(f"initial_state {init} is outside [0, 2^n)")

    if errors:
        raise ManifestError(errors)
    return RunManifest(register, cmd, realizations, out, threads, store, top_m, init,
                       float(window), bin_width, time_grid, j_grid, tuple(n_grid), jpn)


def parse_manifest(path, command: Optional[str] = None) -> RunManifest:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ManifestError([f"cannot parse {path}: {exc}"]) from exc
    return manifest_from_dict(d if d is not None else {}, command)


@dataclass(frozen=True)
class Observable:
    """Ensemble mean with the standard error of per-realization values.

    ``stderr`` is ``None`` (undefined) for fewer than two values.
    """

    mean: Optional[float]
    stderr: Optional[float]
    count: int

    @classmethod
    def of(cls, values):
        v = np.asarray([x for x in values if x is not None and math.isfinite(x)],
                       dtype=float)
        if v.size == 0:
            return cls(None, None, 0)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
        return cls(float(v.mean()), se, int(v.size))

    @classmethod
    def single(cls, value):
        if value is None or not math.isfinite(value):
            return cls(None, None, 0)
        return cls(float(value), None, 1)


@dataclass
class EnsembleSummary:
    command: str
    master_seed: int
    realizations: int
    completed: int
    observables: dict
    failures: list = field(default_factory=list)
    version: str = __version__
    files: list = field(default_factory=list)

    @property
    def partial(self):
        return self.completed < self.realizations

    def to_dict(self):
        return {
            "command": self.command,
            "version": self.version,
            "master_seed": self.master_seed,
            "realizations": self.realizations,
            "completed": self.completed,
            "partial": self.partial,
            "failures": [{"realization": i, "error": msg} for i, msg in self.failures],
            "observables": {k: {"mean": o.mean, "stderr": o.stderr, "count": o.count}
                            for k, o in self.observables.items()},
            "files": list(self.files),
        }


def format_value(v):
    """CSV cell text; floats round-trip exactly (17 significant digits)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix="." + os.path.basename(path) + ".", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _json_clean(obj):
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _pmap(fn, items, threads):
    """Ordered map; each item's failure is captured rather than raised."""

    def safe(item):
        try:
            return True, fn(item)
        except Exception as exc:  # recorded per realization
            return False, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(safe, items))
    return [safe(x) for x in items]


def _initial_state(manifest, r):
    if manifest.initial_state == "central":
        return central_basis_state(r)
    return int(manifest.initial_state)


def _time_grid(spec: TimeGridSpec, delta_e, gamma):
    lo = spec.t_min if spec.t_min is not None else 1e-3 / delta_e
    hi = spec.t_max if spec.t_max is not None else 1e3 / gamma
    if hi <= lo:
        hi = 10.0 * lo
    if spec.spacing == "linear":
        return np.linspace(lo, hi, spec.num)
    return np.concatenate([[0.0], np.geomspace(lo, hi, spec.num - 1)])


def _gamma_estimate(r, i):
    """Golden-rule width, or its coarse form when no partner is in the window.

    At zero field the width is taken as ``Delta E``.
    """
    if r.config.delta0 == 0:
        return math.sqrt(second_moment(r))
    gr = golden_rule_width(r, i)
    return gr.gamma if gr.gamma > 0 else gr.coarse_2pi


# ----------------------------------------------------------------------------
# ensemble-level dynamics (shared by evolve and tc-scan)

@dataclass
class EnsembleDynamics:
    """Ensemble-averaged dynamics of a central basis state.

    ``tc_measured`` is where the ensemble-mean entropy first reaches one bit;
    ``gamma_fit`` comes from a Breit-Wigner fit to the pooled strength
    function. ``plateau_entropy`` is the long-time mean of ``S(t)`` and
    ``shell_entropy`` is ``log2(2 <N_p>)`` over eigenstates of the initial
    sector within ``+-gamma_fit`` of ``E_i``.
    """

    config: RegisterConfig
    times: np.ndarray
    mean_entropy: np.ndarray
    mean_survival: np.ndarray
    realizations: list
    tc_measured: Optional[float]
    tc_per_realization: list
    gamma_fit: Optional[float]
    gamma_golden: float
    delta_e2: float
    plateau_entropy: list
    shell_entropy: list
    failures: list
    per_realization: list = field(default_factory=list, repr=False)

    def params(self):
        return AnalyticModelParams(self.delta_e2, self.gamma_fit or 0.0,
                                   self.config.n_edges, self.config.n)

    @property
    def tc_eq24(self):
        if not self.gamma_fit:
            return None
        return critical_time(self.params(), "predicted")

    @property
    def tc_eq25(self):
        if not self.gamma_fit:
            return None
        return critical_time(self.params(), "predicted_simple")

    @property
    def tc_lifetime(self):
        """``tau0 / (n log2 n)`` with ``tau0 = n / gamma_fit``."""
        if not self.gamma_fit:
            return None
        return lifetime_critical_time(self.params().tau0, self.config.n)


def ensemble_dynamics(config: RegisterConfig, realizations: int, times=None,
                      initial_state="central",
                      bin_width: Optional[float] = None, late_samples: int = 200,
                      threads: int = 1, keep_rows: bool = False,
                      top_m: int = 0) -> EnsembleDynamics:
    """Evolve the central basis state of every realization and average.

    ``times`` is an array or a :class:`TimeGridSpec`; missing bounds default
    to ``1e-3 / Delta E`` and ``1e3 / Gamma`` (ensemble means, ``Gamma`` from
    the golden rule), and geometric grids also get ``t = 0``. The long-time entropy is averaged over ``late_samples``
    random times in ``[T, 2T]``, ``T = 1e3 / Gamma``, drawn from the
    realization's own stream.
    """
    reals = [sample_disorder(config, r) for r in range(realizations)]
    states = [central_basis_state(r) if initial_state == "central" else int(initial_state)
              for r in reals]
    de2 = float(np.mean([second_moment(r) for r in reals]))
    g_gr = float(np.mean([_gamma_estimate(r, i) for r, i in zip(reals, states)]))
    scale = config.delta0 if config.delta0 > 0 else 1.0
    if g_gr <= 0:
        g_gr = scale
    if times is None or isinstance(times, TimeGridSpec):
        spec = times or TimeGridSpec()
        times = _time_grid(spec, math.sqrt(de2) if de2 > 0 else scale, g_gr)
    times = np.asarray(times, dtype=float)
    bw = bin_width if bin_width is not None else (math.sqrt(de2) if de2 > 0 else scale) / 10.0
    t_late = 1e3 / g_gr

    def work(idx):
        r, i = reals[idx], states[idx]
        s = diagonalize(build_hamiltonian(r))
        traj = evolve(s, i, times, store_components=top_m > 0)
        rng = np.random.default_rng([config.master_seed, idx, 1])
        late = evolve(s, i, np.sort(rng.uniform(t_late, 2 * t_late, late_samples)),
                      store_components=False)
        w = s.weights(i)
        keep = w > 0.0
        _, part = eigenstate_profiles(s)
        comps = None
        if top_m > 0:
            top = np.argsort(-stationary_distribution(s, i), kind="stable")[:top_m]
            comps = (np.sort(top), traj.components[:, np.sort(top)])
        return dict(
            entropy=traj.entropy_bits, survival=traj.survival,
            participation=traj.participation, tc=measure_critical_time(traj),
            plateau=float(late.entropy_bits.mean()),
            pairs=(s.eigenvalues[keep], w[keep]),
            shell=(s.eigenvalues[keep], part[keep],
                   float(diagonal_energies(r.eps, [i])[0])),
            components=comps)

    results = _pmap(work, range(realizations), threads)
    ok = [(k, res) for k, (good, res) in enumerate(results) if good]
    failures = [(k, res) for k, (good, res) in enumerate(results) if not good]
    if not ok:
        raise RuntimeError("every realization failed: " + "; ".join(m for _, m in failures))

    class _Pairs:
        """Minimal spectrum stand-in for pooling stored (energy, weight) pairs."""

        def __init__(self, e, w):
            self.eigenvalues, self._w = e, w

        def weights(self, _):
            return self._w

    sf = pooled_strength_function([(_Pairs(*res["pairs"]), 0) for _, res in ok], bw,
                                  fit=False)
    try:
        gamma_fit = fit_breit_wigner(sf).gamma
    except FitUnavailable:
        gamma_fit = None
    mean_s = np.mean([res["entropy"] for _, res in ok], axis=0)
    mean_w = np.mean([res["survival"] for _, res in ok], axis=0)
    shell_half = gamma_fit if gamma_fit else g_gr
    shell = []
    for _, res in ok:
        e, part, e_i = res["shell"]
        sel = np.abs(e - e_i) <= shell_half
        shell.append(float(np.log2(2.0 * part[sel].mean())) if sel.any() else float("nan"))
    return EnsembleDynamics(
        config, times, mean_s, mean_w, [k for k, _ in ok],
        first_crossing(times, mean_s, 1.0), [res["tc"] for _, res in ok],
        gamma_fit, g_gr, de2, [res["plateau"] for _, res in ok], shell, failures,
        per_realization=[(k, res) for k, res in ok] if keep_rows else [])


# ----------------------------------------------------------------------------
# commands

def _run_spectrum(m: RunManifest, outdir):
    cfg = m.register

    def work(idx):
        s = diagonalize(build_hamiltonian(sample_disorder(cfg, idx)))
        ent, part = eigenstate_profiles(s)
        lo = int(round(0.5 * (1 - m.energy_window) * s.dim))
        mid = slice(lo, s.dim - lo)
        ratios = []
        for p in (0, 1):
            lv = s.eigenvalues[s.sector(p)]
            c = int(round(0.5 * (1 - m.energy_window) * lv.size))
            ratios.append(spacing_ratios(lv[c:lv.size - c]))
        rows = [(idx, k, s.eigenvalues[k], ent[k], part[k], s.parity[k])
                for k in range(s.dim)]
        r_all = np.concatenate(ratios)
        return rows, {"mean_S_k_central": float(ent[mid].mean()),
                      "mean_participation_central": float(part[mid].mean()),
                      "mean_ratio": float(r_all.mean()) if r_all.size else float("nan")}

    return _collect(m, work, outdir, "spectrum")


def _run_strength(m: RunManifest, outdir):
    cfg = m.register

    def work(idx):
        r = sample_disorder(cfg, idx)
        h = build_hamiltonian(r)
        s = diagonalize(h)
        i = _initial_state(m, r)
        de2 = second_moment(r)
        bw = m.bin_width or (math.sqrt(de2) / 10.0 if de2 > 0 else 1.0)
        sf = strength_function(s, i, bw)
        keep = sf.weights > 0
        gr = golden_rule_width(r, i) if cfg.delta0 > 0 else None
        rows = [(idx, e, w) for e, w in zip(sf.energies[keep], sf.weights[keep])]
        fit_row = (idx, i, h.matrix[i, i], sf.fitted_gamma, sf.fitted_shift,
                   gr.gamma if gr else None, gr.coarse_2pi if gr else None, de2)
        obs = {"gamma_fit": sf.fitted_gamma, "gamma_golden": gr.gamma if gr else None,
               "deltaE2": de2, "second_moment_check": sf.second_moment - de2}
        return (rows, fit_row), obs

    results = _pmap(work, range(m.realizations), m.threads)
    rows, fits, obs, failures = [], [], [], []
    for idx, (good, res) in enumerate(results):
        if good:
            (r_rows, fit_row), o = res
            rows.extend(r_rows)
            fits.append(fit_row)
            obs.append(o)
        else:
            failures.append((idx, res))
    files = [os.path.join(outdir, "strength.csv"), os.path.join(outdir, "strength_fit.csv")]
    _write_csv(files[0], CSV_HEADERS["strength"], rows)
    _write_csv(files[1], CSV_HEADERS["strength_fit"], fits)
    return _summary(m, obs, failures, files)


def _run_evolve(m: RunManifest, outdir):
    cfg = m.register
    dyn = ensemble_dynamics(cfg, m.realizations, times=m.time_grid,
                            initial_state=m.initial_state, bin_width=m.bin_width,
                            threads=m.threads, keep_rows=True,
                            top_m=m.top_m if m.store_components else 0)
    rows, comp_rows = [], []
    for idx, res in dyn.per_realization:
        for t, w, s, p in zip(dyn.times, res["survival"], res["entropy"],
                              res["participation"]):
            rows.append((idx, t, w, s, p))
        if res["components"] is not None:
            top, comps = res["components"]
            for a, t in enumerate(dyn.times):
                for col, f in enumerate(top):
                    comp_rows.append((idx, t, f, comps[a, col]))
    files = [os.path.join(outdir, "evolve.csv")]
    _write_csv(files[0], CSV_HEADERS["evolve"], rows)
    if comp_rows:
        files.append(os.path.join(outdir, "components.csv"))
        _write_csv(files[1], CSV_HEADERS["components"], comp_rows)
    obs = {
        "tc_measured_per_realization": Observable.of(dyn.tc_per_realization),
        "plateau_entropy": Observable.of(dyn.plateau_entropy),
        "shell_entropy_log2_2Np": Observable.of(dyn.shell_entropy),
        "tc_ensemble": Observable.single(dyn.tc_measured),
        "tc_eq24": Observable.single(dyn.tc_eq24),
        "tc_eq25": Observable.single(dyn.tc_eq25),
        "gamma_fit_pooled": Observable.single(dyn.gamma_fit),
        "gamma_golden": Observable.single(dyn.gamma_golden),
        "deltaE2": Observable.single(dyn.delta_e2),
    }
    return EnsembleSummary(m.command, cfg.master_seed, m.realizations,
                           len(dyn.realizations), obs, dyn.failures, files=files)


def _run_tc_scan(m: RunManifest, outdir):
    rows, obs, failures = [], {}, []
    for n in m.n_grid:
        kw = {"n": n}
        if m.j_scale_per_n is not None:
            kw["j_scale"] = m.j_scale_per_n * m.register.delta0 / n
        cfg = m.register.replace(**kw)
        dyn = ensemble_dynamics(cfg, m.realizations, times=m.time_grid,
                                initial_state="central", bin_width=m.bin_width,
                                threads=m.threads)
        rows.append((n, dyn.tc_measured, dyn.tc_eq24, dyn.tc_eq25, dyn.gamma_fit,
                     dyn.delta_e2))
        obs[f"tc_measured[n={n}]"] = Observable.single(dyn.tc_measured)
        obs[f"tc_eq24[n={n}]"] = Observable.single(dyn.tc_eq24)
        obs[f"gamma_fit[n={n}]"] = Observable.single(dyn.gamma_fit)
        obs[f"plateau_entropy[n={n}]"] = Observable.of(dyn.plateau_entropy)
        failures.extend((f"n={n}:{k}", msg) for k, msg in dyn.failures)
    files = [os.path.join(outdir, "tc-scan.csv")]
    _write_csv(files[0], CSV_HEADERS["tc-scan"], rows)
    completed = m.realizations - len({k for k, _ in failures})
    return EnsembleSummary(m.command, m.register.master_seed, m.realizations,
                           completed, obs, failures, files=files)


def _run_jc_scan(m: RunManifest, outdir):
    grid = m.j_grid.values(m.register)
    res = chaos_boundary_scan(m.register, grid, m.realizations, m.energy_window, m.threads)
    rows = list(zip(res.j_grid, res.mean_eigenstate_entropy, res.entropy_stderr,
                    res.mean_ratio, res.ratio_stderr))
    files = [os.path.join(outdir, "jc-scan.csv")]
    _write_csv(files[0], CSV_HEADERS["jc-scan"], rows)
    obs = {"j_c_entropy": Observable.single(res.j_c_entropy),
           "j_c_ratio": Observable.single(res.j_c_ratio)}
    return EnsembleSummary(m.command, m.register.master_seed, m.realizations,
                           m.realizations, obs, [], files=files)


def _summary(m, obs_list, failures, files):
    keys = []
    for o in obs_list:
        keys.extend(k for k in o if k not in keys)
    obs = {k: Observable.of([o.get(k) for o in obs_list]) for k in keys}
    return EnsembleSummary(m.command, m.register.master_seed, m.realizations,
                           len(obs_list), obs, failures, files=files)


def _collect(m, work, outdir, name):
    results = _pmap(work, range(m.realizations), m.threads)
    rows, obs, failures = [], [], []
    for idx, (good, res) in enumerate(results):
        if good:
            rows.extend(res[0])
            obs.append(res[1])
        else:
            failures.append((idx, res))
    files = [os.path.join(outdir, f"{name}.csv")]
    _write_csv(files[0], CSV_HEADERS[name], rows)
    return _summary(m, obs, failures, files)


_RUNNERS = {"spectrum": _run_spectrum, "strength": _run_strength, "evolve": _run_evolve,
            "tc-scan": _run_tc_scan, "jc-scan": _run_jc_scan}


def run_ensemble(manifest: RunManifest, out: Optional[str] = None,
                 threads: Optional[int] = None) -> EnsembleSummary:
    """Execute a manifest and write its CSV files and ``summary.json``.

    Files are written under temporary names and renamed when complete.
    """
    if threads is not None:
        manifest = manifest.replace(threads=int(threads))
    if out is not None:
        manifest = manifest.replace(out=str(out))
    outdir = manifest.out
    os.makedirs(outdir, exist_ok=True)
    summary = _RUNNERS[manifest.command](manifest, outdir)
    summary.files = [os.path.basename(f) for f in summary.files]
    echo = manifest.to_dict()
    # the thread count and output path do not influence results
    echo.pop("threads")
    echo.pop("out")
    doc = {"manifest": echo, **summary.to_dict()}
    _atomic_write(os.path.join(outdir, "summary.json"),
                  json.dumps(_json_clean(doc), indent=2, sort_keys=True) + "\n")
    return summary
