"""Disordered qubit register: configuration, disorder sampling and the Hamiltonian.

The register Hamiltonian is

.. math ::
    H = \\sum_i \\epsilon_i \\sigma^z_i + \\sum_{(i,j) \\in E} J_{ij} \\sigma^x_i \\sigma^x_j

on the :math:`2^n` dimensional product basis. A basis state is an integer
bitmask; bit ``b`` set means qubit ``b`` is up (:math:`\\sigma^z = +1`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ConfigError", "ResourceCapError", "RegisterConfig", "DisorderRealization",
    "Hamiltonian", "ParityBlocks", "J_LAWS", "EPS_LAWS", "DEFAULT_MAX_QUBITS",
    "realization_rng", "sample_disorder", "diagonal_energies", "build_hamiltonian",
    "second_moment", "split_by_parity", "popcount", "up_parity",
]

DEFAULT_MAX_QUBITS = 14
J_LAWS = ("uniform", "pm", "fixed")
EPS_LAWS = ("uniform",)

Topology = Union[str, Sequence[Sequence[int]]]

_GRID_RE = re.compile(r"^grid[:(]\s*(\d+)\s*[x,]\s*(\d+)\s*\)?$")


class ConfigError(ValueError):
    """Invalid register or run configuration."""


class ResourceCapError(ConfigError):
    """Requested register is larger than the configured memory cap."""


def popcount(states):
    """Number of set bits of every entry of an integer array."""
    return np.bitwise_count(np.asarray(states, dtype=np.int64)).astype(np.int64)


def up_parity(states):
    """Parity (0 even, 1 odd) of the number of up qubits."""
    return popcount(states) & 1


def _topology_edges(n, topology):
    if isinstance(topology, str):
        name = topology.strip().lower()
        if name == "chain":
            return [(i, i + 1) for i in range(n - 1)]
        if name == "ring":
            if n < 3:
                raise ConfigError(f"ring topology needs n >= 3, got n={n}")
            return [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
        if name == "grid":
            w = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
            name = f"grid:{w}x{n // w}"
        m = _GRID_RE.match(name)
        if m:
            w, h = int(m.group(1)), int(m.group(2))
            if w * h != n:
                raise ConfigError(f"grid {w}x{h} has {w * h} sites but n={n}")
            edges = []
            for y in range(h):
                for x in range(w):
                    q = y * w + x
                    if x + 1 < w:
                        edges.append((q, q + 1))
                    if y + 1 < h:
                        edges.append((q, q + w))
            return edges
        raise ConfigError(f"unknown topology {topology!r}")
    edges = []
    for pair in topology:
        if len(pair) != 2:
            raise ConfigError(f"edge {pair!r} is not a pair")
        a, b = int(pair[0]), int(pair[1])
        if a == b:
            raise ConfigError(f"edge {pair!r} connects a qubit to itself")
        if not (0 <= a < n and 0 <= b < n):
            raise ConfigError(f"edge {pair!r} is out of range for n={n}")
        edges.append((min(a, b), max(a, b)))
    seen = set()
    for e in edges:
        if e in seen:
            raise ConfigError(f"duplicate edge {e}")
        seen.add(e)
    return edges


@dataclass(frozen=True)
class RegisterConfig:
    """Declarative description of a register and its disorder laws.

    Parameters
    ----------
    n : int
        Number of qubits.
    topology : str or sequence of pairs
        ``"chain"``, ``"ring"``, ``"grid:WxH"``, ``"grid"`` or an explicit edge
        list. Bare ``"grid"`` picks the most nearly square ``W x H = n`` layout
        (``W <= H``); for prime ``n`` that is a chain.
    delta0 : float
        Single-qubit splitting scale; the splittings are uniform on
        ``[0.5 delta0, 1.5 delta0]``. Zero gives the zero-field limit.
    j_scale : float
        Coupling scale ``J``.
    j_law : {"uniform", "pm", "fixed"}
        ``J_ij`` uniform on ``[-J, J]``, ``+-J`` with random sign, or exactly ``J``.
    eps_law : {"uniform"}
    master_seed : int
        Root of all disorder draws.
    max_qubits : int
        Memory cap; larger ``n`` is rejected.
    """

    n: int
    topology: Topology = "chain"
    delta0: float = 1.0
    j_scale: float = 0.0
    j_law: str = "uniform"
    eps_law: str = "uniform"
    master_seed: int = 0
    max_qubits: int = DEFAULT_MAX_QUBITS
    edges: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be an integer >= 1, got {self.n!r}")
        if self.n > self.max_qubits:
            raise ResourceCapError(
                f"n={self.n} exceeds the memory cap of {self.max_qubits} qubits "
                f"(dense 2^n x 2^n storage); raise max_qubits to override")
        if not np.isfinite(self.delta0) or self.delta0 < 0:
            raise ConfigError(f"delta0 must be >= 0, got {self.delta0!r}")
        if not np.isfinite(self.j_scale) or self.j_scale < 0:
            raise ConfigError(f"j_scale must be >= 0, got {self.j_scale!r}")
        if self.j_law not in J_LAWS:
            raise ConfigError(f"j_law must be one of {J_LAWS}, got {self.j_law!r}")
        if self.eps_law not in EPS_LAWS:
            raise ConfigError(f"eps_law must be one of {EPS_LAWS}, got {self.eps_law!r}")
        if not (0 <= int(self.master_seed) < 2**64):
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        topo = self.topology
        if not isinstance(topo, str):
            topo = tuple(tuple(int(v) for v in e) for e in topo)
            object.__setattr__(self, "topology", topo)
        object.__setattr__(self, "edges", tuple(_topology_edges(int(self.n), topo)))

    @property
    def dim(self):
        return 1 << self.n

    @property
    def n_edges(self):
        """Pair count ``qn``."""
        return len(self.edges)

    @property
    def pair_density(self):
        """``q = edges / n``."""
        return self.n_edges / self.n

    def replace(self, **changes):
        """Copy with some fields changed (validation re-runs)."""
        kw = {k: getattr(self, k) for k in
              ("n", "topology", "delta0", "j_scale", "j_law", "eps_law",
               "master_seed", "max_qubits")}
        kw.update(changes)
        return RegisterConfig(**kw)


@dataclass(frozen=True)
class DisorderRealization:
    """One draw of the splittings ``eps`` and couplings ``(i, j, J_ij)``."""

    config: RegisterConfig
    realization_index: int
    eps: np.ndarray
    couplings: tuple

    @property
    def n(self):
        return self.config.n

    @property
    def j_values(self):
        return np.array([c[2] for c in self.couplings], dtype=float)


def realization_rng(master_seed, realization_index):
    """Generator for one realization.

    The stream is Philox keyed by ``SeedSequence(master_seed,
    spawn_key=(realization_index,))``; it does not depend on the order in
    which realizations are drawn.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(realization_index),))
    return np.random.Generator(np.random.Philox(ss))


def sample_disorder(config: RegisterConfig, realization_index: int) -> DisorderRealization:
    """Draw the splittings and couplings of realization ``realization_index``."""
    if realization_index < 0:
        raise ValueError("realization_index must be >= 0")
    rng = realization_rng(config.master_seed, realization_index)
    # fixed draw order: eps, then one uniform per edge
    eps = config.delta0 * rng.uniform(0.5, 1.5, size=config.n)
    u = rng.uniform(-1.0, 1.0, size=config.n_edges)
    if config.j_scale == 0.0:
        j = np.zeros(config.n_edges)
    elif config.j_law == "uniform":
        j = config.j_scale * u
    elif config.j_law == "pm":
        j = config.j_scale * np.where(u < 0.0, -1.0, 1.0)
    else:
        j = np.full(config.n_edges, float(config.j_scale))
    eps.setflags(write=False)
    couplings = tuple((a, b, float(v)) for (a, b), v in zip(config.edges, j))
    return DisorderRealization(config, int(realization_index), eps, couplings)


def diagonal_energies(eps, states=None):
    """``sum_b eps_b s_b`` with ``s_b = +1`` for set bits, for every state."""
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    if states is None:
        states = np.arange(1 << n, dtype=np.int64)
    states = np.asarray(states, dtype=np.int64)
    out = np.zeros(states.shape, dtype=float)
    for b in range(n):
        out += eps[b] * (2.0 * ((states >> b) & 1) - 1.0)
    return out


@dataclass(frozen=True)
class ParityBlocks:
    """Even and odd up-spin-parity blocks of a Hamiltonian.

    ``even_index[a]`` is the full-basis state of row ``a`` of ``even``.
    """

    even: np.ndarray
    odd: np.ndarray
    even_index: np.ndarray
    odd_index: np.ndarray

    def block(self, parity):
        return (self.even, self.even_index) if parity == 0 else (self.odd, self.odd_index)

    def assemble(self):
        dim = self.even_index.size + self.odd_index.size
        h = np.zeros((dim, dim))
        h[np.ix_(self.even_index, self.even_index)] = self.even
        h[np.ix_(self.odd_index, self.odd_index)] = self.odd
        return h


@dataclass(frozen=True)
class Hamiltonian:
    """Dense real symmetric matrix of one realization."""

    realization: DisorderRealization
    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.realization.n

    def parity_blocks(self):
        return split_by_parity(self)


def build_hamiltonian(r: DisorderRealization) -> Hamiltonian:
    """Assemble the ``2^n x 2^n`` matrix of a realization."""
    cfg = r.config
    if cfg.n > cfg.max_qubits:
        raise ResourceCapError(f"n={cfg.n} exceeds the cap of {cfg.max_qubits} qubits")
    dim = cfg.dim
    states = np.arange(dim, dtype=np.int64)
    h = np.zeros((dim, dim))
    h[states, states] = diagonal_energies(r.eps, states)
    for a, b, j in r.couplings:
        # sigma^x_a sigma^x_b flips exactly bits a and b
        h[states, states ^ ((1 << a) | (1 << b))] += j
    h.setflags(write=False)
    return Hamiltonian(r, h)


def second_moment(r: DisorderRealization) -> float:
    """Variance of every strength function, ``sum over edges of J_ij^2``.

    Each coupling term moves a basis state to exactly one distinct partner,
    so the result does not depend on the initial state.
    """
    j = r.j_values
    return float(np.dot(j, j))


def split_by_parity(h: Hamiltonian) -> ParityBlocks:
    m = np.asarray(h.matrix)
    states = np.arange(m.shape[0], dtype=np.int64)
    par = up_parity(states)
    even = states[par == 0]
    odd = states[par == 1]
    return ParityBlocks(m[np.ix_(even, even)], m[np.ix_(odd, odd)], even, odd)
