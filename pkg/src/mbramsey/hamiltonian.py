"""Bose-Hubbard operators, detuning schedules and Floquet helpers.

Units: frequencies in MHz (ordinary frequency, not angular), times in µs.
Physical couplings are negative (attractive model); the interferometry
targets the highest-energy eigenstate of each sector.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.special import j0

from .fock import DEFAULT_NMAX, SectorBasis

DEFAULT_J = -9.0
DEFAULT_U = -240.0
DEFAULT_STAGGER = 150.0
DEFAULT_NU_SB = 100.0

# per-qubit anharmonicities and bond couplings, Q1..Q7
TABLE_U = (-236.0, -235.0, -209.0, -234.0, -236.0, -231.0, -225.0)
TABLE_J = (-9.62, -9.58, -9.63, -9.74, -9.76, -9.63)


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """Chain of ``V`` sites with per-bond tunneling and per-site interaction."""

    V: int
    J_bonds: tuple[float, ...]
    U_sites: tuple[float, ...]
    omega_lat: float = 0.0
    n_max: int = DEFAULT_NMAX

    def __post_init__(self):
        object.__setattr__(self, "J_bonds", tuple(float(j) for j in self.J_bonds))
        object.__setattr__(self, "U_sites", tuple(float(u) for u in self.U_sites))
        if self.V < 1:
            raise LatticeError("V must be >= 1")
        if len(self.J_bonds) != self.V - 1:
            raise LatticeError(f"expected {self.V - 1} bond couplings, got {len(self.J_bonds)}")
        if len(self.U_sites) != self.V:
            raise LatticeError(f"expected {self.V} site interactions, got {len(self.U_sites)}")
        if self.n_max < 1:
            raise LatticeError("n_max must be >= 1")

    @classmethod
    def uniform(cls, V: int, J: float = DEFAULT_J, U: float = DEFAULT_U,
                omega_lat: float = 0.0, n_max: int = DEFAULT_NMAX) -> "LatticeSpec":
        return cls(V, (J,) * (V - 1), (U,) * V, omega_lat, n_max)

    @property
    def J(self) -> float:
        """Mean bond coupling (the uniform value for uniform chains)."""
        return float(np.mean(self.J_bonds)) if self.J_bonds else DEFAULT_J

    @property
    def U(self) -> float:
        return float(np.mean(self.U_sites))

    def subchain(self, start: int, V: int) -> "LatticeSpec":
        """Contiguous block of ``V`` sites beginning at ``start``."""
        if start < 0 or start + V > self.V:
            raise LatticeError(f"sites {start}..{start + V - 1} outside chain of {self.V}")
        return replace(self, V=V, J_bonds=self.J_bonds[start:start + V - 1],
                       U_sites=self.U_sites[start:start + V])

    def extended(self, J_edge: float, U_edge: float) -> "LatticeSpec":
        """Append one site to the right end."""
        return replace(self, V=self.V + 1, J_bonds=self.J_bonds + (J_edge,),
                       U_sites=self.U_sites + (U_edge,))

    def with_bond(self, bond: int, value: float) -> "LatticeSpec":
        bonds = list(self.J_bonds)
        bonds[bond] = value
        return replace(self, J_bonds=tuple(bonds))

    def to_dict(self) -> dict:
        return {"V": self.V, "J_bonds": list(self.J_bonds), "U_sites": list(self.U_sites),
                "omega_lat": self.omega_lat, "n_max": self.n_max}

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        if "preset" in d:
            base = preset(d["preset"])
            V = int(d.get("V", base.V))
            spec = base.subchain(int(d.get("start", 0)), V)
            overrides = {k: d[k] for k in ("omega_lat", "n_max") if k in d}
            return replace(spec, **overrides)
        V = int(d["V"])
        J = d.get("J_bonds", d.get("J", DEFAULT_J))
        U = d.get("U_sites", d.get("U", DEFAULT_U))
        J_bonds = tuple(J) if isinstance(J, (list, tuple)) else (float(J),) * (V - 1)
        U_sites = tuple(U) if isinstance(U, (list, tuple)) else (float(U),) * V
        return cls(V, J_bonds, U_sites, float(d.get("omega_lat", 0.0)),
                   int(d.get("n_max", DEFAULT_NMAX)))


PRESETS = {
    "paper-uniform": lambda: LatticeSpec.uniform(7, omega_lat=5000.0),
    "paper-table-s2": lambda: LatticeSpec(7, TABLE_J, TABLE_U, 5000.0),
    "u-disordered-s1": lambda: LatticeSpec(7, (DEFAULT_J,) * 6, TABLE_U, 5000.0),
}


def preset(name: str) -> LatticeSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise LatticeError(f"unknown lattice preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class ModulationSpec:
    """Sinusoidal frequency modulation of one site.

    ``epsilon`` is the full peak-to-peak frequency swing, so the site
    detuning gains ``epsilon/2 * cos(2π nu_sb t)`` and tunneling to the
    site is renormalized by ``J0(epsilon / (2 nu_sb))``.
    """

    site: int
    epsilon: float
    nu_sb: float = DEFAULT_NU_SB
    dc_correction: bool = False
    flux_amplitude: float = 0.0
    curvature: float = 0.0
    phase: float = 0.0  # radians at t = 0 of the schedule

    def __post_init__(self):
        if self.nu_sb <= 0:
            raise LatticeError("nu_sb must be positive")
        if self.epsilon < 0:
            raise LatticeError("epsilon must be non-negative")

    @property
    def dc_shift(self) -> float:
        return dc_offset(self.flux_amplitude, self.curvature)


def effective_tunneling(J: float, mod: ModulationSpec) -> float:
    return J * float(j0(mod.epsilon / (2.0 * mod.nu_sb)))


def bessel_argument_for(suppression: float = 1 / np.sqrt(2)) -> float:
    """Smallest x > 0 with J0(x) = suppression (0 < suppression < 1)."""
    if not 0.0 < suppression < 1.0:
        raise LatticeError("suppression must lie in (0, 1)")
    return brentq(lambda x: j0(x) - suppression, 0.0, 2.404825557695773, xtol=1e-14)


def compensating_modulation(site: int, nu_sb: float = DEFAULT_NU_SB,
                            suppression: float = 1 / np.sqrt(2), **kw) -> ModulationSpec:
    """Modulation whose base-band tunneling factor equals ``suppression``."""
    return ModulationSpec(site, 2.0 * nu_sb * bessel_argument_for(suppression), nu_sb, **kw)


def dc_offset(epsilon_phi: float, curvature: float) -> float:
    return epsilon_phi ** 2 / 4.0 * curvature


def stagger_pattern(V: int, amplitude: float, parity: int = 1) -> np.ndarray:
    if amplitude < 0:
        raise LatticeError("stagger amplitude must be non-negative")
    if parity not in (1, -1):
        raise LatticeError("parity must be +1 or -1")
    signs = parity * (-1.0) ** np.arange(V)
    return 0.5 * amplitude * signs


# -- operators ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SectorOperators:
    """Pieces of H restricted to one sector: hopping, occupations, interaction."""

    basis: SectorBasis
    hopping: sp.csr_matrix = field(repr=False)
    occ: np.ndarray = field(repr=False)
    interaction: np.ndarray = field(repr=False)

    def diagonal(self, detunings: Sequence[float], omega_lat: float = 0.0) -> np.ndarray:
        d = np.asarray(detunings, dtype=float)
        return self.interaction + self.occ @ (d + omega_lat)

    def dense(self, detunings: Sequence[float], omega_lat: float = 0.0) -> np.ndarray:
        H = self.hopping.toarray()
        H[np.diag_indices_from(H)] += self.diagonal(detunings, omega_lat)
        return H


def _hopping_matrix(basis: SectorBasis, J_bonds: tuple[float, ...]) -> sp.csr_matrix:
    states = basis.states
    rows, cols, vals = [], [], []
    for b, J in enumerate(J_bonds):
        if J == 0.0:
            continue
        i, j = b, b + 1
        # a_i^dag a_j : move one particle from j to i
        movable = (states[:, j] > 0) & (states[:, i] < basis.n_max)
        for r in np.nonzero(movable)[0]:
            s = states[r].copy()
            amp = np.sqrt(float(s[j] * (s[i] + 1)))
            s[i] += 1
            s[j] -= 1
            rows.append(basis.index_of(s))
            cols.append(r)
            vals.append(J * amp)
    n = basis.dim
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
    return (A + A.T).tocsr()


@lru_cache(maxsize=512)
def _cached_operators(basis: SectorBasis, J_bonds: tuple, U_sites: tuple) -> SectorOperators:
    occ = basis.states.astype(float)
    U = np.asarray(U_sites, dtype=float)
    interaction = (0.5 * occ * (occ - 1.0)) @ U
    return SectorOperators(basis, _hopping_matrix(basis, J_bonds), occ, interaction)


def sector_operators(basis: SectorBasis, spec: LatticeSpec) -> SectorOperators:
    if basis.V != spec.V:
        raise LatticeError(f"basis has V={basis.V} but lattice has V={spec.V}")
    if basis.n_max > spec.n_max:
        raise LatticeError("basis cutoff exceeds lattice cutoff")
    return _cached_operators(basis, spec.J_bonds, spec.U_sites)


def build_hamiltonian(basis: SectorBasis, spec: LatticeSpec,
                      detunings: Sequence[float] | None = None) -> sp.csr_matrix:
    """Sparse Bose-Hubbard matrix of one sector, in MHz, including omega_lat * N."""
    if detunings is None:
        detunings = np.zeros(spec.V)
    if len(detunings) != spec.V:
        raise LatticeError(f"expected {spec.V} detunings, got {len(detunings)}")
    ops = sector_operators(basis, spec)
    return (ops.hopping + sp.diags(ops.diagonal(detunings, spec.omega_lat))).tocsr()


# -- schedules ---------------------------------------------------------------

RAMP_SHAPES = ("cosine", "linear")


def ramp_fraction(x, shape: str = "cosine"):
    x = np.clip(x, 0.0, 1.0)
    if shape == "cosine":
        return 0.5 * (1.0 - np.cos(np.pi * x))
    if shape == "linear":
        return x
    raise LatticeError(f"unknown ramp shape {shape!r}")


@dataclass(frozen=True)
class Segment:
    kind: str
    t_start: float
    t_end: float
    start: tuple[float, ...]
    end: tuple[float, ...]
    shape: str = "cosine"
    modulation: ModulationSpec | None = None
    envelope: tuple[float, float] = (1.0, 1.0)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def is_static(self) -> bool:
        return self.modulation is None and self.start == self.end

    def detuning(self, t):
        """Detunings at time ``t`` (scalar -> (V,), array -> (len(t), V))."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if self.duration <= 0:
            x = np.zeros_like(ts)
        else:
            x = (ts - self.t_start) / self.duration
        f = ramp_fraction(x, self.shape)
        a, b = np.asarray(self.start), np.asarray(self.end)
        d = a[None, :] + (b - a)[None, :] * f[:, None]
        mod = self.modulation
        if mod is not None:
            e0, e1 = self.envelope
            env = e0 + (e1 - e0) * f
            d[:, mod.site] += 0.5 * mod.epsilon * env * np.cos(2 * np.pi * mod.nu_sb * ts + mod.phase)
            if not mod.dc_correction:
                d[:, mod.site] += mod.dc_shift * env
        return d[0] if np.ndim(t) == 0 else d


@dataclass(frozen=True)
class Schedule:
    """Piecewise detuning program, built by chaining ``ramp``/``hold`` calls."""

    initial: tuple[float, ...]
    segments: tuple[Segment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(float(x) for x in self.initial))

    @property
    def duration(self) -> float:
        return self.segments[-1].t_end if self.segments else 0.0

    @property
    def final(self) -> tuple[float, ...]:
        return self.segments[-1].end if self.segments else self.initial

    def _append(self, seg: Segment) -> "Schedule":
        return replace(self, segments=self.segments + (seg,))

    def ramp(self, target: Sequence[float], duration: float, shape: str = "cosine",
             modulation: ModulationSpec | None = None,
             envelope: tuple[float, float] = (1.0, 1.0)) -> "Schedule":
        if duration < 0:
            raise LatticeError("segment duration must be non-negative")
        if shape not in RAMP_SHAPES:
            raise LatticeError(f"unknown ramp shape {shape!r}")
        target = tuple(float(x) for x in target)
        if len(target) != len(self.initial):
            raise LatticeError("ramp target has wrong length")
        t0 = self.duration
        kind = "modulation" if modulation is not None else "ramp"
        return self._append(Segment(kind, t0, t0 + duration, self.final, target, shape,
                                    modulation, envelope))

    def hold(self, duration: float, modulation: ModulationSpec | None = None,
             envelope: tuple[float, float] = (1.0, 1.0), shape: str = "cosine") -> "Schedule":
        if duration < 0:
            raise LatticeError("segment duration must be non-negative")
        t0 = self.duration
        kind = "modulation" if modulation is not None else "hold"
        return self._append(Segment(kind, t0, t0 + duration, self.final, self.final,
                                    shape, modulation, envelope))

    def jump(self, target: Sequence[float]) -> "Schedule":
        """Instantaneous change of detunings (zero-duration step)."""
        return self._append(Segment("hold", self.duration, self.duration,
                                    tuple(float(x) for x in target),
                                    tuple(float(x) for x in target)))

    def reversed(self) -> "Schedule":
        """Same program played backwards in time."""
        total = self.duration
        segs = []
        for s in reversed(self.segments):
            e0, e1 = s.envelope
            segs.append(Segment(s.kind, total - s.t_end, total - s.t_start, s.end, s.start,
                                s.shape, s.modulation, (e1, e0)))
        return Schedule(self.final, tuple(segs))

    def detuning(self, t: float) -> np.ndarray:
        if not self.segments:
            return np.asarray(self.initial)
        for s in self.segments:
            if t <= s.t_end:
                if t < s.t_start:
                    break
                return s.detuning(t)
        return self.segments[-1].detuning(self.segments[-1].t_end)
