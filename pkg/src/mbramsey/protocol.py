"""Manybody Ramsey sequences: assembly pulses, melt/hold/un-melt, readout.

Two flavours share one engine.  In number mode the control is an ordinary
lattice site whose pi/2 pulse splits the state into N and N+1 particles.
In volume mode the control is an extra site at the right edge, detuned by
-U so that its 1<->2 transition is resonant with the lattice: when it holds
one photon it adds a site to the fluid, when empty it is inaccessible.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .dynamics import (
    DT_MODULATION,
    StateVector,
    _static_eigh,
    instantaneous_eigensystem,
    propagate_block,
    propagator,
)
from .fock import DEFAULT_NMAX, enumerate_basis
from .hamiltonian import (
    DEFAULT_STAGGER,
    LatticeSpec,
    ModulationSpec,
    Schedule,
    compensating_modulation,
    sector_operators,
    stagger_pattern,
)

TWO_PI = 2.0 * np.pi
DEFAULT_TILT = 10.0          # MHz per site, lifts degeneracy of the stagger
DEFAULT_VIRTUAL = 50.0      # MHz
DEFAULT_SHOTS = 2000
DEFAULT_T2 = 1.3            # µs
LOCALIZED_FACTOR = 10.0
MOD_RAMP = 0.1              # µs, envelope ramp of the Floquet drive
SAME_MANIFOLD_STAGGER = (-120.0, -40.0, -120.0, -40.0, 150.0, 60.0, -120.0)
MODES = ("number", "volume")


class ProtocolError(ValueError):
    pass


def default_hold_times(span: float = 0.8, step: float = 0.004) -> np.ndarray:
    n = int(round(span / step)) + 1
    return np.arange(n) * step


@dataclass(frozen=True)
class PulseEvent:
    """Ideal rotation on the {a, a+1} levels of one site (a = ``transition``)."""

    site: int
    angle: float = np.pi
    phase: float = 0.0
    transition: int = 0

    def __post_init__(self):
        if self.transition not in (0, 1):
            raise ProtocolError("transition must be 0 (0<->1) or 1 (1<->2)")


@dataclass(frozen=True)
class RamseyConfig:
    lattice: LatticeSpec
    control_site: int
    prep_pulses: tuple[PulseEvent, ...]
    stagger: tuple[float, ...]
    tau_melt: float = 1.0
    hold_times: tuple[float, ...] = field(default_factory=lambda: tuple(default_hold_times()))
    virtual_freq: float = DEFAULT_VIRTUAL
    dephasing_T2: float | None = None
    shots: int | None = None
    mode: str = "number"
    lattice_detunings: tuple[float, ...] | None = None
    ramp_shape: str = "cosine"
    drive_freq: float | None = None
    modulation: ModulationSpec | None = None
    mod_ramp: float = MOD_RAMP
    seed: int = 0
    dt_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "hold_times", tuple(float(t) for t in self.hold_times))
        object.__setattr__(self, "stagger", tuple(float(x) for x in self.stagger))
        object.__setattr__(self, "prep_pulses", tuple(self.prep_pulses))
        if self.lattice_detunings is not None:
            object.__setattr__(self, "lattice_detunings",
                               tuple(float(x) for x in self.lattice_detunings))

    @property
    def target(self) -> tuple[float, ...]:
        if self.lattice_detunings is None:
            return (0.0,) * self.lattice.V
        return self.lattice_detunings

    @property
    def control_transition(self) -> int:
        for p in self.prep_pulses:
            if p.site == self.control_site:
                return p.transition
        return 0

    @property
    def demod_freq(self) -> float:
        if self.drive_freq is not None:
            return self.drive_freq
        if self.mode == "volume":
            return self.lattice.omega_lat + self.target[self.control_site]
        return self.lattice.omega_lat

    def validate(self) -> "RamseyConfig":
        V = self.lattice.V
        if self.mode not in MODES:
            raise ProtocolError(f"unknown mode {self.mode!r}")
        if not 0 <= self.control_site < V:
            raise ProtocolError(f"control site {self.control_site} outside 0..{V - 1}")
        if len(self.stagger) != V or len(self.target) != V:
            raise ProtocolError("detuning patterns must have one entry per site")
        if self.tau_melt < 0:
            raise ProtocolError("tau_melt must be non-negative")
        T = np.asarray(self.hold_times)
        if len(T) < 2:
            raise ProtocolError("need at least two hold times")
        if np.any(T < 0) or np.any(np.diff(T) <= 0):
            raise ProtocolError("hold times must be non-negative and strictly increasing")
        dt = float(np.min(np.diff(T)))
        if abs(self.virtual_freq) >= 0.5 / dt:
            raise ProtocolError(
                f"virtual frequency {self.virtual_freq} MHz aliases at sample step "
                f"{dt * 1e3:.3g} ns (Nyquist {0.5 / dt:.4g} MHz)")
        if self.dephasing_T2 is not None and self.dephasing_T2 <= 0:
            raise ProtocolError("dephasing_T2 must be positive")
        if self.shots is not None and self.shots < 1:
            raise ProtocolError("shots must be >= 1")
        if self.mode == "volume" and self.control_site != V - 1:
            raise ProtocolError("volume mode needs the control at the right edge")
        for p in self.prep_pulses:
            if not 0 <= p.site < V:
                raise ProtocolError(f"pulse site {p.site} outside lattice")
        if not any(p.site == self.control_site for p in self.prep_pulses):
            raise ProtocolError("no preparation pulse acts on the control site")
        return self


@dataclass(frozen=True)
class RamseyTrace:
    hold_times: np.ndarray
    population: np.ndarray
    sem: np.ndarray | None = None
    virtual_freq: float = DEFAULT_VIRTUAL
    demod_freq: float = 0.0

    def __post_init__(self):
        if len(self.hold_times) != len(self.population):
            raise ProtocolError("trace length mismatch")


@dataclass(frozen=True)
class CorrelatorTrace:
    hold_times: np.ndarray
    values: np.ndarray


# -- pulses ---------------------------------------------------------------------

def check_localized(pulse: PulseEvent, detunings: Sequence[float], spec: LatticeSpec,
                    factor: float = LOCALIZED_FACTOR) -> None:
    """Require the pulsed transition to sit >= factor*|J| away from each neighbor."""
    d = np.asarray(detunings, dtype=float)
    s = pulse.site
    f = d[s] + spec.U_sites[s] * pulse.transition
    for nb, bond in ((s - 1, s - 1), (s + 1, s)):
        if 0 <= nb < spec.V:
            J = abs(spec.J_bonds[bond])
            if abs(f - d[nb]) < factor * J:
                raise ProtocolError(
                    f"site {s} is not localized: transition {f:.4g} MHz within "
                    f"{factor:g}|J| of neighbor {nb} at {d[nb]:.4g} MHz")


@lru_cache(maxsize=512)
def _pairs(N: int, V: int, n_max: int, site: int, a: int):
    """Indices (in sector N, in sector N+1) linked by raising ``site`` from a to a+1."""
    if a + 1 > n_max:
        return np.zeros(0, int), np.zeros(0, int)
    lo = enumerate_basis(N, V, n_max)
    try:
        hi = enumerate_basis(N + 1, V, n_max)
    except ValueError:
        return np.zeros(0, int), np.zeros(0, int)
    rows = np.nonzero(lo.states[:, site] == a)[0]
    up = lo.states[rows].copy()
    up[:, site] += 1
    return rows, np.array([hi.index_of(s) for s in up], dtype=int)


def _rotate(blocks: dict, V: int, n_max: int, site: int, a: int, theta: float,
            phi) -> dict:
    """Apply R(theta, phi) to every column; ``phi`` may be per-column."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ncol = None
    for v in blocks.values():
        ncol = None if v.ndim == 1 else v.shape[1]
        break
    Ns = sorted(blocks)
    out = {N: v.copy() for N, v in blocks.items()}
    need = set(Ns) | {N + 1 for N in Ns} | {N - 1 for N in Ns if N > 0}
    for N in sorted(need):
        if N < 0 or N + 1 > V * n_max:
            continue
        rows_lo, rows_hi = _pairs(N, V, n_max, site, a)
        if len(rows_lo) == 0:
            continue
        zero_lo = N not in blocks
        zero_hi = N + 1 not in blocks
        if zero_lo and zero_hi:
            continue
        for M in (N, N + 1):
            if M not in out:
                dim = enumerate_basis(M, V, n_max).dim
                out[M] = np.zeros((dim,) if ncol is None else (dim, ncol), dtype=complex)
        x_lo = blocks[N][rows_lo] if not zero_lo else 0.0
        x_hi = blocks[N + 1][rows_hi] if not zero_hi else 0.0
        e = np.exp(1j * np.asarray(phi))
        out[N][rows_lo] = c * x_lo - 1j * s * np.conj(e) * x_hi
        out[N + 1][rows_hi] = -1j * s * e * x_lo + c * x_hi
    return out


def apply_pulse(psi: StateVector, pulse: PulseEvent, detunings: Sequence[float] | None = None,
                spec: LatticeSpec | None = None) -> StateVector:
    """Instantaneous ideal rotation; the localized check runs when detunings are given."""
    if detunings is not None:
        if spec is None:
            raise ProtocolError("localized check needs the lattice spec")
        check_localized(pulse, detunings, spec)
    if not 0 <= pulse.site < psi.V:
        raise ProtocolError(f"pulse site {pulse.site} outside lattice of {psi.V}")
    blocks = _rotate(psi.blocks, psi.V, psi.n_max, pulse.site, pulse.transition,
                     pulse.angle, pulse.phase)
    return StateVector(psi.V, psi.n_max, {N: v for N, v in blocks.items() if np.any(v)})


def density_profile(psi: StateVector) -> np.ndarray:
    out = np.zeros(psi.V)
    for N, v in psi.blocks.items():
        out += (np.abs(v) ** 2) @ psi.basis(N).states
    return out


def level_population(psi: StateVector, site: int, level: int) -> float:
    return float(sum(np.sum(np.abs(v[psi.basis(N).states[:, site] == level]) ** 2)
                     for N, v in psi.blocks.items()))


# -- assembly -------------------------------------------------------------------

def assembly_detunings(V: int, amplitude: float = DEFAULT_STAGGER,
                       tilt: float = DEFAULT_TILT, parity: int = -1) -> np.ndarray:
    """Stagger with odd sites high, plus a small linear tilt to order the sites.

    For V = 7 the highest sites are 5, 3, 1, ... so one particle sits at
    |0000010> and two at |0001010>.
    """
    return stagger_pattern(V, amplitude, parity) + tilt * (np.arange(V) - (V - 1) / 2)


def site_order(detunings: Sequence[float]) -> list[int]:
    """Sites from highest to lowest detuning."""
    return [int(i) for i in np.argsort(-np.asarray(detunings), kind="stable")]


def number_superposition_config(spec: LatticeSpec, N: int, tau: float = 1.0,
                                stagger: Sequence[float] | None = None,
                                **kw) -> RamseyConfig:
    """Superpose N and N+1 particles: pi pulses on the N highest sites, pi/2 on the next."""
    V = spec.V
    if not 0 <= N < V:
        raise ProtocolError(f"number superposition needs 0 <= N < V, got N={N}, V={V}")
    st = assembly_detunings(V) if stagger is None else np.asarray(stagger, dtype=float)
    order = site_order(st)
    pulses = [PulseEvent(s) for s in order[:N]] + [PulseEvent(order[N], np.pi / 2)]
    return RamseyConfig(spec, order[N], tuple(pulses), tuple(st), tau, **kw).validate()


def volume_superposition_config(spec: LatticeSpec, N: int, tau: float = 1.0,
                                compensate: bool = True, nu_sb: float | None = None,
                                **kw) -> RamseyConfig:
    """Superpose V and V+1 accessible sites holding N particles.

    ``spec`` has V+1 sites; the last one is the control.  During the hold
    its detuning is -U_edge so the 1<->2 transition sits at the lattice
    frequency.  The fluid stagger ends on its highest low site, and the
    control starts midway between ``max(fluid)`` and ``min(fluid) - U_edge``:
    its 0<->1 line is then above every fluid level and its 1<->2 level below
    every one.  All detunings shrink together during the melt, so neither
    line crosses a fluid level and both control branches melt into their
    top states.
    """
    V = spec.V - 1
    if V < 1 or not 0 <= N <= V:
        raise ProtocolError(f"volume superposition needs 0 <= N <= V, got N={N}, V={V}")
    edge = spec.V - 1
    U_edge = spec.U_sites[edge]
    fluid = assembly_detunings(V, parity=(-1) ** V)
    st = np.append(fluid, 0.5 * (fluid.max() + fluid.min() - U_edge))
    target = np.append(np.zeros(V), -U_edge)
    order = site_order(fluid)
    pulses = [PulseEvent(s) for s in order[:N]] + [PulseEvent(edge, np.pi / 2)]
    mod = None
    if compensate:
        mod = compensating_modulation(edge, **({"nu_sb": nu_sb} if nu_sb else {}))
    return RamseyConfig(spec, edge, tuple(pulses), tuple(st), tau, mode="volume",
                        lattice_detunings=tuple(target), modulation=mod, **kw).validate()


# -- engine ---------------------------------------------------------------------

def prepare(config: RamseyConfig) -> StateVector:
    spec = config.lattice
    psi = StateVector.vacuum(spec.V, spec.n_max)
    for p in config.prep_pulses:
        psi = apply_pulse(psi, p, config.stagger, spec)
    return psi


def _pre_hold(config: RamseyConfig) -> Schedule:
    sched = Schedule(config.stagger).ramp(config.target, config.tau_melt, config.ramp_shape)
    if config.modulation is not None:
        sched = sched.hold(config.mod_ramp, config.modulation, envelope=(0.0, 1.0))
    return sched


def _post_hold(config: RamseyConfig, mod: ModulationSpec | None) -> Schedule:
    sched = Schedule(config.target)
    if mod is not None:
        sched = sched.hold(config.mod_ramp, mod, envelope=(1.0, 0.0))
    return sched.ramp(config.stagger, config.tau_melt, config.ramp_shape)


def _apply_columns(Y: np.ndarray, basis, sched: Schedule, spec: LatticeSpec,
                   dt_max) -> np.ndarray:
    """Propagate many columns, switching to a full propagator when that is cheaper."""
    if sched.duration <= 0:
        return Y
    if Y.shape[1] > basis.dim:
        return propagator(basis, sched, spec, dt_max, include_lattice_phase=False) @ Y
    return propagate_block(Y, basis, sched, spec, dt_max, include_lattice_phase=False)


def _hold_static(y: np.ndarray, basis, config: RamseyConfig, T: np.ndarray) -> np.ndarray:
    w, v = _static_eigh(basis, config.lattice, config.target)
    c = v.conj().T @ y
    return v @ (np.exp(-1j * TWO_PI * np.outer(w, T)) * c[:, None])


def _mod_key(x: float) -> float:
    return round(x, 9)


def _hold_floquet(y: np.ndarray, basis, config: RamseyConfig, T: np.ndarray,
                  t0: float) -> tuple[np.ndarray, np.ndarray]:
    """Hold under periodic drive: one-period propagator powers times a remainder.

    Returns the held columns and, per column, the remainder within a period
    (which fixes the drive phase at the end of the hold).
    """
    spec, mod = config.lattice, config.modulation
    period = 1.0 / mod.nu_sb
    phase0 = TWO_PI * mod.nu_sb * t0
    m0 = replace(mod, phase=phase0)
    target = config.target
    dt = config.dt_max if config.dt_max is not None else DT_MODULATION
    UF = propagator(basis, Schedule(target).hold(period, m0), spec, dt,
                    include_lattice_phase=False)
    m = np.floor(T / period + 1e-9).astype(int)
    r = np.clip(T - m * period, 0.0, None)
    keys = np.array([_mod_key(x) for x in r])
    rem = {}
    for k in np.unique(keys):
        if k <= 0:
            rem[k] = None
        else:
            rem[k] = propagator(basis, Schedule(target).hold(float(k), m0), spec, dt,
                                include_lattice_phase=False)
    out = np.zeros((basis.dim, len(T)), dtype=complex)
    cur = y.copy()
    done = 0
    for j in np.argsort(m, kind="stable"):
        while done < m[j]:
            cur = UF @ cur
            done += 1
        Ur = rem[keys[j]]
        out[:, j] = cur if Ur is None else Ur @ cur
    return out, keys


def _evolve_blocks(config: RamseyConfig, psi0: StateVector) -> tuple[dict, float]:
    """Block states (dim x nT) at the end of the sequence, before the readout pulse."""
    spec = config.lattice
    T = np.asarray(config.hold_times)
    pre = _pre_hold(config)
    t_pre = pre.duration
    out = {}
    for N, y in psi0.blocks.items():
        basis = psi0.basis(N)
        y = propagate_block(y, basis, pre, spec, config.dt_max, include_lattice_phase=False)
        if config.modulation is None:
            Y = _hold_static(y, basis, config, T)
            Y = _apply_columns(Y, basis, _post_hold(config, None), spec, config.dt_max)
        else:
            Y, keys = _hold_floquet(y, basis, config, T, t_pre)
            for k in np.unique(keys):
                cols = keys == k
                mod = replace(config.modulation,
                              phase=TWO_PI * config.modulation.nu_sb * (t_pre + k))
                post = _post_hold(config, mod)
                Y[:, cols] = _apply_columns(Y[:, cols], basis, post, spec, config.dt_max)
        # omega_lat * N as an exact phase over the full sequence
        t_total = 2 * t_pre + T
        if spec.omega_lat != 0.0:
            Y = Y * np.exp(-1j * TWO_PI * spec.omega_lat * N * t_total)[None, :]
        out[N] = Y
    return out, t_pre


def _readout(blocks: dict, config: RamseyConfig, phi: np.ndarray) -> np.ndarray:
    spec = config.lattice
    a = config.control_transition
    fin = _rotate(blocks, spec.V, spec.n_max, config.control_site, a, np.pi / 2, phi)
    pop = np.zeros(len(phi))
    for N, Y in fin.items():
        sel = enumerate_basis(N, spec.V, spec.n_max).states[:, config.control_site] == a + 1
        pop += np.sum(np.abs(Y[sel]) ** 2, axis=0)
    return pop


def run_manybody_ramsey(config: RamseyConfig) -> RamseyTrace:
    """Population of the control's upper level after the closing pi/2 pulse, per hold time."""
    config.validate()
    psi0 = prepare(config)
    blocks, t_pre = _evolve_blocks(config, psi0)
    T = np.asarray(config.hold_times)
    t_total = 2 * t_pre + T
    # demodulate at the drive frequency and add the virtual phase ramp
    phi = -TWO_PI * (config.demod_freq * t_total + config.virtual_freq * T)
    pop = _readout(blocks, config, phi)
    if config.dephasing_T2 is not None:
        inc = 0.5 * (pop + _readout(blocks, config, phi + np.pi))
        pop = inc + (pop - inc) * np.exp(-T / config.dephasing_T2)
    pop = np.clip(pop, 0.0, 1.0)
    sem = None
    if config.shots:
        rng = np.random.default_rng(config.seed)
        pop = rng.binomial(config.shots, pop) / config.shots
        sem = np.sqrt(pop * (1 - pop) / config.shots)
    return RamseyTrace(T, pop, sem, config.virtual_freq, config.demod_freq)


def run_volume_ramsey(config: RamseyConfig) -> RamseyTrace:
    if config.mode != "volume":
        raise ProtocolError("run_volume_ramsey needs mode='volume'")
    return run_manybody_ramsey(config)


def round_trip_fidelity(spec: LatticeSpec, N: int, tau: float = 1.0,
                        stagger: Sequence[float] | None = None, dt_max=None) -> float:
    """Melt then immediately un-melt an assembled N-particle state."""
    st = assembly_detunings(spec.V) if stagger is None else np.asarray(stagger)
    occ = np.zeros(spec.V, dtype=int)
    occ[site_order(st)[:N]] = 1
    psi = StateVector.from_occupations(occ, spec.n_max)
    sched = Schedule(st).ramp(np.zeros(spec.V), tau).ramp(st, tau)
    basis = psi.basis(N)
    y = propagate_block(psi.blocks[N], basis, sched, spec, dt_max)
    return float(abs(np.vdot(psi.blocks[N], y)) ** 2)


def melt(spec: LatticeSpec, psi: StateVector, stagger: Sequence[float], tau: float,
         target: Sequence[float] | None = None, shape: str = "cosine",
         dt_max=None) -> StateVector:
    tgt = np.zeros(spec.V) if target is None else target
    sched = Schedule(stagger).ramp(tgt, tau, shape)
    return StateVector(psi.V, psi.n_max, {
        N: propagate_block(v, psi.basis(N), sched, spec, dt_max, include_lattice_phase=False)
        for N, v in psi.blocks.items()})


def melted_density(spec: LatticeSpec, N: int, tau: float = 1.0, superpose: bool = False,
                   dt_max=None) -> np.ndarray:
    """Site occupations after assembling N particles and melting over ``tau``.

    With ``superpose`` the next site gets a pi/2 pulse instead, giving an equal
    superposition of the N and N+1 particle states.
    """
    cfg = number_superposition_config(spec, N, tau)
    pulses = cfg.prep_pulses if superpose else cfg.prep_pulses[:N]
    psi = StateVector.vacuum(spec.V, spec.n_max)
    for p in pulses:
        psi = apply_pulse(psi, p, cfg.stagger, spec)
    return density_profile(melt(spec, psi, cfg.stagger, tau, dt_max=dt_max))


# -- measuring thermodynamic quantities ----------------------------------------

def measure_mu(N: int, V: int, spec: LatticeSpec, tau: float = 1.0,
               prominence_sigma: float = 6.0, **kw) -> tuple[float, float | None]:
    from .spectro import fft_spectrum, find_dominant_peak, untranslate

    cfg = number_superposition_config(spec.subchain(0, V), N, tau, **kw)
    trace = run_manybody_ramsey(cfg)
    f = find_dominant_peak(fft_spectrum(trace), prominence_sigma=prominence_sigma,
                           fallback=True)
    return untranslate(f, cfg.virtual_freq), None


def measure_pressure(N: int, V: int, spec: LatticeSpec, tau: float = 1.0,
                     compensate: bool = True, prominence_sigma: float = 6.0,
                     **kw) -> tuple[float, float | None]:
    """Pressure from a volume superposition: minus the demodulated fringe energy."""
    from .spectro import fft_spectrum, find_dominant_peak, untranslate

    cfg = volume_superposition_config(spec.subchain(0, V + 1), N, tau, compensate, **kw)
    trace = run_volume_ramsey(cfg)
    f = find_dominant_peak(fft_spectrum(trace), prominence_sigma=prominence_sigma,
                           fallback=True)
    return -untranslate(f, cfg.virtual_freq), None


# -- exact-diagonalization references ------------------------------------------

def _projected_top(spec: LatticeSpec, N: int, detunings, mask_fn) -> tuple[float, np.ndarray]:
    """Top eigenpair of the full sector whose vector best overlaps the top state
    of H projected onto the subspace selected by ``mask_fn(states)``."""
    basis = enumerate_basis(N, spec.V, spec.n_max)
    H = sector_operators(basis, spec).dense(detunings, spec.omega_lat)
    sel = mask_fn(basis.states)
    sub = H[np.ix_(sel, sel)]
    _, vs = np.linalg.eigh(sub)
    ref = np.zeros(basis.dim)
    ref[sel] = vs[:, -1]
    w, v = np.linalg.eigh(H)
    k = int(np.argmax(np.abs(v.T @ ref)))
    return float(w[k]), v[:, k]


def volume_ed_pressure(spec: LatticeSpec, N: int, compensate: bool = False) -> float:
    """Pressure the volume interferometer should read, from ED of the full chain.

    ``spec`` has V+1 sites, the last being the U-detuned control.  The fluid
    bond onto the occupied control carries the Bose factor sqrt(2)
    automatically; ``compensate`` divides that bond by sqrt(2), which is
    what the Floquet drive does to first order.
    """
    edge = spec.V - 1
    U_edge = spec.U_sites[edge]
    d = np.zeros(spec.V)
    d[edge] = -U_edge
    lat = spec.with_bond(edge - 1, spec.J_bonds[edge - 1] / np.sqrt(2)) if compensate else spec
    e_small, _ = _projected_top(lat, N, d, lambda s: s[:, edge] == 0)
    e_big, _ = _projected_top(lat, N + 1, d, lambda s: s[:, edge] >= 1)
    demod = spec.omega_lat - U_edge
    return -(e_big - e_small - demod)


def top_target_energies(spec: LatticeSpec, N: int,
                        detunings: Sequence[float] | None = None) -> tuple[float, float]:
    """Top eigenvalues of sectors N and N+1 (ED reference for a number fringe)."""
    d = np.zeros(spec.V) if detunings is None else detunings
    lo = instantaneous_eigensystem(spec, d, enumerate_basis(N, spec.V, spec.n_max))
    hi = instantaneous_eigensystem(spec, d, enumerate_basis(N + 1, spec.V, spec.n_max))
    return float(lo.eigenvalues[-1]), float(hi.eigenvalues[-1])


# -- two-site beamsplitter and correlator --------------------------------------

def beamsplitter_prep(psi: StateVector, site_a: int, site_b: int, spec: LatticeSpec,
                      detunings: Sequence[float], duration: float | None = None) -> StateVector:
    """pi-pulse site_a, bring it onto site_b's frequency for 1/(8|J|), jump back."""
    if abs(site_a - site_b) != 1:
        raise ProtocolError("beamsplitter needs nearest neighbours")
    for s in (site_a, site_b):
        if abs(level_population(psi, s, 0) - 1.0) > 1e-9:
            raise ProtocolError(f"site {s} must start empty")
    J = abs(spec.J_bonds[min(site_a, site_b)])
    t = 1.0 / (8.0 * J) if duration is None else duration
    psi = apply_pulse(psi, PulseEvent(site_a), detunings, spec)
    res = list(np.asarray(detunings, dtype=float))
    res[site_a] = res[site_b]
    sched = Schedule(detunings).jump(res).hold(t).jump(detunings)
    return StateVector(psi.V, psi.n_max, {
        N: propagate_block(v, psi.basis(N), sched, spec, include_lattice_phase=False)
        for N, v in psi.blocks.items()})


def _xx_terms(N: int, V: int, n_max: int, a: int, b: int):
    basis = enumerate_basis(N, V, n_max)
    st = basis.states
    rows = np.nonzero((st[:, a] <= 1) & (st[:, b] <= 1))[0]
    terms = {}
    for r in rows:
        s = st[r].copy()
        s[a] = 1 - s[a]
        s[b] = 1 - s[b]
        M = int(s.sum())
        try:
            j = enumerate_basis(M, V, n_max).index_of(s)
        except ValueError:
            continue
        terms.setdefault(M, ([], []))
        terms[M][0].append(r)
        terms[M][1].append(j)
    return terms


def xx_correlator(blocks, V: int | None = None, n_max: int = DEFAULT_NMAX,
                  site_a: int = 0, site_b: int = 1) -> np.ndarray:
    """<X_a X_b> on the {0,1} levels; ``blocks`` is a StateVector or N -> (dim[, nT])."""
    if isinstance(blocks, StateVector):
        V, n_max, blocks = blocks.V, blocks.n_max, blocks.blocks
    total = 0.0
    for N, Y in blocks.items():
        for M, (rows, cols) in _xx_terms(N, V, n_max, site_a, site_b).items():
            if M in blocks:
                total = total + np.sum(np.conj(blocks[M][cols]) * Y[rows], axis=0)
    return np.real(total)


def run_same_manifold(spec: LatticeSpec, stagger: Sequence[float] | None = None,
                      site_a: int = 4, site_b: int = 5, tau: float = 1.0,
                      hold_times: Sequence[float] | None = None,
                      dt_max=None) -> CorrelatorTrace:
    """Beamsplitter superposition of two one-particle states, melted and read as <XX>.

    The pair must sit well above every other site so that the two staggered
    levels connect to the top two fluid levels without crossing others.
    """
    if stagger is None:
        stagger = SAME_MANIFOLD_STAGGER
    T = default_hold_times(2.0, 0.004) if hold_times is None else np.asarray(hold_times)
    psi = StateVector.vacuum(spec.V, spec.n_max)
    psi = beamsplitter_prep(psi, site_a, site_b, spec, stagger)
    cfg = RamseyConfig(spec, site_a, (PulseEvent(site_a),), tuple(stagger), tau,
                       tuple(T), virtual_freq=0.0, dt_max=dt_max)
    blocks, _ = _evolve_blocks(cfg, psi)
    return CorrelatorTrace(T, xx_correlator(blocks, spec.V, spec.n_max, site_a, site_b))
