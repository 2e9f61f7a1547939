"""Unitary evolution of block-diagonal (fixed-N) state vectors.

All time-dependence of H(t) lives on the diagonal (site detunings and
frequency modulation), while hopping plus on-site interaction is fixed
for a given lattice.  Driven segments are therefore integrated with
Suzuki's five-stage fourth-order composition of Strang splittings in
which both sub-flows are exact: the static flow through a cached
eigendecomposition, and the detuning flow by integrating the detunings
over the sub-step.
Every step is unitary to rounding error.  Static segments are propagated
exactly through the eigendecomposition of H.

The lattice frequency enters each sector as omega_lat * N times the
identity, so it is applied as an exact per-block phase instead of being
integrated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fock import DEFAULT_NMAX, SectorBasis, enumerate_basis
from .hamiltonian import LatticeSpec, Schedule, Segment, sector_operators

TWO_PI = 2.0 * np.pi
DT_DEFAULT = 1e-3      # µs
DT_MODULATION = 1e-4   # µs
MIN_STEPS = 16
NORM_TOLERANCE = 1e-6

_P = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
_SUZUKI = (_P, _P, 1.0 - 4.0 * _P, _P, _P)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)


class EvolutionError(RuntimeError):
    pass


@dataclass
class StateVector:
    """Amplitudes over a direct sum of particle-number sectors."""

    V: int
    n_max: int = DEFAULT_NMAX
    blocks: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_occupations(cls, occupations: Sequence[int], n_max: int = DEFAULT_NMAX,
                         amplitude: complex = 1.0) -> "StateVector":
        occ = tuple(int(x) for x in occupations)
        basis = enumerate_basis(sum(occ), len(occ), n_max)
        vec = np.zeros(basis.dim, dtype=complex)
        vec[basis.index_of(occ)] = amplitude
        return cls(len(occ), n_max, {basis.N: vec})

    @classmethod
    def vacuum(cls, V: int, n_max: int = DEFAULT_NMAX) -> "StateVector":
        return cls.from_occupations((0,) * V, n_max)

    def basis(self, N: int) -> SectorBasis:
        return enumerate_basis(N, self.V, self.n_max)

    def copy(self) -> "StateVector":
        return StateVector(self.V, self.n_max, {N: v.copy() for N, v in self.blocks.items()})

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(v, v).real for v in self.blocks.values())))

    def weights(self) -> dict[int, float]:
        return {N: float(np.vdot(v, v).real) for N, v in sorted(self.blocks.items())}

    def block(self, N: int) -> np.ndarray:
        if N not in self.blocks:
            self.blocks[N] = np.zeros(self.basis(N).dim, dtype=complex)
        return self.blocks[N]

    def overlap(self, other: "StateVector") -> complex:
        """<self|other>."""
        return complex(sum(np.vdot(v, other.blocks[N]) for N, v in self.blocks.items()
                           if N in other.blocks))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def amplitude(self, occupations: Sequence[int]) -> complex:
        occ = tuple(int(x) for x in occupations)
        N = sum(occ)
        if N not in self.blocks:
            return 0.0j
        return complex(self.blocks[N][self.basis(N).index_of(occ)])


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: SectorBasis | None = None

    @property
    def top(self) -> np.ndarray:
        return self.eigenvectors[:, -1]


# -- exact pieces ----------------------------------------------------------------

@lru_cache(maxsize=256)
def _static_eigh(basis: SectorBasis, spec: LatticeSpec, detunings: tuple) -> tuple:
    H = sector_operators(basis, spec).dense(detunings)
    w, v = np.linalg.eigh(H)
    return w, v


@lru_cache(maxsize=128)
def _free_eigh(basis: SectorBasis, spec: LatticeSpec) -> tuple:
    ops = sector_operators(basis, spec)
    H0 = ops.hopping.toarray()
    H0[np.diag_indices_from(H0)] += ops.interaction
    w, v = np.linalg.eigh(H0)
    return w, v


def instantaneous_eigensystem(spec: LatticeSpec, detunings: Sequence[float],
                              basis: SectorBasis) -> EigenDecomposition:
    """Dense eigendecomposition of H (ascending, includes omega_lat * N)."""
    w, v = _static_eigh(basis, spec, tuple(float(x) for x in detunings))
    return EigenDecomposition(w + spec.omega_lat * basis.N, v, basis)


def eigenpopulations(psi: StateVector | np.ndarray, eig: EigenDecomposition) -> np.ndarray:
    if isinstance(psi, StateVector):
        if eig.basis is None:
            raise ValueError("eigendecomposition carries no basis to select a block")
        vec = psi.blocks.get(eig.basis.N)
        if vec is None:
            return np.zeros(len(eig.eigenvalues))
    else:
        vec = np.asarray(psi)
    if vec.shape[0] != eig.eigenvectors.shape[0]:
        raise ValueError("state and eigenbasis dimensions differ")
    return np.abs(eig.eigenvectors.conj().T @ vec) ** 2


# -- propagation -----------------------------------------------------------------

def _segment_steps(seg: Segment, dt_max: float | None) -> int:
    dt = dt_max if dt_max is not None else (
        DT_MODULATION if seg.modulation is not None else DT_DEFAULT)
    return max(MIN_STEPS, int(np.ceil(seg.duration / dt - 1e-9)))


def _integrated_detunings(seg: Segment, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integral of the detuning vector over each interval [a_k, b_k]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
    d = seg.detuning(nodes.ravel()).reshape(len(a), len(_GL_X), -1)
    return half[:, None] * np.einsum("q,kqv->kv", _GL_W, d)


def _split_segment(Y: np.ndarray, seg: Segment, basis: SectorBasis, spec: LatticeSpec,
                   n_steps: int, chunk: int = 128) -> np.ndarray:
    ops = sector_operators(basis, spec)
    kw, kv = _free_eigh(basis, spec)
    h = seg.duration / n_steps
    subs = tuple(c * h for c in _SUZUKI)
    kicks = [np.exp(-1j * TWO_PI * kw * s)[:, None] for s in subs]
    # detuning-flow interval boundaries within one step, relative to step start
    c = np.cumsum((0.0,) + subs)
    rel = np.concatenate(([0.0], c[:-1] + 0.5 * np.array(subs), [c[-1]]))
    n_sub = len(subs)
    for start in range(0, n_steps, chunk):
        steps = np.arange(start, min(start + chunk, n_steps))
        t0 = seg.t_start + steps * h
        bounds = t0[:, None] + rel[None, :]
        a = bounds[:, :-1].ravel()
        b = bounds[:, 1:].ravel()
        integ = _integrated_detunings(seg, a, b)
        phase = np.exp(-1j * TWO_PI * (integ @ ops.occ.T))
        phase = phase.reshape(len(steps), n_sub + 1, -1)
        for k in range(len(steps)):
            p = phase[k]
            Y = p[0][:, None] * Y
            for j in range(n_sub):
                Y = kv @ (kicks[j] * (kv.T @ Y))
                Y = p[j + 1][:, None] * Y
    return Y


def _static_segment(Y: np.ndarray, seg: Segment, basis: SectorBasis,
                    spec: LatticeSpec) -> np.ndarray:
    w, v = _static_eigh(basis, spec, seg.start)
    phase = np.exp(-1j * TWO_PI * w * seg.duration)[:, None]
    return v @ (phase * (v.conj().T @ Y))


def propagate_block(Y: np.ndarray, basis: SectorBasis, schedule: Schedule,
                    spec: LatticeSpec, dt_max: float | None = None,
                    include_lattice_phase: bool = True) -> np.ndarray:
    """Apply the time-ordered propagator of ``schedule`` to the column(s) of ``Y``."""
    if dt_max is not None and dt_max <= 0:
        raise ValueError("dt_max must be positive")
    Y = np.array(Y, dtype=complex)
    vector = Y.ndim == 1
    if vector:
        Y = Y[:, None]
    norms = np.linalg.norm(Y, axis=0)
    for i, seg in enumerate(schedule.segments):
        if seg.duration <= 0:
            continue
        if seg.is_static:
            Y = _static_segment(Y, seg, basis, spec)
        else:
            Y = _split_segment(Y, seg, basis, spec, _segment_steps(seg, dt_max))
        drift = np.max(np.abs(np.linalg.norm(Y, axis=0) - norms), initial=0.0)
        if drift > NORM_TOLERANCE:
            raise EvolutionError(
                f"norm drift {drift:.3e} in segment {i} ({seg.kind}, "
                f"t={seg.t_start:.6g}..{seg.t_end:.6g} µs)")
    if include_lattice_phase and spec.omega_lat != 0.0:
        Y *= np.exp(-1j * TWO_PI * spec.omega_lat * basis.N * schedule.duration)
    return Y[:, 0] if vector else Y


def propagator(basis: SectorBasis, schedule: Schedule, spec: LatticeSpec,
               dt_max: float | None = None, include_lattice_phase: bool = True) -> np.ndarray:
    return propagate_block(np.eye(basis.dim, dtype=complex), basis, schedule, spec,
                           dt_max, include_lattice_phase)


def evolve(psi: StateVector, schedule: Schedule, spec: LatticeSpec,
           dt_max: float | None = None) -> StateVector:
    """Evolve every particle-number block of ``psi`` through ``schedule``."""
    if psi.V != spec.V:
        raise ValueError(f"state has V={psi.V}, lattice has V={spec.V}")
    if len(schedule.initial) != spec.V:
        raise ValueError("schedule detunings do not match the lattice size")
    out = StateVector(psi.V, psi.n_max)
    for N, vec in psi.blocks.items():
        out.blocks[N] = propagate_block(vec, psi.basis(N), schedule, spec, dt_max)
    return out


def expectation_energy(psi: StateVector, spec: LatticeSpec,
                       detunings: Sequence[float]) -> float:
    total = 0.0
    for N, vec in psi.blocks.items():
        H = sector_operators(psi.basis(N), spec).dense(detunings, spec.omega_lat)
        total += float(np.vdot(vec, H @ vec).real)
    return total


def apply_blocks(psi: StateVector, fn) -> StateVector:
    """Return a new state with ``fn(N, vec)`` applied to each block."""
    return StateVector(psi.V, psi.n_max, {N: fn(N, v) for N, v in psi.blocks.items()})


def top_state(spec: LatticeSpec, N: int, detunings: Sequence[float] | None = None) -> StateVector:
    """Highest-energy eigenstate of the N-particle sector as a StateVector."""
    basis = enumerate_basis(N, spec.V, spec.n_max)
    d = np.zeros(spec.V) if detunings is None else detunings
    eig = instantaneous_eigensystem(spec, d, basis)
    vec = eig.top.astype(complex)
    # fix the sign so the largest component is real positive
    k = int(np.argmax(np.abs(vec)))
    vec *= np.exp(-1j * np.angle(vec[k]))
    return StateVector(spec.V, spec.n_max, {N: vec})
