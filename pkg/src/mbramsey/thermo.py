"""Thermodynamic observables: free-fermion analytics and extraction from ED or Ramsey.

Reported values follow the plotting convention of the interferometer: they
are energy differences of the highest-energy eigenstates of the physical
(attractive, J < 0) model with the lattice frequency removed.  With J = -9
MHz these coincide with the free-fermion formulas evaluated at that J, e.g.
mu -> -2J cos(pi rho) = +18 MHz as rho -> 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .fock import SectorError, enumerate_basis
from .hamiltonian import DEFAULT_J, LatticeSpec, build_hamiltonian

FORMS = ("discrete", "continuum", "limit")
SOURCES = ("ramsey", "ed", "analytic")
DENSE_LIMIT = 1500


class ThermoError(ValueError):
    pass


@dataclass(frozen=True)
class ThermoPoint:
    N: int
    V: int
    rho: float
    value: float
    source: str
    sem: float | None = None
    observable: str = "mu"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ThermoError(f"unknown source {self.source!r}")

    def to_row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FermionModel:
    """Spinless fermions hopping with amplitude J on an open chain of V sites."""

    V: int
    J: float = DEFAULT_J

    def __post_init__(self):
        if self.V < 1:
            raise ThermoError("V must be >= 1")

    def resized(self, V: int) -> "FermionModel":
        return replace(self, V=V)


def mu_density(N: int, V: int) -> float:
    return (N + 0.5) / V


def pressure_density(N: int, V: int) -> float:
    return N / (V + 0.5)


# -- free-fermion analytics --------------------------------------------------

def ff_orbital(k: int, model: FermionModel) -> float:
    if not 1 <= k <= model.V:
        raise ThermoError(f"orbital index {k} outside 1..{model.V}")
    return 2.0 * model.J * np.cos(np.pi * k / (model.V + 1))


def ff_ground_energy(N: int, model: FermionModel) -> float:
    """Energy of N fermions filling the band from the top of the physical spectrum.

    Explicit orbital sum; equals minus the ground energy of the sign-flipped
    (repulsive) model.
    """
    if not 0 <= N <= model.V:
        raise ThermoError(f"N={N} outside 0..{model.V}")
    k = np.arange(1, N + 1)
    return float(np.sum(-2.0 * model.J * np.cos(np.pi * k / (model.V + 1))))


def ff_ground_energy_closed(N: float, model: FermionModel) -> float:
    """Printed closed form of the orbital sum.

    It differs from :func:`ff_ground_energy` by the N-independent constant
    -J/2, so derivatives agree but absolute energies do not.
    """
    a = 0.5 * np.pi / (model.V + 1)
    return float(-model.J * (np.sin(np.pi * (N + 0.5) / (model.V + 1)) / np.sin(a) - 0.5))


def _check_form(form: str):
    if form not in FORMS:
        raise ThermoError(f"unknown form {form!r}; expected one of {FORMS}")


def ff_mu(N: int, model: FermionModel, form: str = "discrete") -> float:
    _check_form(form)
    V, J = model.V, model.J
    if not 0 <= N < V:
        raise ThermoError(f"chemical potential needs 0 <= N < V, got N={N}, V={V}")
    if form == "discrete":
        return -2.0 * J * np.cos(np.pi * (N + 1) / (V + 1))
    if form == "continuum":
        # dE/dN of the closed form, taken at the midpoint N + 1/2
        a = 0.5 * np.pi / (V + 1)
        return float(-J * np.pi / (V + 1) / np.sin(a) * np.cos(np.pi * (N + 1) / (V + 1)))
    return float(-2.0 * J * np.cos(np.pi * mu_density(N, V)))


def _pressure_continuum(N: float, V: float, J: float) -> float:
    a = 0.5 * np.pi / (V + 1)
    b = np.pi * (N + 0.5) / (V + 1)
    pref = J * 0.5 * np.pi / (V + 1) ** 2 / np.sin(a)
    return float(pref * (np.sin(b) / np.tan(a) - (2 * N + 1) * np.cos(b)))


def ff_pressure(N: int, model: FermionModel, form: str = "discrete") -> float:
    _check_form(form)
    V, J = model.V, model.J
    if not 0 <= N <= V:
        raise ThermoError(f"pressure needs 0 <= N <= V, got N={N}, V={V}")
    if N == 0:
        return 0.0
    if form == "discrete":
        return ff_ground_energy(N, model) - ff_ground_energy(N, model.resized(V + 1))
    if form == "continuum":
        return _pressure_continuum(N, V + 0.5, J)
    rho = pressure_density(N, V)
    return float(2.0 * J * (np.sin(np.pi * rho) / np.pi - rho * np.cos(np.pi * rho)))


def ff_mu_limit(rho, J: float = DEFAULT_J):
    return -2.0 * J * np.cos(np.pi * np.asarray(rho))


def ff_pressure_limit(rho, J: float = DEFAULT_J):
    rho = np.asarray(rho)
    return 2.0 * J * (np.sin(np.pi * rho) / np.pi - rho * np.cos(np.pi * rho))


def ff_density_profile(N: int, model: FermionModel) -> np.ndarray:
    V = model.V
    if not 0 <= N <= V:
        raise ThermoError(f"N={N} outside 0..{V}")
    i = np.arange(1, V + 1)
    k = np.arange(1, N + 1)
    phi = np.sqrt(2.0 / (V + 1)) * np.sin(np.pi * np.outer(k, i) / (V + 1))
    return np.sum(phi ** 2, axis=0)


# -- exact diagonalization ---------------------------------------------------

def top_energy(spec: LatticeSpec, N: int, detunings: Sequence[float] | None = None) -> float:
    """Highest eigenvalue of the N-particle sector (includes omega_lat * N)."""
    basis = enumerate_basis(N, spec.V, spec.n_max)
    H = build_hamiltonian(basis, spec, detunings)
    if basis.dim <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(H.toarray())[-1])
    w = spla.eigsh(H, k=1, which="LA", return_eigenvectors=False, tol=1e-12)
    return float(w[0])


def ground_energy(spec: LatticeSpec, N: int) -> float:
    basis = enumerate_basis(N, spec.V, spec.n_max)
    H = build_hamiltonian(basis, spec)
    if basis.dim <= DENSE_LIMIT:
        return float(np.linalg.eigvalsh(H.toarray())[0])
    return float(spla.eigsh(H, k=1, which="SA", return_eigenvectors=False, tol=1e-12)[0])


def _lattice(spec: LatticeSpec | None, V: int) -> LatticeSpec:
    if spec is None:
        return LatticeSpec.uniform(V)
    if V > spec.V:
        raise ThermoError(f"V={V} exceeds lattice size {spec.V}")
    return spec.subchain(0, V)


def ed_mu(N: int, V: int, spec: LatticeSpec | None = None) -> float:
    lat = _lattice(spec, V)
    return top_energy(lat, N + 1) - top_energy(lat, N) - lat.omega_lat


def ed_pressure(N: int, V: int, spec: LatticeSpec | None = None) -> float:
    """E_{N,V} - E_{N,V+1} from the top states of V and V+1 site chains."""
    big = _lattice(spec, V + 1)
    small = big.subchain(0, V)
    return top_energy(small, N) - top_energy(big, N)


def extract_mu(N: int, V: int, source: str = "ed", spec: LatticeSpec | None = None,
               runner: Callable | None = None, **kw) -> ThermoPoint:
    """Chemical potential E_{N+1,V} - E_{N,V} as a ThermoPoint.

    ``source="ramsey"`` runs the interferometer (or ``runner(N, V, spec, **kw)``
    returning ``(value, sem)``) and reads the dominant fringe frequency.
    """
    if not 0 <= N < V:
        raise ThermoError(f"chemical potential needs 0 <= N < V, got N={N}, V={V}")
    rho = mu_density(N, V)
    if source == "ed":
        return ThermoPoint(N, V, rho, ed_mu(N, V, spec), "ed")
    if source == "analytic":
        J = spec.J if spec is not None else DEFAULT_J
        return ThermoPoint(N, V, rho, ff_mu(N, FermionModel(V, J)), "analytic")
    if source == "ramsey":
        if runner is None:
            from .protocol import measure_mu
            runner = measure_mu
        value, sem = runner(N, V, _lattice(spec, V), **kw)
        return ThermoPoint(N, V, rho, value, "ramsey", sem)
    raise ThermoError(f"unknown source {source!r}")


def extract_pressure(N: int, V: int, source: str = "ed", spec: LatticeSpec | None = None,
                     runner: Callable | None = None, **kw) -> ThermoPoint:
    if V < 1 or not 0 <= N <= V:
        raise ThermoError(f"pressure needs V >= 1 and 0 <= N <= V, got N={N}, V={V}")
    rho = pressure_density(N, V)
    if source == "ed":
        return ThermoPoint(N, V, rho, ed_pressure(N, V, spec), "ed", observable="P")
    if source == "analytic":
        J = spec.J if spec is not None else DEFAULT_J
        return ThermoPoint(N, V, rho, ff_pressure(N, FermionModel(V, J)), "analytic",
                           observable="P")
    if source == "ramsey":
        if runner is None:
            from .protocol import measure_pressure
            runner = measure_pressure
        value, sem = runner(N, V, _lattice(spec, V + 1), **kw)
        return ThermoPoint(N, V, rho, value, "ramsey", sem, observable="P")
    raise ThermoError(f"unknown source {source!r}")


def compressibility(points: Iterable[ThermoPoint], V: int | None = None) -> list[ThermoPoint]:
    """Inverse compressibility by finite differences of mu (in N) or P (in V).

    mu-route:  V rho^2 (mu(N) - mu(N-1)),  rho = N/V
    P-route:  -V (P(N, V) - P(N, V-1)),    rho = N/V
    Both are labeled at the integer (N, V) between the two differenced points.
    """
    pts = list(points)
    if V is not None:
        pts = [p for p in pts if p.V == V or p.observable == "P"]
    kinds = {p.observable for p in pts}
    if len(kinds) > 1:
        raise ThermoError("mixed observables; pass only mu points or only P points")
    out = []
    if kinds == {"mu"}:
        by = {(p.N, p.V): p for p in pts}
        for (N, VV), p in sorted(by.items()):
            q = by.get((N - 1, VV))
            if q is None:
                continue
            rho = N / VV
            out.append(ThermoPoint(N, VV, rho, VV * rho ** 2 * (p.value - q.value),
                                   p.source, observable="kappa_inv"))
    elif kinds == {"P"}:
        by = {(p.N, p.V): p for p in pts}
        for (N, VV), p in sorted(by.items()):
            q = by.get((N, VV - 1))
            if q is None:
                continue
            out.append(ThermoPoint(N, VV, N / VV, -VV * (p.value - q.value), p.source,
                                   observable="kappa_inv"))
    if not out:
        raise ThermoError("insufficient adjacent points for a finite difference")
    return out


def mott_band_mu(N: int, V: int, spec: LatticeSpec | None = None) -> ThermoPoint:
    """mu = E_{N+1,V} - E_{N,V} for N >= V, i.e. adding doublons to a filled chain.

    Labeled with k = N - V + 1 doublons after the addition; N < V delegates
    to :func:`extract_mu`.
    """
    if N < V:
        return extract_mu(N, V, "ed", spec)
    lat = _lattice(spec, V)
    if lat.n_max < 2:
        raise SectorError("doublon band needs n_max >= 2")
    return ThermoPoint(N, V, mu_density(N, V), ed_mu(N, V, lat), "ed")


def mott_band_analytic(N: int, V: int, J: float = DEFAULT_J, U: float = -240.0) -> float:
    """Hardcore doublons hop with 2J on top of a filled chain; k = N - V doublons already present."""
    k = N - V
    if not 0 <= k < V:
        raise ThermoError(f"doublon band needs V <= N < 2V, got N={N}, V={V}")
    return U + ff_mu(k, FermionModel(V, 2.0 * J))


def mu_table(Vs: Iterable[int], source: str = "ed", spec: LatticeSpec | None = None,
             **kw) -> list[ThermoPoint]:
    return [extract_mu(N, V, source, spec, **kw) for V in Vs for N in range(V)]


def pressure_table(Vs: Iterable[int], source: str = "ed", spec: LatticeSpec | None = None,
                   **kw) -> list[ThermoPoint]:
    return [extract_pressure(N, V, source, spec, **kw) for V in Vs for N in range(V + 1)]
