import numpy as np
import pytest

from mbramsey.dynamics import (
    StateVector,
    eigenpopulations,
    evolve,
    expectation_energy,
    instantaneous_eigensystem,
    propagate_block,
)
from mbramsey.fock import enumerate_basis
from mbramsey.hamiltonian import LatticeSpec, Schedule
from mbramsey.protocol import assembly_detunings

LAT7 = LatticeSpec.uniform(7)


def test_zero_duration_is_identity():
    psi = StateVector.from_occupations((0, 1, 0, 1))
    out = evolve(psi, Schedule((5.0, 0.0, 0.0, 0.0)), LatticeSpec.uniform(4))
    assert np.array_equal(out.blocks[2], psi.blocks[2])


def test_static_eigenstate_only_picks_up_phase():
    spec = LatticeSpec.uniform(5, omega_lat=5000.0)
    b = enumerate_basis(2, 5)
    eig = instantaneous_eigensystem(spec, np.zeros(5), b)
    psi = StateVector(5, 3, {2: eig.eigenvectors[:, -1].astype(complex)})
    T = 0.37
    out = evolve(psi, Schedule((0.0,) * 5).hold(T), spec)
    expected = np.exp(-2j * np.pi * eig.eigenvalues[-1] * T) * psi.blocks[2]
    assert np.allclose(out.blocks[2], expected, atol=1e-10)


def test_two_site_rabi_oscillation():
    spec = LatticeSpec.uniform(2)
    psi = StateVector.from_occupations((1, 0))
    for T in np.linspace(0, 0.1, 11):
        out = evolve(psi, Schedule((0.0, 0.0)).hold(T), spec)
        assert abs(out.amplitude((1, 0))) ** 2 == pytest.approx(np.cos(2 * np.pi * 9 * T) ** 2)
    full = evolve(psi, Schedule((0.0, 0.0)).hold(1 / 36), spec)
    assert abs(full.amplitude((0, 1))) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_resonant_single_particle_spectrum():
    e2 = instantaneous_eigensystem(LatticeSpec.uniform(2), (0, 0), enumerate_basis(1, 2))
    assert np.allclose(e2.eigenvalues, [-9, 9])
    e7 = instantaneous_eigensystem(LAT7, np.zeros(7), enumerate_basis(1, 7))
    k = np.arange(1, 8)
    assert np.allclose(e7.eigenvalues, np.sort(-18 * np.cos(np.pi * k / 8)))


def test_large_stagger_localizes():
    st = assembly_detunings(7)
    eig = instantaneous_eigensystem(LAT7, st, enumerate_basis(1, 7))
    w = np.abs(eig.eigenvectors) ** 2
    second = np.sort(w, axis=0)[-2]
    bound = (9.0 / np.min(np.abs(np.diff(st)))) ** 2
    assert second.max() < bound
    assert second.max() < 0.005


def test_eigenpopulations():
    b = enumerate_basis(1, 4)
    eig = instantaneous_eigensystem(LatticeSpec.uniform(4), np.zeros(4), b)
    p = eigenpopulations(eig.eigenvectors[:, 2], eig)
    assert np.allclose(p, [0, 0, 1, 0])
    sup = (eig.eigenvectors[:, 0] + 1j * eig.eigenvectors[:, 3]) / np.sqrt(2)
    assert np.allclose(eigenpopulations(sup, eig), [0.5, 0, 0, 0.5])


def test_adiabatic_melt_reaches_top_state():
    st = assembly_detunings(7)
    psi = StateVector.from_occupations((0, 0, 0, 0, 0, 1, 0))
    out = evolve(psi, Schedule(st).ramp(np.zeros(7), 1.0), LAT7)
    eig = instantaneous_eigensystem(LAT7, np.zeros(7), enumerate_basis(1, 7))
    assert eigenpopulations(out, eig)[-1] > 0.99


def test_norm_drift_per_microsecond():
    st = assembly_detunings(7)
    psi = StateVector.from_occupations((0, 0, 0, 1, 0, 1, 0))
    sched = Schedule(st).ramp(np.zeros(7), 1.0).hold(0.5).ramp(st, 1.0)
    out = evolve(psi, sched, LAT7)
    assert abs(out.norm() - 1.0) / sched.duration < 1e-9


def test_energy_conserved_on_hold():
    psi = StateVector.from_occupations((0, 1, 0, 1, 0, 0, 0))
    det = np.linspace(-20, 20, 7)
    e0 = expectation_energy(psi, LAT7, det)
    out = evolve(psi, Schedule(det).hold(1.0), LAT7)
    assert abs(expectation_energy(out, LAT7, det) - e0) < 1e-6 * 9


@pytest.mark.parametrize("static", [True, False])
def test_time_reversal(static):
    st = assembly_detunings(7)
    sched = Schedule(st).hold(0.8) if static else Schedule(st).ramp(np.zeros(7), 0.5)
    b = enumerate_basis(2, 7)
    y0 = np.zeros(b.dim, complex)
    y0[b.index_of((0, 0, 0, 1, 0, 1, 0))] = 1
    y1 = propagate_block(y0, b, sched, LAT7)
    back = np.conj(propagate_block(np.conj(y1), b, sched.reversed(), LAT7))
    assert abs(np.vdot(y0, back)) ** 2 > 1 - 1e-8


def test_integrator_fourth_order():
    st = assembly_detunings(7)
    b = enumerate_basis(2, 7)
    y0 = np.zeros(b.dim, complex)
    y0[b.index_of((0, 0, 0, 1, 0, 1, 0))] = 1
    sched = Schedule(st).ramp(np.zeros(7), 0.2)
    ref = propagate_block(y0, b, sched, LAT7, dt_max=6.25e-5)
    errs = [np.linalg.norm(propagate_block(y0, b, sched, LAT7, dt_max=d) - ref)
            for d in (1e-3, 5e-4, 2.5e-4)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) < 0.5)


def test_bad_step():
    with pytest.raises(ValueError):
        propagate_block(np.ones(1), enumerate_basis(1, 1), Schedule((0.0,)).hold(1),
                        LatticeSpec.uniform(1), dt_max=0)
