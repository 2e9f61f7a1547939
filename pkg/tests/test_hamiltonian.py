import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbramsey.fock import enumerate_basis
from mbramsey.hamiltonian import (
    PRESETS,
    LatticeError,
    LatticeSpec,
    ModulationSpec,
    Schedule,
    bessel_argument_for,
    build_hamiltonian,
    compensating_modulation,
    dc_offset,
    effective_tunneling,
    preset,
    ramp_fraction,
    stagger_pattern,
)
from mbramsey.thermo import FermionModel, ff_ground_energy


def test_two_site_single_particle():
    H = build_hamiltonian(enumerate_basis(1, 2, 3), LatticeSpec.uniform(2)).toarray()
    assert np.array_equal(H, [[0, -9], [-9, 0]])
    assert np.allclose(np.linalg.eigvalsh(H), [-9, 9])


def test_doublon_energy():
    H = build_hamiltonian(enumerate_basis(2, 1, 2), LatticeSpec.uniform(1, n_max=2))
    assert H.toarray().tolist() == [[-240.0]]


def test_bose_enhanced_hop():
    b = enumerate_basis(2, 2, 2)
    H = build_hamiltonian(b, LatticeSpec.uniform(2, n_max=2)).toarray()
    assert H[b.index_of((1, 1)), b.index_of((2, 0))] == pytest.approx(-9 * np.sqrt(2))


def test_lattice_frequency_and_detunings_on_diagonal():
    spec = LatticeSpec.uniform(3, omega_lat=5000.0)
    b = enumerate_basis(2, 3, 3)
    H = build_hamiltonian(b, spec, [10.0, 0.0, -5.0]).toarray()
    i = b.index_of((1, 0, 1))
    assert H[i, i] == pytest.approx(10000 + 10 - 5)
    j = b.index_of((2, 0, 0))
    assert H[j, j] == pytest.approx(10000 + 20 - 240)


@settings(max_examples=40, deadline=None)
@given(V=st.integers(1, 6), N=st.integers(0, 4),
       det=st.lists(st.floats(-200, 200), min_size=6, max_size=6))
def test_hermitian_exactly(V, N, det):
    spec = LatticeSpec(V, tuple(np.linspace(-9, -10, V - 1)), tuple(np.linspace(-230, -240, V)))
    H = build_hamiltonian(enumerate_basis(min(N, 3 * V), V, 3), spec, det[:V])
    assert abs(H - H.getH()).max() == 0


def test_site_reversal_symmetry():
    spec = LatticeSpec.uniform(5)
    b = enumerate_basis(3, 5, 3)
    w = np.linalg.eigvalsh(build_hamiltonian(b, spec).toarray())
    perm = [b.index_of(s[::-1]) for s in b.states]
    H = build_hamiltonian(b, spec).toarray()
    assert np.allclose(np.linalg.eigvalsh(H[np.ix_(perm, perm)]), w)


def test_hardcore_limit_matches_fermions():
    J, U = -9.0, -9000.0
    for V, N in [(4, 2), (5, 3), (6, 2)]:
        spec = LatticeSpec.uniform(V, J, U, n_max=2)
        top = np.linalg.eigvalsh(build_hamiltonian(enumerate_basis(N, V, 2), spec).toarray())[-1]
        assert abs(top - ff_ground_energy(N, FermionModel(V, J))) < 0.1 * J ** 2 / abs(U)


def test_finite_u_correction_scales_as_j2_over_u():
    # the residual is the leading J^2/U correction: its coefficient converges
    J = -9.0
    for V, N, coeff in [(4, 1, 0.0), (4, 2, 2.0), (5, 3, 16 / 3)]:
        for U in (-9e4, -9e5):
            spec = LatticeSpec.uniform(V, J, U, n_max=2)
            b = enumerate_basis(N, V, 2)
            top = np.linalg.eigvalsh(build_hamiltonian(b, spec).toarray())[-1]
            resid = (top - ff_ground_energy(N, FermionModel(V, J))) / (J ** 2 / abs(U))
            assert resid == pytest.approx(coeff, abs=2e-3)


def test_dimension_mismatch():
    with pytest.raises(LatticeError):
        build_hamiltonian(enumerate_basis(1, 3, 3), LatticeSpec.uniform(3), [0.0, 0.0])
    with pytest.raises(LatticeError):
        LatticeSpec(3, (-9.0,), (-240.0,) * 3)


def test_stagger_pattern():
    assert np.array_equal(stagger_pattern(3, 0), [0, 0, 0])
    assert np.array_equal(stagger_pattern(2, 150, 1), [75, -75])
    for V in range(2, 9):
        assert np.allclose(np.abs(np.diff(stagger_pattern(V, 150, -1))), 150)
    with pytest.raises(LatticeError):
        stagger_pattern(3, -1)


def test_bessel_suppression():
    x = bessel_argument_for(1 / np.sqrt(2))
    assert x == pytest.approx(1.126, abs=1e-3)
    # bisection oracle on the series for J0
    lo, hi = 0.5, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        series = sum((-1) ** m * (mid / 2) ** (2 * m) / math.factorial(m) ** 2
                     for m in range(30))
        lo, hi = (mid, hi) if series > 1 / np.sqrt(2) else (lo, mid)
    assert x == pytest.approx(lo, abs=1e-9)
    mod = compensating_modulation(3)
    assert effective_tunneling(-9.0, mod) == pytest.approx(-9 / np.sqrt(2))
    assert effective_tunneling(-9.0, ModulationSpec(0, 0.0)) == -9.0
    assert abs(effective_tunneling(-9.0, ModulationSpec(0, 2 * 100 * 2.4048, 100))) < 1e-3


def test_dc_offset():
    assert dc_offset(0, 5) == 0
    assert dc_offset(3, 0) == 0
    assert dc_offset(2, 3) == 3


def test_modulation_validation():
    with pytest.raises(LatticeError):
        ModulationSpec(0, 1.0, nu_sb=0)
    with pytest.raises(LatticeError):
        ModulationSpec(0, -1.0)


def test_presets():
    assert preset("paper-uniform").J_bonds == (-9.0,) * 6
    assert preset("paper-table-s2").U_sites[2] == -209.0
    assert set(PRESETS) == {"paper-uniform", "paper-table-s2", "u-disordered-s1"}
    with pytest.raises(LatticeError):
        preset("nope")
    spec = LatticeSpec.from_dict({"preset": "paper-table-s2", "V": 3})
    assert spec.V == 3 and spec.J_bonds == (-9.62, -9.58)
    assert LatticeSpec.from_dict(spec.to_dict()) == spec


def test_schedule_continuity_and_reversal():
    s = Schedule((100.0, -50.0)).ramp((0.0, 0.0), 1.0).hold(0.5).ramp((20.0, 10.0), 0.3, "linear")
    assert s.duration == pytest.approx(1.8)
    ts = np.linspace(0, s.duration, 2001)
    d = np.array([s.detuning(t) for t in ts])
    assert np.all(np.isfinite(d))
    assert np.max(np.abs(np.diff(d, axis=0))) < 1.0
    r = s.reversed()
    for t in (0.0, 0.3, 1.2, 1.8):
        assert np.allclose(r.detuning(t), s.detuning(s.duration - t))


def test_ramp_fraction_shapes():
    x = np.linspace(0, 1, 11)
    assert np.allclose(ramp_fraction(x, "linear"), x)
    c = ramp_fraction(x)
    assert c[0] == 0 and c[-1] == 1 and c[5] == pytest.approx(0.5)
