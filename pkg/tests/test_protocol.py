from dataclasses import replace

import numpy as np
import pytest

from mbramsey.dynamics import StateVector, evolve, top_state
from mbramsey.hamiltonian import LatticeSpec, Schedule
from mbramsey.protocol import (
    ProtocolError,
    PulseEvent,
    RamseyConfig,
    apply_pulse,
    assembly_detunings,
    beamsplitter_prep,
    default_hold_times,
    density_profile,
    level_population,
    melted_density,
    number_superposition_config,
    run_manybody_ramsey,
    run_same_manifold,
    run_volume_ramsey,
    volume_superposition_config,
    xx_correlator,
)
from mbramsey.spectro import fft_spectrum, find_dominant_peak, find_peaks, untranslate
from mbramsey.thermo import top_energy

LAT7 = LatticeSpec.uniform(7)


def single_site(f_site=12.0, omega=5000.0, **kw):
    spec = LatticeSpec(1, (), (-240.0,), omega_lat=omega)
    return RamseyConfig(spec, 0, (PulseEvent(0, np.pi / 2),), (f_site,), 0.0,
                        tuple(default_hold_times()), lattice_detunings=(f_site,), **kw)


def test_pi_pulse_fills_empty_site():
    psi = apply_pulse(StateVector.vacuum(3), PulseEvent(1))
    assert abs(psi.amplitude((0, 1, 0))) ** 2 == pytest.approx(1.0)


def test_two_half_pulses_make_pi():
    psi = StateVector.from_occupations((1, 0))
    half = PulseEvent(1, np.pi / 2, phase=0.3)
    a = apply_pulse(apply_pulse(psi, half), half)
    b = apply_pulse(psi, PulseEvent(1, np.pi, phase=0.3))
    assert a.fidelity(b) == pytest.approx(1.0)


def test_half_pulse_on_vacuum():
    psi = apply_pulse(StateVector.vacuum(4), PulseEvent(2, np.pi / 2))
    assert psi.weights() == pytest.approx({0: 0.5, 1: 0.5})
    assert density_profile(psi) == pytest.approx([0, 0, 0.5, 0])


def test_pulse_on_upper_transition():
    psi = apply_pulse(StateVector.from_occupations((0, 1)), PulseEvent(1, transition=1))
    assert level_population(psi, 1, 2) == pytest.approx(1.0)


def test_unlocalized_pulse_rejected():
    with pytest.raises(ProtocolError):
        apply_pulse(StateVector.vacuum(2), PulseEvent(0), (10.0, 0.0), LatticeSpec.uniform(2))
    with pytest.raises(ProtocolError):
        PulseEvent(0, transition=2)


def test_decoupled_limit_is_textbook_ramsey():
    tr = run_manybody_ramsey(single_site(12.0))
    T = tr.hold_times
    assert np.allclose(tr.population, 0.5 * (1 + np.cos(2 * np.pi * (12.0 - 50.0) * T)),
                       atol=1e-9)


def test_dephasing_envelope():
    tr = run_manybody_ramsey(single_site(12.0, dephasing_T2=1.3))
    T = tr.hold_times
    ideal = 0.5 * np.cos(2 * np.pi * (12.0 - 50.0) * T)
    assert np.allclose(tr.population - 0.5, ideal * np.exp(-T / 1.3), atol=1e-9)


def test_decoupled_chain_fringe_frequency():
    spec = LatticeSpec(3, (0.0, 0.0), (-240.0,) * 3)
    st = (-75.0, 75.0, -75.0)
    cfg = RamseyConfig(spec, 1, (PulseEvent(1, np.pi / 2),), st, 0.5,
                       lattice_detunings=(0.0, 17.0, 0.0)).validate()
    f = find_dominant_peak(fft_spectrum(run_manybody_ramsey(cfg)))
    assert untranslate(f, 50.0) == pytest.approx(17.0, abs=0.5 / 0.804)


def test_number_superposition_matches_ed():
    cfg = number_superposition_config(LAT7, 1, 1.0)
    f = find_dominant_peak(fft_spectrum(run_manybody_ramsey(cfg)))
    ed = top_energy(LAT7, 2) - top_energy(LAT7, 1)
    assert abs(untranslate(f, cfg.virtual_freq) - ed) <= 1.25


def test_population_bounded_and_seeded():
    cfg = number_superposition_config(LAT7, 0, 0.05, shots=200, seed=11, dephasing_T2=1.3)
    a, b = run_manybody_ramsey(cfg), run_manybody_ramsey(cfg)
    assert np.array_equal(a.population, b.population)
    assert np.all((a.population >= 0) & (a.population <= 1))
    c = run_manybody_ramsey(replace(cfg, seed=12))
    assert not np.array_equal(a.population, c.population)
    assert np.all(a.sem >= 0)


def test_config_validation():
    cfg = number_superposition_config(LAT7, 0, 1.0)
    with pytest.raises(ProtocolError, match="aliases"):
        replace(cfg, virtual_freq=130.0).validate()
    with pytest.raises(ProtocolError):
        replace(cfg, hold_times=(0.0, 0.01, 0.005)).validate()
    with pytest.raises(ProtocolError):
        replace(cfg, mode="sideways").validate()
    with pytest.raises(ProtocolError):
        number_superposition_config(LAT7, 7)


def test_volume_mode_without_tunneling_gives_zero_pressure():
    spec = LatticeSpec(3, (0.0, 0.0), (-240.0,) * 3)
    cfg = volume_superposition_config(spec, 1, 0.5, compensate=False)
    f = find_dominant_peak(fft_spectrum(run_volume_ramsey(cfg)))
    assert untranslate(f, cfg.virtual_freq) == pytest.approx(0.0, abs=0.5 / 0.804)


def test_blocked_edge_leakage():
    # fluid alone, melted next to the far-detuned control: edge stays empty
    spec = LatticeSpec.uniform(5)
    for N in (1, 2, 4):
        cfg = volume_superposition_config(spec, N, 1.0, compensate=False)
        psi = StateVector.vacuum(5)
        for p in cfg.prep_pulses[:N]:
            psi = apply_pulse(psi, p)
        out = evolve(psi, Schedule(cfg.stagger).ramp(cfg.target, 1.0), spec)
        assert level_population(out, 4, 1) < (9 / 240) ** 2


def test_volume_mode_requires_edge_control():
    cfg = volume_superposition_config(LatticeSpec.uniform(3), 1, 1.0)
    with pytest.raises(ProtocolError):
        replace(cfg, control_site=0).validate()


def test_density_fixtures():
    psi = StateVector.from_occupations((0, 0, 0, 1, 0, 1, 0))
    assert np.array_equal(density_profile(psi), [0, 0, 0, 1, 0, 1, 0])
    top = density_profile(top_state(LAT7, 1))
    assert np.allclose(top, 0.25 * np.sin(np.pi * np.arange(1, 8) / 8) ** 2)
    assert top[3] == pytest.approx(0.25)


def test_superposition_density_is_mean():
    a, b = melted_density(LAT7, 1), melted_density(LAT7, 2)
    assert np.allclose(melted_density(LAT7, 1, superpose=True), 0.5 * (a + b), atol=1e-6)


@pytest.mark.parametrize("t,on_a", [(0.0, 1.0), (1 / 36, 0.0), (1 / 72, 0.5)])
def test_beamsplitter(t, on_a):
    spec = LatticeSpec.uniform(2)
    psi = beamsplitter_prep(StateVector.vacuum(2), 0, 1, spec, (100.0, 0.0), duration=t)
    assert level_population(psi, 0, 1) == pytest.approx(on_a, abs=1e-3)
    assert level_population(psi, 1, 1) == pytest.approx(1 - on_a, abs=1e-3)


def test_beamsplitter_preconditions():
    with pytest.raises(ProtocolError):
        beamsplitter_prep(StateVector.vacuum(3), 0, 2, LatticeSpec.uniform(3), (100, 0, 100))
    with pytest.raises(ProtocolError):
        beamsplitter_prep(StateVector.from_occupations((1, 0)), 0, 1, LatticeSpec.uniform(2),
                          (100, 0))


def test_xx_correlator():
    assert xx_correlator(StateVector.vacuum(2), site_a=0, site_b=1) == pytest.approx(0)
    bell = StateVector(2, 3, {1: np.array([1, 1], complex) / np.sqrt(2)})
    assert xx_correlator(bell, site_a=0, site_b=1) == pytest.approx(1)


def test_same_manifold_beat():
    tr = run_same_manifold(LAT7, hold_times=default_hold_times(2.0, 0.004))
    ps = find_peaks(fft_spectrum(tr), lowpass_cut=1.0)
    w = np.sort(np.linalg.eigvalsh(np.diag([-9.0] * 6, 1) + np.diag([-9.0] * 6, -1)))
    gap = w[-1] - w[-2]
    analytic = abs(-18 * (np.cos(6 * np.pi / 8) - np.cos(7 * np.pi / 8)))
    assert abs(ps.dominant.freq - gap) < 0.5
    assert abs(gap - analytic) < 3.0
