import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbramsey.spectro import (
    NoPeakError,
    SpectroError,
    apply_lowpass,
    fft_spectrum,
    find_dominant_peak,
    find_peaks,
    untranslate,
)

T = np.arange(201) * 0.004  # 0.8 µs span, 4 ns step


def tone(f, amp=1.0, t=T, phase=0.0):
    return 0.5 + 0.5 * amp * np.cos(2 * np.pi * f * t + phase)


def test_constant_trace_has_zero_spectrum():
    s = fft_spectrum((T, np.full(len(T), 0.3)))
    assert np.max(s.magnitude) < 1e-12


def test_single_bin_peak_at_40():
    s = fft_spectrum((T, tone(40.0)))
    assert abs(s.freqs[np.argmax(s.magnitude)] - 40.0) <= 1.25
    assert s.resolution == pytest.approx(1 / (201 * 0.004))


@pytest.mark.parametrize("pad", [1, 2, 4])
@pytest.mark.parametrize("n", [200, 201])
def test_parseval(pad, n):
    rng = np.random.default_rng(n + pad)
    t = np.arange(n) * 0.004
    y = rng.random(n)
    s = fft_spectrum((t, y), pad=pad)
    power = np.sum((y - y.mean()) ** 2)
    assert np.sum(s.magnitude ** 2) == pytest.approx(power, rel=1e-9)


def test_injected_tone_at_50():
    f = find_dominant_peak(fft_spectrum((T, tone(50.0))))
    assert abs(f - 50.0) <= 0.5 * (1 / 0.804)


def test_single_tone_accuracy_random():
    rng = np.random.default_rng(7)
    res = 1 / (201 * 0.004)
    for f in rng.uniform(20.5, 124.5, 100):
        got = find_dominant_peak(fft_spectrum((T, tone(f, phase=rng.uniform(0, 6.3)))))
        assert abs(got - f) <= 0.5 * res


@settings(max_examples=50, deadline=None)
@given(f=st.floats(21.0, 124.0), phase=st.floats(0, 2 * np.pi))
def test_single_tone_property(f, phase):
    got = find_dominant_peak(fft_spectrum((T, tone(f, phase=phase))))
    assert abs(got - f) <= 0.5 / 0.804


def test_dominance_of_larger_tone():
    y = 0.5 + 0.25 * np.cos(2 * np.pi * 35 * T) + 0.075 * np.cos(2 * np.pi * 70 * T)
    ps = find_peaks(fft_spectrum((T, y)))
    assert len(ps) == 2
    assert abs(ps.dominant.freq - 35) < 0.5
    assert ps.dominant_fraction == pytest.approx(1 / (1 + 0.3 ** 2), abs=0.02)


def test_lowpass_is_idempotent():
    s = fft_spectrum((T, tone(10.0) + tone(60.0) - 0.5))
    once = apply_lowpass(s)
    twice = apply_lowpass(once)
    assert np.array_equal(once.magnitude, twice.magnitude)
    assert np.all(once.magnitude[once.freqs < 20] == 0)


def test_low_frequency_tone_is_masked():
    with pytest.raises(NoPeakError):
        find_dominant_peak(fft_spectrum((T, tone(8.0))))


def test_noise_only_has_no_qualifying_peak_and_fallback():
    rng = np.random.default_rng(3)
    y = rng.normal(0, 1, len(T))
    ps = find_peaks(fft_spectrum((T, y)))
    assert all(p.sigma_ratio >= 6 for p in ps)
    weak = 0.5 + 0.02 * np.cos(2 * np.pi * 45 * T) + rng.normal(0, 0.03, len(T))
    f = find_dominant_peak(fft_spectrum((T, weak)), fallback=True)
    assert abs(f - 45) < 1.0


def test_tone_on_band_edge():
    f = find_dominant_peak(fft_spectrum((T, tone(20.6))))
    assert abs(f - 20.6) <= 0.5 / 0.804


def test_sampling_errors():
    with pytest.raises(SpectroError):
        fft_spectrum((np.array([0, 0.004, 0.009, 0.012, 0.016]), np.zeros(5)))
    with pytest.raises(SpectroError):
        fft_spectrum((T[:3], T[:3]))
    with pytest.raises(SpectroError):
        fft_spectrum((T, tone(40)), window="kaiser")


def test_hann_window_keeps_position():
    s = fft_spectrum((T, tone(63.3)), window="hann")
    assert abs(find_dominant_peak(s) - 63.3) < 0.5 / 0.804


def test_untranslate():
    assert untranslate(37.06, 50.0) == pytest.approx(12.94)
    assert untranslate(30.0, 0.0) == 30.0
