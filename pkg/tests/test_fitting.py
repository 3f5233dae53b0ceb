import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magwells.fitting import FitError, FitWindow, fit_gap, select_window

H = np.array([0.2, 0.15, 0.12, 0.1, 0.08, 0.065, 0.05])


def synthetic(h, S, c0):
    return c0 * h**1.5 * np.exp(-S / h)


@settings(max_examples=30, deadline=None)
@given(S=st.floats(0.05, 0.6), c0=st.floats(0.05, 5.0))
def test_exact_model_recovered(S, c0):
    fit = fit_gap(H, synthetic(H, S, c0), S_pred=S, c0_pred=c0)
    assert fit.S_fit == pytest.approx(S, rel=1e-10)
    assert fit.c0_fit == pytest.approx(c0, rel=1e-9)
    assert fit.p_hat == pytest.approx(1.5, abs=1e-6)
    assert fit.S_rel_err <= 1e-10
    assert fit.c0_ratio == pytest.approx(1.0, abs=1e-9)


def test_one_percent_noise_keeps_S_within_two_percent():
    rng = np.random.default_rng(0)
    S, c0 = 0.35, 0.45
    worst = 0.0
    for _ in range(50):
        gap = synthetic(H, S, c0) * (1 + 0.01 * rng.standard_normal(H.size))
        fit = fit_gap(H, gap, rel_sigma=0.01)
        worst = max(worst, abs(fit.S_fit - S) / S)
    assert worst <= 0.02


def test_noise_floor_discards_points():
    gap = synthetic(H, 0.35, 0.45)
    noise = np.full(H.size, 1e-6)
    keep, discarded = select_window(H, gap, noise, FitWindow(noise_factor=100))
    kept_h = set(H[keep])
    assert all(g >= 1e-4 for g in gap[keep])
    assert {d["h"] for d in discarded} == set(H) - kept_h
    assert all("noise" in d["reason"] for d in discarded)


def test_smallest_window_keeps_the_small_h_end():
    gap = synthetic(H, 0.35, 0.45)
    keep, discarded = select_window(H, gap, None, FitWindow(smallest=4))
    assert sorted(H[keep]) == sorted(H[-4:])
    assert len(discarded) == 3
    assert all(d["reason"] == "outside the small-h window" for d in discarded)


def test_non_positive_gaps_are_discarded():
    gap = synthetic(H, 0.35, 0.45)
    gap[2] = -1e-12
    gap[3] = np.nan
    fit = fit_gap(H, gap)
    assert {d["h"] for d in fit.discarded} == {H[2], H[3]}
    assert fit.S_fit == pytest.approx(0.35, rel=1e-10)


def test_too_few_points():
    with pytest.raises(FitError, match="usable points"):
        fit_gap(H[:3], synthetic(H[:3], 0.3, 1.0))


def test_narrow_window_is_ill_conditioned():
    h = np.array([0.1, 0.1001, 0.1002, 0.1003, 0.1004])
    with pytest.raises(FitError, match="ill-conditioned"):
        fit_gap(h, synthetic(h, 0.3, 1.0))


def test_window_validation():
    with pytest.raises(FitError):
        FitWindow(noise_factor=0.5).validate()
    with pytest.raises(FitError):
        FitWindow(min_points=2).validate()
    with pytest.raises(FitError):
        FitWindow(smallest=3, min_points=4).validate()


def test_scaled_gap_diagnostics():
    fit = fit_gap(H, synthetic(H, 0.35, 0.45) * (1 + H), S_pred=0.35, c0_pred=0.45)
    scaled = np.array(fit.diagnostics["scaled_gap"])
    np.testing.assert_allclose(scaled, 0.45 * (1 + H), rtol=1e-12)
    assert fit.diagnostics["scaled_gap_monotone_last3"]
    assert fit.h_used == sorted(fit.h_used, reverse=True)
    assert set(fit.as_dict()) >= {"S_fit", "c0_fit", "p_hat", "residuals", "condition"}
