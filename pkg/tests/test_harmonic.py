import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad

from pathclosure.errors import InvalidParameterError, OverflowGuardError
from pathclosure.harmonic import (
    HarmonicSpec, extremal_action_closed, extremal_closed, fig2_restart_table, fig3_table,
    kernel_argmax, kernel_closed, restart_experiment, restart_value, thermo_path, thermo_rate,
)

# frozen high-precision values (mpmath, 30 digits)
SECH = {1.0: 0.648054273663885400, 2.0: 0.265802228834079692, 3.0: 0.0993279274194332,
        1.5: 0.425096034942280, 2.5: 0.163071231929978}
RESTART_3 = 0.180706638923649
SE_11 = 0.462117157260010

kappas = st.floats(0.2, 3.0)
dts = st.floats(0.2, 5.0)
Ts = st.floats(0.05, 6.0)
u0s = st.floats(-3.0, 3.0)


def test_thermo_path_values():
    spec = HarmonicSpec()
    for t, v in SECH.items():
        assert abs(thermo_path(spec, t) - v) < 1e-12


def test_extremal_action_value():
    assert abs(extremal_action_closed(HarmonicSpec(), 1.0, 1.0) - SE_11) < 1e-12


def test_restart_values():
    spec = HarmonicSpec()
    assert abs(thermo_path(spec, 1.5) - SECH[1.5]) < 1e-9
    assert abs(restart_value(spec, 1.5, 3.0) - RESTART_3) < 1e-9
    original, restarted = restart_experiment(spec, 1.5, 5.0)
    assert abs(original(3.0)[0] - SECH[3.0]) < 1e-9
    assert abs(restarted(3.0)[0] - RESTART_3) < 1e-9


def test_plateau_zero_slope():
    spec = HarmonicSpec()
    original, restarted = restart_experiment(spec, 1.5, 5.0, step=1e-3)
    for p in (original, restarted):
        slope = (p.points[1, 0] - p.points[0, 0]) / (p.times[1] - p.times[0])
        assert abs(slope) < 1e-3  # O(step) one-sided estimate of a zero derivative
    assert thermo_rate(spec, 0.0) == 0.0


def test_restart_table_layout():
    tab = fig2_restart_table(HarmonicSpec(), 1.5, 5.0)
    assert tab.shape == (501, 3)
    assert np.all(np.isnan(tab[:150, 2])) and np.all(np.isfinite(tab[150:, 2]))
    assert abs(tab[150, 2] - tab[150, 1]) < 1e-15


def test_fig3_table_endpoints():
    tab = fig3_table(HarmonicSpec(), 5.0)
    assert np.allclose(tab[[0, -1], 1], tab[[0, -1], 2])
    assert np.max(np.abs(tab[:, 1] - tab[:, 2])) > 0.05


def test_overflow_guard():
    spec = HarmonicSpec(kappa=10.0)
    with pytest.raises(OverflowGuardError):
        extremal_closed(spec, 0.0, 80.0, [1.0])
    with pytest.raises(OverflowGuardError):
        kernel_closed(spec, 0.0, 80.0)
    val = extremal_closed(spec, 0.0, 80.0, np.array([0.0, 1.0, 80.0]), asymptotic=True)
    assert np.all(np.isfinite(val)) and abs(val[0] - 1) < 1e-15
    assert np.isfinite(extremal_action_closed(spec, 0.0, 80.0, asymptotic=True))


def test_invalid_parameters():
    with pytest.raises(InvalidParameterError):
        HarmonicSpec(kappa=-1.0)
    with pytest.raises(InvalidParameterError):
        HarmonicSpec(delta_t=0.0)
    with pytest.raises(InvalidParameterError):
        extremal_closed(HarmonicSpec(), 1.0, 1.0, [2.0])


@given(kappas, dts, Ts, u0s)
def test_kernel_unit_integral(kappa, dt, T, u0):
    spec = HarmonicSpec(kappa, u0, dt)
    mean = kernel_argmax(spec, T)
    width = 12 / np.sqrt(dt * kappa)
    total, _ = quad(lambda u: kernel_closed(spec, u, T), mean - width, mean + width, points=[mean])
    assert abs(total - 1) < 1e-8


@given(kappas, dts, Ts, u0s)
def test_kernel_argmax_is_sech(kappa, dt, T, u0):
    spec = HarmonicSpec(kappa, u0, dt)
    assert abs(kernel_argmax(spec, T) - u0 / np.cosh(kappa * T)) < 1e-12
    # direct maximization of exp(-dt S_e) over the endpoint
    u = np.linspace(-4, 4, 8001)
    S = extremal_action_closed(spec, u, T)
    k = int(np.argmin(S))
    a, b, c = S[k - 1:k + 2]
    vertex = u[k] + 0.5 * (u[1] - u[0]) * (a - c) / (a - 2 * b + c)
    assert abs(vertex - u0 / np.cosh(kappa * T)) < 1e-6


@given(kappas, Ts, u0s, st.floats(-3.0, 3.0))
def test_asymptotic_form_agrees(kappa, T, u0, uT):
    # the unscaled form loses about exp(2 kappa T) ulps to cancellation
    assume(kappa * T < 6)
    spec = HarmonicSpec(kappa, u0)
    t = np.linspace(0, T, 7)
    a = extremal_closed(spec, uT, T, t)
    b = extremal_closed(spec, uT, T, t, asymptotic=True)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-10)
    assert np.isclose(extremal_action_closed(spec, uT, T),
                      extremal_action_closed(spec, uT, T, asymptotic=True), rtol=1e-9)


@given(kappas, Ts, u0s, st.floats(-3.0, 3.0))
def test_asymptotic_form_hits_endpoints(kappa, T, u0, uT):
    val = extremal_closed(HarmonicSpec(kappa, u0), uT, T, np.array([0.0, T]), asymptotic=True)
    assert np.allclose(val, [u0, uT], rtol=1e-14, atol=1e-15)


@given(kappas, st.floats(0.1, 3.0), u0s, st.floats(-3.0, 3.0))
def test_extremal_action_matches_quadrature(kappa, T, u0, uT):
    spec = HarmonicSpec(kappa, u0)
    B = 0.5 * (u0 * np.exp(kappa * T) - uT) / np.sinh(kappa * T)
    A = u0 - B

    def lag(t):
        u = extremal_closed(spec, uT, T, t)
        du = kappa * (A * np.exp(kappa * t) - B * np.exp(-kappa * t))
        return 0.5 * (du ** 2 + kappa ** 2 * u ** 2)

    S, _ = quad(lag, 0, T, epsabs=1e-12, epsrel=1e-12)
    assert np.isclose(S, extremal_action_closed(spec, uT, T), rtol=1e-8, atol=1e-10)
    assert abs(extremal_closed(spec, uT, T, T) - uT) < 1e-9
