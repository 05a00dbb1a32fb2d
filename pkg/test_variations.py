import math

import numpy as np
import pytest

from errors import DegeneratePathError, ParameterDomainError, RegimeError
from fgn_engine import RandomStream
from hermite_simulator import simulate_path
from hurst_params import c1_constant, derive_params
from variations import (
    VariationReport,
    centered_quadratic_variation,
    empirical_mean_square,
    estimate_hurst,
    hermite_variation_statistic,
    log_error_identity,
    moment_scaling_ratio,
    normalized_limit_statistic,
    plugin_normalized_error,
    variation_report,
)


def _path_with_mean_square(N, s_n):
    # incrementi costanti: S_N = s_n esattamente
    return np.concatenate([[0.0], np.cumsum(np.full(N, math.sqrt(s_n)))])


def test_exact_inversion():
    N = 4096
    path = _path_with_mean_square(N, N ** -1.6)
    assert estimate_hurst(path) == pytest.approx(0.8, abs=1e-12)
    assert centered_quadratic_variation(path, 0.8) == pytest.approx(0.0, abs=1e-10)


def test_linear_path_variation():
    N = 100
    path = np.linspace(0.0, 1.0, N + 1)
    assert empirical_mean_square(path) == pytest.approx(N ** -2.0)
    assert centered_quadratic_variation(path, 0.8) == pytest.approx(N ** (1.6 - 2.0) - 1.0)


def test_degenerate_and_short_paths():
    with pytest.raises(DegeneratePathError):
        estimate_hurst(np.zeros(17))
    with pytest.raises(ParameterDomainError):
        estimate_hurst([0.0, 1.0])
    with pytest.raises(ParameterDomainError):
        empirical_mean_square([0.0])


def test_identities_on_simulated_path():
    params = derive_params(0.8, 2)
    path = simulate_path(params, 256, 16, RandomStream(12))
    report = variation_report(path, params)
    rhs = 256 ** 1.6 * report.s_n
    assert abs((1.0 + report.v_n) - rhs) <= 8 * np.spacing(rhs)
    assert log_error_identity(report.v_n, report.h_hat, 0.8, 256) == pytest.approx(0.0, abs=1e-12)


def test_normalized_statistics():
    params = derive_params(0.8, 2)
    N = 1024
    expected = N ** (2 - 2 * params.h_prime) * 0.01 / (4.0 * math.sqrt(c1_constant(params)))
    assert normalized_limit_statistic(0.01, params, N) == pytest.approx(expected)
    with pytest.raises(RegimeError):
        normalized_limit_statistic(0.01, derive_params(0.6, 1), N)

    assert plugin_normalized_error(0.8, 0.8, params, N) == 0.0
    h_hat = 0.79
    hp = 1 + (h_hat - 1) / 2
    assert plugin_normalized_error(h_hat, 0.8, params, N) == pytest.approx(
        2 * N ** (2 - 2 * hp) * 0.01 * math.log(N)
    )


def test_hermite_variation_statistic_regimes():
    N = 400
    assert hermite_variation_statistic(0.1, 0.6, N) == pytest.approx(N * 0.1 / math.sqrt(N))
    assert hermite_variation_statistic(0.1, 0.75, N) == pytest.approx(N * 0.1 / math.sqrt(N * math.log(N)))
    assert hermite_variation_statistic(0.1, 0.9, N) == pytest.approx(N ** (2 * 0.1 - 1) * N * 0.1)


def test_moment_scaling_ratio():
    params = derive_params(0.8, 2)
    samples = [0.1, -0.1]
    expected = 1e-4 * 1000 ** (-2 * (4 * params.h_prime - 4))
    assert moment_scaling_ratio(samples, params, 1000) == pytest.approx(expected)
    with pytest.raises(ParameterDomainError):
        moment_scaling_ratio(samples, params, 1000, order=3)


def test_report_fields_depend_on_known_h():
    path = simulate_path(derive_params(0.8, 2), 64, 4, RandomStream(1))
    blind = variation_report(path)
    assert blind.v_n is None and blind.normalized_error is None

    fbm = variation_report(path, derive_params(0.6, 1))
    assert fbm.v_n is not None and fbm.normalized_v_n is None

    full = variation_report(path, derive_params(0.8, 2))
    assert VariationReport.from_dict(full.to_dict()) == full


def test_hurst_estimate_ignores_time_labels():
    path = simulate_path(derive_params(0.8, 2), 128, 16, RandomStream(14)).values
    inc = np.diff(path)
    order = np.random.default_rng(0).permutation(inc.size)
    relabeled = np.concatenate([[0.0], np.cumsum(inc[order])])
    shifted = path + 3.0
    assert estimate_hurst(relabeled) == pytest.approx(estimate_hurst(path), rel=1e-12)
    assert estimate_hurst(shifted) == pytest.approx(estimate_hurst(path), rel=1e-12)
