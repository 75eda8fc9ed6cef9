import math

import numpy as np
import pytest

from cavitybus.errors import DegenerateDataError
from cavitybus.fitting import (
    SpinTuning,
    avoided_crossing_model,
    extract_branches,
    fit_avoided_crossing,
    fit_full_transmission,
    fit_lorentzian,
    initial_guess_full,
    jacobian_check,
    levenberg_marquardt,
    lorentzian,
    lorentzian_model,
    transmission_model,
)
from cavitybus.spin import FieldSetting
from cavitybus.transmission import SpectrumGrid, sweep

CENTER = 2749.1


@pytest.fixture(scope="module")
def tunings(config):
    magnitude = config.get("field.magnitude_mt")
    return (
        SpinTuning.from_ensemble(config.ensemble("i"), "angle", magnitude),
        SpinTuning.from_ensemble(config.ensemble("ii"), "angle", magnitude),
    )


@pytest.fixture(scope="module")
def crossing_grid(config, cavity, ens_i):
    magnitude = config.get("field.magnitude_mt")
    angles = np.arange(71.0, 87.0 + 1e-9, 0.25)
    probe = np.arange(CENTER - 20.0, CENTER + 20.0 + 1e-9, 0.1)
    fields = [FieldSetting(magnitude, a) for a in angles]
    return sweep(cavity, [ens_i], fields, probe, "angle")


@pytest.fixture(scope="module")
def full_grid(config, cavity, ens_i, ens_ii):
    magnitude = config.get("field.magnitude_mt")
    angles = np.arange(10.0, 90.0 + 1e-9, 1.0)
    probe = np.arange(CENTER - 30.0, CENTER + 30.0 + 1e-9, 0.25)
    fields = [FieldSetting(magnitude, a) for a in angles]
    return sweep(cavity, [ens_i, ens_ii], fields, probe, "angle")


def with_noise(grid, seed, level=0.01):
    rng = np.random.default_rng(seed)
    noisy = grid.magnitudes * (1.0 + level * rng.standard_normal(grid.amplitudes.shape))
    return SpectrumGrid(grid.probe_frequencies, grid.sweep_values, noisy, grid.sweep_kind)


# ---------------------------------------------------------------------------
# Lorentzian fits

def test_noiseless_lorentzian_recovery():
    xs = np.linspace(CENTER - 4.0, CENTER + 4.0, 201)
    ys = lorentzian(xs, 1.0, CENTER, 0.32, 0.0)
    result = fit_lorentzian(xs, ys)
    assert result.converged
    assert result.parameters["center"] == pytest.approx(CENTER, rel=1e-6)
    assert result.parameters["hwhm"] == pytest.approx(0.32, rel=1e-6)
    assert result.parameters["amplitude"] == pytest.approx(1.0, rel=1e-6)


def test_noisy_lorentzian_monte_carlo():
    xs = np.linspace(CENTER - 4.0, CENTER + 4.0, 401)
    clean = lorentzian(xs, 1.0, CENTER, 0.32, 0.0)
    center_errors, width_errors = [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        ys = clean + 0.01 * rng.standard_normal(xs.size)
        result = fit_lorentzian(xs, ys)
        center_errors.append(abs(result.parameters["center"] - CENTER))
        width_errors.append(abs(result.parameters["hwhm"] - 0.32) / 0.32)
    assert np.percentile(center_errors, 95) < 0.01
    assert np.percentile(width_errors, 95) < 0.05


def test_flat_data_is_degenerate():
    xs = np.linspace(0.0, 10.0, 50)
    with pytest.raises(DegenerateDataError):
        fit_lorentzian(xs, np.full(50, 0.7))


def test_too_few_points_rejected():
    with pytest.raises(DegenerateDataError):
        fit_lorentzian([1.0, 2.0, 3.0], [0.0, 1.0, 0.0])


def test_nonfinite_data_rejected():
    xs = np.linspace(0.0, 10.0, 20)
    ys = lorentzian(xs, 1.0, 5.0, 1.0, 0.0)
    ys[3] = np.nan
    with pytest.raises(DegenerateDataError):
        fit_lorentzian(xs, ys)


def test_standard_errors_shrink_like_root_n():
    sizes = (100, 200, 400, 800, 1600)
    ses = []
    for n in sizes:
        xs = np.linspace(CENTER - 4.0, CENTER + 4.0, n)
        clean = lorentzian(xs, 1.0, CENTER, 0.32, 0.0)
        per_seed = []
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            result = fit_lorentzian(xs, clean + 0.01 * rng.standard_normal(n))
            per_seed.append(result.standard_errors["center"])
        ses.append(np.mean(per_seed))
    slope = np.polyfit(np.log(sizes), np.log(ses), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_reparameterization_invariance():
    xs = np.linspace(CENTER - 4.0, CENTER + 4.0, 301)
    rng = np.random.default_rng(7)
    ys = lorentzian(xs, 1.0, CENTER, 0.32, 0.02) + 0.005 * rng.standard_normal(xs.size)
    in_mhz = fit_lorentzian(xs, ys)
    in_ghz = fit_lorentzian(
        xs / 1000.0,
        ys,
        init=[
            in_mhz.parameters["amplitude"] * 1.1,
            (CENTER + 0.5) / 1000.0,
            0.4 / 1000.0,
            0.0,
        ],
    )
    assert in_ghz.parameters["center"] * 1000.0 == pytest.approx(
        in_mhz.parameters["center"], rel=1e-6
    )
    assert in_ghz.parameters["hwhm"] * 1000.0 == pytest.approx(
        in_mhz.parameters["hwhm"], rel=1e-6
    )
    assert in_ghz.parameters["amplitude"] == pytest.approx(
        in_mhz.parameters["amplitude"], rel=1e-6
    )


def test_accepted_iterations_never_increase_residual():
    xs = np.linspace(CENTER - 6.0, CENTER + 6.0, 201)
    rng = np.random.default_rng(17)
    ys = lorentzian(xs, 0.8, CENTER + 0.7, 0.5, 0.1) + 0.02 * rng.standard_normal(xs.size)
    result = fit_lorentzian(xs, ys, init=[0.3, CENTER - 2.0, 2.0, 0.0])
    assert result.converged
    history = np.asarray(result.history)
    assert np.all(np.diff(history) <= 1e-12)


# ---------------------------------------------------------------------------
# jacobian_check

def test_jacobian_check_lorentzian_generic_point():
    xs = np.linspace(0.0, 20.0, 41)
    dev = jacobian_check(lorentzian_model(xs), [0.9, 10.3, 0.8, 0.05])
    assert dev < 1e-6


def test_jacobian_check_quadratic_exact():
    xs = np.linspace(-3.0, 3.0, 13)

    def quadratic(theta):
        a, b, c = theta
        values = a * xs**2 + b * xs + c
        jac = np.stack([xs**2, xs, np.ones_like(xs)], axis=1)
        return values, jac

    assert jacobian_check(quadratic, [2.0, 3.0, 1.0], h_scale=1e-3) < 1e-10


def test_jacobian_check_reports_kink():
    xs = np.array([0.0, 1.0, 2.0])

    def kinked(theta):
        values = np.abs(xs - theta[0])
        jac = -np.where(xs > theta[0], 1.0, -1.0)[:, None]
        return values, jac

    assert jacobian_check(kinked, [1.0]) > 0.1


def test_jacobian_check_shipped_grid_models(tunings):
    tun_i, tun_ii = tunings
    sv = np.linspace(71.0, 87.0, 17)
    signs = np.where(np.arange(17) % 2 == 0, -1.0, 1.0)
    dev_branch = jacobian_check(
        avoided_crossing_model(sv, signs, tun_i), [7.5, CENTER, 0.3], scales=np.ones(3)
    )
    assert dev_branch < 1e-6
    probe = np.linspace(CENTER - 20.0, CENTER + 20.0, 41)
    dev_full = jacobian_check(
        transmission_model(probe, sv, tun_i, tun_ii),
        [7.5, 5.6, 0.32, 4.58, 4.24, CENTER, 0.2],
        scales=np.ones(7),
    )
    assert dev_full < 1e-6


# ---------------------------------------------------------------------------
# avoided-crossing fit

def test_branch_model_minimum_gap_is_2g(tunings):
    tun_i, _ = tunings
    sv = np.linspace(71.0, 87.0, 401)
    lower = avoided_crossing_model(sv, -np.ones(401), tun_i)([7.5, CENTER, 0.0])[0]
    upper = avoided_crossing_model(sv, np.ones(401), tun_i)([7.5, CENTER, 0.0])[0]
    assert np.min(upper - lower) == pytest.approx(2 * 7.5, rel=1e-4)


def test_extract_branches_keeps_two_peaks(crossing_grid):
    rows = extract_branches(crossing_grid)
    assert all(peaks.size <= 2 for _, peaks in rows)
    split_rows = [s for s, peaks in rows if peaks.size == 2]
    assert 75.0 < np.median(split_rows) < 83.0


def test_avoided_crossing_noiseless_roundtrip(crossing_grid, tunings):
    result = fit_avoided_crossing(crossing_grid, tunings[0])
    assert result.converged
    assert result.parameters["g"] == pytest.approx(7.5, rel=0.02)
    assert result.parameters["nu_c"] == pytest.approx(CENTER, abs=0.1)
    assert abs(result.parameters["offset"]) < 0.1


def test_avoided_crossing_magnitude_sweep(config, cavity, ens_i):
    # same crossing probed by tuning the field magnitude at 79 degrees
    magnitudes = np.arange(7.0, 8.4 + 1e-9, 0.02)
    probe = np.arange(CENTER - 20.0, CENTER + 20.0 + 1e-9, 0.1)
    fields = [FieldSetting(m, 79.0) for m in magnitudes]
    grid = sweep(cavity, [ens_i], fields, probe, "magnitude")
    tuning = SpinTuning.from_ensemble(ens_i, "magnitude", 79.0)
    result = fit_avoided_crossing(with_noise(grid, 5), tuning)
    assert result.converged
    assert result.parameters["g"] == pytest.approx(7.5, rel=0.02)
    assert abs(result.parameters["offset"]) < 0.05


def test_avoided_crossing_noisy_monte_carlo(crossing_grid, tunings):
    errors = []
    for seed in range(30):
        result = fit_avoided_crossing(with_noise(crossing_grid, seed), tunings[0])
        errors.append(abs(result.parameters["g"] - 7.5) / 7.5)
    assert np.percentile(errors, 95) < 0.02


def test_avoided_crossing_needs_split_rows(config, cavity, tunings):
    ens = config.ensemble("i")
    silent = type(ens)(ens.nv, ens.orientation, 1e-9, ens.spin_hwhm)
    magnitude = config.get("field.magnitude_mt")
    angles = np.arange(71.0, 87.0 + 1e-9, 1.0)
    probe = np.arange(CENTER - 20.0, CENTER + 20.0 + 1e-9, 0.1)
    grid = sweep(cavity, [silent], [FieldSetting(magnitude, a) for a in angles], probe, "angle")
    with pytest.raises(DegenerateDataError):
        fit_avoided_crossing(grid, tunings[0])


def test_avoided_crossing_zero_coupling_with_explicit_init(config, cavity, tunings):
    ens = config.ensemble("i")
    silent = type(ens)(ens.nv, ens.orientation, 1e-9, ens.spin_hwhm)
    magnitude = config.get("field.magnitude_mt")
    angles = np.arange(71.0, 87.0 + 1e-9, 0.5)
    probe = np.arange(CENTER - 20.0, CENTER + 20.0 + 1e-9, 0.05)
    grid = sweep(cavity, [silent], [FieldSetting(magnitude, a) for a in angles], probe, "angle")
    result = fit_avoided_crossing(with_noise(grid, 0), tunings[0], init=[0.5, CENTER, 0.0])
    assert result.converged
    g = result.parameters["g"]
    assert g < 0.05
    assert g <= 3.0 * result.standard_errors["g"]


# ---------------------------------------------------------------------------
# full transmission fit

TRUTH = np.array([7.5, 5.6, 0.32, 4.58, 4.24, CENTER, 0.0])


def test_full_transmission_roundtrip(full_grid, tunings):
    init = TRUTH * np.array([1.2, 0.8, 1.2, 0.8, 1.2, 1.0, 1.0])
    init[6] = 0.3
    errors = {"g_i": [], "g_ii": [], "kappa": []}
    for seed in range(5):
        result = fit_full_transmission(with_noise(full_grid, seed), *tunings, init=init)
        assert result.converged
        for key, truth in (("g_i", 7.5), ("g_ii", 5.6), ("kappa", 0.32)):
            errors[key].append(abs(result.parameters[key] - truth) / truth)
    for key in errors:
        assert max(errors[key]) < 0.03


def test_full_transmission_basin(full_grid, tunings):
    noisy = with_noise(full_grid, 42)
    results = []
    for factor in (0.8, 1.2):
        init = TRUTH * factor
        init[5] = CENTER + (factor - 1.0)
        init[6] = factor - 1.0
        results.append(fit_full_transmission(noisy, *tunings, init=init))
    for result in results:
        assert result.converged
        assert result.parameters["g_i"] == pytest.approx(7.5, rel=0.03)


def test_full_transmission_default_init(full_grid, tunings):
    result = fit_full_transmission(with_noise(full_grid, 3), *tunings)
    assert result.converged
    assert result.parameters["g_i"] == pytest.approx(7.5, rel=0.03)
    assert result.parameters["g_ii"] == pytest.approx(5.6, rel=0.03)


def test_initial_guess_orders_of_magnitude(full_grid):
    guess = initial_guess_full(full_grid)
    assert 1.0 < guess[0] < 15.0
    assert 0.05 < guess[2] < 2.0
    assert abs(guess[5] - CENTER) < 2.0


def test_restricted_grid_pins_collective_coupling(config, cavity, ens_i, ens_ii, tunings):
    # Between the individual crossings only the quadrature sum of the
    # couplings is well determined: the residual stays flat along the
    # fixed-g_col circle and grows quickly along the radius.
    magnitude = config.get("field.magnitude_mt")
    angles = np.arange(40.0, 56.0 + 1e-9, 0.5)
    probe = np.arange(CENTER - 15.0, CENTER + 15.0 + 1e-9, 0.1)
    fields = [FieldSetting(magnitude, a) for a in angles]
    grid = sweep(cavity, [ens_i, ens_ii], fields, probe, "angle")
    noisy = with_noise(grid, 11, level=0.002)

    init = TRUTH.copy()
    init[0] *= 1.1
    init[1] *= 0.9
    result = fit_full_transmission(noisy, *tunings, init=init)
    g_col_true = math.hypot(7.5, 5.6)
    g_col_fit = math.hypot(result.parameters["g_i"], result.parameters["g_ii"])
    assert result.converged
    assert g_col_fit == pytest.approx(g_col_true, rel=0.03)

    model = transmission_model(grid.probe_frequencies, grid.sweep_values, *tunings)
    data = noisy.magnitudes.ravel()

    def cost(g_i, g_ii):
        values, _ = model([g_i, g_ii, 0.32, 4.58, 4.24, CENTER, 0.0])
        return float(np.sum((values - data) ** 2))

    base = cost(7.5, 5.6)
    # rotate along the circle by 5 degrees vs scale the radius by 5%
    phi = math.atan2(5.6, 7.5) + math.radians(5.0)
    along = cost(g_col_true * math.cos(phi), g_col_true * math.sin(phi))
    radial = cost(7.5 * 1.05, 5.6 * 1.05)
    assert (along - base) < 0.2 * (radial - base)


# ---------------------------------------------------------------------------
# solver internals

def test_levenberg_marquardt_unconverged_flag():
    xs = np.linspace(0.0, 1.0, 16)
    target = np.sin(3 * xs)

    def residual_jac(theta):
        r = theta[0] * xs - target
        return r, xs[:, None]

    result = levenberg_marquardt(residual_jac, [0.0], names=("slope",), max_iter=1)
    assert result.iterations <= 1
    # a single accepted Gauss-Newton step solves the linear problem
    assert result.parameters["slope"] == pytest.approx(
        float(np.dot(xs, target) / np.dot(xs, xs)), rel=1e-3
    )


def test_positive_constraint_respected():
    xs = np.linspace(CENTER - 4.0, CENTER + 4.0, 101)
    ys = lorentzian(xs, 0.5, CENTER, 0.2, 0.0)
    result = fit_lorentzian(xs, ys, init=[0.4, CENTER + 1.0, 3.0, 0.0])
    assert result.parameters["hwhm"] > 0
    assert result.parameters["hwhm"] == pytest.approx(0.2, rel=1e-4)
