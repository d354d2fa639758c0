import json
import math

import numpy as np
import pytest
from mpmath import mp

from momentlab import (
    CostCurve, CostSample, DegenerateDesign, FitResult, InsufficientSamples, SystemSpec,
    biorthogonal_family, control_cost, cost_by_power_iteration, cost_sweep, fit_scaling, generate,
    moments_from_initial_data, synthesize_control,
)
from momentlab.cost import (
    _cost_matrix, _weight_map, cost_sample, default_T_grid, dump_fit, gnuplot_script,
    lambda_max_hermitian,
)

# one-mode heat cost on (0, 1): e^-1 sqrt(pi/2) / sqrt((1 - e^-2)/2)
K1_HEAT_T1 = math.exp(-1) * math.sqrt(math.pi / 2) / math.sqrt((1 - math.exp(-2)) / 2)
SPEC_GRID = [0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5]


@pytest.fixture(scope="module")
def heat_curve():
    return cost_sweep(SystemSpec.heat(), SPEC_GRID, 25)


def synthetic_curve(T, log_K, converged=True):
    return CostCurve([CostSample(float(t), float(y), 10, 512, converged) for t, y in zip(T, log_K)])


def test_single_mode_closed_form():
    K = math.exp(control_cost(SystemSpec.heat(), 1.0, 1))
    assert K == pytest.approx(K1_HEAT_T1, rel=1e-12)
    assert K == pytest.approx(0.70123, abs=1e-5)


def test_nondecreasing_in_N():
    spec = SystemSpec.heat()
    seq = generate(spec, 25)
    logs = [control_cost(spec, 0.5, n, seq=seq) for n in (5, 10, 15, 20, 25)]
    assert all(b >= a - 1e-12 for a, b in zip(logs, logs[1:]))


def test_nondecreasing_in_N_vector_system():
    spec = SystemSpec.complex2x2()
    seq = generate(spec, 20)
    logs = [control_cost(spec, 0.5, n, seq=seq) for n in (4, 8, 12, 16, 20)]
    assert all(b >= a - 1e-12 for a, b in zip(logs, logs[1:]))


def test_cost_grows_as_T_shrinks():
    spec = SystemSpec.heat()
    assert control_cost(spec, 0.1, 20) > control_cost(spec, 0.5, 20)


@pytest.mark.parametrize("spec, T, N", [
    (SystemSpec.heat(), 0.5, 10),
    (SystemSpec.heat(), 0.2, 15),
    (SystemSpec.complex2x2(), 0.5, 8),
    (SystemSpec.condensing(0.75), 0.5, 8),
])
def test_power_iteration_agrees_with_dense(spec, T, N):
    dense = control_cost(spec, T, N)
    power = cost_by_power_iteration(spec, T, N)
    assert abs(math.exp(2 * (power - dense)) - 1) <= 1e-6


def test_lambda_max_between_diagonal_and_trace():
    spec = SystemSpec.heat()
    seq = generate(spec, 12)
    fam = biorthogonal_family(seq, 0.3)
    mu, _ = _weight_map(spec, fam, seq)
    with mp.workprec(2 * fam.prec):
        H = _cost_matrix(fam, mu)
        lam = lambda_max_hermitian(H)
        diag = [H[i][i].real for i in range(len(H))]
        assert lam >= max(diag) * (1 - mp.mpf(10) ** -30)
        assert lam <= sum(diag) * (1 + mp.mpf(10) ** -30)


def test_lambda_max_power_branch_matches_dense():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(70, 70)) + 1j * rng.normal(size=(70, 70))
    H = A @ A.conj().T
    with mp.workprec(128):
        Hm = [[mp.mpc(complex(x)) for x in row] for row in H]
        lam = float(lambda_max_hermitian(Hm))
    assert lam == pytest.approx(np.linalg.eigvalsh(H)[-1], rel=1e-7)


def test_cost_dominates_every_synthesized_control():
    # K_N(T) is the sup of ||v|| / ||y0||_w over the first N modes
    spec = SystemSpec.heat()
    N, T = 10, 0.3
    seq = generate(spec, N)
    fam = biorthogonal_family(seq, T)
    K = math.exp(control_cost(spec, T, N))
    rng = np.random.default_rng(0)
    for _ in range(5):
        y0 = rng.normal(size=N)
        prob = moments_from_initial_data(spec, list(y0), T, N=N, seq=seq)
        v = synthesize_control(fam, prob)
        y0_norm = math.sqrt(sum(y ** 2 / (k + 1) ** 2 for k, y in enumerate(y0)))
        assert float(v.norm) / y0_norm <= K * (1 + 1e-12)


def test_convergence_flag():
    s = cost_sample(SystemSpec.heat(), 0.8, 10)
    assert s.log_K_prev is not None and s.log_K_prev <= s.log_K
    assert s.converged == (abs(s.log_K - s.log_K_prev) <= 1e-3 * abs(s.log_K))


def test_sweep_rejects_short_grid():
    with pytest.raises(InsufficientSamples):
        cost_sweep(SystemSpec.heat(), [0.5], 10)
    with pytest.raises(InsufficientSamples):
        cost_sweep(SystemSpec.heat(), [0.1, 0.2, 0.3, 0.4, 0.5], 10)


def test_sweep_rejects_nonpositive_T():
    with pytest.raises(ValueError):
        cost_sweep(SystemSpec.heat(), [0, 0.1, 0.2, 0.3, 0.4, 0.5], 10)


def test_sweep_heat_monotone_decreasing(heat_curve):
    assert list(heat_curve.T) == SPEC_GRID
    y = heat_curve.log_K
    assert np.all(np.isfinite(y))
    assert np.all(np.diff(y) < 0)


def test_sweep_condensing_above_heat(heat_curve):
    cond = cost_sweep(SystemSpec.condensing(0.75), SPEC_GRID, 25)
    assert np.all(cond.log_K > heat_curve.log_K)


def test_sweep_records_failures_instead_of_raising(monkeypatch):
    from momentlab import cost
    from momentlab.errors import PrecisionTooLow

    real = cost.cost_sample

    def flaky(spec, T, N, prec, *a, **kw):
        if T == 0.3:
            raise PrecisionTooLow("forced", prec=prec)
        return real(spec, T, N, prec, *a, **kw)

    monkeypatch.setattr(cost, "cost_sample", flaky)
    curve = cost_sweep(SystemSpec.heat(), [0.3, 0.4, 0.5, 0.6, 0.7, 0.8], 5)
    bad = [s for s in curve.samples if s.error]
    assert len(bad) == 1 and bad[0].T == 0.3 and "PrecisionTooLow" in bad[0].error
    assert math.isnan(bad[0].log_K)
    assert len([s for s in curve.samples if s.error is None]) == 5


def test_sweep_parallel_matches_serial():
    grid = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    a = cost_sweep(SystemSpec.heat(), grid, 8, jobs=1)
    b = cost_sweep(SystemSpec.heat(), grid, 8, jobs=2)
    assert a.to_dict() == b.to_dict()


def test_curve_csv(tmp_path, heat_curve):
    p = tmp_path / "cost.csv"
    heat_curve.to_csv(p, header_comment="scenario=x")
    lines = p.read_text().splitlines()
    assert lines[0] == "# scenario=x"
    assert lines[1] == "T,log10_K,N,precision,converged"
    row = lines[2].split(",")
    assert float(row[0]) == 0.05
    assert float(row[1]) == pytest.approx(heat_curve.log_K[0] / math.log(10), rel=1e-15)
    assert len(lines) == 2 + len(SPEC_GRID)


def test_default_grid():
    g = default_T_grid()
    assert len(g) == 12 and g[0] == pytest.approx(0.04) and g[-1] == pytest.approx(0.8)
    assert np.allclose(np.diff(np.log(g)), np.log(20) / 11)


# ---------------------------------------------------------------- fitting

def test_fit_recovers_exact_model_A():
    T = np.geomspace(0.05, 0.8, 8)
    fit = fit_scaling(synthetic_curve(T, 1.5 + 2.0 / T), "A")
    assert fit.a == pytest.approx(1.5) and fit.b == pytest.approx(2.0)
    assert fit.c is None and fit.r2 == pytest.approx(1.0)


def test_fit_recovers_exact_model_B():
    T = np.geomspace(0.05, 0.8, 10)
    y = 0.5 + 1.0 / T + 0.01 / T ** 3
    fit = fit_scaling(synthetic_curve(T, y), "B", gamma=0.75)
    assert fit.exponent == pytest.approx(3.0)
    assert (fit.a, fit.b, fit.c) == pytest.approx((0.5, 1.0, 0.01), rel=1e-8)
    contrib = fit.contributions(0.05)
    assert contrib["1/T^3"] > contrib["1/T"]
    assert fit.predict([0.1])[0] == pytest.approx(0.5 + 10 + 10)


def test_fit_r2_in_unit_interval():
    rng = np.random.default_rng(1)
    T = np.geomspace(0.05, 0.8, 8)
    fit = fit_scaling(synthetic_curve(T, rng.normal(size=8)), "A")
    assert 0.0 <= fit.r2 <= 1.0


def test_fit_needs_four_samples():
    T = [0.1, 0.2, 0.3]
    with pytest.raises(InsufficientSamples):
        fit_scaling(synthetic_curve(T, [3, 2, 1]), "A", samples="all")


def test_fit_model_B_on_minimum_sample_count():
    T = [0.1, 0.2, 0.3, 0.4]
    fit = fit_scaling(synthetic_curve(T, [4, 3, 2, 1]), "B", gamma=0.75)
    assert fit.n_samples == 4 and 0.0 <= fit.r2 <= 1.0


def test_fit_converged_selector():
    T = np.geomspace(0.05, 0.8, 8)
    curve = synthetic_curve(T, 1 + 1 / T, converged=False)
    with pytest.raises(InsufficientSamples):
        fit_scaling(curve, "A", samples="converged")
    fit = fit_scaling(curve, "A", samples="auto")
    assert fit.sample_set == "all" and fit.n_samples == 8
    curve.samples[0].converged = True
    with pytest.raises(InsufficientSamples):
        fit_scaling(curve, "A", samples="converged")


def test_fit_skips_failed_samples():
    T = np.geomspace(0.05, 0.8, 8)
    curve = synthetic_curve(T, 1 + 1 / T)
    curve.samples[2] = CostSample(curve.samples[2].T, math.nan, 10, 512, False, None, "boom")
    fit = fit_scaling(curve, "A")
    assert fit.n_samples == 7 and fit.b == pytest.approx(1.0)


def test_fit_gamma_half_is_degenerate():
    T = np.geomspace(0.05, 0.8, 8)
    with pytest.raises(DegenerateDesign):
        fit_scaling(synthetic_curve(T, 1 + 1 / T), "B", gamma=0.5)


def test_fit_rejects_bad_arguments():
    T = np.geomspace(0.05, 0.8, 8)
    curve = synthetic_curve(T, 1 + 1 / T)
    with pytest.raises(ValueError):
        fit_scaling(curve, "C")
    with pytest.raises(ValueError):
        fit_scaling(curve, "B")
    with pytest.raises(ValueError):
        fit_scaling(curve, "B", gamma=1.2)
    with pytest.raises(ValueError):
        fit_scaling(curve, "A", samples="some")


def test_heat_fit_b_positive(heat_curve):
    fit = fit_scaling(heat_curve, "A", samples="all")
    assert fit.b > 0 and fit.sample_set == "all"


def test_fit_json_roundtrip(tmp_path):
    T = np.geomspace(0.05, 0.8, 10)
    fit = fit_scaling(synthetic_curve(T, 0.5 + 1 / T + 0.01 / T ** 3), "B", gamma=0.75)
    p = tmp_path / "fit.json"
    dump_fit(fit, p, meta={"scenario_sha256": "abc"})
    doc = json.loads(p.read_text())
    assert doc["meta"] == {"scenario_sha256": "abc"}
    assert FitResult(**doc["fit"]) == fit


def test_gnuplot_script_mentions_data_and_models():
    T = np.geomspace(0.05, 0.8, 10)
    curve = synthetic_curve(T, 0.5 + 1 / T + 0.01 / T ** 3)
    fits = [fit_scaling(curve, "A"), fit_scaling(curve, "B", gamma=0.75)]
    text = gnuplot_script(curve, fits, "cost.csv")
    assert "'cost.csv' using 1:2" in text
    assert "model A" in text and "model B" in text and "/x**3.0" in text
