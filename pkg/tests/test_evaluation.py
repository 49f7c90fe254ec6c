import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhatt import classical, quantum, scenarios
from bhatt.classical import EstimatorTable
from bhatt.errors import DimensionMismatch, GridMismatch, SupportMismatch
from bhatt.evaluation import (
    CSV_COLUMNS,
    BoundTable,
    bias_bound_check,
    comparison_report,
    estimator_moments,
    gnuplot_script,
    grid_derivatives,
    integrated_mse_gap,
    mse_scan,
    quantum_estimator_moments,
)
from bhatt.model import evaluate_stack
from helpers import qubit_stack


def crb_estimator(model, theta0):
    stack = evaluate_stack(model, theta0, 1)
    return classical.bhatt_estimator(stack, classical.bhatt_matrix(stack, 1))


def order_n_estimator(model, theta0, n):
    stack = evaluate_stack(model, theta0, n)
    return classical.bhatt_estimator(stack, classical.bhatt_matrix(stack, n))


def constant(model, c):
    return EstimatorTable(c, np.full(model.size, c), tuple(range(model.size)), 0)


class TestMoments:
    def test_bernoulli_crb_estimator(self):
        model = scenarios.bernoulli()
        est = crb_estimator(model, 0.5)
        m = estimator_moments(model, est, 0.5)
        assert m.bias == pytest.approx(0.0, abs=1e-15)
        assert m.variance == pytest.approx(0.25)
        assert m.mse == pytest.approx(0.25)
        assert estimator_moments(model, est, 0.6).bias == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("theta", [0.1, 0.45, 0.9])
    def test_constant_estimator(self, theta):
        model = scenarios.binomial(2)
        m = estimator_moments(model, constant(model, 0.3), theta)
        assert m.bias == pytest.approx(0.3 - theta)
        assert m.variance == pytest.approx(0.0, abs=1e-15)
        assert m.mse == pytest.approx((0.3 - theta) ** 2)

    def test_support_mismatch(self):
        est = crb_estimator(scenarios.binomial(3), 0.4)
        with pytest.raises(SupportMismatch):
            estimator_moments(scenarios.bernoulli(), est, 0.4)

    def test_quantum_constant_operator(self):
        est = quantum.HermitianEstimator(0.1, 0.1 * np.eye(2, dtype=complex), 0)
        m = quantum_estimator_moments(lambda t: scenarios.qubit_rho(0.25, t), est, 0.3)
        assert m.bias == pytest.approx(-0.2)
        assert m.variance == pytest.approx(0.0, abs=1e-15)

    def test_quantum_order_two_at_theta0(self):
        stack = qubit_stack(0.25, 0.1, 2)
        est = quantum.q_bhatt_estimator(stack, 2)
        bound = quantum.q_bound_hierarchy(stack, 2)[1].value
        m = quantum_estimator_moments(lambda t: scenarios.qubit_rho(0.25, t), est, 0.1)
        assert abs(m.bias) <= 1e-9
        assert m.variance >= bound * (1 - 1e-6)
        assert all(isinstance(v, float) for v in (m.bias, m.variance, m.mse))

    def test_quantum_dimension_mismatch(self):
        est = quantum.HermitianEstimator(0.1, np.eye(3, dtype=complex), 0)
        with pytest.raises(DimensionMismatch):
            quantum_estimator_moments(lambda t: scenarios.qubit_rho(0.25, t), est, 0.1)


class TestScan:
    def test_singleton_grid(self):
        model = scenarios.binomial(3)
        est = crb_estimator(model, 0.4)
        curve = mse_scan(model, est, [0.45], "crb")
        m = estimator_moments(model, est, 0.45)
        assert len(curve) == 1
        assert (curve.bias[0], curve.variance[0], curve.mse[0]) == (m.bias, m.variance, m.mse)

    def test_threads_match_sequential(self):
        model = scenarios.binomial(3)
        est = order_n_estimator(model, 0.4, 2)
        grid = np.linspace(0.3, 0.5, 51)
        a = mse_scan(model, est, grid, threads=1)
        b = mse_scan(model, est, grid, threads=4)
        for field in ("bias", "variance", "mse"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field))

    def test_quantum_scan_accepts_family(self):
        family = scenarios.qubit_model(scenarios.QubitConfig(0.25, 0.1))
        est = quantum.q_bhatt_estimator(family.stack(0.1, 2), 2)
        curve = mse_scan(family, est, np.linspace(0.05, 0.15, 11))
        assert bias_bound_check(curve).passed

    @pytest.mark.parametrize("grid", [[], [0.2, 0.1], [[0.1, 0.2]]])
    def test_bad_grids(self, grid):
        model = scenarios.bernoulli()
        with pytest.raises(ValueError):
            mse_scan(model, crb_estimator(model, 0.5), grid)

    @settings(max_examples=40, deadline=None)
    @given(values=st.lists(st.floats(-5, 5), min_size=4, max_size=4), theta=st.floats(0.05, 0.95))
    def test_decomposition(self, values, theta):
        model = scenarios.binomial(3)
        est = EstimatorTable(0.5, np.array(values), (0, 1, 2, 3), 0)
        curve = mse_scan(model, est, [theta])
        assert curve.mse[0] == pytest.approx(curve.variance[0] + curve.bias[0] ** 2, rel=1e-10, abs=1e-300)
        assert curve.mse[0] >= curve.bias[0] ** 2 * (1 - 1e-12)

    def test_mach_zehnder_curves(self):
        cfg = scenarios.MachZehnderConfig(5000, 1e-3, window_theta=1.5e-3)
        model = scenarios.mach_zehnder_model(cfg)
        grid = np.linspace(0.5e-3, 1.5e-3, 401)
        i0 = 200
        stack = evaluate_stack(model, 1e-3, 2)
        C = classical.bhatt_matrix(stack, 2)
        crb = mse_scan(model, classical.bhatt_estimator(stack, C.leading(1)), grid)
        bh2 = mse_scan(model, classical.bhatt_estimator(stack, C), grid)
        assert crb.mse[i0] == pytest.approx(1 / (2 * 5000**2), rel=1e-3)
        d1, d2 = grid_derivatives(bh2.bias, grid, i0)
        assert max(abs(bh2.bias[i0]), abs(d1), abs(d2)) <= 1e-6


class TestBiasCheck:
    def test_constant_curve_saturates(self):
        model = scenarios.bernoulli()
        curve = mse_scan(model, constant(model, 0.2), np.linspace(0.1, 0.9, 9))
        check = bias_bound_check(curve)
        assert check.passed
        np.testing.assert_allclose(check.slack, 0.0, atol=1e-15)

    def test_slack_is_variance(self):
        model = scenarios.bernoulli()
        curve = mse_scan(model, crb_estimator(model, 0.5), np.linspace(0.1, 0.9, 9))
        check = bias_bound_check(curve)
        assert check.passed
        np.testing.assert_allclose(check.slack, curve.variance, rtol=1e-12)

    def test_failure_is_reported_not_raised(self):
        model = scenarios.bernoulli()
        curve = mse_scan(model, crb_estimator(model, 0.5), [0.3, 0.6])
        broken = type(curve)(curve.name, curve.grid, curve.bias + 1.0, curve.variance, curve.mse)
        assert not bias_bound_check(broken).passed


class TestGap:
    def curves(self, n_points):
        model = scenarios.binomial(3)
        grid = np.linspace(0.3, 0.5, n_points)
        a = mse_scan(model, crb_estimator(model, 0.4), grid, "crb")
        b = mse_scan(model, order_n_estimator(model, 0.4, 2), grid, "bhb2")
        return a, b

    def test_identical_curves(self):
        a, _ = self.curves(41)
        assert integrated_mse_gap(a, a, 0.1, 0.4) == 0.0

    def test_grid_refinement_stable(self):
        coarse = integrated_mse_gap(*self.curves(201), 0.15, 0.4)
        fine = integrated_mse_gap(*self.curves(401), 0.15, 0.4)
        assert abs(fine - coarse) <= 0.01 * abs(fine)

    def test_interpolated_ends(self):
        # MSE difference is linear in theta here, so trapezoid is exact
        grid = np.linspace(0.0, 1.0, 11)
        a = type(self.curves(3)[0])("a", grid, grid * 0, grid * 0, 2 * grid)
        b = type(a)("b", grid, grid * 0, grid * 0, grid * 0)
        assert integrated_mse_gap(a, b, 0.33, 0.5) == pytest.approx(0.33, rel=1e-12)

    def test_mismatch_and_coverage(self):
        a, b = self.curves(41)
        model = scenarios.binomial(3)
        other = mse_scan(model, crb_estimator(model, 0.4), np.linspace(0.3, 0.5, 21))
        with pytest.raises(GridMismatch):
            integrated_mse_gap(a, other, 0.1, 0.4)
        with pytest.raises(GridMismatch):
            integrated_mse_gap(a, b, 0.5, 0.4)


def test_grid_derivatives_exact_on_polynomials():
    grid = np.linspace(-1, 1, 21)
    values = 3 * grid**3 - grid**2 + 2 * grid
    d1, d2, d3 = grid_derivatives(values, grid, 10, orders=3)
    assert d1 == pytest.approx(2.0, abs=1e-10)
    assert d2 == pytest.approx(-2.0, abs=1e-9)
    assert d3 == pytest.approx(18.0, abs=1e-7)
    with pytest.raises(GridMismatch):
        grid_derivatives(values, grid, 2)


class TestReport:
    def qubit_bundle(self):
        stack = qubit_stack(0.25, 0.1, 2)
        reps = quantum.q_bound_hierarchy(stack, 2)
        table = BoundTable("quantum", 0.1, reps, [True, True, True], 2, 2)
        family = scenarios.qubit_model(scenarios.QubitConfig(0.25, 0.1))
        grid = np.linspace(0.08, 0.12, 5)
        curves = [mse_scan(family, quantum.q_bhatt_estimator(stack, m), grid, f"q{m}") for m in (1, 2)]
        return curves, table

    def test_empty_curves_give_header_only(self):
        buf = io.StringIO()
        comparison_report([], None, buf)
        assert buf.getvalue() == ",".join(CSV_COLUMNS) + "\n"

    def test_qubit_report_columns(self):
        curves, table = self.qubit_bundle()
        buf = io.StringIO()
        summary = comparison_report(curves, table, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 2 * 5
        cr, bh = (float(v) for v in lines[1].split(",")[5:7])
        assert bh >= cr
        assert "order 2: bound=11743.8" in summary and "estimator=exists" in summary

    def test_report_to_paths_is_deterministic(self, tmp_path):
        curves, table = self.qubit_bundle()
        outputs = []
        for tag in "ab":
            csv_path, summary_path = tmp_path / f"{tag}.csv", tmp_path / f"{tag}.txt"
            comparison_report(curves, table, csv_path, summary_path)
            outputs.append((csv_path.read_bytes(), summary_path.read_bytes()))
        assert outputs[0] == outputs[1]

    def test_gnuplot_script(self):
        script = gnuplot_script("scan.csv", ["crb", "bhb2"])
        assert "set datafile separator ','" in script
        assert script.count("with lines") == 2
        assert "using (strcol(2) eq 'bhb2' ? $1 : 1/0):5" in script
