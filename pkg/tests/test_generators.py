import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gconvex.errors import DivisionHazard, NonLipschitzWarning
from gconvex.generators import (
    GeneratorSpec,
    ValidationDomain,
    classify_generator,
    estimate_lipschitz,
    eval_generator,
    parse_generator,
)

SMALL = ValidationDomain(n_t=11, n_y=41, n_z=41)


class TestDivisionHazard:
    def test_vanishing_denominator_rejected(self):
        with pytest.raises(DivisionHazard):
            parse_generator("z1/y", 1)

    def test_sign_change_between_samples_rejected(self):
        # no grid point hits zero, but the denominator crosses it
        with pytest.raises(DivisionHazard):
            parse_generator("1/(y - 0.0000001)", 1)

    def test_safe_denominator_accepted(self):
        expr = parse_generator("z1/(t + 1)", 1)
        assert eval_generator(expr, 1.0, 0.0, (4.0,)) == 2.0


class TestLipschitz:
    def test_abs_slope_one(self):
        # oracle: |z| has slope +-1 everywhere it is differentiable
        expr = parse_generator("abs(z1)", 1)
        assert estimate_lipschitz(expr, SMALL) == pytest.approx(1.0, abs=1e-12)

    def test_linear_driver_max_coefficient(self):
        # oracle: coefficient magnitudes under the sum norm -> max(0.5, 2) = 2
        expr = parse_generator("0.5*y + 2*z1", 1)
        assert estimate_lipschitz(expr, SMALL) == pytest.approx(2.0, abs=1e-12)

    def test_constant_zero(self):
        expr = parse_generator("0", 1)
        assert estimate_lipschitz(expr, SMALL) == 0.0

    def test_two_dim_norm(self):
        # oracle: |grad norm(z)| = 1 along each coordinate section the slope
        # is |z_i|/|z| <= 1, attained on the axis
        expr = parse_generator("norm(z)", 2)
        est = estimate_lipschitz(expr, ValidationDomain(n_t=3, n_y=3, n_z=41))
        assert 0.9 <= est <= 1.0 + 1e-12

    def test_refinement_stabilizes_for_piecewise_linear(self):
        # ratio of successive refinements -> 1 within 1%
        expr = parse_generator("0.3*y + max(z1, -2*z1) + abs(y - 1)", 1)
        doms = [ValidationDomain(n_t=5, n_y=n, n_z=n) for n in (21, 41, 81)]
        ests = [estimate_lipschitz(expr, d, check_refinement=False) for d in doms]
        assert ests[2] / ests[1] <= 1.01
        assert ests[1] >= ests[0] - 1e-12  # nondecreasing under refinement

    def test_unbounded_slope_warns(self):
        expr = parse_generator("1/(abs(y) + 0.0001)", 1)
        with pytest.warns(NonLipschitzWarning):
            estimate_lipschitz(expr, ValidationDomain(n_t=3, n_y=201, n_z=3))


class TestClassification:
    def _flags(self, src, dim_z=1):
        return classify_generator(parse_generator(src, dim_z), SMALL)

    def test_abs_z(self):
        assert self._flags("abs(z1)") == {
            "independent_of_y": True, "independent_of_z": False,
            "zero_at_origin": True, "zero_on_y_axis": True,
        }

    def test_linear_y(self):
        assert self._flags("y") == {
            "independent_of_y": False, "independent_of_z": True,
            "zero_at_origin": True, "zero_on_y_axis": False,
        }

    def test_constant(self):
        assert self._flags("1.0") == {
            "independent_of_y": True, "independent_of_z": True,
            "zero_at_origin": False, "zero_on_y_axis": False,
        }

    def test_time_dependent(self):
        flags = self._flags("t*z1")
        assert flags["independent_of_y"] and not flags["independent_of_z"]
        assert flags["zero_on_y_axis"]

    @given(st.sampled_from(["abs(z1)", "y", "-y", "1.0", "t*z1", "0.5*y + 2*z1",
                            "max(z1, 0)", "abs(z1) + 1", "min(y, 0)", "t"]))
    @settings(max_examples=20, deadline=None)
    def test_flag_consistency(self, src):
        flags = classify_generator(parse_generator(src, 1), SMALL)
        if flags["zero_on_y_axis"]:
            assert flags["zero_at_origin"]


class TestGeneratorSpec:
    def test_from_source(self):
        spec = GeneratorSpec.from_source("abs(z1)", domain=SMALL)
        assert spec.mu_hat == pytest.approx(1.0, abs=1e-12)
        assert spec.independent_of_y and spec.zero_on_y_axis
        assert spec.dim_z == 1

    def test_invariant_enforced(self):
        spec = GeneratorSpec.from_source("y", domain=SMALL)
        with pytest.raises(ValueError):
            GeneratorSpec(expr=spec.expr, mu_hat=1.0,
                          independent_of_y=False, independent_of_z=True,
                          zero_at_origin=False, zero_on_y_axis=True)

    def test_mu_hat_nonnegative(self):
        spec = GeneratorSpec.from_source("0", domain=SMALL)
        with pytest.raises(ValueError):
            GeneratorSpec(expr=spec.expr, mu_hat=-1.0,
                          independent_of_y=True, independent_of_z=True,
                          zero_at_origin=True, zero_on_y_axis=True)
