"""Tests for VaR, conditional VaR, and partial exceedance probabilities."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpdflow.errors import DataError, InputError
from gpdflow.mgpd import MarginalParams
from gpdflow.model import GPDFlowModel
from gpdflow.realnvp import FlowNetwork
from gpdflow.risk import (
    CoVaRQuery,
    EventConstraint,
    RiskEstimate,
    covar_empirical,
    covar_model,
    partial_exceedance_probability,
    var,
)

TAU = np.array([1.0, 2.0])


def toy_model(fit_info=None):
    """Identity-initialized flow: a Gaussian dependence generator, cheap to
    sample, good enough to exercise every code path."""
    flow = FlowNetwork.build(2, n_layers=2, hidden=4, seed=1)
    margins = MarginalParams(sigma=np.array([0.5, 1.2]), gamma=np.array([-0.1, 0.2]))
    return GPDFlowModel(
        flow,
        margins,
        threshold=TAU,
        fit_info={"n_obs": 300} if fit_info is None else fit_info,
    )


class TestVar:
    def test_small_sample_examples(self):
        assert var([1.0, 2.0, 3.0, 4.0], 0.5) == 2.0
        assert var([1.0, 2.0, 3.0, 4.0], 0.51) == 3.0
        assert var([1.0, 2.0, 3.0, 4.0], 0.75) == 3.0
        assert var([1.0, 2.0, 3.0, 4.0], 0.76) == 4.0
        assert var([4.0, 2.0, 1.0, 3.0], 0.999) == 4.0

    def test_constant_sample(self):
        assert var(np.full(17, 2.5), 0.9) == 2.5

    def test_validation(self):
        with pytest.raises(InputError):
            var([], 0.5)
        with pytest.raises(InputError):
            var([1.0], 0.0)
        with pytest.raises(InputError):
            var([1.0], 1.0)
        with pytest.raises(InputError):
            var([np.nan, 1.0], 0.5)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
            min_size=1,
            max_size=50,
        ),
        st.floats(0.01, 0.99),
        st.floats(0.01, 0.99),
    )
    def test_order_statistic_and_monotonicity(self, xs, eta1, eta2):
        xs_sorted = sorted(xs)
        k = math.ceil(eta1 * len(xs))
        assert var(xs, eta1) == xs_sorted[k - 1]
        lo, hi = min(eta1, eta2), max(eta1, eta2)
        assert var(xs, lo) <= var(xs, hi)


class TestCoVaRQuery:
    def test_validation(self):
        with pytest.raises(InputError):
            CoVaRQuery(target=1, conditioning=1, alpha=0.5, beta=0.9)
        with pytest.raises(InputError):
            CoVaRQuery(target=-1, conditioning=0, alpha=0.5, beta=0.9)
        with pytest.raises(InputError):
            CoVaRQuery(target=1, conditioning=0, alpha=0.0, beta=0.9)
        with pytest.raises(InputError):
            CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=1.0)

    def test_check_dim(self):
        q = CoVaRQuery(target=3, conditioning=0, alpha=0.5, beta=0.9)
        with pytest.raises(InputError, match="exceed"):
            q.check_dim(2)
        q.check_dim(4)


class TestRiskEstimate:
    def test_band_validation(self):
        with pytest.raises(InputError):
            RiskEstimate(point=1.0, lo=0.5)
        with pytest.raises(InputError):
            RiskEstimate(point=1.0, lo=2.0, hi=1.0)
        est = RiskEstimate(point=1.0, lo=0.5, hi=1.5, replicates=10)
        assert est.lo < est.point < est.hi


class TestCovarEmpirical:
    def test_comonotone_hand_value(self):
        x = np.arange(1000.0)
        np.random.default_rng(0).shuffle(x)
        data = np.column_stack([x, 2.0 * x])
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        # stress set is {x >= 899}: 101 points; its median doubles to 1898
        assert covar_empirical(data, q).point == 1898.0

    def test_independent_columns_match_unconditional(self):
        rng = np.random.default_rng(42)
        data = np.column_stack(
            [rng.standard_normal(20_000), rng.uniform(size=20_000)]
        )
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        assert abs(covar_empirical(data, q).point - 0.5) < 0.045

    def test_alpha_monotone(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal((5000, 2))
        pts = [
            covar_empirical(
                data, CoVaRQuery(target=1, conditioning=0, alpha=a, beta=0.8)
            ).point
            for a in (0.3, 0.5, 0.7, 0.9)
        ]
        assert pts == sorted(pts)

    def test_constant_target(self):
        data = np.column_stack([np.arange(100.0), np.full(100, 7.0)])
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.9, beta=0.5)
        assert covar_empirical(data, q).point == 7.0

    def test_thin_conditioning_set(self):
        data = np.random.default_rng(0).standard_normal((100, 2))
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        with pytest.raises(DataError, match="at least 20"):
            covar_empirical(data, q)

    def test_shape_validation(self):
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        with pytest.raises(InputError):
            covar_empirical(np.ones(30), q)
        with pytest.raises(InputError, match="exceed"):
            covar_empirical(
                np.ones((30, 2)),
                CoVaRQuery(target=5, conditioning=0, alpha=0.5, beta=0.9),
            )


class TestCovarModel:
    def test_deterministic(self):
        m = toy_model()
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.7, beta=0.9)
        a = covar_model(m, np.array([1.2, 2.5]), q, replicates=50, seed=4)
        b = covar_model(m, np.array([1.2, 2.5]), q, replicates=50, seed=4)
        assert a == b

    def test_band_brackets_point(self):
        m = toy_model()
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.7, beta=0.9)
        est = covar_model(m, np.array([1.2, 2.5]), q, replicates=50, seed=4)
        assert est.replicates == 50
        assert est.lo <= est.point <= est.hi

    def test_agrees_with_empirical_route(self):
        # the model route conditions on an external stress VaR on the raw
        # scale; hand the empirical route the same population and level
        m = toy_model()
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.7, beta=0.9)
        raw = m.sample(200_000, seed=100) + TAU
        vb = np.array([var(raw[:, 0], q.beta), var(raw[:, 1], q.beta)])
        pe = covar_empirical(raw, q).point
        pm = covar_model(m, vb, q, n_mc=200_000, replicates=1, seed=0).point
        assert abs(pm - pe) < 0.12

    def test_single_replicate_has_no_band(self):
        m = toy_model()
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        est = covar_model(m, np.array([1.2, 2.5]), q, replicates=1, seed=0)
        assert est.replicates == 1
        assert est.lo is None and est.hi is None

    def test_preconditions(self):
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        bare = GPDFlowModel(
            FlowNetwork.build(2, n_layers=2, hidden=4, seed=1),
            MarginalParams(sigma=np.array([0.5, 1.2]), gamma=np.array([-0.1, 0.2])),
        )
        with pytest.raises(InputError, match="no threshold"):
            covar_model(bare, np.array([1.2, 2.5]), q)
        m = toy_model()
        with pytest.raises(InputError, match="length"):
            covar_model(m, np.array([1.2, 2.5, 3.0]), q)
        with pytest.raises(InputError, match="component 1"):
            covar_model(m, np.array([1.2, 1.5]), q)
        with pytest.raises(InputError, match="replicate"):
            covar_model(m, np.array([1.2, 2.5]), q, replicates=0)
        with pytest.raises(InputError, match="n_mc"):
            covar_model(toy_model(fit_info={}), np.array([1.2, 2.5]), q)

    def test_partially_empty_replicates_warn(self):
        m = toy_model()
        ref = m.sample(100_000, seed=5)
        stress = 1.0 + float(np.quantile(ref[:, 0], 0.995))
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        with pytest.warns(RuntimeWarning, match="dropped"):
            est = covar_model(
                m, np.array([stress, 2.5]), q, n_mc=200, replicates=30, seed=0
            )
        assert 0 < est.replicates < 30

    def test_all_replicates_empty(self):
        # component 0 has a finite upper endpoint sigma/|gamma| = 5
        m = toy_model()
        q = CoVaRQuery(target=1, conditioning=0, alpha=0.5, beta=0.9)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(DataError, match="empty conditioning"):
                covar_model(
                    m, np.array([6.5, 2.5]), q, n_mc=100, replicates=5, seed=0
                )


class TestPartialExceedance:
    def test_constraint_validation(self):
        with pytest.raises(InputError):
            EventConstraint(index=0, side=">=", level=1.0)
        with pytest.raises(InputError):
            EventConstraint(index=-1, side=">", level=1.0)
        with pytest.raises(InputError):
            EventConstraint(index=0, side=">", level=np.inf)

    def test_empty_constraints_return_union_fraction(self):
        m = toy_model()
        raw = np.full((40, 2), -1.0) + TAU
        raw[:10, 0] = 5.0
        assert partial_exceedance_probability(m, raw, []) == 0.25

    def test_event_must_reach_threshold(self):
        m = toy_model()
        raw = m.sample(500, seed=0) + TAU
        with pytest.raises(InputError, match="threshold"):
            partial_exceedance_probability(
                m, raw, [EventConstraint(0, ">", 0.5), EventConstraint(1, "<", 9.0)]
            )
        with pytest.raises(InputError, match="threshold"):
            partial_exceedance_probability(m, raw, [EventConstraint(1, "<", 9.0)])

    def test_index_and_shape_validation(self):
        m = toy_model()
        raw = m.sample(100, seed=0) + TAU
        with pytest.raises(InputError, match="dimension"):
            partial_exceedance_probability(m, raw, [EventConstraint(5, ">", 9.0)])
        with pytest.raises(InputError, match="dimension"):
            partial_exceedance_probability(m, raw[:, :1], [])
        bare = GPDFlowModel(m.flow, m.margins)
        with pytest.raises(InputError, match="no threshold"):
            partial_exceedance_probability(bare, raw, [])

    def test_monotone_under_extra_constraints(self):
        m = toy_model()
        raw = m.sample(2000, seed=1) + TAU
        base = [EventConstraint(0, ">", 1.5)]
        p1 = partial_exceedance_probability(m, raw, base, seed=7)
        p2 = partial_exceedance_probability(
            m, raw, base + [EventConstraint(1, "<", 4.0)], seed=7
        )
        p3 = partial_exceedance_probability(
            m, raw, [EventConstraint(0, ">", 2.0)], seed=7
        )
        assert 0.0 <= p2 <= p1 <= 1.0
        assert p3 <= p1

    def test_deterministic(self):
        m = toy_model()
        raw = m.sample(1000, seed=2) + TAU
        cs = [EventConstraint(0, ">", 1.5), EventConstraint(1, ">", 3.0)]
        assert partial_exceedance_probability(
            m, raw, cs, seed=3
        ) == partial_exceedance_probability(m, raw, cs, seed=3)
