import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otfs.dataset import Dataset
from otfs.distmat import OtConfig, class_distance_matrix, frobenius_utility, mean_scale
from otfs.ot_core import GwConfig, emd_exact, entropic_gw, gw_objective, pairwise_distances, wasserstein1_1d

from oracles import transport_lp_vertices, w1_cdf_1d

pytestmark = pytest.mark.filterwarnings("ignore::otfs.errors.ConvergenceWarning")

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])

values = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
samples = st.lists(values, min_size=1, max_size=12)


@st.composite
def simplex(draw, n):
    w = draw(arrays(float, n, elements=st.floats(0.05, 1.0)))
    return w / w.sum()


@st.composite
def transport_problem(draw):
    m = draw(st.integers(1, 4))
    n = draw(st.integers(1, 4))
    cost = draw(arrays(float, (m, n), elements=st.floats(0, 10)))
    return cost, draw(simplex(m)), draw(simplex(n))


class TestW1Metric:
    @SETTINGS
    @given(samples, samples)
    def test_symmetric_nonnegative(self, a, b):
        d = wasserstein1_1d(a, b)
        assert d >= 0
        assert d == wasserstein1_1d(b, a)

    @SETTINGS
    @given(samples)
    def test_identity(self, a):
        assert wasserstein1_1d(a, a) == 0

    @SETTINGS
    @given(samples, samples, samples)
    def test_triangle(self, a, b, c):
        ab, bc, ac = wasserstein1_1d(a, b), wasserstein1_1d(b, c), wasserstein1_1d(a, c)
        assert ac <= ab + bc + 1e-9 * (1 + ab + bc)

    @SETTINGS
    @given(samples, samples, st.floats(-50, 50))
    def test_translation(self, a, b, t):
        shifted = wasserstein1_1d(np.add(a, t), np.add(b, t))
        assert shifted == pytest.approx(wasserstein1_1d(a, b), abs=1e-9 * (1 + abs(t)) * 100)

    @SETTINGS
    @given(samples, samples)
    def test_matches_cdf_integral(self, a, b):
        assert wasserstein1_1d(a, b) == pytest.approx(w1_cdf_1d(a, b), rel=1e-9, abs=1e-9)

    @SETTINGS
    @given(samples, st.floats(-50, 50))
    def test_point_shift(self, a, t):
        assert wasserstein1_1d(a, np.add(a, t)) == pytest.approx(abs(t), rel=1e-9, abs=1e-9)


class TestEmd:
    @SETTINGS
    @given(transport_problem())
    def test_vertex_oracle(self, problem):
        cost, a, b = problem
        value, plan = emd_exact(cost, a, b)
        assert value == pytest.approx(transport_lp_vertices(cost, a, b), abs=1e-9)
        assert plan.marginal_error() <= 1e-12
        assert np.all(plan.coupling >= 0)

    @SETTINGS
    @given(transport_problem(), st.floats(0, 5))
    def test_constant_shift(self, problem, c):
        cost, a, b = problem
        assert emd_exact(cost + c, a, b)[0] == pytest.approx(emd_exact(cost, a, b)[0] + c, abs=1e-9)


def _labeled_data(draw, d):
    n_per = draw(st.integers(1, 4))
    X = draw(arrays(float, (2 * n_per, d), elements=st.floats(-10, 10)))
    return Dataset(X, labels=[0, 1] * n_per, class_names=("a", "b"))


class TestDistmat:
    @SETTINGS
    @given(st.data())
    def test_invariants(self, data):
        ds = _labeled_data(data.draw, 2)
        M = class_distance_matrix(ds, [0, 1])
        np.testing.assert_array_equal(M.D, M.D.T)
        assert np.all(np.diag(M.D) == 0) and np.all(M.D >= 0)

    @SETTINGS
    @given(st.data(), st.floats(0.1, 10), st.floats(-10, 10))
    def test_affine_commutes(self, data, s, t):
        ds = _labeled_data(data.draw, 1)
        X2 = Dataset(ds.X * s + t, labels=ds.labels, class_names=ds.class_names)
        a = class_distance_matrix(ds, [0]).D
        np.testing.assert_allclose(class_distance_matrix(X2, [0]).D, s * a, rtol=1e-9, atol=1e-9 * s * 20)

    @SETTINGS
    @given(st.data())
    def test_utility_monotone_in_raw_units(self, data):
        ds = _labeled_data(data.draw, 2)
        raw = OtConfig(standardize=False)
        one = frobenius_utility(class_distance_matrix(ds, [0], raw))
        both = frobenius_utility(class_distance_matrix(ds, [0, 1], raw))
        assert both >= one * (1 - 1e-9) - 1e-9

    @SETTINGS
    @given(st.data())
    def test_mean_scale_idempotent(self, data):
        ds = _labeled_data(data.draw, 1)
        M = class_distance_matrix(ds, [0])
        if M.D[0, 1] == 0:
            return
        once = mean_scale(M)
        np.testing.assert_allclose(mean_scale(once).D, once.D, rtol=1e-12)


class TestGw:
    @settings(max_examples=25, deadline=None)
    @given(arrays(float, (5, 2), elements=st.floats(-5, 5)), arrays(float, (4, 3), elements=st.floats(-5, 5)))
    def test_nonnegative_and_bounded(self, X, Y):
        Dx, Dy = pairwise_distances(X), pairwise_distances(Y)
        cfg = GwConfig(normalize_metrics=False)
        value, plan = entropic_gw(Dx, Dy, cfg=cfg)
        assert value >= 0
        assert plan.marginal_error() <= 1e-9
        # never worse than the independent coupling
        assert value <= gw_objective(Dx, Dy, np.outer(plan.row_marginal, plan.col_marginal), cfg.p, cfg.q) + 1e-12

    @settings(max_examples=20, deadline=None)
    @given(arrays(float, (5, 2), elements=st.floats(-5, 5)), st.permutations(range(5)))
    def test_relabeling_isometry(self, X, perm):
        Dx = pairwise_distances(X)
        Dy = Dx[np.ix_(perm, perm)]
        value, _ = entropic_gw(Dx, Dy, cfg=GwConfig(normalize_metrics=False))
        assert value <= 1e-6 * (1 + Dx.max())
