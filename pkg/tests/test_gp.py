import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultvote import gp
from faultvote.gp import GpSurface, KernelParams, MCMCConfig, TrainingSet

BOUNDS = [[1.0, 25.0], [0.0, 0.1]]


def dense_lml(X, y, params, bounds=BOUNDS):
    """Brute-force evidence: explicit loops, slogdet and a dense solve."""
    b = np.asarray(bounds, dtype=float)
    span = b[:, 1] - b[:, 0]
    Z = (np.asarray(X, dtype=float) - b[:, 0]) / span
    n = len(y)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            dl = Z[i, 0] - Z[j, 0]
            ds = Z[i, 1] - Z[j, 1]
            if params.kind == "product":
                K[i, j] = (params.theta1 * math.exp(-dl * dl / params.theta2)
                           * params.theta3 * math.exp(-ds * ds / params.theta4))
            else:
                K[i, j] = params.theta1 * math.exp(-(dl * dl + ds * ds) / params.theta2)
    K += np.eye(n) * (params.sigma_n ** 2 + 1e-10 * np.trace(K) / n)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return -0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)


def random_set(rng, m, kind="product"):
    X = np.column_stack([rng.integers(1, 26, m), rng.uniform(0, 0.1, m)])
    y = rng.standard_normal(m)
    return TrainingSet(X, y, bounds=BOUNDS)


# --------------------------------------------------------------------------
# kernel_eval
# --------------------------------------------------------------------------

def test_kernel_same_point_is_amplitude():
    p = KernelParams(2.0, 0.3, 1.5, 0.7, kind="product")
    assert gp.kernel_eval(p, (3.0, 0.02), (3.0, 0.02)) == 3.0


def test_kernel_unit_example():
    p = KernelParams(1.0, 1.0, 1.0, 1.0)
    assert gp.kernel_eval(p, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(0.367879441171, rel=1e-12)


def test_kernel_single_uses_full_distance():
    p = KernelParams(2.0, 4.0, kind="single")
    assert gp.kernel_eval(p, (0.0, 0.0), (1.0, 1.0)) == pytest.approx(2.0 * math.exp(-0.5))


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
       st.sampled_from(gp.KINDS))
def test_kernel_symmetric(a, b, kind):
    p = KernelParams(1.3, 0.4, 0.8, 2.1, kind=kind)
    assert gp.kernel_eval(p, a, b) == gp.kernel_eval(p, b, a)


def test_kernel_params_positive():
    with pytest.raises(ValueError):
        KernelParams(0.0, 1.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, 1.0, sigma_n=-1.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, 1.0, kind="matern")


# --------------------------------------------------------------------------
# training set
# --------------------------------------------------------------------------

def test_duplicates_are_merged_by_average():
    ts = TrainingSet([[1, 0.05], [2, 0.01], [1, 0.05]], [1.0, 5.0, 3.0])
    assert len(ts) == 2
    row = np.flatnonzero((ts.inputs[:, 0] == 1))[0]
    assert ts.outputs[row] == 2.0


def test_training_set_validation():
    with pytest.raises(ValueError):
        TrainingSet([[1, 0.1], [2, 0.2]], [1.0])
    with pytest.raises(ValueError):
        TrainingSet([[1, np.nan]], [1.0])


# --------------------------------------------------------------------------
# log marginal likelihood
# --------------------------------------------------------------------------

def test_lml_single_point_zero_output():
    ts = TrainingSet([[1.0, 0.0]], [0.0], bounds=BOUNDS)
    p = KernelParams(1.0, 1.0, 1.0, 1.0, sigma_n=1e-300)
    # K = 1 (+1e-10 jitter): -1/2 log(1) - 1/2 log(2 pi)
    assert gp.log_marginal_likelihood(ts, p) == pytest.approx(-0.9189385332, abs=1e-9)


def test_lml_three_point_oracle():
    rng = np.random.default_rng(3)
    ts = random_set(rng, 3)
    p = KernelParams(0.8, 0.05, 1.2, 0.3, sigma_n=0.1)
    assert gp.log_marginal_likelihood(ts, p) == pytest.approx(
        dense_lml(ts.inputs, ts.outputs, p), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(gp.KINDS),
       st.floats(-3, 1), st.floats(-4, 0), st.floats(-6, 0))
def test_lml_oracle_random_five_point(seed, kind, log_amp, log_len, log_noise):
    ts = random_set(np.random.default_rng(seed), 5)
    p = KernelParams(math.exp(log_amp), math.exp(log_len), 1.7, 0.2,
                     sigma_n=math.exp(log_noise), kind=kind)
    assert gp.log_marginal_likelihood(ts, p) == pytest.approx(
        dense_lml(ts.inputs, ts.outputs, p), abs=1e-8)


def test_lml_smooth_in_noise():
    ts = random_set(np.random.default_rng(1), 20)

    def steps(n):
        sig = np.logspace(-8, 4, n)
        vals = np.array([gp.log_marginal_likelihood(ts, KernelParams(1.0, 0.1, 1.0, 0.1, s))
                         for s in sig])
        assert np.all(np.isfinite(vals))
        return np.max(np.abs(np.diff(vals)))

    # a continuous curve has its largest step shrink in proportion to the grid spacing
    coarse, fine = steps(201), steps(801)
    assert fine < 0.3 * coarse


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------

def test_fit_recovers_known_gp():
    rng = np.random.default_rng(42)
    true = KernelParams(1.0, 0.05, 1.0, 0.2, sigma_n=0.01)
    X = np.column_stack([rng.uniform(1, 25, 60), rng.uniform(0, 0.1, 60)])
    Z = (X - [1.0, 0.0]) / [24.0, 0.1]
    K = np.array([[gp.kernel_eval(true, a, b) for b in Z] for a in Z])
    y = rng.multivariate_normal(np.zeros(60), K + 0.01 ** 2 * np.eye(60))
    ts = TrainingSet(X, y, bounds=BOUNDS)
    s = gp.fit(ts, "product", MCMCConfig(n_samples=2000, seed=1))
    assert s.diagnostics.log_likelihood >= gp.log_marginal_likelihood(ts, true) - 2.0
    assert gp.log_marginal_likelihood(ts, s.params) == pytest.approx(s.diagnostics.log_likelihood,
                                                                    abs=1e-6)


def test_fit_constant_outputs():
    X = np.column_stack([np.arange(1, 11), np.linspace(0, 0.1, 10)])
    s = gp.fit(TrainingSet(X, np.full(10, 2.5), bounds=BOUNDS), "product", MCMCConfig(300, seed=0))
    for v in s.params.to_log_vector():
        assert math.isfinite(v)
    assert s.params.sigma_n > 0 and s.params.amplitude > 0


def test_fit_deterministic():
    ts = random_set(np.random.default_rng(5), 30)
    a = gp.fit(ts, "product", MCMCConfig(300, seed=9))
    b = gp.fit(ts, "product", MCMCConfig(300, seed=9))
    assert a.params == b.params


def test_fit_rejects_unknown_kind():
    with pytest.raises(ValueError):
        gp.fit(random_set(np.random.default_rng(0), 4), "rbf")


def test_fit_error_when_nothing_finite():
    ts = TrainingSet([[1.0, 0.0], [2.0, 0.05]], [1e200, -1e200], bounds=BOUNDS)
    with pytest.raises(gp.FitError, match="rescal"):
        gp.fit(ts, "product", MCMCConfig(50, seed=0))


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------

def test_noise_free_interpolation():
    ts = random_set(np.random.default_rng(11), 12)
    s = GpSurface(ts, KernelParams(1.0, 0.01, 1.0, 0.05, sigma_n=1e-9))
    mean, _ = s.predict_many(ts.inputs)
    assert np.all(np.abs(mean - ts.outputs) <= 1e-6 * (1 + np.abs(ts.outputs)))


def test_prior_reversion_far_away():
    ts = random_set(np.random.default_rng(2), 10)
    p = KernelParams(1.4, 0.01, 1.0, 0.05, sigma_n=1e-3)
    s = GpSurface(ts, p)
    mean, var = s.predict((5000.0, 50.0))
    assert abs(mean) < 1e-12
    assert var == pytest.approx(p.amplitude, rel=1e-12)


def test_two_point_hand_solve():
    bounds = [[0.0, 1.0], [0.0, 1.0]]
    ts = TrainingSet([[0.0, 0.0], [1.0, 0.0]], [1.0, 3.0], bounds=bounds)
    p = KernelParams(1.0, 1.0, 1.0, 1.0, sigma_n=0.5)
    s = GpSurface(ts, p)
    e = math.exp(-1.0)
    d = 1.0 + 0.25 + 1e-10          # diagonal: k(x,x) + sigma^2 + jitter
    det = d * d - e * e
    a1 = (d * 1.0 - e * 3.0) / det
    a2 = (d * 3.0 - e * 1.0) / det
    q = (0.5, 0.0)
    kq = math.exp(-0.25)
    assert s.predict(q)[0] == pytest.approx(kq * a1 + kq * a2, rel=1e-12)


def test_variance_nonnegative_on_grid():
    ts = random_set(np.random.default_rng(8), 25)
    s = gp.fit(ts, "product", MCMCConfig(200, seed=2))
    g = np.array([(l, v) for l in np.linspace(1, 25, 50) for v in np.linspace(0, 0.1, 50)])
    _, var = s.predict_many(g)
    assert np.all(var >= 0)


def test_gram_psd():
    ts = random_set(np.random.default_rng(4), 40)
    s = gp.fit(ts, "product", MCMCConfig(200, seed=3))
    assert np.min(np.linalg.eigvalsh(s.gram)) >= -1e-8 * s.params.amplitude
    assert np.all(np.diag(s._L) > 0)


def test_persistence_roundtrip(tmp_path):
    ts = random_set(np.random.default_rng(6), 30)
    s = gp.fit(ts, "product", MCMCConfig(200, seed=4))
    s.save(tmp_path / "s.json")
    back = GpSurface.load(tmp_path / "s.json")
    q = np.column_stack([np.linspace(1, 25, 40), np.linspace(0, 0.1, 40)])
    m1, v1 = s.predict_many(q)
    m2, v2 = back.predict_many(q)
    assert np.allclose(m1, m2, rtol=1e-12, atol=0)
    assert np.allclose(v1, v2, rtol=1e-12, atol=1e-300)


# --------------------------------------------------------------------------
# calibrate_all and the surface stack
# --------------------------------------------------------------------------

def _sets(n, m=20):
    rng = np.random.default_rng(12)
    X = np.column_stack([rng.integers(1, 26, m), rng.uniform(0, 0.1, m)])
    return [TrainingSet(X, rng.standard_normal(m), frequency_index=j, bounds=BOUNDS) for j in range(n)]


def test_calibrate_single_equals_fit():
    sets = _sets(1)
    cfg = MCMCConfig(150, seed=7)
    [s] = gp.calibrate_all(sets, "product", cfg)
    seed = int(np.random.SeedSequence([7, 0]).generate_state(1)[0])
    ref = gp.fit(sets[0], "product", MCMCConfig(150, seed=seed))
    assert s.params == ref.params


def test_calibrate_permutation():
    sets = _sets(4)
    cfg = MCMCConfig(100, seed=1)
    a = gp.calibrate_all(sets, "product", cfg)
    b = gp.calibrate_all(sets[::-1], "product", cfg)
    assert [s.params for s in a] == [s.params for s in b[::-1]]


def test_calibrate_collects_failures():
    sets = _sets(3)
    bad = TrainingSet([[1.0, 0.0], [2.0, 0.05]], [1e200, -1e200], frequency_index=7, bounds=BOUNDS)
    with pytest.raises(gp.CalibrationError) as err:
        gp.calibrate_all(sets + [bad], "product", MCMCConfig(30, seed=0))
    assert list(err.value.failures) == [7]
    assert sum(s is not None for s in err.value.surfaces) == 3


def test_surface_stack_matches_individual_means():
    surfaces = gp.calibrate_all(_sets(3), "product", MCMCConfig(100, seed=0))
    stack = gp.SurfaceStack(surfaces)
    for loc, sev in [(1, 0.0), (13, 0.06), (25, 0.1), (7.5, 0.033)]:
        ref = [s.mean([[loc, sev]])[0] for s in surfaces]
        assert stack.means(loc, sev) == pytest.approx(ref, rel=1e-10, abs=1e-14)
    sub = stack.subset([2, 0])
    assert sub.means(4, 0.02) == pytest.approx(stack.means(4, 0.02)[[2, 0]], rel=1e-14)


# --------------------------------------------------------------------------
# product vs single kernel on location-discontinuous data
# --------------------------------------------------------------------------

def test_product_kernel_generalizes_better():
    """Held-out error and evidence both favour the product kernel.

    The acceptance suite checks the training-RMSE form of this comparison.
    """
    rng = np.random.default_rng(0)
    amp = rng.standard_normal(25)
    loc = rng.integers(1, 26, 370)
    sev = rng.uniform(0, 0.1, 370)
    y = amp[loc - 1] * (sev / 0.1) ** 2
    train = TrainingSet(np.column_stack([loc, sev])[:270], y[:270], bounds=BOUNDS)
    Xt, yt = np.column_stack([loc, sev])[270:], y[270:]
    fits = {k: gp.fit(train, k, MCMCConfig(1000, seed=11)) for k in gp.KINDS}
    test_rmse = {k: float(np.sqrt(np.mean((s.mean(Xt) - yt) ** 2))) for k, s in fits.items()}
    assert test_rmse["product"] < test_rmse["single"]
    assert fits["product"].diagnostics.log_likelihood > fits["single"].diagnostics.log_likelihood
