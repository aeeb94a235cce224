"""Gaussian-process response surfaces over (fault location, fault severity).

One surface is calibrated per excitation frequency. The prior mean is zero
and the covariance is either a single squared exponential over the full
input distance or a product of two squared exponentials, one over the
location coordinate and one over the severity coordinate::

    single:  theta1 * exp(-d^2 / theta2)
    product: theta1 * exp(-d_loc^2 / theta2) * theta3 * exp(-d_sev^2 / theta4)

Inputs are mapped to the unit square (per ``TrainingSet.bounds``) before any
kernel evaluation, so ``theta2`` and ``theta4`` are in normalized units.
Hyperparameters are chosen by random-walk Metropolis over their logarithms.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import kernels

logger = logging.getLogger(__name__)

KINDS = ("product", "single")
LOG_2PI = math.log(2.0 * math.pi)
JITTER = 1e-10


class GPNumericalError(ArithmeticError):
    """Likelihood or factorization is not finite for the given parameters."""


class FitError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    """One or more per-frequency fits failed.

    ``failures`` maps frequency index to the error message; ``surfaces`` holds
    the successful fits (``None`` in failed slots).
    """

    def __init__(self, failures: dict, surfaces: list):
        lines = ", ".join(f"{k}: {v}" for k, v in sorted(failures.items()))
        super().__init__(f"{len(failures)} surface fit(s) failed ({lines})")
        self.failures = failures
        self.surfaces = surfaces


@dataclass(frozen=True)
class KernelParams:
    theta1: float
    theta2: float
    theta3: float = 1.0
    theta4: float = 1.0
    sigma_n: float = 1e-6
    kind: str = "product"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        for name in ("theta1", "theta2", "theta3", "theta4", "sigma_n"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @property
    def amplitude(self) -> float:
        return self.theta1 * self.theta3 if self.kind == "product" else self.theta1

    @property
    def weights(self) -> tuple[float, float]:
        """Inverse squared length scales for the location and severity axes."""
        if self.kind == "product":
            return 1.0 / self.theta2, 1.0 / self.theta4
        return 1.0 / self.theta2, 1.0 / self.theta2

    def to_log_vector(self) -> np.ndarray:
        if self.kind == "product":
            v = [self.theta1, self.theta2, self.theta3, self.theta4, self.sigma_n]
        else:
            v = [self.theta1, self.theta2, self.sigma_n]
        return np.log(v)

    @classmethod
    def from_log_vector(cls, v, kind: str) -> "KernelParams":
        e = np.exp(np.asarray(v, dtype=float))
        if kind == "product":
            return cls(e[0], e[1], e[2], e[3], e[4], kind)
        return cls(theta1=e[0], theta2=e[1], sigma_n=e[2], kind=kind)

    def to_dict(self) -> dict:
        return {"theta1": self.theta1, "theta2": self.theta2, "theta3": self.theta3,
                "theta4": self.theta4, "sigma_n": self.sigma_n, "kind": self.kind}


def kernel_eval(params: KernelParams, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w_loc, w_sev = params.weights
    d = a - b
    return float(params.amplitude * math.exp(-w_loc * d[0] ** 2 - w_sev * d[1] ** 2))


@dataclass(frozen=True)
class TrainingSet:
    """Inputs ``(alpha_L, alpha_S)`` with scalar responses for one frequency.

    Exact duplicate input rows are merged on construction by averaging their
    outputs. ``bounds`` rows give ``(low, high)`` for location and severity;
    when omitted they are taken from the data.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    frequency_index: int = 0
    bounds: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float).reshape(-1, 2)
        y = np.asarray(self.outputs, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} inputs but {y.size} outputs")
        if y.size < 1:
            raise ValueError("training set is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training data must be finite")
        uniq, inverse, counts = np.unique(X, axis=0, return_inverse=True, return_counts=True)
        if uniq.shape[0] < X.shape[0]:
            inverse = inverse.ravel()
            y = np.bincount(inverse, weights=y) / counts
            X = uniq
        if self.bounds is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
            bounds = np.column_stack([lo, hi])
        else:
            bounds = np.asarray(self.bounds, dtype=float).reshape(2, 2).copy()
        for arr in (X, y, bounds):
            arr.setflags(write=False)
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "frequency_index", int(self.frequency_index))

    def __len__(self):
        return self.outputs.size

    @property
    def offset(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def span(self) -> np.ndarray:
        span = self.bounds[:, 1] - self.bounds[:, 0]
        return np.where(span > 0, span, 1.0)

    def scale(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float).reshape(-1, 2) - self.offset) / self.span

    def scaled_inputs(self) -> np.ndarray:
        return self.scale(self.inputs)

    def to_dict(self) -> dict:
        return {"frequency_index": self.frequency_index,
                "inputs": self.inputs.tolist(),
                "outputs": self.outputs.tolist(),
                "bounds": self.bounds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSet":
        return cls(np.array(d["inputs"], dtype=float).reshape(-1, 2), d["outputs"],
                   d["frequency_index"], d["bounds"])


def _noisy_gram(K: np.ndarray, sigma_n: float) -> np.ndarray:
    n = K.shape[0]
    jitter = JITTER * float(np.trace(K)) / n
    K = K.copy()
    K[np.diag_indices(n)] += sigma_n ** 2 + jitter
    return K


def _lml_from_gram(K: np.ndarray, y: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return -math.inf
    z = solve_triangular(L, y, lower=True, check_finite=False)
    val = -0.5 * float(z @ z) - float(np.sum(np.log(np.diag(L)))) - 0.5 * y.size * LOG_2PI
    return val if math.isfinite(val) else -math.inf


def log_marginal_likelihood(training: TrainingSet, params: KernelParams) -> float:
    """Log evidence of ``training.outputs`` under the zero-mean GP prior."""
    Xs = training.scaled_inputs()
    w_loc, w_sev = params.weights
    K = kernels.se_cross(Xs, Xs, params.amplitude, w_loc, w_sev)
    val = _lml_from_gram(_noisy_gram(K, params.sigma_n), training.outputs)
    if not math.isfinite(val):
        raise GPNumericalError(f"log marginal likelihood is not finite for {params}")
    return val


@dataclass(frozen=True)
class MCMCConfig:
    n_samples: int = 2000
    step_sizes: float | tuple = 0.15
    seed: int = 0
    prior_sd: float = 3.0

    def steps_for(self, dim: int) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.step_sizes, dtype=float), (dim,)).copy()
        if np.any(s < 0):
            raise ValueError("step sizes must be non-negative")
        return s

    @classmethod
    def coerce(cls, cfg) -> "MCMCConfig":
        if cfg is None:
            return cls()
        if isinstance(cfg, cls):
            return cfg
        return cls(**cfg)


@dataclass(frozen=True)
class FitDiagnostics:
    frequency_index: int
    log_likelihood: float
    acceptance_rate: float
    n_samples: int


def _prior_centers(y: np.ndarray, kind: str) -> np.ndarray:
    with np.errstate(over="ignore"):
        ms = float(np.mean(y * y))
    if not math.isfinite(ms):
        raise FitError("response values overflow when squared; consider rescaling the response data")
    if not ms > 0:
        ms = 1.0
    log_amp = math.log(ms)
    log_noise = math.log(1e-3 * math.sqrt(ms))
    if kind == "product":
        return np.array([log_amp, math.log(0.005), 0.0, math.log(0.1), log_noise])
    return np.array([log_amp, math.log(0.005), log_noise])


class _Evidence:
    """Log marginal likelihood over log-parameters with cached distances."""

    def __init__(self, training: TrainingSet, kind: str):
        Xs = training.scaled_inputs()
        self.DL = (Xs[:, 0:1] - Xs[:, 0][None, :]) ** 2
        self.DS = (Xs[:, 1:2] - Xs[:, 1][None, :]) ** 2
        self.y = training.outputs
        self.kind = kind
        self.n = self.y.size

    def __call__(self, v: np.ndarray) -> float:
        if not np.all(np.isfinite(v)):
            return -math.inf
        if self.kind == "product":
            amp = math.exp(v[0] + v[2])
            w_loc, w_sev, sig = math.exp(-v[1]), math.exp(-v[3]), math.exp(v[4])
        else:
            amp = math.exp(v[0])
            w_loc = w_sev = math.exp(-v[1])
            sig = math.exp(v[2])
        if not (amp > 0 and math.isfinite(amp) and sig > 0 and math.isfinite(w_loc * w_sev)):
            return -math.inf
        K = kernels.se_from_sqdist(self.DL, self.DS, amp, w_loc, w_sev)
        jitter = JITTER * amp
        K[np.diag_indices(self.n)] += sig * sig + jitter
        return _lml_from_gram(K, self.y)


def fit(training: TrainingSet, kind: str = "product", mcmc=None) -> "GpSurface":
    """Calibrate hyperparameters by random-walk Metropolis on log-parameters.

    The target is the log marginal likelihood plus independent normal priors
    on each log-parameter (centred on data-scaled defaults, sd ``prior_sd``).
    The chain state with the highest log marginal likelihood is kept.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}; expected one of {KINDS}")
    cfg = MCMCConfig.coerce(mcmc)
    rng = np.random.default_rng(cfg.seed)
    evidence = _Evidence(training, kind)
    center = _prior_centers(training.outputs, kind)
    dim = center.size
    steps = cfg.steps_for(dim)
    lo, hi = center - 25.0, center + 25.0

    def log_prior(v):
        return -0.5 * float(np.sum(((v - center) / cfg.prior_sd) ** 2))

    cur = center.copy()
    cur_ll = evidence(cur)
    cur_lp = cur_ll + log_prior(cur)
    best, best_ll = cur.copy(), cur_ll
    accepted = 0
    for _ in range(cfg.n_samples):
        prop = cur + steps * rng.standard_normal(dim)
        u = rng.random()
        if np.any(prop < lo) or np.any(prop > hi):
            continue
        ll = evidence(prop)
        if not math.isfinite(ll):
            continue
        lp = ll + log_prior(prop)
        if not math.isfinite(cur_lp) or math.log(u + 1e-300) < lp - cur_lp:
            cur, cur_ll, cur_lp = prop, ll, lp
            accepted += 1
            if ll > best_ll:
                best, best_ll = cur.copy(), ll
    if not math.isfinite(best_ll):
        raise FitError(f"frequency {training.frequency_index}: likelihood is not finite at any "
                       "visited parameter set; consider rescaling the response data")
    params = KernelParams.from_log_vector(best, kind)
    diag = FitDiagnostics(training.frequency_index, best_ll,
                          accepted / cfg.n_samples if cfg.n_samples else 0.0, cfg.n_samples)
    return GpSurface(training, params, diag)


class GpSurface:
    """Fitted surface with a cached Cholesky factor of ``K + sigma_n^2 I``."""

    def __init__(self, training: TrainingSet, params: KernelParams, diagnostics=None):
        self.training = training
        self.params = params
        self.diagnostics = diagnostics
        self._Xs = training.scaled_inputs()
        w_loc, w_sev = params.weights
        K = kernels.se_cross(self._Xs, self._Xs, params.amplitude, w_loc, w_sev)
        self._gram = K
        try:
            self._L = np.linalg.cholesky(_noisy_gram(K, params.sigma_n))
        except np.linalg.LinAlgError as exc:
            raise GPNumericalError(f"Gram matrix is not positive definite for {params}") from exc
        self._alpha = cho_solve((self._L, True), training.outputs, check_finite=False)

    @property
    def frequency_index(self) -> int:
        return self.training.frequency_index

    @property
    def gram(self) -> np.ndarray:
        """Noise-free Gram matrix ``K(X, X)`` (before jitter)."""
        return self._gram

    @property
    def weights(self) -> np.ndarray:
        """``(K + sigma_n^2 I)^-1 y``."""
        return self._alpha

    def predict_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        Q = self.training.scale(queries)
        w_loc, w_sev = self.params.weights
        amp = self.params.amplitude
        Ks = kernels.se_cross(Q, self._Xs, amp, w_loc, w_sev)
        mean = Ks @ self._alpha
        v = solve_triangular(self._L, Ks.T, lower=True, check_finite=False)
        var = amp - np.sum(v * v, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict(self, query) -> tuple[float, float]:
        mean, var = self.predict_many(np.asarray(query, dtype=float).reshape(1, 2))
        return float(mean[0]), float(var[0])

    def mean(self, queries) -> np.ndarray:
        Q = self.training.scale(queries)
        w_loc, w_sev = self.params.weights
        return kernels.se_cross(Q, self._Xs, self.params.amplitude, w_loc, w_sev) @ self._alpha

    def training_rmse(self) -> float:
        resid = self.mean(self.training.inputs) - self.training.outputs
        return float(np.sqrt(np.mean(resid * resid)))

    def to_dict(self) -> dict:
        d = {"training": self.training.to_dict(), "params": self.params.to_dict()}
        if self.diagnostics is not None:
            d["diagnostics"] = {
                "log_likelihood": self.diagnostics.log_likelihood,
                "acceptance_rate": self.diagnostics.acceptance_rate,
                "n_samples": self.diagnostics.n_samples,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GpSurface":
        training = TrainingSet.from_dict(d["training"])
        params = KernelParams(**d["params"])
        diag = None
        if "diagnostics" in d:
            diag = FitDiagnostics(training.frequency_index, **d["diagnostics"])
        return cls(training, params, diag)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GpSurface":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fit_task(args):
    training, kind, cfg = args
    try:
        return fit(training, kind, cfg), None
    except (FitError, GPNumericalError, ValueError) as exc:
        return None, str(exc)


def calibrate_all(training_sets, kind: str = "product", mcmc=None, workers: int = 1) -> list:
    """Fit one surface per training set, preserving order.

    Each fit is seeded from ``(mcmc.seed, frequency_index)`` so results do not
    depend on the order of the input list.
    """
    training_sets = list(training_sets)
    if not training_sets:
        raise ValueError("need at least one training set")
    base = MCMCConfig.coerce(mcmc)
    tasks = []
    for ts in training_sets:
        seed = int(np.random.SeedSequence([base.seed, ts.frequency_index]).generate_state(1)[0])
        tasks.append((ts, kind, MCMCConfig(base.n_samples, base.step_sizes, seed, base.prior_sd)))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_task, tasks))
    else:
        results = [_fit_task(t) for t in tasks]
    surfaces = [r[0] for r in results]
    failures = {ts.frequency_index: r[1] for ts, r in zip(training_sets, results) if r[1] is not None}
    for s in surfaces:
        if s is not None:
            logger.debug("frequency %d: log-likelihood %.4g, acceptance %.3f",
                         s.frequency_index, s.diagnostics.log_likelihood,
                         s.diagnostics.acceptance_rate)
    if failures:
        raise CalibrationError(failures, surfaces)
    return surfaces


class SurfaceStack:
    """Several surfaces evaluated together at one (location, severity) point.

    Used as the objective backend of the annealer: the posterior means of all
    stacked surfaces come from one kernel call.
    """

    def __init__(self, surfaces):
        surfaces = list(surfaces)
        if not surfaces:
            raise ValueError("empty surface stack")
        m = max(len(s.training) for s in surfaces)
        n = len(surfaces)
        self.surfaces = surfaces
        self.X_loc = np.zeros((n, m))
        self.X_sev = np.zeros((n, m))
        self.coef = np.zeros((n, m))
        self.w_loc = np.empty(n)
        self.w_sev = np.empty(n)
        self.offset = np.empty((n, 2))
        self.span = np.empty((n, 2))
        for r, s in enumerate(surfaces):
            k = len(s.training)
            self.X_loc[r, :k] = s._Xs[:, 0]
            self.X_sev[r, :k] = s._Xs[:, 1]
            self.coef[r, :k] = s.params.amplitude * s._alpha
            self.w_loc[r], self.w_sev[r] = s.params.weights
            self.offset[r] = s.training.offset
            self.span[r] = s.training.span

    def __len__(self):
        return len(self.surfaces)

    def subset(self, indices) -> "SurfaceStack":
        return SurfaceStack([self.surfaces[i] for i in indices])

    def means(self, location: float, severity: float) -> np.ndarray:
        q = (np.array([location, severity]) - self.offset) / self.span
        return kernels.stack_mean(q[:, 0], q[:, 1], self.X_loc, self.X_sev, self.coef,
                                  self.w_loc, self.w_sev)
