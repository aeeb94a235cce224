"""Reduced-order piezoelectric admittance model of a segmented structure.

The host structure is a fixed-free chain of ``n`` lumped masses. Spring ``j``
joins mass ``j-1`` (or the ground for ``j = 1``) to mass ``j`` and is the
stiffness contribution of segment ``j``; damage scales it by ``1 - alpha_j``.
A piezoelectric transducer couples to the chain through ``coupling`` and its
admittance is

    Y(w) = i w / (k_c - coupling^T (K_d - w^2 M + i w C)^-1 coupling)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh

CHANNELS = ("magnitude", "real", "imaginary")


class ModelError(ValueError):
    """Invalid model definition or input dimensions."""


class SingularityError(ArithmeticError):
    """The dynamic stiffness matrix is singular at the requested frequency."""

    def __init__(self, omega: float):
        super().__init__(f"dynamic stiffness is singular at omega={omega!r} rad/s "
                         "(undamped resonance)")
        self.omega = omega


@dataclass(frozen=True)
class StructuralModel:
    masses: np.ndarray
    stiffness: np.ndarray
    coupling: np.ndarray
    k_c: float
    rayleigh_a: float = 0.0
    rayleigh_b: float = 0.0

    def __post_init__(self):
        for name in ("masses", "stiffness", "coupling"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.masses.size
        if n < 1:
            raise ModelError("model needs at least one segment")
        if self.stiffness.size != n or self.coupling.size != n:
            raise ModelError(
                f"masses ({n}), stiffness ({self.stiffness.size}) and coupling "
                f"({self.coupling.size}) must have equal length")
        if np.any(self.masses <= 0) or np.any(self.stiffness <= 0):
            raise ModelError("masses and stiffnesses must be strictly positive")
        if not np.any(self.coupling != 0):
            raise ModelError("coupling vector needs at least one nonzero entry")
        if self.rayleigh_a < 0 or self.rayleigh_b < 0:
            raise ModelError("Rayleigh damping coefficients must be non-negative")
        if not np.isfinite(self.k_c):
            raise ModelError("k_c must be finite")

    @property
    def n_segments(self) -> int:
        return self.masses.size

    @property
    def is_damped(self) -> bool:
        return self.rayleigh_a > 0 or self.rayleigh_b > 0

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def stiffness_matrix(self, alpha=None) -> np.ndarray:
        k = self.stiffness if alpha is None else self.stiffness * (1.0 - alpha)
        return _chain_matrix(k)

    def damping_matrix(self) -> np.ndarray:
        return self.rayleigh_a * self.mass_matrix() + self.rayleigh_b * self.stiffness_matrix()

    def to_dict(self) -> dict:
        return {
            "masses": self.masses.tolist(),
            "stiffness": self.stiffness.tolist(),
            "coupling": self.coupling.tolist(),
            "k_c": float(self.k_c),
            "rayleigh_a": float(self.rayleigh_a),
            "rayleigh_b": float(self.rayleigh_b),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StructuralModel":
        allowed = {"masses", "stiffness", "coupling", "k_c", "rayleigh_a", "rayleigh_b"}
        unknown = set(data) - allowed
        if unknown:
            raise ModelError(f"unknown model keys: {sorted(unknown)}")
        missing = {"masses", "stiffness", "coupling", "k_c"} - set(data)
        if missing:
            raise ModelError(f"missing model keys: {sorted(missing)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "StructuralModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _chain_matrix(k: np.ndarray) -> np.ndarray:
    # k[0] ties DOF 0 to ground; k[j] joins DOF j-1 and j.
    n = k.size
    K = np.zeros((n, n))
    K[0, 0] += k[0]
    for j in range(1, n):
        K[j - 1, j - 1] += k[j]
        K[j, j] += k[j]
        K[j - 1, j] -= k[j]
        K[j, j - 1] -= k[j]
    return K


def default_model(n_segments: int = 25, transducer_segment: int = 10) -> StructuralModel:
    """Tapered fixed-free chain with the transducer straddling one spring.

    The taper breaks the uniform-chain regularity so that damage in different
    segments leaves distinguishable admittance signatures. Resonances land
    roughly between 0.2 and 5 kHz for the default 25 segments.
    """
    x = np.linspace(0.0, 1.0, n_segments)
    masses = 0.012 * (1.0 - 0.35 * x) * (1.0 + 0.04 * np.sin(7.0 * x))
    stiffness = 2.4e6 * (1.0 - 0.30 * x) * (1.0 + 0.05 * np.cos(5.0 * x))
    coupling = np.zeros(n_segments)
    j = transducer_segment - 1
    coupling[j] = 2.0e5
    if j > 0:
        coupling[j - 1] = -2.0e5
    return StructuralModel(masses=masses, stiffness=stiffness, coupling=coupling,
                           k_c=7.2e7, rayleigh_a=1.0, rayleigh_b=1.5e-7)


@dataclass(frozen=True)
class FaultScenario:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        if np.any(alpha < 0) or np.any(alpha > 1) or not np.all(np.isfinite(alpha)):
            raise ModelError("every fault index must lie in [0, 1]")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def single(cls, n_segments: int, location: int, severity: float) -> "FaultScenario":
        """Compact single-fault form; ``location`` is 1-based."""
        if not 1 <= location <= n_segments:
            raise ModelError(f"location {location} outside 1..{n_segments}")
        alpha = np.zeros(n_segments)
        alpha[location - 1] = severity
        return cls(alpha)

    @classmethod
    def healthy(cls, n_segments: int) -> "FaultScenario":
        return cls(np.zeros(n_segments))

    @property
    def location(self) -> int:
        nz = np.flatnonzero(self.alpha)
        if nz.size > 1:
            raise ModelError("scenario has more than one faulty segment")
        return int(nz[0]) + 1 if nz.size else 0

    @property
    def severity(self) -> float:
        return float(self.alpha.max(initial=0.0))


@dataclass(frozen=True)
class FrequencySweep:
    frequencies: np.ndarray
    bands: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.frequencies, dtype=float)).copy()
        if w.size == 0 or np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ModelError("sweep frequencies must be positive and strictly increasing")
        bands = np.zeros(w.size, dtype=int) if self.bands is None else np.asarray(self.bands, dtype=int).copy()
        if bands.shape != w.shape:
            raise ModelError("band labels must match the frequency count")
        w.setflags(write=False)
        bands.setflags(write=False)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "bands", bands)

    def __len__(self):
        return self.frequencies.size

    @classmethod
    def around_resonances(cls, model: StructuralModel, modes, points_per_band: int = 10,
                          rel_below: float = 0.004, rel_above: float = 0.001) -> "FrequencySweep":
        """Evenly spaced points in ``[w_r (1 - rel_below), w_r (1 + rel_above)]``.

        ``modes`` are 1-based resonance indices. Damage only softens the chain,
        so the default band reaches further below each resonance than above.
        """
        res = find_resonances(model)
        freqs, bands = [], []
        for b, mode in enumerate(modes):
            if not 1 <= mode <= res.size:
                raise ModelError(f"mode {mode} outside 1..{res.size}")
            w_r = res[mode - 1]
            freqs.append(np.linspace(w_r * (1.0 - rel_below), w_r * (1.0 + rel_above), points_per_band))
            bands.append(np.full(points_per_band, b))
        freqs = np.concatenate(freqs)
        bands = np.concatenate(bands)
        order = np.argsort(freqs, kind="stable")
        return cls(freqs[order], bands[order])


def _alpha_of(model: StructuralModel, fault) -> np.ndarray:
    if fault is None:
        return np.zeros(model.n_segments)
    alpha = fault.alpha if isinstance(fault, FaultScenario) else np.asarray(fault, dtype=float)
    if alpha.shape != (model.n_segments,):
        raise ModelError(f"fault vector has length {alpha.size}, model has "
                         f"{model.n_segments} segments")
    return alpha


def assemble_damaged_stiffness(model: StructuralModel, fault) -> np.ndarray:
    """Sum of the segment stiffness contributions, each scaled by ``1 - alpha_j``."""
    return model.stiffness_matrix(_alpha_of(model, fault))


def find_resonances(model: StructuralModel, fault=None) -> np.ndarray:
    """Ascending undamped natural frequencies (rad/s)."""
    K = assemble_damaged_stiffness(model, fault)
    lam = eigh(K, model.mass_matrix(), eigvals_only=True)
    return np.sqrt(np.clip(lam, 0.0, None))


def admittance_sweep(model: StructuralModel, omegas, fault=None) -> np.ndarray:
    """Complex admittance at every frequency in ``omegas``."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if np.any(omegas <= 0):
        raise ModelError("excitation frequencies must be positive")
    alpha = _alpha_of(model, fault)
    Kd = model.stiffness_matrix(alpha)
    M = model.mass_matrix()
    C = model.damping_matrix()
    if not model.is_damped:
        res = find_resonances(model, alpha)
        for w in omegas:
            if np.min(np.abs(res - w)) <= 1e-9 * w:
                raise SingularityError(float(w))
    w = omegas[:, None, None]
    D = Kd[None] - (w ** 2) * M[None] + 1j * w * C[None]
    b = np.broadcast_to(model.coupling.astype(complex), (omegas.size, model.n_segments))
    try:
        x = np.linalg.solve(D, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        bad = omegas[np.argmin([abs(np.linalg.det(d)) for d in D])]
        raise SingularityError(float(bad)) from None
    return 1j * omegas / (model.k_c - x @ model.coupling)


def admittance(model: StructuralModel, omega: float, fault=None) -> complex:
    return complex(admittance_sweep(model, [omega], fault)[0])


def _channel(z, channel: str):
    if channel == "magnitude":
        return np.abs(z)
    if channel == "real":
        return np.real(z)
    if channel == "imaginary":
        return np.imag(z)
    raise ValueError(f"unknown response channel {channel!r}; expected one of {CHANNELS}")


def admittance_change_sweep(model, omegas, fault, channel: str = "magnitude",
                            baseline=None) -> np.ndarray:
    if baseline is None:
        baseline = admittance_sweep(model, omegas)
    return _channel(admittance_sweep(model, omegas, fault) - baseline, channel)


def admittance_change(model: StructuralModel, omega: float, fault,
                      channel: str = "magnitude") -> float:
    """Scalar response channel of ``Y_d(omega, alpha) - Y(omega, 0)``."""
    return float(admittance_change_sweep(model, [omega], fault, channel)[0])


@dataclass(frozen=True)
class TrainingData:
    """Per-frequency training sets sharing one scenario draw.

    ``delta_y[j, i]`` is the response at ``sweep.frequencies[j]`` for scenario
    ``(locations[i], severities[i])``.
    """

    sweep: FrequencySweep
    locations: np.ndarray
    severities: np.ndarray
    delta_y: np.ndarray
    n_segments: int
    severity_max: float

    def training_sets(self):
        from .gp import TrainingSet

        X = np.column_stack([self.locations.astype(float), self.severities])
        bounds = np.array([[1.0, float(self.n_segments)], [0.0, self.severity_max]])
        return [TrainingSet(X, self.delta_y[j], frequency_index=j, bounds=bounds)
                for j in range(len(self.sweep))]


def apply_noise(values, noise_level: float, rng: np.random.Generator):
    values = np.asarray(values, dtype=float)
    if noise_level == 0:
        return values.copy()
    return values * (1.0 + noise_level * rng.standard_normal(values.shape))


def sample_training_data(model: StructuralModel, sweep: FrequencySweep, m_scenarios: int = 270,
                         noise_level: float = 0.0015, rng_seed=0, severity_max: float = 0.1,
                         channel: str = "magnitude") -> TrainingData:
    """Random single-fault scenarios evaluated over the whole sweep.

    Locations are uniform on ``1..n``, severities uniform on ``[0, severity_max]``;
    every frequency sees the same scenario set. Noise is multiplicative,
    ``value * (1 + noise_level * z)``.
    """
    if m_scenarios < 1:
        raise ValueError("m_scenarios must be at least 1")
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = model.n_segments
    locations = rng.integers(1, n + 1, size=m_scenarios)
    severities = rng.uniform(0.0, severity_max, size=m_scenarios)
    omegas = sweep.frequencies
    baseline = admittance_sweep(model, omegas)
    clean = np.empty((omegas.size, m_scenarios))
    for i, (loc, sev) in enumerate(zip(locations, severities)):
        fault = FaultScenario.single(n, int(loc), float(sev))
        clean[:, i] = admittance_change_sweep(model, omegas, fault, channel, baseline)
    noisy = apply_noise(clean, noise_level, rng)
    return TrainingData(sweep, locations, severities, noisy, n, severity_max)


def measure(model: StructuralModel, sweep: FrequencySweep, truth: FaultScenario,
            noise_level: float = 0.0015, rng_seed=0, channel: str = "magnitude") -> np.ndarray:
    """Emulated measured admittance change at every sweep frequency."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    clean = admittance_change_sweep(model, sweep.frequencies, truth, channel)
    return apply_noise(clean, noise_level, rng)
