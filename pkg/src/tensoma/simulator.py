"""Mass-spring-chain benchmark generator and its analytical modal oracle.

The chain has spring i connecting mass i to mass i-1 (spring 1 to ground)
and mass-proportional damping C = alpha * M, which makes zeta_i * omega_i
constant across modes. The 10-DOF benchmark constants reproduce a 1.00 Hz
fundamental with 5.00 % damping.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .covariance import SignalBlock
from .errors import UsageError

__all__ = [
    "ChainSystem",
    "GroundTruthModes",
    "SimConfig",
    "benchmark_uniform",
    "benchmark_nonuniform",
    "analytic_modes",
    "simulate",
    "select_sensors",
    "random_sensor_ids",
]

BENCHMARK_N_DOF = 10
BENCHMARK_MASS_KG = 100.0e3        # 100 metric tonnes
BENCHMARK_STIFFNESS_N_M = 176.729e6
BENCHMARK_DAMPING_ALPHA = 0.2 * math.pi


@dataclass(frozen=True)
class ChainSystem:
    """Mass/stiffness per DOF plus the mass-proportional damping factor."""

    masses: tuple
    stiffnesses: tuple
    damping_alpha: float = 0.0

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        stiffs = tuple(float(k) for k in self.stiffnesses)
        if len(masses) < 1 or len(masses) != len(stiffs):
            raise UsageError("need equally many masses and stiffnesses (>= 1)")
        if any(m <= 0 for m in masses) or any(k <= 0 for k in stiffs):
            raise UsageError("masses and stiffnesses must be positive")
        if self.damping_alpha < 0:
            raise UsageError("damping_alpha must be >= 0")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "stiffnesses", stiffs)

    @property
    def n_dof(self):
        return len(self.masses)

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def stiffness_matrix(self) -> np.ndarray:
        n = self.n_dof
        k = np.zeros((n, n))
        for i in range(n):
            k[i, i] += self.stiffnesses[i]
            if i + 1 < n:
                k[i, i] += self.stiffnesses[i + 1]
                k[i, i + 1] -= self.stiffnesses[i + 1]
                k[i + 1, i] -= self.stiffnesses[i + 1]
        return k

    def damping_matrix(self) -> np.ndarray:
        return self.damping_alpha * self.mass_matrix()


@dataclass(frozen=True)
class GroundTruthModes:
    """Analytical modal parameters; shape columns are unit-norm and
    sign-canonical (largest-magnitude entry positive)."""

    freqs_hz: np.ndarray
    damping_ratios: np.ndarray
    shapes: np.ndarray

    @property
    def n_modes(self):
        return len(self.freqs_hz)

    def to_dict(self):
        return {
            "freqs_hz": [float(f) for f in self.freqs_hz],
            "damping_ratios": [float(z) for z in self.damping_ratios],
            "shapes": self.shapes.tolist(),
        }


@dataclass(frozen=True)
class SimConfig:
    """Random-excitation simulation settings (defaults = the benchmark)."""

    duration_s: float = 180.0
    sample_hz: float = 100.0
    force_std: float = 1.0e3
    seed: int = 0
    output: str = "displacement"
    noise_std: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0 or self.sample_hz <= 0 or self.force_std <= 0:
            raise UsageError("duration_s, sample_hz and force_std must be positive")
        if self.output not in ("displacement", "acceleration"):
            raise UsageError(f"unknown output kind {self.output!r}")
        if self.noise_std < 0:
            raise UsageError("noise_std must be >= 0")


def benchmark_uniform() -> ChainSystem:
    """The 10-DOF uniform chain behind the reference modal table."""
    return ChainSystem(
        masses=(BENCHMARK_MASS_KG,) * BENCHMARK_N_DOF,
        stiffnesses=(BENCHMARK_STIFFNESS_N_M,) * BENCHMARK_N_DOF,
        damping_alpha=BENCHMARK_DAMPING_ALPHA,
    )


def benchmark_nonuniform(profile="ramp", seed=None) -> ChainSystem:
    """10-DOF chain with per-DOF constants spread over [base, 2*base].

    ``profile`` selects the spread fractions in [0, 1]: "ramp" (linear from
    0 at DOF 1 to 1 at DOF 10), "minimum" (all 0, identical to the uniform
    chain), "random" (uniform draws, requires ``seed``), or an explicit
    sequence of 10 fractions.
    """
    n = BENCHMARK_N_DOF
    if isinstance(profile, str):
        if profile == "ramp":
            frac = np.linspace(0.0, 1.0, n)
        elif profile == "minimum":
            frac = np.zeros(n)
        elif profile == "random":
            if seed is None:
                raise UsageError("random profile needs a seed")
            frac = np.random.default_rng(seed).uniform(0.0, 1.0, n)
        else:
            raise UsageError(f"unknown profile {profile!r}")
    else:
        frac = np.asarray(profile, dtype=float)
        if frac.shape != (n,) or frac.min() < 0 or frac.max() > 1:
            raise UsageError(f"profile must be {n} fractions in [0, 1]")
    return ChainSystem(
        masses=tuple(BENCHMARK_MASS_KG * (1.0 + frac)),
        stiffnesses=tuple(BENCHMARK_STIFFNESS_N_M * (1.0 + frac)),
        damping_alpha=BENCHMARK_DAMPING_ALPHA,
    )


def _canonical_columns(phi: np.ndarray) -> np.ndarray:
    phi = phi / np.linalg.norm(phi, axis=0, keepdims=True)
    flips = np.sign(phi[np.abs(phi).argmax(axis=0), np.arange(phi.shape[1])])
    return phi * flips


def analytic_modes(sys: ChainSystem) -> GroundTruthModes:
    """Solve K phi = omega^2 M phi; zeta_i = alpha / (2 omega_i)."""
    m = sys.mass_matrix()
    k = sys.stiffness_matrix()
    for name, mat in (("mass", m), ("stiffness", k)):
        try:
            scipy.linalg.cholesky(mat)
        except scipy.linalg.LinAlgError:
            raise UsageError(f"{name} matrix is not positive definite")
    w2, phi = scipy.linalg.eigh(k, m)
    omega = np.sqrt(w2)
    return GroundTruthModes(
        freqs_hz=omega / (2.0 * math.pi),
        damping_ratios=sys.damping_alpha / (2.0 * omega),
        shapes=_canonical_columns(phi),
    )


def _state_space(sys: ChainSystem):
    n = sys.n_dof
    m_inv = np.diag(1.0 / np.asarray(sys.masses))
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = np.eye(n)
    a[n:, :n] = -m_inv @ sys.stiffness_matrix()
    a[n:, n:] = -m_inv @ sys.damping_matrix()
    b = np.zeros((2 * n, n))
    b[n:, :] = m_inv
    return a, b


def simulate(sys: ChainSystem, cfg: SimConfig) -> SignalBlock:
    """Zero-order-hold response to i.i.d. Gaussian forces on every DOF.

    The continuous model is discretised exactly (matrix exponential of the
    augmented state/input block), so integrator accuracy is not a factor.
    Zero initial conditions; deterministic for a fixed seed.
    """
    n = sys.n_dof
    dt = 1.0 / cfg.sample_hz
    n_steps = int(round(cfg.duration_s * cfg.sample_hz))
    a, b = _state_space(sys)

    block = np.zeros((2 * n + n, 2 * n + n))
    block[: 2 * n, : 2 * n] = a
    block[: 2 * n, 2 * n:] = b
    exp_block = scipy.linalg.expm(block * dt)
    ad = exp_block[: 2 * n, : 2 * n]
    bd = exp_block[: 2 * n, 2 * n:]
    if np.abs(np.linalg.eigvals(ad)).max() > 1.0 + 1e-9:
        raise RuntimeError("discretised system is unstable")

    rng = np.random.default_rng(cfg.seed)
    forces = rng.standard_normal((n_steps, n)) * cfg.force_std
    state = np.zeros(2 * n)
    out = np.empty((n, n_steps))
    if cfg.output == "acceleration":
        m_inv = np.diag(1.0 / np.asarray(sys.masses))
        acc_gain = np.hstack([-m_inv @ sys.stiffness_matrix(),
                              -m_inv @ sys.damping_matrix()])
    for t in range(n_steps):
        state = ad @ state + bd @ forces[t]
        if cfg.output == "displacement":
            out[:, t] = state[:n]
        else:
            out[:, t] = acc_gain @ state + forces[t] / np.asarray(sys.masses)
    if cfg.noise_std > 0:
        out = out + rng.standard_normal(out.shape) * cfg.noise_std
    return SignalBlock(out, dt=dt, channel_ids=tuple(range(1, n + 1)))


def select_sensors(x: SignalBlock, ids) -> SignalBlock:
    """Channel subset keeping the original DOF labels."""
    ids = tuple(int(i) for i in ids)
    if not ids:
        raise UsageError("sensor id list must be nonempty")
    if len(set(ids)) != len(ids):
        raise UsageError(f"duplicate sensor ids in {ids}")
    try:
        rows = [x.channel_ids.index(i) for i in ids]
    except ValueError:
        raise UsageError(f"sensor ids {ids} not all present in {x.channel_ids}")
    return SignalBlock(x.data[rows, :], dt=x.dt, channel_ids=ids)


def random_sensor_ids(n_total: int, count: int, seed) -> tuple:
    """Uniform draw of ``count`` distinct 1-based DOF labels, seeded."""
    if not 1 <= count <= n_total:
        raise UsageError(f"cannot draw {count} sensors from {n_total} DOFs")
    rng = np.random.default_rng(seed)
    picks = rng.choice(np.arange(1, n_total + 1), size=count, replace=False)
    return tuple(int(i) for i in np.sort(picks))
