"""Modal parameters from converged CP factors.

Mode shapes come from the sign-aligned average of the two mixing-factor
columns; frequency and damping come from fitting a damped cosine to the
matching lag-factor column (the auto-covariance of a lightly damped mode
keeps the mode's pole), then converting the pole. Also provides the MAC,
optimal mode pairing, and the identifiability capacity table.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import ExtractionFailure, FitFailure, UsageError

__all__ = [
    "ModeEstimate",
    "RejectedColumn",
    "ModalEstimate",
    "MacMatrix",
    "DampedCosineFit",
    "capacity",
    "kruskal_ok",
    "fit_damped_cosine",
    "poles_to_modal",
    "modal_to_poles",
    "mac",
    "extract_modes",
    "pair_modes",
]

# A fitted frequency must complete at least this many cycles inside the lag
# window to count as a mode; catches constant/drift columns.
MIN_CYCLES_IN_WINDOW = 0.5
# Spectral peak must exceed this multiple of the mean magnitude spectrum,
# otherwise the column is treated as noise.
PEAK_TO_MEAN_MIN = 5.0
SPECTRUM_PAD = 8


@dataclass(frozen=True)
class ModeEstimate:
    """One identified mode on the measured DOFs."""

    shape: np.ndarray
    freq_hz: float
    damping_ratio: float
    fit_residual: float

    def to_dict(self):
        return {
            "shape": [float(v) for v in self.shape],
            "freq_hz": float(self.freq_hz),
            "damping_ratio": float(self.damping_ratio),
            "fit_residual": float(self.fit_residual),
        }


@dataclass(frozen=True)
class RejectedColumn:
    column: int
    reason: str

    def to_dict(self):
        return {"column": int(self.column), "reason": self.reason}


@dataclass(frozen=True)
class ModalEstimate:
    """Modes sorted by frequency plus the rejected factor columns."""

    modes: tuple
    sensor_ids: tuple
    rejected: tuple = ()

    def to_dict(self):
        return {
            "sensor_ids": [int(i) for i in self.sensor_ids],
            "modes": [m.to_dict() for m in self.modes],
            "rejected": [r.to_dict() for r in self.rejected],
        }


@dataclass(frozen=True)
class MacMatrix:
    """MAC values between estimated (rows) and reference (columns) shapes."""

    values: np.ndarray
    row_ids: tuple
    col_ids: tuple

    def to_dict(self):
        return {
            "values": self.values.tolist(),
            "row_ids": list(self.row_ids),
            "col_ids": list(self.col_ids),
        }


@dataclass(frozen=True)
class DampedCosineFit:
    sigma: float
    omega_d: float
    amplitude: float
    phase: float
    residual: float


def capacity(m: int) -> int:
    """Largest source count identifiable from ``m`` output channels.

    Counting condition on the symmetric CP structure: with
    c2 = m(m-1)/2, a rank n is admissible when
    n(n-1)/2 <= c2(c2+1)/2 - C(m, 4).
    """
    m = int(m)
    if m < 2:
        raise UsageError(f"need at least 2 sensors, got {m}")
    c2 = m * (m - 1) // 2
    budget = c2 * (c2 + 1) // 2 - math.comb(m, 4)
    # n(n-1)/2 <= budget  ->  largest integer n
    n = int((1.0 + math.sqrt(1.0 + 8.0 * budget)) / 2.0)
    while n * (n - 1) // 2 > budget:
        n -= 1
    while (n + 1) * n // 2 <= budget:
        n += 1
    return n


def kruskal_ok(k_a: int, k_r: int, d: int) -> bool:
    """Kruskal uniqueness condition for the symmetric two-A CP model."""
    if min(k_a, k_r, d) < 0:
        raise UsageError("Kruskal ranks and CP rank must be nonnegative")
    return 2 * k_a + k_r >= 2 * d + 2


def poles_to_modal(sigma: float, omega_d: float):
    """(decay rate, damped frequency) -> (natural frequency Hz, damping)."""
    if omega_d <= 0:
        raise UsageError(f"omega_d must be positive, got {omega_d}")
    if sigma < 0:
        raise UsageError(f"sigma must be >= 0, got {sigma}")
    mag = math.hypot(sigma, omega_d)
    return mag / (2.0 * math.pi), sigma / mag


def modal_to_poles(freq_hz: float, damping_ratio: float):
    """Inverse of :func:`poles_to_modal` for zeta in [0, 1)."""
    if freq_hz <= 0:
        raise UsageError(f"freq_hz must be positive, got {freq_hz}")
    if not 0 <= damping_ratio < 1:
        raise UsageError(f"damping_ratio must lie in [0, 1), got {damping_ratio}")
    omega = 2.0 * math.pi * freq_hz
    return damping_ratio * omega, omega * math.sqrt(1.0 - damping_ratio ** 2)


def mac(phi_a, phi_e) -> float:
    """Modal assurance criterion |a.e|^2 / (|a|^2 |e|^2) in [0, 1]."""
    a = np.asarray(phi_a, dtype=float).ravel()
    e = np.asarray(phi_e, dtype=float).ravel()
    if a.shape != e.shape or a.size < 1:
        raise UsageError(f"shape mismatch: {a.shape} vs {e.shape}")
    aa = float(a @ a)
    ee = float(e @ e)
    if aa == 0.0 or ee == 0.0:
        raise UsageError("MAC is undefined for a zero vector")
    return min(float((a @ e) ** 2 / (aa * ee)), 1.0)


def _model(tau, u, sigma, omega, theta):
    return u * np.exp(-sigma * tau) * np.cos(omega * tau + theta)


def _initial_guess(rho, tau):
    """Init from the zero-padded spectrum peak and the log-envelope slope."""
    k = rho.size
    dt = tau[1] - tau[0]
    window = tau[-1] - tau[0] + dt
    nfft = SPECTRUM_PAD * k
    spec = np.abs(np.fft.rfft(rho, n=nfft))
    freqs = np.fft.rfftfreq(nfft, dt)
    imin = max(int(math.ceil(MIN_CYCLES_IN_WINDOW * SPECTRUM_PAD)), 1)
    band = spec[imin:]
    if band.size == 0 or band.max() <= PEAK_TO_MEAN_MIN * band.mean():
        raise FitFailure("no dominant spectral peak; column looks like noise")
    omega0 = 2.0 * math.pi * freqs[imin + int(band.argmax())]

    mags = np.abs(rho)
    interior = np.flatnonzero(
        (mags[1:-1] >= mags[:-2]) & (mags[1:-1] >= mags[2:]) & (mags[1:-1] > 0)) + 1
    if interior.size >= 2:
        slope = np.polyfit(tau[interior], np.log(mags[interior]), 1)[0]
        sigma0 = min(max(-slope, 0.0), 3.0 / window)
    else:
        sigma0 = 0.0

    env = np.exp(-sigma0 * tau)
    basis = np.column_stack([env * np.cos(omega0 * tau), -env * np.sin(omega0 * tau)])
    coef, *_ = np.linalg.lstsq(basis, rho, rcond=None)
    u0 = float(np.hypot(coef[0], coef[1]))
    theta0 = float(math.atan2(coef[1], coef[0]))
    if u0 == 0.0:
        u0 = float(np.sqrt(2.0) * np.sqrt(np.mean(rho ** 2)))
    return np.array([u0, sigma0, omega0, theta0])


def fit_damped_cosine(rho, dt_lag: float, max_iters: int = 200,
                      param_tol: float = 1e-10) -> DampedCosineFit:
    """Levenberg-damped Gauss-Newton fit of u e^{-s t} cos(w t + p).

    The lag grid is taken as dt_lag, 2*dt_lag, ... (uniform spacing; a
    constant grid offset only shifts amplitude and phase, not the pole).
    Raises FitFailure when no spectral peak stands out, when the iteration
    does not converge, or when the fitted frequency completes less than
    half a cycle inside the window.
    """
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.size < 8:
        raise UsageError(f"need at least 8 lags, got {rho.size}")
    if not np.isfinite(rho).all():
        raise UsageError("rho must be finite")
    if not rho.any():
        raise UsageError("rho must not be identically zero")
    if dt_lag <= 0:
        raise UsageError(f"dt_lag must be positive, got {dt_lag}")

    tau = (np.arange(rho.size) + 1) * dt_lag
    window = rho.size * dt_lag
    params = _initial_guess(rho, tau)
    lam = 1e-3
    resid = rho - _model(tau, *params)
    sse = float(resid @ resid)
    converged = False
    for _ in range(max_iters):
        u, sigma, omega, theta = params
        env = np.exp(-sigma * tau)
        cosv = np.cos(omega * tau + theta)
        sinv = np.sin(omega * tau + theta)
        jac = np.column_stack([
            env * cosv,
            -tau * u * env * cosv,
            -tau * u * env * sinv,
            -u * env * sinv,
        ])
        g = jac.T @ resid
        h = jac.T @ jac
        step_ok = False
        for _ in range(30):
            try:
                delta = np.linalg.solve(h + lam * np.diag(np.diag(h) + 1e-30), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + delta
            # keep the frequency positive and the envelope from exploding
            if trial[2] <= 0 or trial[1] < -1.0 / window:
                lam *= 10.0
                continue
            trial_resid = rho - _model(tau, *trial)
            trial_sse = float(trial_resid @ trial_resid)
            if trial_sse <= sse:
                step_ok = True
                break
            lam *= 10.0
        if not step_ok:
            break
        lam = max(lam / 3.0, 1e-12)
        params, resid, sse = trial, trial_resid, trial_sse
        if np.linalg.norm(delta) <= param_tol * (np.linalg.norm(params) + 1e-30):
            converged = True
            break
    if not converged:
        raise FitFailure("damped-cosine fit did not converge")

    u, sigma, omega, theta = params
    if omega * window < 2.0 * math.pi * MIN_CYCLES_IN_WINDOW:
        raise FitFailure("fitted frequency below the resolvable band")
    sigma = max(sigma, 0.0)
    rms = math.sqrt(float(np.mean(rho ** 2)))
    residual = math.sqrt(float(np.mean((rho - _model(tau, u, sigma, omega, theta)) ** 2))) / rms
    if u < 0:
        u, theta = -u, theta + math.pi
    theta = math.remainder(theta, 2.0 * math.pi)
    return DampedCosineFit(sigma=float(sigma), omega_d=float(omega),
                           amplitude=float(u), phase=float(theta),
                           residual=float(residual))


def _canonical(vec: np.ndarray) -> np.ndarray:
    vec = vec / np.linalg.norm(vec)
    if vec[np.abs(vec).argmax()] < 0:
        vec = -vec
    return vec


def extract_modes(post, dt_lag: float, sensor_ids=None) -> ModalEstimate:
    """Turn a converged posterior into sorted modal estimates.

    Per retained column: the shape is the sign-aligned, renormalised
    average of the two mixing-factor columns; the pole comes from the
    damped-cosine fit of the lag-factor column. Columns that fail the fit
    (or produce a non-positive damping estimate) are reported as rejected.
    """
    a1, a2, rs = post.a1_mean, post.a2_mean, post.rs_mean
    if sensor_ids is None:
        sensor_ids = tuple(range(1, a1.shape[0] + 1))
    sensor_ids = tuple(int(i) for i in sensor_ids)
    if len(sensor_ids) != a1.shape[0]:
        raise UsageError("sensor_ids length must match the mixing-factor rows")

    modes = []
    rejected = []
    for r in range(post.rank):
        n1 = np.linalg.norm(a1[:, r])
        n2 = np.linalg.norm(a2[:, r])
        if n1 == 0.0 or n2 == 0.0:
            rejected.append(RejectedColumn(r, "zero mixing column"))
            continue
        u1 = a1[:, r] / n1
        u2 = a2[:, r] / n2
        if float(u1 @ u2) < 0:
            u2 = -u2
        avg = (u1 + u2) / 2.0
        if np.linalg.norm(avg) < 0.1:
            rejected.append(RejectedColumn(r, "inconsistent mixing estimates"))
            continue
        try:
            dc = fit_damped_cosine(rs[:, r], dt_lag)
        except FitFailure as exc:
            rejected.append(RejectedColumn(r, str(exc)))
            continue
        freq, zeta = poles_to_modal(dc.sigma, dc.omega_d)
        if not 0.0 < zeta < 1.0:
            rejected.append(RejectedColumn(r, "non-positive damping estimate"))
            continue
        modes.append(ModeEstimate(shape=_canonical(avg), freq_hz=freq,
                                  damping_ratio=zeta, fit_residual=dc.residual))
    if not modes:
        raise ExtractionFailure("every factor column was rejected")
    modes.sort(key=lambda m: m.freq_hz)
    return ModalEstimate(modes=tuple(modes), sensor_ids=sensor_ids,
                         rejected=tuple(rejected))


def pair_modes(est: ModalEstimate, truth: ModalEstimate):
    """One-to-one assignment maximising total MAC (optimal, not greedy).

    Returns (pairs, MacMatrix) where pairs is a tuple of
    (estimated index, truth index).
    """
    values = np.empty((len(est.modes), len(truth.modes)))
    for i, me in enumerate(est.modes):
        for j, mt in enumerate(truth.modes):
            values[i, j] = mac(me.shape, mt.shape)
    rows, cols = scipy.optimize.linear_sum_assignment(-values)
    pairs = tuple((int(i), int(j)) for i, j in zip(rows, cols))
    matrix = MacMatrix(values=values,
                       row_ids=tuple(range(len(est.modes))),
                       col_ids=tuple(range(len(truth.modes))))
    return pairs, matrix
