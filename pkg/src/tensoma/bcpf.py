"""Variational Bayesian CP factorisation with automatic rank determination.

The model places row-wise Gaussian posteriors on the three factor matrices
(two M-row mixing factors and one K-row lag factor), a per-column Gamma
posterior on the shared column precisions, and a Gamma posterior on the
noise precision. Mean-field coordinate ascent maximises the evidence lower
bound; columns whose total power collapses relative to the strongest column
are pruned, which is what turns the factorisation into a rank estimator.

For a fully observed tensor the row covariance of a mode is identical
across rows; it is stored per row anyway (broadcast views) to keep the
posterior self-describing.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import NumericalFailure, UsageError
from .tensor_core import Tensor3, khatri_rao, unfold
from ._backend import had3_sum, sumsq

__all__ = [
    "BcpfHyperparams",
    "CpPosterior",
    "FitTrace",
    "init_posterior",
    "update_factor_mode1",
    "update_factor_mode2",
    "update_factor_mode3",
    "update_lambda",
    "update_beta",
    "elbo",
    "prune_columns",
    "fit",
    "column_powers",
    "mean_column_powers",
]


@dataclass(frozen=True)
class BcpfHyperparams:
    """Gamma hyperpriors, initial rank and stopping/pruning controls.

    ``d_init=None`` resolves, at fit time, to the identifiability capacity
    of the tensor's sensor count (the largest provably unique CP rank).
    Non-informative Gamma priors (1e-6) assume the tensor entries are of
    order one; rescale the data, not the priors.
    """

    c0: float = 1e-6
    d0: float = 1e-6
    a0: float = 1e-6
    b0: float = 1e-6
    d_init: int | None = None
    max_iters: int = 500
    elbo_rel_tol: float = 1e-6
    prune_ratio: float = 1e-6
    prune_burn_in: int = 5

    def __post_init__(self):
        if min(self.c0, self.d0, self.a0, self.b0) <= 0:
            raise UsageError("Gamma hyperparameters must be positive")
        if self.d_init is not None and self.d_init < 1:
            raise UsageError("d_init must be >= 1")
        if self.max_iters < 1:
            raise UsageError("max_iters must be >= 1")
        if self.elbo_rel_tol <= 0:
            raise UsageError("elbo_rel_tol must be positive")
        if not 0 < self.prune_ratio < 1:
            raise UsageError("prune_ratio must lie in (0, 1)")
        if self.prune_burn_in < 0:
            raise UsageError("prune_burn_in must be >= 0")


@dataclass(frozen=True)
class CpPosterior:
    """Factorised posterior state: means, per-row covariances, precisions."""

    a1_mean: np.ndarray
    a2_mean: np.ndarray
    rs_mean: np.ndarray
    a1_cov: np.ndarray    # (M, D, D)
    a2_cov: np.ndarray    # (M, D, D)
    rs_cov: np.ndarray    # (K, D, D)
    lambda_shape: np.ndarray
    lambda_rate: np.ndarray
    beta_shape: float
    beta_rate: float

    @property
    def rank(self):
        return self.a1_mean.shape[1]

    @property
    def lambda_mean(self):
        return self.lambda_shape / self.lambda_rate

    @property
    def beta_mean(self):
        return self.beta_shape / self.beta_rate


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration ELBO and rank, plus the stopping outcome."""

    elbo: tuple
    rank: tuple
    converged: bool
    iterations: int

    def to_dict(self):
        return {
            "elbo": [float(v) for v in self.elbo],
            "rank": [int(r) for r in self.rank],
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }


def _check_square_tensor(t: Tensor3):
    i, j, _ = t.dims
    if i != j:
        raise UsageError(f"tensor must have dims (M, M, K), got {t.dims}")


def _broadcast_cov(v: np.ndarray, rows: int) -> np.ndarray:
    return np.broadcast_to(v, (rows,) + v.shape)


def _second_moment_gram(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """E[X^T X] = mean^T mean + sum of row covariances."""
    return mean.T @ mean + cov.sum(axis=0)


def _inv_spd(mat: np.ndarray, iteration=None, stage=None) -> np.ndarray:
    """Cholesky inverse with a single jitter retry on breakdown."""
    eye = np.eye(mat.shape[0])
    for attempt in range(2):
        try:
            cho = scipy.linalg.cho_factor(mat, lower=True)
            inv = scipy.linalg.cho_solve(cho, eye)
            return (inv + inv.T) / 2.0
        except scipy.linalg.LinAlgError:
            if attempt == 0:
                mat = mat + (1e-12 * np.trace(mat)) * eye
    raise NumericalFailure("singular variance system", iteration=iteration,
                           stage=stage)


def column_powers(post: CpPosterior) -> np.ndarray:
    """Expected squared column norms summed over the three factors."""
    total = np.zeros(post.rank)
    for mean, cov in ((post.a1_mean, post.a1_cov),
                      (post.a2_mean, post.a2_cov),
                      (post.rs_mean, post.rs_cov)):
        total += (mean ** 2).sum(axis=0)
        total += cov.diagonal(axis1=1, axis2=2).sum(axis=0)
    return total


def mean_column_powers(post: CpPosterior) -> np.ndarray:
    """Squared column norms of the posterior means, summed over factors.

    Used for pruning: a shed column's means collapse to zero while its
    posterior variances settle at a noise-driven floor, so the mean power
    separates dead from live columns by hundreds of orders of magnitude.
    """
    return ((post.a1_mean ** 2).sum(axis=0)
            + (post.a2_mean ** 2).sum(axis=0)
            + (post.rs_mean ** 2).sum(axis=0))


# Initial noise-precision guess relative to the mean-square tensor entry.
# Optimistic (low assumed noise) on purpose: the first sweeps then behave
# like lightly regularised alternating least squares, which lets weak
# components grow before the column precisions start shrinking them.
# Initialising the noise posterior at its bare prior (mean 1) instead loses
# genuine components to early shrinkage on a large fraction of instances.
BETA_INIT_SCALE = 1e3


def init_posterior(t: Tensor3, h: BcpfHyperparams, seed: int) -> CpPosterior:
    """SVD-based factor means, identity row covariances, data-scaled noise.

    Each mode's mean gets the leading left singular vectors of its
    unfolding scaled by sqrt singular values; columns beyond the numerical
    rank of the unfolding are filled with seeded unit-variance noise.
    Column precisions start at their prior; the noise precision starts at
    ``BETA_INIT_SCALE`` over the mean-square entry (see note above).
    """
    _check_square_tensor(t)
    m, _, k = t.dims
    from .modal_extraction import capacity  # deferred: avoids module cycle
    cap = capacity(m) if m >= 2 else 1
    d = h.d_init if h.d_init is not None else cap
    if d > m * m or d > cap:
        import warnings
        warnings.warn(f"d_init={d} exceeds the identifiable capacity for M={m}")

    rng = np.random.default_rng(seed)
    means = []
    for mode, rows in ((1, m), (2, m), (3, k)):
        u, s, _ = np.linalg.svd(unfold(t, mode), full_matrices=False)
        tol = (s[0] * max(t.dims) * np.finfo(float).eps) if s.size else 0.0
        r = min(d, int(np.sum(s > tol)))
        mean = np.empty((rows, d))
        mean[:, :r] = u[:, :r] * np.sqrt(s[:r])
        if r < d:
            mean[:, r:] = rng.standard_normal((rows, d - r))
        means.append(mean)
    eye = np.eye(d)
    msq = float(np.mean(t.data ** 2))
    beta_shape = h.a0 + t.data.size / 2.0
    beta_mean0 = BETA_INIT_SCALE / msq if msq > 0 else BETA_INIT_SCALE
    return CpPosterior(
        a1_mean=means[0], a2_mean=means[1], rs_mean=means[2],
        a1_cov=_broadcast_cov(eye, m),
        a2_cov=_broadcast_cov(eye, m),
        rs_cov=_broadcast_cov(eye, k),
        lambda_shape=np.full(d, h.c0),
        lambda_rate=np.full(d, h.d0),
        beta_shape=beta_shape,
        beta_rate=beta_shape / beta_mean0,
    )


def _update_factor(t, post, mode, iteration=None):
    """Shared body of the three factor updates."""
    if mode == 1:
        kr = khatri_rao(post.rs_mean, post.a2_mean)
        w = (_second_moment_gram(post.rs_mean, post.rs_cov)
             * _second_moment_gram(post.a2_mean, post.a2_cov))
        rows = post.a1_mean.shape[0]
    elif mode == 2:
        kr = khatri_rao(post.rs_mean, post.a1_mean)
        w = (_second_moment_gram(post.rs_mean, post.rs_cov)
             * _second_moment_gram(post.a1_mean, post.a1_cov))
        rows = post.a2_mean.shape[0]
    else:
        kr = khatri_rao(post.a2_mean, post.a1_mean)
        w = (_second_moment_gram(post.a2_mean, post.a2_cov)
             * _second_moment_gram(post.a1_mean, post.a1_cov))
        rows = post.rs_mean.shape[0]

    e_beta = post.beta_mean
    prec = e_beta * w + np.diag(post.lambda_mean)
    v = _inv_spd(prec, iteration=iteration, stage=f"factor-mode-{mode}")
    mean = e_beta * (unfold(t, mode) @ kr) @ v
    if not np.isfinite(mean).all():
        raise NumericalFailure("non-finite factor mean", iteration=iteration,
                               stage=f"factor-mode-{mode}")
    cov = _broadcast_cov(v, rows)
    if mode == 1:
        return replace(post, a1_mean=mean, a1_cov=cov)
    if mode == 2:
        return replace(post, a2_mean=mean, a2_cov=cov)
    return replace(post, rs_mean=mean, rs_cov=cov)


def update_factor_mode1(t: Tensor3, post: CpPosterior, iteration=None) -> CpPosterior:
    """Row means/covariances of the first mixing factor.

    Variance: V = (E[beta] * E[(Rs (.) A2)^T (Rs (.) A2)] + E[Lambda])^-1,
    with the Khatri-Rao expectation computed as the Hadamard product of the
    two modes' second-moment Grams. Mean rows: E[beta] * V applied to the
    mean Khatri-Rao projection of the matching tensor unfolding.
    """
    return _update_factor(t, post, 1, iteration)


def update_factor_mode2(t: Tensor3, post: CpPosterior, iteration=None) -> CpPosterior:
    """Same update for the second mixing factor (kept independent)."""
    return _update_factor(t, post, 2, iteration)


def update_factor_mode3(t: Tensor3, post: CpPosterior, iteration=None) -> CpPosterior:
    """Same update for the lag factor."""
    return _update_factor(t, post, 3, iteration)


def update_lambda(post: CpPosterior, h: BcpfHyperparams) -> CpPosterior:
    """Per-column precision posterior from the expected column powers.

    shape = c0 + (2M + K) / 2; rate = d0 + half the expected total squared
    column norm, so low-power columns end up with large expected precision.
    """
    rows_total = (post.a1_mean.shape[0] + post.a2_mean.shape[0]
                  + post.rs_mean.shape[0])
    shape = np.full(post.rank, h.c0 + rows_total / 2.0)
    rate = h.d0 + column_powers(post) / 2.0
    if not np.isfinite(rate).all():
        raise NumericalFailure("non-finite precision rate", stage="lambda")
    return replace(post, lambda_shape=shape, lambda_rate=rate)


def _expected_residual(t: Tensor3, post: CpPosterior) -> float:
    """E||t - reconstruction||_F^2 under the factor posterior.

    Three terms: squared data norm, cross term against the mean
    reconstruction, and the model second moment, which reduces to the
    all-entries sum of the elementwise product of the three second-moment
    Grams.
    """
    s1 = _second_moment_gram(post.a1_mean, post.a1_cov)
    s2 = _second_moment_gram(post.a2_mean, post.a2_cov)
    s3 = _second_moment_gram(post.rs_mean, post.rs_cov)
    kr = khatri_rao(post.rs_mean, post.a2_mean)
    proj = unfold(t, 1) @ kr
    cross = float(np.sum(proj * post.a1_mean))
    return sumsq(t.data.reshape(-1)) - 2.0 * cross + had3_sum(s1, s2, s3)


def update_beta(t: Tensor3, post: CpPosterior, h: BcpfHyperparams,
                iteration=None) -> CpPosterior:
    """Noise-precision posterior: shape a0 + M^2 K / 2, rate from the
    expected squared residual (clamped at tiny negative round-off)."""
    res = _expected_residual(t, post)
    tnorm2 = sumsq(t.data.reshape(-1))
    if res < -1e-8 * tnorm2:
        raise NumericalFailure(
            f"expected residual {res:.3e} is negative beyond round-off",
            iteration=iteration, stage="beta")
    res = max(res, 0.0)
    return replace(post,
                   beta_shape=h.a0 + t.data.size / 2.0,
                   beta_rate=h.b0 + res / 2.0)


def elbo(t: Tensor3, post: CpPosterior, h: BcpfHyperparams) -> float:
    """Evidence lower bound with state-independent constants dropped.

    Terms: expected data misfit scaled by E[beta]; the precision-weighted
    factor power; Gaussian log-determinants; and the Gamma normalisers of
    the precision posteriors.
    """
    res = max(_expected_residual(t, post), 0.0)
    s_diag = np.zeros(post.rank)
    logdets = 0.0
    for mean, cov in ((post.a1_mean, post.a1_cov),
                      (post.a2_mean, post.a2_cov),
                      (post.rs_mean, post.rs_cov)):
        s_diag += (mean ** 2).sum(axis=0) + cov.diagonal(axis1=1, axis2=2).sum(axis=0)
        _, ld = np.linalg.slogdet(cov)
        logdets += ld.sum()

    a_l, b_l = post.beta_shape, post.beta_rate
    c_l, d_l = post.lambda_shape, post.lambda_rate
    value = (
        -(a_l / (2.0 * b_l)) * res
        - 0.5 * float(np.dot(post.lambda_mean, s_diag))
        + 0.5 * logdets
        + float(np.sum(gammaln(c_l)))
        + float(np.sum(c_l * (1.0 - np.log(d_l) - h.d0 / d_l)))
        + float(gammaln(a_l))
        + a_l * (1.0 - math.log(b_l) - h.b0 / b_l)
    )
    return value


# Columns collinear beyond this in all three modes describe the same
# rank-one direction and are redundant (they void Kruskal uniqueness).
_COLLINEAR_COS = 1.0 - 1e-3


def _duplicate_mask(post: CpPosterior, order) -> np.ndarray:
    cosines = []
    for mean in (post.a1_mean, post.a2_mean, post.rs_mean):
        norms = np.linalg.norm(mean, axis=0)
        unit = mean / np.where(norms > 0, norms, 1.0)
        cosines.append(np.abs(unit.T @ unit))
    allmode = np.minimum(np.minimum(cosines[0], cosines[1]), cosines[2])
    keep = np.ones(post.rank, dtype=bool)
    for pos, r in enumerate(order):
        if not keep[r]:
            continue
        for l in order[pos + 1:]:
            if keep[l] and allmode[r, l] > _COLLINEAR_COS:
                keep[l] = False
    return keep


def prune_columns(post: CpPosterior, h: BcpfHyperparams) -> CpPosterior:
    """Drop dead and duplicate columns.

    A column goes when its mean power falls below prune_ratio of the
    strongest column, or when it is collinear with a stronger column in
    all three modes (a redundant split of one rank-one term; the survivor
    re-absorbs the mass on the next sweep). The strongest column always
    survives, so the rank never reaches zero.
    """
    if post.rank <= 1:
        return post
    powers = mean_column_powers(post)
    alive = powers >= h.prune_ratio * powers.max()
    unique = _duplicate_mask(post, np.argsort(powers)[::-1])
    keep = np.flatnonzero(alive & unique)
    if keep.size == 0:
        keep = np.array([int(powers.argmax())])
    if keep.size == post.rank:
        return post
    return CpPosterior(
        a1_mean=post.a1_mean[:, keep].copy(),
        a2_mean=post.a2_mean[:, keep].copy(),
        rs_mean=post.rs_mean[:, keep].copy(),
        a1_cov=np.ascontiguousarray(post.a1_cov[:, keep[:, None], keep[None, :]]),
        a2_cov=np.ascontiguousarray(post.a2_cov[:, keep[:, None], keep[None, :]]),
        rs_cov=np.ascontiguousarray(post.rs_cov[:, keep[:, None], keep[None, :]]),
        lambda_shape=post.lambda_shape[keep].copy(),
        lambda_rate=post.lambda_rate[keep].copy(),
        beta_shape=post.beta_shape,
        beta_rate=post.beta_rate,
    )


def fit(t: Tensor3, h: BcpfHyperparams, seed: int = 0):
    """Mean-field coordinate ascent until the ELBO stalls or max_iters.

    Sweep order per iteration: factor modes 1-3, column precisions, noise
    precision, ELBO, then pruning once the burn-in has passed. Returns the
    final posterior and the per-iteration trace; deterministic for a fixed
    seed.
    """
    _check_square_tensor(t)
    post = init_posterior(t, h, seed)
    elbo_trace = []
    rank_trace = []
    converged = False
    last = None
    for it in range(1, h.max_iters + 1):
        post = update_factor_mode1(t, post, iteration=it)
        post = update_factor_mode2(t, post, iteration=it)
        post = update_factor_mode3(t, post, iteration=it)
        post = update_lambda(post, h)
        post = update_beta(t, post, h, iteration=it)
        value = elbo(t, post, h)
        pruned = False
        if it > h.prune_burn_in:
            smaller = prune_columns(post, h)
            pruned = smaller.rank < post.rank
            post = smaller
        elbo_trace.append(value)
        rank_trace.append(post.rank)
        if last is not None and abs(value - last) <= h.elbo_rel_tol * abs(last):
            converged = True
            break
        last = None if pruned else value
    return post, FitTrace(elbo=tuple(elbo_trace), rank=tuple(rank_trace),
                          converged=converged, iterations=len(elbo_trace))
