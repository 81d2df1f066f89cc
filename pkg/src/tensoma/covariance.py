"""Lagged output-covariance estimation and covariance-tensor assembly.

A multichannel record is reduced to the M x M x K tensor whose slice k is
the sample covariance between the record and itself shifted by the k-th
lag. For a linear mixture x = A s with mutually uncorrelated sources this
tensor carries the A diag(. ) A^T structure that the CP factorisation
exploits downstream.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, UsageError
from .tensor_core import Tensor3

__all__ = [
    "SignalBlock",
    "CovarianceTensorSpec",
    "lagged_covariance",
    "build_covariance_tensor",
    "first_difference",
    "read_signal_csv",
    "write_signal_csv",
]

DEFAULT_N_LAGS = 100


@dataclass(frozen=True)
class SignalBlock:
    """Multichannel time record: one row per channel, uniform sampling.

    ``channel_ids`` keeps the original 1-based DOF labels so that sensor
    subsets remember where they were measured.
    """

    data: np.ndarray
    dt: float
    channel_ids: tuple = ()

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise UsageError(f"signal data must be 2-D (M, T), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise UsageError("signal entries must be finite")
        if not self.dt > 0:
            raise UsageError(f"dt must be positive, got {self.dt}")
        ids = tuple(int(c) for c in self.channel_ids)
        if not ids:
            ids = tuple(range(1, arr.shape[0] + 1))
        if len(ids) != arr.shape[0]:
            raise UsageError("channel_ids length must match the channel count")
        if len(set(ids)) != len(ids):
            raise UsageError("channel_ids must be distinct")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "channel_ids", ids)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]


def default_lags(n_lags: int = DEFAULT_N_LAGS) -> tuple:
    """Lag schedule 1..n_lags samples (lag 0 excluded)."""
    return tuple(range(1, int(n_lags) + 1))


@dataclass(frozen=True)
class CovarianceTensorSpec:
    """Which lags to stack and how each slice is estimated.

    Defaults: lags 1..100 (lag 0 excluded to keep measurement noise off the
    diagonal), per-channel mean removal on, slice symmetrisation on.
    """

    lags: tuple = field(default_factory=default_lags)
    demean: bool = True
    symmetrize: bool = True

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        if len(lags) < 2:
            raise UsageError("need at least two lags")
        if lags[0] < 1 or any(b <= a for a, b in zip(lags, lags[1:])):
            raise UsageError("lags must be strictly increasing and >= 1")
        object.__setattr__(self, "lags", lags)

    def validate_against(self, x: SignalBlock):
        if self.lags[-1] >= x.samples:
            raise UsageError(
                f"max lag {self.lags[-1]} must be below the sample count {x.samples}")


def lagged_covariance(x: SignalBlock, tau: int, demean: bool = True) -> np.ndarray:
    """Sample covariance E[x(t+tau) x(t)^T] with divisor (T - tau)."""
    tau = int(tau)
    if tau < 0 or tau >= x.samples:
        raise UsageError(f"lag {tau} outside [0, {x.samples - 1}]")
    data = x.data
    if demean:
        data = data - data.mean(axis=1, keepdims=True)
    n = x.samples - tau
    if tau == 0:
        return (data @ data.T) / n
    return (data[:, tau:] @ data[:, :n].T) / n


def first_difference(x: SignalBlock) -> SignalBlock:
    """Per-channel first difference scaled to a velocity proxy.

    Identification preprocessing: differencing is a channel-wise linear
    filter, so the mixing shapes are untouched and each source keeps its
    pole (a shifted combination of the same damped cosine). It rebalances
    modal amplitudes: displacement records weight a mode by 1/omega^2,
    which buries high modes under the strongest one; the differenced
    record weights all modes comparably (exactly equally for
    mass-proportional damping under white forcing).
    """
    if x.samples < 2:
        raise UsageError("need at least two samples to difference")
    return SignalBlock(np.diff(x.data, axis=1) / x.dt, dt=x.dt,
                       channel_ids=x.channel_ids)


def build_covariance_tensor(x: SignalBlock, spec: CovarianceTensorSpec) -> Tensor3:
    """Stack the lagged covariance slices into an (M, M, K) tensor."""
    spec.validate_against(x)
    m = x.channels
    out = np.empty((m, m, len(spec.lags)))
    for k, tau in enumerate(spec.lags):
        r = lagged_covariance(x, tau, demean=spec.demean)
        if spec.symmetrize:
            r = (r + r.T) / 2.0
        out[:, :, k] = r
    return Tensor3(out)


# -- signal CSV format (shared with the CLI) --------------------------------
#
# Header ``t,ch<i>,...`` with one sample per line; the time column carries a
# uniform grid whose spacing defines dt. Channel labels keep original DOF
# numbers for sensor subsets.

def write_signal_csv(path, x: SignalBlock):
    with open(path, "w", newline="\n") as fh:
        fh.write("t," + ",".join(f"ch{c}" for c in x.channel_ids) + "\n")
        for i in range(x.samples):
            t = i * x.dt
            row = ",".join(repr(float(v)) for v in x.data[:, i])
            fh.write(f"{repr(t)},{row}\n")


def read_signal_csv(path) -> SignalBlock:
    with open(path, "r") as fh:
        header = fh.readline()
        if not header.strip():
            raise DataFormatError("empty file or missing header", line=1, path=path)
        cols = [c.strip() for c in header.strip().split(",")]
        if cols[0] != "t" or len(cols) < 2:
            raise DataFormatError(
                f"expected header 't,ch1,...', got {header.strip()!r}",
                line=1, path=path)
        ids = []
        for c in cols[1:]:
            if not c.startswith("ch"):
                raise DataFormatError(f"bad channel column {c!r}", line=1, path=path)
            try:
                ids.append(int(c[2:]))
            except ValueError:
                raise DataFormatError(f"bad channel column {c!r}", line=1, path=path)
        times = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != len(cols):
                raise DataFormatError(
                    f"expected {len(cols)} fields, got {len(parts)}",
                    line=lineno, path=path)
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise DataFormatError(f"non-numeric value in {line.strip()!r}",
                                      line=lineno, path=path)
            times.append(values[0])
            rows.append(values[1:])
    if len(rows) < 2:
        raise DataFormatError("need at least two samples", path=path)
    t = np.asarray(times)
    steps = np.diff(t)
    dt = float(steps[0])
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-6, atol=1e-12):
        raise DataFormatError("time column must be a uniform increasing grid",
                              path=path)
    return SignalBlock(np.asarray(rows).T, dt=dt, channel_ids=tuple(ids))
