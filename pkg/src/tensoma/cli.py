"""Command-line experiment harness.

Subcommands: ``simulate`` (benchmark data + ground truth), ``identify``
(one record through the covariance -> factorisation -> modal-extraction
pipeline), ``experiment`` (Monte-Carlo sweep over sensor counts), and
``capacity`` (identifiability table).

Exit codes: 0 success, 2 usage error, 3 data/IO error, 4 numerical or fit
failure.
"""

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._backend import BACKEND
from .bcpf import BcpfHyperparams, fit
from .covariance import (CovarianceTensorSpec, SignalBlock,
                         build_covariance_tensor, default_lags,
                         first_difference, read_signal_csv, write_signal_csv)
from .errors import (DataFormatError, ExtractionFailure, FitFailure,
                     NumericalFailure, UsageError)
from .modal_extraction import (ModalEstimate, ModeEstimate, capacity,
                               extract_modes, pair_modes)
from .simulator import (ChainSystem, SimConfig, analytic_modes,
                        benchmark_nonuniform, benchmark_uniform,
                        random_sensor_ids, select_sensors, simulate)
from .tensor_core import Tensor3

SCHEMA_VERSION = 1

RESULTS_CSV_HEADER = (
    "sensor_count,repetition,status,sensor_ids,estimated_rank,iterations,"
    "elbo_final,mode_freqs_hz,mode_damping_ratios,mode_truth_indices,"
    "mode_macs,mode_mac_rows")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a Monte-Carlo experiment run needs; JSON-loadable."""

    system_kind: str = "uniform"
    system_profile: str = "ramp"
    system_seed: int | None = None
    sensor_counts: tuple = (5, 6, 7, 8, 9, 10)
    repetitions: int = 20
    sim: SimConfig = field(default_factory=SimConfig)
    cov: CovarianceTensorSpec = field(default_factory=CovarianceTensorSpec)
    bcpf: BcpfHyperparams = field(default_factory=BcpfHyperparams)
    difference: bool = True
    master_seed: int = 0
    output_dir: str = "tensoma-out"

    def __post_init__(self):
        if self.system_kind not in ("uniform", "nonuniform"):
            raise UsageError(f"unknown system kind {self.system_kind!r}")
        counts = tuple(int(c) for c in self.sensor_counts)
        if not counts:
            raise UsageError("sensor_counts must be nonempty")
        if self.repetitions < 1:
            raise UsageError("repetitions must be >= 1")
        object.__setattr__(self, "sensor_counts", counts)

    def build_system(self) -> ChainSystem:
        if self.system_kind == "uniform":
            return benchmark_uniform()
        return benchmark_nonuniform(profile=self.system_profile,
                                    seed=self.system_seed)


def _take(d: dict, allowed: dict, context: str) -> dict:
    unknown = set(d) - set(allowed)
    if unknown:
        raise UsageError(f"unknown {context} config keys: {sorted(unknown)}")
    return {k: d[k] for k in d}


def _cov_from_dict(d: dict) -> CovarianceTensorSpec:
    d = dict(d)
    if "lags" in d and ("n_lags" in d or "lag_step" in d):
        raise UsageError("give either explicit lags or n_lags/lag_step")
    if "lags" not in d:
        n = int(d.pop("n_lags", len(default_lags())))
        step = int(d.pop("lag_step", 1))
        if step < 1:
            raise UsageError("lag_step must be >= 1")
        d["lags"] = tuple(range(step, step * (n + 1), step))
    kwargs = _take(d, {"lags": 0, "demean": 0, "symmetrize": 0}, "cov")
    return CovarianceTensorSpec(**kwargs)


def _bcpf_from_dict(d: dict) -> BcpfHyperparams:
    allowed = {f.name: 0 for f in dataclasses.fields(BcpfHyperparams)}
    return BcpfHyperparams(**_take(dict(d), allowed, "bcpf"))


def _sim_from_dict(d: dict) -> SimConfig:
    allowed = {f.name: 0 for f in dataclasses.fields(SimConfig)}
    return SimConfig(**_take(dict(d), allowed, "sim"))


def load_experiment_config(d: dict) -> ExperimentConfig:
    d = dict(d)
    d.pop("schema_version", None)
    system = d.pop("system", {})
    kwargs = {}
    if system:
        sys_allowed = _take(dict(system), {"kind": 0, "profile": 0, "seed": 0},
                            "system")
        kwargs["system_kind"] = sys_allowed.get("kind", "uniform")
        kwargs["system_profile"] = sys_allowed.get("profile", "ramp")
        kwargs["system_seed"] = sys_allowed.get("seed")
    if "sim" in d:
        kwargs["sim"] = _sim_from_dict(d.pop("sim"))
    if "cov" in d:
        kwargs["cov"] = _cov_from_dict(d.pop("cov"))
    if "bcpf" in d:
        kwargs["bcpf"] = _bcpf_from_dict(d.pop("bcpf"))
    top = _take(d, {"sensor_counts": 0, "repetitions": 0, "difference": 0,
                    "master_seed": 0, "output_dir": 0}, "experiment")
    kwargs.update(top)
    return ExperimentConfig(**kwargs)


def _read_config_file(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}", path=path)


# -- identification pipeline -------------------------------------------------

@dataclass(frozen=True)
class IdentificationResult:
    estimate: ModalEstimate
    posterior: object
    trace: object
    tensor_scale: float
    wall_ms: float


def run_identification(block: SignalBlock, cov: CovarianceTensorSpec,
                       hyper: BcpfHyperparams, seed: int,
                       difference: bool = True) -> IdentificationResult:
    """Record -> covariance tensor -> factorisation -> modal estimates.

    The tensor is rescaled to unit RMS entry before the fit (the
    non-informative priors assume order-one data; the modal outputs are
    scale-invariant). The lag schedule must be uniformly spaced so the
    damped-cosine fits see a regular grid.
    """
    start = time.perf_counter()
    steps = np.diff(cov.lags)
    if steps.size and not np.all(steps == steps[0]):
        raise UsageError("modal extraction needs uniformly spaced lags")
    lag_step = int(steps[0]) if steps.size else 1
    if difference:
        block = first_difference(block)
    tensor = build_covariance_tensor(block, cov)
    scale = float(np.sqrt(np.mean(tensor.data ** 2)))
    if scale == 0.0:
        raise DataFormatError("covariance tensor is identically zero")
    post, trace = fit(Tensor3(tensor.data / scale), hyper, seed)
    estimate = extract_modes(post, dt_lag=block.dt * lag_step,
                             sensor_ids=block.channel_ids)
    wall_ms = (time.perf_counter() - start) * 1e3
    return IdentificationResult(estimate=estimate, posterior=post, trace=trace,
                                tensor_scale=scale, wall_ms=wall_ms)


def truth_modal_estimate(gt, sensor_ids) -> ModalEstimate:
    """Analytical modes restricted to the measured DOFs, as a ModalEstimate."""
    rows = [int(i) - 1 for i in sensor_ids]
    modes = tuple(
        ModeEstimate(shape=gt.shapes[rows, r],
                     freq_hz=float(gt.freqs_hz[r]),
                     damping_ratio=float(gt.damping_ratios[r]),
                     fit_residual=0.0)
        for r in range(gt.n_modes))
    return ModalEstimate(modes=modes, sensor_ids=tuple(int(i) for i in sensor_ids))


# -- experiment --------------------------------------------------------------

@dataclass(frozen=True)
class RunRecord:
    sensor_count: int
    repetition: int
    status: str            # ok | fit_failure | numerical_failure
    sensor_ids: tuple
    estimated_rank: int | None = None
    iterations: int | None = None
    elbo_final: float | None = None
    mode_freqs_hz: tuple = ()
    mode_damping_ratios: tuple = ()
    mode_truth_indices: tuple = ()
    mode_macs: tuple = ()
    mode_mac_rows: tuple = ()   # per estimated mode: MAC against every truth mode
    wall_ms: float | None = None   # not written to the CSV (kept byte-stable)

    def to_csv_row(self) -> str:
        def num(v):
            return "" if v is None else repr(v) if isinstance(v, float) else str(v)

        def pack(values):
            return ";".join(repr(float(v)) for v in values)

        return ",".join([
            str(self.sensor_count),
            str(self.repetition),
            self.status,
            ";".join(str(i) for i in self.sensor_ids),
            num(self.estimated_rank),
            num(self.iterations),
            num(self.elbo_final),
            pack(self.mode_freqs_hz),
            pack(self.mode_damping_ratios),
            ";".join(str(i) for i in self.mode_truth_indices),
            pack(self.mode_macs),
            ";".join("|".join(repr(float(v)) for v in row)
                     for row in self.mode_mac_rows),
        ])


def _run_seeds(master_seed: int, sensor_count: int, repetition: int):
    ss = np.random.SeedSequence([int(master_seed), int(sensor_count),
                                 int(repetition)])
    sim_s, pick_s, fit_s = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    return sim_s, pick_s, fit_s


def run_experiment(config: ExperimentConfig):
    """All (sensor count x repetition) runs; failures recorded, not fatal."""
    system = config.build_system()
    gt = analytic_modes(system)
    n_dof = system.n_dof
    for sc in config.sensor_counts:
        if not 2 <= sc <= n_dof:
            raise UsageError(f"sensor count {sc} outside [2, {n_dof}]")
    records = []
    for sc in config.sensor_counts:
        for rep in range(config.repetitions):
            sim_seed, pick_seed, fit_seed = _run_seeds(config.master_seed, sc, rep)
            block = simulate(system, replace(config.sim, seed=sim_seed))
            ids = random_sensor_ids(n_dof, sc, seed=pick_seed)
            sub = select_sensors(block, ids)
            base = dict(sensor_count=sc, repetition=rep, sensor_ids=ids)
            try:
                res = run_identification(sub, config.cov, config.bcpf,
                                         fit_seed, config.difference)
            except NumericalFailure:
                records.append(RunRecord(status="numerical_failure", **base))
                continue
            except (FitFailure, ExtractionFailure, DataFormatError):
                records.append(RunRecord(status="fit_failure", **base))
                continue
            pairs, macm = pair_modes(res.estimate, truth_modal_estimate(gt, ids))
            order = sorted(pairs, key=lambda p: p[0])
            records.append(RunRecord(
                status="ok",
                estimated_rank=res.posterior.rank,
                iterations=res.trace.iterations,
                elbo_final=float(res.trace.elbo[-1]),
                mode_freqs_hz=tuple(res.estimate.modes[i].freq_hz for i, _ in order),
                mode_damping_ratios=tuple(
                    res.estimate.modes[i].damping_ratio for i, _ in order),
                mode_truth_indices=tuple(j for _, j in order),
                mode_macs=tuple(float(macm.values[i, j]) for i, j in order),
                mode_mac_rows=tuple(tuple(float(v) for v in macm.values[i, :])
                                    for i, _ in order),
                wall_ms=res.wall_ms,
                **base))
    return records, gt


def summarize_records(records, gt) -> dict:
    """Per-sensor-count aggregates matching the raw CSV to full precision.

    mac_matrix_mean row i holds the average MAC between the estimated mode
    paired to truth mode i and every truth mode (null row when truth mode i
    was never paired).
    """
    n_modes = gt.n_modes

    def stats(values):
        if not values:
            return None, None
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else None
        return mean, std

    summary = {}
    for sc in sorted({r.sensor_count for r in records}):
        runs = [r for r in records if r.sensor_count == sc]
        ok = [r for r in runs if r.status == "ok"]
        ranks = [r.estimated_rank for r in ok]
        rank_mean, rank_std = stats(ranks)
        freq = [[] for _ in range(n_modes)]
        damp = [[] for _ in range(n_modes)]
        mac_acc = np.zeros((n_modes, n_modes))
        mac_cnt = np.zeros(n_modes, dtype=int)
        for r in ok:
            for ei, ti in enumerate(r.mode_truth_indices):
                freq[ti].append(r.mode_freqs_hz[ei])
                damp[ti].append(r.mode_damping_ratios[ei])
                mac_acc[ti] += np.asarray(r.mode_mac_rows[ei])
                mac_cnt[ti] += 1

        freq_stats = [stats(v) for v in freq]
        damp_stats = [stats(v) for v in damp]
        mac_mean = [
            [float(mac_acc[i, j] / mac_cnt[i]) for j in range(n_modes)]
            if mac_cnt[i] else None
            for i in range(n_modes)
        ]
        summary[str(sc)] = {
            "n_runs": len(runs),
            "n_ok": len(ok),
            "n_fit_failure": sum(r.status == "fit_failure" for r in runs),
            "n_numerical_failure": sum(
                r.status == "numerical_failure" for r in runs),
            "rank_mean": rank_mean,
            "rank_2sigma": None if rank_std is None else 2.0 * rank_std,
            "freq_mean_hz": [m for m, _ in freq_stats],
            "freq_std_hz": [s for _, s in freq_stats],
            "damping_mean": [m for m, _ in damp_stats],
            "damping_std": [s for _, s in damp_stats],
            "n_paired": [len(v) for v in freq],
            "mac_matrix_mean": mac_mean,
        }
    return summary


def write_results_csv(path, records):
    with open(path, "w", newline="\n") as fh:
        fh.write(RESULTS_CSV_HEADER + "\n")
        for r in records:
            fh.write(r.to_csv_row() + "\n")


# -- subcommands -------------------------------------------------------------

def cmd_capacity(out_path=None) -> int:
    lines = ["sensors,max_sources"]
    lines += [f"{m},{capacity(m)}" for m in range(2, 13)]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out_path is not None:
        Path(out_path).write_text(text)
    return 0


def cmd_simulate(config: ExperimentConfig, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    system = config.build_system()
    block = simulate(system, replace(config.sim, seed=config.master_seed))
    gt = analytic_modes(system)
    write_signal_csv(out / "signals.csv", block)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "system": {
            "masses": list(system.masses),
            "stiffnesses": list(system.stiffnesses),
            "damping_alpha": system.damping_alpha,
        },
        "modes": gt.to_dict(),
    }
    (out / "ground_truth.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'signals.csv'} ({block.channels} channels x "
          f"{block.samples} samples) and ground_truth.json")
    return 0


def cmd_identify(signal_path, config: ExperimentConfig, seed: int, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    block = read_signal_csv(signal_path)
    res = run_identification(block, config.cov, config.bcpf, seed,
                             config.difference)
    est_payload = dict(res.estimate.to_dict(), schema_version=SCHEMA_VERSION)
    trace_payload = dict(
        res.trace.to_dict(),
        schema_version=SCHEMA_VERSION,
        lambda_mean=[float(v) for v in res.posterior.lambda_mean],
        beta_mean=float(res.posterior.beta_mean),
        tensor_scale=res.tensor_scale,
        wall_ms=res.wall_ms,
        backend=BACKEND,
    )
    (out / "modal_estimate.json").write_text(
        json.dumps(est_payload, indent=2, sort_keys=True) + "\n")
    (out / "fit_trace.json").write_text(
        json.dumps(trace_payload, indent=2, sort_keys=True) + "\n")
    print(f"estimated rank {res.posterior.rank}: "
          + ", ".join(f"{m.freq_hz:.3f} Hz" for m in res.estimate.modes))
    return 0


def cmd_experiment(config: ExperimentConfig, out_dir=None) -> int:
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, gt = run_experiment(config)
    write_results_csv(out / "results.csv", records)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "truth": {
            "freqs_hz": [float(f) for f in gt.freqs_hz],
            "damping_ratios": [float(z) for z in gt.damping_ratios],
        },
        "per_sensor_count": summarize_records(records, gt),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for sc, agg in summary["per_sensor_count"].items():
        print(f"M={sc}: mean rank {agg['rank_mean']} over {agg['n_ok']} ok runs "
              f"({agg['n_fit_failure']} fit failures, "
              f"{agg['n_numerical_failure']} numerical failures)")
    return 0


# -- entry point -------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensoma",
        description="Output-only modal analysis via Bayesian tensor factorisation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_cap = sub.add_parser("capacity", help="print the identifiability table")
    p_cap.add_argument("--out", help="also write the table as CSV")

    p_sim = sub.add_parser("simulate", help="generate benchmark signals")
    p_sim.add_argument("--config", help="experiment config JSON")
    p_sim.add_argument("--seed", type=int, help="override master seed")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_id = sub.add_parser("identify", help="identify modes from a signal CSV")
    p_id.add_argument("signals", help="input signal CSV (t,ch1,...)")
    p_id.add_argument("--config", help="config JSON (cov/bcpf/difference)")
    p_id.add_argument("--seed", type=int, default=0)
    p_id.add_argument("--out", required=True, help="output directory")

    p_exp = sub.add_parser("experiment", help="Monte-Carlo sensor-count sweep")
    p_exp.add_argument("--config", help="experiment config JSON")
    p_exp.add_argument("--seed", type=int, help="override master seed")
    p_exp.add_argument("--out", help="override output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg_dict = _read_config_file(args.config) if getattr(args, "config", None) else {}
        config = load_experiment_config(cfg_dict)
        if getattr(args, "seed", None) is not None:
            config = replace(config, master_seed=args.seed)
        if args.command == "capacity":
            return cmd_capacity(args.out)
        if args.command == "simulate":
            return cmd_simulate(config, args.out)
        if args.command == "identify":
            return cmd_identify(args.signals, config, args.seed, args.out)
        if args.command == "experiment":
            return cmd_experiment(config, args.out)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalFailure, FitFailure, ExtractionFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
