"""Command-line interface: batch runs in, CSV/JSON/SVG artifacts out.

Subcommands: ``simulate`` (one cluster, queueing statistics), ``exact``
(truncated-chain solve), ``bound`` (stability and queueing-probability
certificates), ``fluid`` (trajectory integration), ``couple``
(shared-randomness reference comparison), ``sweep`` (custom scaling sweep)
and ``reproduce set-i|set-ii|set-iii`` (the preset experiment sets with
figures).  Failures print one machine-readable JSON object to stderr and
exit nonzero.  Seed precedence: ``--seed`` flag, then the config document,
then the package default; the effective seed is echoed in the metadata.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    HypothesisViolated,
    queueing_probability_bound,
    stability_margin,
)
from .config_io import ConfigParseError, parse_config, serialize_config
from .exact import (
    build_generator,
    enumerate_states,
    exact_mean_drift,
    exact_queueing_probability,
    export_distribution_csv,
    stationary_distribution,
    stationary_generator_drift,
)
from .experiments import (
    DEFAULT_SEED,
    SweepSpec,
    need_value,
    run_set,
    scaling_sweep,
)
from .fluid import coupled_reference_run, fluid_integrate
from .model import ClusterConfig, ValidationError, validate_config
from .simulate import (
    SimParams,
    estimate_queueing_probability,
    sample_scaled_counts,
    simulate,
    write_trace_csv,
)
from .svgplot import Series, line_chart

ENV_OUT_DIR = "MSJQ_OUT"


class IoError(OSError):
    """File-system failure surfaced to the CLI user."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msjq",
        description="FCFS multi-server-job queueing: simulation, exact solves, "
        "bounds, fluid limits and scaling experiments.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="config document path")
        p.add_argument("--out", default=None, help=f"output directory (or ${ENV_OUT_DIR})")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--segments", type=int, default=10)
        p.add_argument(
            "--arrivals", type=int, default=1_000_000, help="post-warmup arrivals"
        )
        p.add_argument("--warmup-fraction", type=float, default=0.2)
        p.add_argument("--long-run", action="store_true", help="include n=2^14, 2^16")

    p = sub.add_parser("simulate", help="simulate one cluster")
    common(p)
    p.add_argument("--trace", default=None, help="also write a per-arrival trace CSV")

    p = sub.add_parser("exact", help="truncated-chain stationary solve")
    common(p)
    p.add_argument("--truncation", type=int, default=12, help="max jobs in a state")
    p.add_argument("--budget", type=int, default=200_000, help="state-count budget")

    p = sub.add_parser("bound", help="stability margin and queueing bound")
    common(p)

    p = sub.add_parser("fluid", help="integrate the fluid trajectory")
    common(p)
    p.add_argument("--y0", default=None, help="comma-separated start, default zeros")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)

    p = sub.add_parser("couple", help="shared-randomness reference comparison")
    common(p)
    p.add_argument("--horizon", type=float, default=20.0)

    p = sub.add_parser("sweep", help="run a custom scaling sweep")
    common(p)

    p = sub.add_parser("reproduce", help="run a preset experiment set")
    p.add_argument("set", choices=("set-i", "set-ii", "set-iii"))
    common(p, config_required=False)
    return parser


def _out_dir(args) -> Path:
    directory = args.out or os.environ.get(ENV_OUT_DIR) or "msjq-out"
    path = Path(directory)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {path}: {exc}") from None
    return path


def _load_config(args):
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text)


def _need_cluster(cfg) -> ClusterConfig:
    if isinstance(cfg, ClusterConfig):
        return cfg
    raise ConfigParseError("this subcommand needs a 'cluster' document")


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
    print(path)


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _effective_seed(args, spec_seed: int | None = None) -> int:
    if args.seed is not None:
        return args.seed
    if spec_seed is not None:
        return spec_seed
    return DEFAULT_SEED


def _total_arrivals(args) -> int:
    return math.ceil(args.arrivals / (1.0 - args.warmup_fraction))


def _cmd_simulate(args) -> None:
    vcfg = validate_config(_need_cluster(_load_config(args)))
    out = _out_dir(args)
    seed = _effective_seed(args)
    run = simulate(
        vcfg,
        SimParams(
            seed=seed,
            total_arrivals=_total_arrivals(args),
            warmup_fraction=args.warmup_fraction,
        ),
    )
    stats = estimate_queueing_probability(run, args.segments)
    scaled = sample_scaled_counts(run, vcfg)
    report = {
        "seed": seed,
        "rho_total": vcfg.loads.total,
        "flagged_unstable": run.flagged_unstable,
        "arrivals_per_class": run.arrivals_per_class.tolist(),
        "queued_per_class_post_warmup": run.queued_per_class.tolist(),
        "p_queue_overall_mean": stats.overall_mean,
        "p_queue_overall_std": stats.overall_std,
        "p_queue_per_class_mean": list(stats.per_class_mean),
        "p_queue_per_class_std": list(stats.per_class_std),
        "scaled_count_mean": [m for m, _ in scaled],
        "scaled_count_std": [s for _, s in scaled],
        "segments": stats.segments,
        "sim_time": run.sim_time,
        "event_count": run.event_count,
        "version": __version__,
    }
    if args.format == "json":
        _write(out / "simulate.json", _json_text(report))
    else:
        keys = sorted(report)
        lines = ["key,value"] + [f"{k},{json.dumps(report[k])}" for k in keys]
        _write(out / "simulate.csv", "\n".join(lines) + "\n")
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace_csv(run, fh)
        print(args.trace)


def _cmd_exact(args) -> None:
    vcfg = validate_config(_need_cluster(_load_config(args)))
    out = _out_dir(args)
    states = enumerate_states(vcfg, args.truncation, budget=args.budget)
    chain = build_generator(states, vcfg)
    dist = stationary_distribution(chain)
    pq = exact_queueing_probability(
        dist, chain, vcfg, boundary_threshold=max(1e-8, 10 * dist.boundary_mass)
    )
    report = {
        "truncation_length": args.truncation,
        "num_states": len(states),
        "residual_norm": dist.residual_norm,
        "boundary_mass": dist.boundary_mass,
        "p_queue_per_class": list(pq.per_class),
        "p_queue_overall": pq.overall,
        "mean_drift_formula": exact_mean_drift(dist, chain, vcfg),
        "mean_drift_generator": stationary_generator_drift(dist, chain, vcfg),
        "version": __version__,
    }
    _write(out / "exact.json", _json_text(report))
    _write(out / "stationary.csv", export_distribution_csv(dist, chain))


def _regime_exponent(profile: str) -> float:
    if profile.isdigit() or profile.startswith("log2"):
        return 0.0
    if profile == "sqrt":
        return 0.5
    if "n^" in profile:
        exp = profile.split("n^")[1]
        return float(exp.split("/")[0]) / float(exp.split("/")[1]) if "/" in exp else float(exp)
    raise ValueError(f"no scaling exponent for profile {profile!r}")


def _cmd_bound(args) -> None:
    cfg = _load_config(args)
    out = _out_dir(args)
    if isinstance(cfg, ClusterConfig):
        configs = [validate_config(cfg)]
        sweep_spec = None
    else:
        sweep_spec = cfg
        configs = scaling_sweep(cfg)
    rows = []
    for vcfg in configs:
        margin = stability_margin(vcfg)
        try:
            raw, clamped = queueing_probability_bound(vcfg)
        except HypothesisViolated:
            raw = clamped = float("nan")
        rows.append(
            {
                "n": vcfg.num_servers,
                "m_max": vcfg.m_max,
                "rho_total": margin.rho,
                "stability_threshold": margin.threshold,
                "provably_stable": margin.provably_stable,
                "borderline": margin.borderline,
                "bound_raw": raw,
                "bound_clamped": clamped,
            }
        )
    report: dict = {"rows": rows, "version": __version__}
    if sweep_spec is not None and sweep_spec.load_alpha is not None:
        gamma = max(_regime_exponent(p) for p in sweep_spec.need_profiles)
        report["scaling_exponents"] = {
            "alpha": sweep_spec.load_alpha,
            "gamma_need": gamma,
            "two_alpha_plus_gamma": 2 * sweep_spec.load_alpha + gamma,
            "diminishing": 2 * sweep_spec.load_alpha + gamma < 1.0,
        }
    if args.format == "json":
        _write(out / "bound.json", _json_text(report))
    else:
        keys = list(rows[0])
        lines = [",".join(keys)]
        for r in rows:
            lines.append(",".join(json.dumps(r[k]) for k in keys))
        _write(out / "bound.csv", "\n".join(lines) + "\n")


def _cmd_fluid(args) -> None:
    vcfg = validate_config(_need_cluster(_load_config(args)))
    out = _out_dir(args)
    y0 = (
        [float(v) for v in args.y0.split(",")]
        if args.y0
        else [0.0] * vcfg.num_classes
    )
    if len(y0) != vcfg.num_classes:
        raise ConfigParseError(
            f"--y0 needs {vcfg.num_classes} components, got {len(y0)}"
        )
    traj = fluid_integrate(y0, args.horizon, args.dt, vcfg)
    _write(out / "fluid.csv", traj.to_csv())


def _cmd_couple(args) -> None:
    vcfg = validate_config(_need_cluster(_load_config(args)))
    out = _out_dir(args)
    seed = _effective_seed(args)
    coupled = coupled_reference_run(vcfg, seed, args.horizon)
    report = {
        "seed": seed,
        "horizon": args.horizon,
        "servers_per_class": list(coupled.servers_per_class),
        "first_divergence_time": coupled.first_divergence_time,
        "verified_events": coupled.verified_events,
        "main_events": int(len(coupled.main_times)),
        "reference_events": int(len(coupled.ref_times)),
        "version": __version__,
    }
    _write(out / "couple.json", _json_text(report))
    for name, times, counts in (
        ("couple-main.csv", coupled.main_times, coupled.main_counts),
        ("couple-reference.csv", coupled.ref_times, coupled.ref_counts),
    ):
        k = counts.shape[1] if counts.size else vcfg.num_classes
        lines = ["t," + ",".join(f"x_{i + 1}" for i in range(k))]
        for t, row in zip(times, counts):
            lines.append(f"{float(t)!r}," + ",".join(str(int(v)) for v in row))
        _write(out / name, "\n".join(lines) + "\n")


def _figures(table, out: Path, stem: str) -> None:
    variants = sorted({r.variant for r in table.rows})
    if variants == ["base"]:
        classes = sorted({r.class_id for r in table.rows})
        pq_series = []
        sc_series = []
        for cid in classes:
            rows = sorted(table.select(class_id=cid), key=lambda r: r.n)
            pq_series.append(
                Series(
                    label=f"class {cid}",
                    x=tuple(r.n for r in rows),
                    y=tuple(r.p_queue_mean for r in rows),
                    yerr=tuple(r.p_queue_std for r in rows),
                )
            )
            sc_series.append(
                Series(
                    label=f"class {cid}",
                    x=tuple(r.n for r in rows),
                    y=tuple(r.scaled_count_mean for r in rows),
                    yerr=tuple(r.scaled_count_std for r in rows),
                )
            )
        _write(
            out / f"{stem}-queueing-probability.svg",
            line_chart(pq_series, "Queueing probability vs cluster size", "n", "P_Q"),
        )
        _write(
            out / f"{stem}-scaled-counts.svg",
            line_chart(sc_series, "Scaled in-system counts vs cluster size", "n", "X_i / lambda_i"),
        )
    else:
        heavy = max(r.class_id for r in table.rows)
        series = []
        for variant in variants:
            rows = sorted(
                table.select(class_id=heavy, variant=variant), key=lambda r: r.n
            )
            series.append(
                Series(
                    label=f"m_max = {variant}",
                    x=tuple(r.n for r in rows),
                    y=tuple(r.p_queue_mean for r in rows),
                    yerr=tuple(r.p_queue_std for r in rows),
                )
            )
        _write(
            out / f"{stem}-max-need-comparison.svg",
            line_chart(
                series,
                f"Class-{heavy} queueing probability by max-need profile",
                "n",
                "P_Q",
            ),
        )


def _emit_table(table, out: Path, stem: str) -> None:
    _write(out / f"{stem}.csv", table.to_csv())
    metadata = dict(table.metadata)
    metadata["version"] = __version__
    _write(out / f"{stem}-metadata.json", _json_text(metadata))
    _figures(table, out, stem)


def _cmd_sweep(args) -> None:
    spec = _load_config(args)
    if isinstance(spec, ClusterConfig):
        raise ConfigParseError("the sweep subcommand needs a 'sweep' document")
    out = _out_dir(args)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    table = run_set("custom", spec=spec, **overrides)
    _emit_table(table, out, "sweep")


def _cmd_reproduce(args) -> None:
    out = _out_dir(args)
    set_id = args.set.replace("set-", "").upper()
    overrides: dict = {
        "seed": _effective_seed(args),
        "arrivals": args.arrivals,
        "warmup_fraction": args.warmup_fraction,
        "segments": args.segments,
    }
    table = run_set(set_id, long_run=args.long_run, **overrides)
    _emit_table(table, out, args.set)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "exact": _cmd_exact,
    "bound": _cmd_bound,
    "fluid": _cmd_fluid,
    "couple": _cmd_couple,
    "sweep": _cmd_sweep,
    "reproduce": _cmd_reproduce,
}


def run_cli(argv: list[str]) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    args = _build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (ConfigParseError, ValidationError, ValueError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2
    except OSError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
