"""Scaling sweeps over the cluster size and the three experiment presets.

A sweep fixes per-class server-need profiles (as functions of ``n``), service
rates and a total-load schedule, then for each ``n`` splits the load equally
across classes and derives the arrival rates.  Preset ``I`` scales the load
as ``1 - 0.25*n**-0.1`` (diminishing-queueing regime), preset ``II`` as
``1 - n**-0.3`` (outside it), and preset ``III`` repeats the Set-I load with
three alternatives for the heaviest class's need profile.  Defaults stop at
n = 4096 so a full set takes minutes; the two largest cluster sizes sit
behind ``long_run``.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass

from .bounds import HypothesisViolated, queueing_probability_bound
from .model import (
    ClusterConfig,
    JobClassSpec,
    ValidatedConfig,
    arrival_rates_from_loads,
    validate_config,
)
from .simulate import (
    NotEnoughSamples,
    SimParams,
    estimate_queueing_probability,
    sample_scaled_counts,
    segment_mean_std,
    simulate,
)

DEFAULT_SEED = 20210604
DESK_N_VALUES = (64, 256, 1024, 4096)
LONG_N_VALUES = (64, 256, 1024, 4096, 16384, 65536)

_PROFILE_RE = re.compile(
    r"^(?:(?P<coef>\d+(?:\.\d+)?)\*?)?n\^(?P<exp>\d+(?:\.\d+)?|\d+/\d+)$"
)


def need_value(profile: str, n: int) -> int:
    """Evaluate a server-need profile at cluster size ``n``.

    Profiles: an integer literal ("3"), "log2", "log2+C", "sqrt", or
    "C*n^P" / "Cn^P" with P a decimal or fraction (e.g. "3n^1/4").
    Non-integral values round to the nearest integer.
    """
    profile = profile.strip()
    if profile.isdigit():
        return int(profile)
    if profile == "sqrt":
        return int(round(math.sqrt(n)))
    if profile.startswith("log2"):
        rest = profile[4:]
        if rest == "":
            return int(round(math.log2(n)))
        if re.fullmatch(r"\+\d+", rest):
            return int(round(math.log2(n))) + int(rest[1:])
    m = _PROFILE_RE.match(profile)
    if m:
        coef = float(m.group("coef")) if m.group("coef") else 1.0
        exp = m.group("exp")
        power = (
            float(exp.split("/")[0]) / float(exp.split("/")[1])
            if "/" in exp
            else float(exp)
        )
        return int(round(coef * n**power))
    raise ValueError(f"unrecognized need profile {profile!r}")


@dataclass(frozen=True)
class SweepSpec:
    """One scaling sweep: which clusters to build and how to run them.

    The load schedule is either the exponent pair (``load_alpha``,
    ``load_beta``), giving ``rho(n) = 1 - beta * n**-alpha``, or an explicit
    ``loads`` tuple aligned with ``n_values``.  ``arrivals`` is the
    post-warmup sample budget per run.
    """

    n_values: tuple[int, ...]
    need_profiles: tuple[str, ...]
    service_rates: tuple[float, ...]
    load_alpha: float | None = None
    load_beta: float | None = None
    loads: tuple[float, ...] | None = None
    split: str = "equal"
    seed: int = DEFAULT_SEED
    arrivals: int = 1_000_000
    warmup_fraction: float = 0.2
    segments: int = 10
    replications: int = 1

    def __post_init__(self) -> None:
        if list(self.n_values) != sorted(self.n_values):
            raise ValueError("n_values must be sorted ascending")
        if len(self.need_profiles) != len(self.service_rates):
            raise ValueError("need_profiles and service_rates must align")
        has_regime = self.load_alpha is not None and self.load_beta is not None
        if has_regime == (self.loads is not None):
            raise ValueError("give either (load_alpha, load_beta) or loads")
        if self.loads is not None and len(self.loads) != len(self.n_values):
            raise ValueError("loads must align with n_values")
        if self.split != "equal":
            raise ValueError(f"unsupported class-split rule {self.split!r}")

    def total_load_at(self, n: int) -> float:
        if self.loads is not None:
            return self.loads[self.n_values.index(n)]
        return 1.0 - self.load_beta * n ** (-self.load_alpha)


def scaling_sweep(spec: SweepSpec) -> list[ValidatedConfig]:
    """Materialize one validated cluster config per sweep point."""
    configs = []
    k = len(spec.need_profiles)
    for n in spec.n_values:
        needs = tuple(need_value(p, n) for p in spec.need_profiles)
        rho = spec.total_load_at(n)
        per_class = tuple(rho / k for _ in range(k))
        lams = arrival_rates_from_loads(n, per_class, needs, spec.service_rates)
        classes = tuple(
            JobClassSpec(i + 1, needs[i], spec.service_rates[i], lams[i])
            for i in range(k)
        )
        configs.append(validate_config(ClusterConfig(n, classes)))
    return configs


@dataclass(frozen=True)
class ResultRow:
    n: int
    class_id: int
    rho_total: float
    p_queue_mean: float
    p_queue_std: float
    bound_raw: float
    bound_clamped: float
    scaled_count_mean: float
    scaled_count_std: float
    seed: int
    replication: int
    variant: str


RESULT_COLUMNS = (
    "n",
    "class_id",
    "rho_total",
    "p_queue_mean",
    "p_queue_std",
    "bound_raw",
    "bound_clamped",
    "scaled_count_mean",
    "scaled_count_std",
    "seed",
    "replication",
    "variant",
)


@dataclass(frozen=True)
class ResultTable:
    """Per-(variant, n, class, replication) results plus a metadata echo."""

    rows: tuple[ResultRow, ...]
    metadata: dict

    def to_csv(self) -> str:
        lines = [",".join(RESULT_COLUMNS)]
        for r in self.rows:
            lines.append(
                ",".join(
                    str(getattr(r, c))
                    if c in ("n", "class_id", "seed", "replication", "variant")
                    else repr(float(getattr(r, c)))
                    for c in RESULT_COLUMNS
                )
            )
        return "\n".join(lines) + "\n"

    def select(self, **match) -> list[ResultRow]:
        return [
            r
            for r in self.rows
            if all(getattr(r, key) == val for key, val in match.items())
        ]


def segment_stats(samples, segments: int) -> tuple[float, float]:
    """Mean of segment means and their sample std; see the simulator module."""
    return segment_mean_std(samples, segments)


def _preset(set_id: str, long_run: bool) -> tuple[SweepSpec, tuple[str, ...]]:
    n_values = LONG_N_VALUES if long_run else DESK_N_VALUES
    mu = (0.25, 0.5, 1.0)
    base = dict(n_values=n_values, service_rates=mu)
    key = set_id.lower().replace("set-", "").replace("set_", "")
    if key == "i":
        spec = SweepSpec(
            need_profiles=("3", "log2", "sqrt"), load_alpha=0.1, load_beta=0.25, **base
        )
        return spec, ("base",)
    if key == "ii":
        spec = SweepSpec(
            need_profiles=("3", "log2", "sqrt"), load_alpha=0.3, load_beta=1.0, **base
        )
        return spec, ("base",)
    if key == "iii":
        spec = SweepSpec(
            need_profiles=("3", "log2", "sqrt"), load_alpha=0.1, load_beta=0.25, **base
        )
        return spec, ("sqrt", "3n^1/4", "log2+2")
    raise ValueError(f"unknown experiment set {set_id!r}")


def run_sweep(spec: SweepSpec, variant: str = "base") -> list[ResultRow]:
    """Simulate every sweep point and attach theory bounds and statistics."""
    rows = []
    total_arrivals = math.ceil(spec.arrivals / (1.0 - spec.warmup_fraction))
    for cfg in scaling_sweep(spec):
        try:
            bound_raw, bound_clamped = queueing_probability_bound(cfg)
        except HypothesisViolated:
            bound_raw = bound_clamped = float("nan")
        for rep in range(spec.replications):
            run_seed = spec.seed ^ rep
            run = simulate(cfg, SimParams(seed=run_seed, total_arrivals=total_arrivals))
            stats = estimate_queueing_probability(run, spec.segments)
            scaled = sample_scaled_counts(run, cfg)
            for i, c in enumerate(cfg.classes):
                rows.append(
                    ResultRow(
                        n=cfg.num_servers,
                        class_id=c.class_id,
                        rho_total=cfg.loads.total,
                        p_queue_mean=stats.per_class_mean[i],
                        p_queue_std=stats.per_class_std[i],
                        bound_raw=bound_raw,
                        bound_clamped=bound_clamped,
                        scaled_count_mean=scaled[i][0],
                        scaled_count_std=scaled[i][1],
                        seed=run_seed,
                        replication=rep,
                        variant=variant,
                    )
                )
    return rows


def run_set(
    set_id: str,
    spec: SweepSpec | None = None,
    long_run: bool = False,
    **overrides,
) -> ResultTable:
    """Run experiment set I, II, III, or a custom sweep spec.

    Keyword overrides (``n_values``, ``arrivals``, ``seed``, ...) replace the
    preset's fields.  Set III runs one sweep per heavy-class need profile and
    tags rows with the profile as the variant.  Output rows are sorted by
    (variant, n, class, replication); identical inputs give identical tables.
    """
    if set_id == "custom":
        if spec is None:
            raise ValueError("custom set needs an explicit SweepSpec")
        base, variants = spec, ("base",)
    else:
        base, variants = _preset(set_id, long_run)
    if overrides:
        base = dataclasses.replace(base, **overrides)

    rows: list[ResultRow] = []
    flagged = []
    for variant in variants:
        var_spec = base
        if variant != "base":
            profiles = list(base.need_profiles)
            profiles[-1] = variant
            var_spec = dataclasses.replace(base, need_profiles=tuple(profiles))
        rows.extend(run_sweep(var_spec, variant))
    rows.sort(key=lambda r: (r.variant, r.n, r.class_id, r.replication))
    for r in rows:
        if math.isnan(r.bound_raw) and (r.n, r.variant) not in flagged:
            flagged.append((r.n, r.variant))

    metadata = {
        "set": set_id,
        "n_values": list(base.n_values),
        "need_profiles": list(base.need_profiles),
        "variants": list(variants),
        "service_rates": list(base.service_rates),
        "load_alpha": base.load_alpha,
        "load_beta": base.load_beta,
        "loads": list(base.loads) if base.loads is not None else None,
        "class_split": base.split,
        "class_split_note": "per-class loads set to rho/K (paper does not fix the split)",
        "seed": base.seed,
        "post_warmup_arrivals": base.arrivals,
        "warmup_fraction": base.warmup_fraction,
        "segments": base.segments,
        "replications": base.replications,
        "stability_hypothesis_violated": [list(t) for t in flagged],
    }
    return ResultTable(rows=tuple(rows), metadata=metadata)


__all__ = [
    "DEFAULT_SEED",
    "DESK_N_VALUES",
    "LONG_N_VALUES",
    "NotEnoughSamples",
    "RESULT_COLUMNS",
    "ResultRow",
    "ResultTable",
    "SweepSpec",
    "need_value",
    "run_set",
    "run_sweep",
    "scaling_sweep",
    "segment_stats",
]
