"""Event-driven simulation of the FCFS multi-server-job Markov chain.

One run is a strictly sequential, seeded event loop: class-``i`` arrivals
form independent Poisson streams, each admitted job departs after an
independent exponential service time drawn at admission, and admission
follows the FCFS rule (enter service iff the queue is empty and enough
servers are idle; on a departure, admit from the head of the queue while the
head fits).  Identical inputs give bit-identical results.

Randomness is organized as one substream per (class, purpose): interarrival
times of class ``i`` come from substream ``i`` and service times from
substream ``K+i``, consumed in admission order.  Within a class, admission
order equals arrival order under FCFS, so a second system driven by the same
substreams sees the same arrival instants and the same service requirement
for the j-th class-``i`` job -- which is exactly the shared-randomness
construction the coupled reference systems need.

Arrival-epoch sampling is statistically sufficient for steady-state
quantities because Poisson arrivals see time averages.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import Occupancy, SystemState, ValidatedConfig, in_service_prefix


class NotEnoughSamples(ValueError):
    """Too few retained samples for the requested statistic."""


@dataclass(frozen=True)
class SimParams:
    """Knobs of one steady-state run.

    ``total_arrivals`` counts all processed arrivals; the first
    ``warmup_fraction`` of them are excluded from statistics.  With
    ``sample_every_arrival`` the run retains, for every post-warmup arrival,
    the class, the queued flag and the pre-arrival in-system counts.
    ``transient_sample_times`` optionally adds a wall-clock sampling grid.
    """

    seed: int
    total_arrivals: int
    warmup_fraction: float = 0.2
    sample_every_arrival: bool = True
    transient_sample_times: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.total_arrivals < 1:
            raise ValueError("total_arrivals must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")


@dataclass(eq=False)
class RunSummary:
    """Everything a finished run exposes.

    ``queued_per_class`` counts post-warmup arrivals that could not enter
    service immediately; the ``sample_*`` arrays (present only when
    per-arrival sampling was on) hold one entry per post-warmup arrival, with
    ``sample_counts[j]`` the per-class in-system counts *seen* by that
    arrival (the arriving job excluded).
    """

    arrivals_per_class: np.ndarray
    queued_per_class: np.ndarray
    warmup_arrivals: int
    sample_classes: np.ndarray | None
    sample_queued: np.ndarray | None
    sample_counts: np.ndarray | None
    sample_times: np.ndarray | None
    transient_times: np.ndarray | None
    transient_counts: np.ndarray | None
    final_state: SystemState
    sim_time: float
    event_count: int
    rho_total: float
    flagged_unstable: bool

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunSummary):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            same(self.arrivals_per_class, other.arrivals_per_class)
            and same(self.queued_per_class, other.queued_per_class)
            and self.warmup_arrivals == other.warmup_arrivals
            and same(self.sample_classes, other.sample_classes)
            and same(self.sample_queued, other.sample_queued)
            and same(self.sample_counts, other.sample_counts)
            and same(self.sample_times, other.sample_times)
            and same(self.transient_times, other.transient_times)
            and same(self.transient_counts, other.transient_counts)
            and self.final_state == other.final_state
            and self.sim_time == other.sim_time
            and self.event_count == other.event_count
            and self.rho_total == other.rho_total
            and self.flagged_unstable == other.flagged_unstable
        )


@dataclass(frozen=True)
class QueueingStats:
    """Segment-averaged queueing-probability estimates.

    The post-warmup indicator sequence is cut into equal segments; the mean
    is the average of segment means and the std the sample standard
    deviation across segments.  Per-class entries segment each class's own
    arrival subsequence.
    """

    per_class_mean: tuple[float, ...]
    per_class_std: tuple[float, ...]
    overall_mean: float
    overall_std: float
    segments: int


@dataclass(frozen=True)
class SampledPath:
    """A path sampled on a time grid: ``values[t, i]`` is class i at times[t]."""

    times: np.ndarray
    values: np.ndarray


_STREAM_BLOCK = 4096


class _ExpStream:
    """Blockwise exponential sampler; one independent substream per purpose."""

    __slots__ = ("rng", "scale", "buf", "pos")

    def __init__(self, seed_seq: np.random.SeedSequence, rate: float):
        self.rng = np.random.Generator(np.random.PCG64(seed_seq))
        self.scale = 1.0 / rate if rate > 0 else 0.0
        self.buf: list[float] = []
        self.pos = 0

    def next(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.exponential(self.scale, _STREAM_BLOCK).tolist()
            self.pos = 0
        value = self.buf[self.pos]
        self.pos += 1
        return value


def class_streams(
    cfg: ValidatedConfig, seed: int
) -> tuple[list[_ExpStream], list[_ExpStream]]:
    """Per-class (arrival, service) substreams for a run seed.

    Deterministic in (cfg rates, seed); two systems built from the same seed
    share arrival instants and per-job service requirements class by class.
    """
    children = np.random.SeedSequence(seed).spawn(2 * cfg.num_classes)
    arrivals = [
        _ExpStream(children[i], c.arrival_rate) for i, c in enumerate(cfg.classes)
    ]
    services = [
        _ExpStream(children[cfg.num_classes + i], c.service_rate)
        for i, c in enumerate(cfg.classes)
    ]
    return arrivals, services


def _run_fcfs(
    cfg: ValidatedConfig,
    seed: int,
    *,
    max_arrivals: int | None = None,
    max_time: float | None = None,
    initial: SystemState | None = None,
    warmup_arrivals: int = 0,
    collect_samples: bool = False,
    grid: np.ndarray | None = None,
    record_events: bool = False,
    verify: bool = False,
) -> dict:
    """The FCFS event loop; see the callers for the public contracts.

    ``verify`` recomputes the in-service prefix from the ordered state after
    every event and checks it against the incrementally maintained occupancy
    (slow; meant for small verification runs).
    """
    n = cfg.num_servers
    k = cfg.num_classes
    need = [c.server_need for c in cfg.classes]
    arr_streams, svc_streams = class_streams(cfg, seed)

    jobs: dict[int, int] = {}
    queue: deque[tuple[int, int]] = deque()
    x = [0] * k
    in_service = [0] * k
    busy = 0
    heap: list[tuple[float, int, int, int]] = []
    seq = 0
    push = heapq.heappush
    pop = heapq.heappop

    if initial is not None and initial.jobs:
        for pos, cid in enumerate(initial.jobs):
            c = cid - 1
            job_id = -len(initial.jobs) + pos
            jobs[job_id] = c
            x[c] += 1
            if not queue and busy + need[c] <= n:
                busy += need[c]
                in_service[c] += 1
                push(heap, (svc_streams[c].next(), seq, k + c, job_id))
                seq += 1
            else:
                queue.append((job_id, c))

    for c in range(k):
        if cfg.classes[c].arrival_rate > 0:
            push(heap, (arr_streams[c].next(), seq, c, 0))
            seq += 1

    arrivals_per_class = [0] * k
    queued_per_class = [0] * k
    arrivals_total = 0
    event_count = 0
    now = 0.0

    if collect_samples:
        num_samples = (max_arrivals or 0) - warmup_arrivals
        s_class = np.empty(num_samples, dtype=np.int16)
        s_queued = np.empty(num_samples, dtype=np.uint8)
        s_counts = np.empty((num_samples, k), dtype=np.int32)
        s_times = np.empty(num_samples, dtype=np.float64)
        s_idx = 0

    grid_pos = 0
    grid_rows: list[list[int]] = []
    events_t: list[float] = []
    events_x: list[tuple[int, ...]] = []

    def check_state() -> None:
        occ = in_service_prefix(SystemState(tuple(v + 1 for v in jobs.values())), cfg)
        queued_counts = [0] * k
        for _, qc in queue:
            queued_counts[qc] += 1
        assert occ.in_system == tuple(x), (occ, x)
        assert occ.in_queue == tuple(queued_counts), (occ, queued_counts)
        assert occ.busy_servers == busy, (occ, busy)
        if queue:
            assert n - busy < need[queue[0][1]], "idle servers while the head fits"

    while heap:
        t, _, code, job_id = pop(heap)
        if grid is not None:
            while grid_pos < len(grid) and grid[grid_pos] < t:
                grid_rows.append(list(x))
                grid_pos += 1
        if max_time is not None and t > max_time:
            break
        now = t
        event_count += 1
        if code < k:
            c = code
            arrivals_total += 1
            queued = 1 if (queue or busy + need[c] > n) else 0
            if arrivals_total > warmup_arrivals:
                queued_per_class[c] += queued
                if collect_samples:
                    s_class[s_idx] = c
                    s_queued[s_idx] = queued
                    for j in range(k):
                        s_counts[s_idx, j] = x[j]
                    s_times[s_idx] = t
                    s_idx += 1
            arrivals_per_class[c] += 1
            jobs[arrivals_total] = c
            x[c] += 1
            if queued:
                queue.append((arrivals_total, c))
            else:
                busy += need[c]
                in_service[c] += 1
                push(heap, (t + svc_streams[c].next(), seq, k + c, arrivals_total))
                seq += 1
            if max_arrivals is None or arrivals_total < max_arrivals:
                push(heap, (t + arr_streams[c].next(), seq, c, 0))
                seq += 1
        else:
            c = code - k
            del jobs[job_id]
            x[c] -= 1
            in_service[c] -= 1
            busy -= need[c]
            while queue and busy + need[queue[0][1]] <= n:
                qid, qc = queue.popleft()
                busy += need[qc]
                in_service[qc] += 1
                push(heap, (t + svc_streams[qc].next(), seq, k + qc, qid))
                seq += 1
        if record_events:
            events_t.append(t)
            events_x.append(tuple(x))
        if verify:
            check_state()
        if max_arrivals is not None and arrivals_total >= max_arrivals and code < k:
            break

    if grid is not None:
        while grid_pos < len(grid):
            grid_rows.append(list(x))
            grid_pos += 1

    result = {
        "arrivals_per_class": np.array(arrivals_per_class, dtype=np.int64),
        "queued_per_class": np.array(queued_per_class, dtype=np.int64),
        "final_state": SystemState(tuple(v + 1 for v in jobs.values())),
        "sim_time": now if max_time is None else min(now, max_time),
        "event_count": event_count,
    }
    if collect_samples:
        result.update(
            sample_classes=s_class[:s_idx],
            sample_queued=s_queued[:s_idx],
            sample_counts=s_counts[:s_idx],
            sample_times=s_times[:s_idx],
        )
    if grid is not None:
        result["grid_counts"] = np.array(grid_rows, dtype=np.int64).reshape(
            len(grid_rows), k
        )
    if record_events:
        result["events_t"] = np.array(events_t)
        result["events_x"] = np.array(events_x, dtype=np.int64).reshape(
            len(events_x), k
        )
    return result


def simulate(cfg: ValidatedConfig, params: SimParams, verify: bool = False) -> RunSummary:
    """Run the chain for a fixed number of arrivals and summarize it.

    A run with total load >= 1 still executes (the queue just grows) and is
    flagged in the summary.  Identical ``(cfg, params)`` produce summaries
    that compare equal field by field.
    """
    warmup = int(params.warmup_fraction * params.total_arrivals)
    grid = (
        np.asarray(params.transient_sample_times, dtype=np.float64)
        if params.transient_sample_times is not None
        else None
    )
    raw = _run_fcfs(
        cfg,
        params.seed,
        max_arrivals=params.total_arrivals,
        initial=None,
        warmup_arrivals=warmup,
        collect_samples=params.sample_every_arrival,
        grid=grid,
        verify=verify,
    )
    rho = cfg.loads.total
    return RunSummary(
        arrivals_per_class=raw["arrivals_per_class"],
        queued_per_class=raw["queued_per_class"],
        warmup_arrivals=warmup,
        sample_classes=raw.get("sample_classes"),
        sample_queued=raw.get("sample_queued"),
        sample_counts=raw.get("sample_counts"),
        sample_times=raw.get("sample_times"),
        transient_times=grid,
        transient_counts=raw.get("grid_counts"),
        final_state=raw["final_state"],
        sim_time=raw["sim_time"],
        event_count=raw["event_count"],
        rho_total=rho,
        flagged_unstable=rho >= 1.0,
    )


def segment_mean_std(samples: np.ndarray, segments: int) -> tuple[float, float]:
    """Mean of segment means and their sample standard deviation.

    The sequence is cut into ``segments`` equal blocks (a remainder at the
    front is dropped, keeping the most recent points).  With one segment the
    std is reported as 0.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    samples = np.asarray(samples)
    if len(samples) < segments:
        raise NotEnoughSamples(
            f"{len(samples)} samples cannot fill {segments} segments"
        )
    block = len(samples) // segments
    tail = samples[len(samples) - block * segments :].astype(np.float64)
    means = tail.reshape(segments, block).mean(axis=1)
    std = float(means.std(ddof=1)) if segments > 1 else 0.0
    return float(means.mean()), std


def estimate_queueing_probability(run: RunSummary, segments: int) -> QueueingStats:
    """Queueing-probability estimate from the retained arrival samples.

    Raises :class:`NotEnoughSamples` when per-arrival samples were not
    retained or fewer post-warmup arrivals exist than segments.  A class with
    fewer arrivals than segments gets NaN entries.
    """
    if run.sample_queued is None or run.sample_classes is None:
        raise NotEnoughSamples("run was made without per-arrival sampling")
    overall_mean, overall_std = segment_mean_std(run.sample_queued, segments)
    per_mean = []
    per_std = []
    for c in range(len(run.arrivals_per_class)):
        sub = run.sample_queued[run.sample_classes == c]
        if len(sub) >= segments:
            m, s = segment_mean_std(sub, segments)
        else:
            m, s = float("nan"), float("nan")
        per_mean.append(m)
        per_std.append(s)
    return QueueingStats(
        per_class_mean=tuple(per_mean),
        per_class_std=tuple(per_std),
        overall_mean=overall_mean,
        overall_std=overall_std,
        segments=segments,
    )


def sample_scaled_counts(
    run: RunSummary, cfg: ValidatedConfig
) -> tuple[tuple[float, float], ...]:
    """Per-class (mean, std) of X_i / lambda_i over post-warmup arrival epochs."""
    if run.sample_counts is None or len(run.sample_counts) == 0:
        raise NotEnoughSamples("run has no retained occupancy samples")
    out = []
    for i, c in enumerate(cfg.classes):
        if c.arrival_rate > 0:
            scaled = run.sample_counts[:, i] / c.arrival_rate
            out.append((float(scaled.mean()), float(scaled.std(ddof=1))))
        else:
            out.append((float("nan"), float("nan")))
    return tuple(out)


def transient_trajectory(
    cfg: ValidatedConfig,
    initial: SystemState,
    horizon: float,
    sample_dt: float,
    seed: int,
) -> SampledPath:
    """Scaled per-class counts X_i(t)/lambda_i sampled at t = 0, dt, ..., T.

    Deterministic given the seed.  The state at t=0 is ``initial``; jobs in
    its in-service prefix get fresh service draws (valid by memorylessness).
    """
    if horizon <= 0 or sample_dt <= 0:
        raise ValueError("horizon and sample_dt must be > 0")
    steps = int(round(horizon / sample_dt))
    grid = np.arange(steps + 1) * sample_dt
    raw = _run_fcfs(cfg, seed, max_time=float(horizon), initial=initial, grid=grid)
    lam = np.array([c.arrival_rate for c in cfg.classes], dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(lam > 0, raw["grid_counts"] / lam, np.nan)
    return SampledPath(times=grid, values=scaled)


def replay_occupancies(run: RunSummary, cfg: ValidatedConfig) -> Occupancy:
    """Occupancy of the final state recomputed from scratch via the prefix rule."""
    return in_service_prefix(run.final_state, cfg)


def write_trace_csv(run: RunSummary, fileobj) -> None:
    """Stream the retained per-arrival samples as CSV.

    Columns: arrival_index, time, class, queued_flag, x_1..x_K, where the
    counts are those seen by the arrival.  Arrival indices are global
    (1-based), so the first row is the first post-warmup arrival.
    """
    if run.sample_queued is None:
        raise NotEnoughSamples("run was made without per-arrival sampling")
    k = run.sample_counts.shape[1]
    header = "arrival_index,time,class,queued_flag," + ",".join(
        f"x_{i + 1}" for i in range(k)
    )
    fileobj.write(header + "\n")
    base = run.warmup_arrivals
    for j in range(len(run.sample_queued)):
        counts = ",".join(str(int(v)) for v in run.sample_counts[j])
        fileobj.write(
            f"{base + j + 1},{float(run.sample_times[j])!r},"
            f"{int(run.sample_classes[j]) + 1},{int(run.sample_queued[j])},{counts}\n"
        )
