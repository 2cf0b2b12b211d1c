"""Deterministic fluid limit of the scaled per-class job counts.

When class-``i`` counts are scaled by their arrival rates, the transient
dynamics approach the solution of ``dy_i/dt = 1 - min(mu_i*y_i, 1/rho_i)``,
whose equilibrium is simply ``(1/mu_1, ..., 1/mu_K)`` regardless of server
needs.  Below the kink the solution is the explicit exponential relaxation
``y_i(t) = (y_i(0) - 1/mu_i) * exp(-mu_i*t) + 1/mu_i``; a fixed-step RK4
integrator covers arbitrary starting points and doubles as a cross-check.

The fluid equations describe K independent reference queues, one per class,
each running on its own bank of ``floor(n/m_i)`` server slots.  Driving those
references and the real FCFS system from the same arrival and service
substreams makes their per-class counts *identical*, event for event, until
the first instant the reference jobs would jointly request more than ``n``
servers.  ``coupled_reference_run`` realizes that construction and verifies
the identity exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .bounds import HypothesisViolated
from .model import SystemState, ValidatedConfig
from .simulate import _run_fcfs, class_streams


class OutOfClosedFormRegime(ValueError):
    """Initial condition above the kink; the explicit solution does not apply."""


class GridMismatch(ValueError):
    """Two sampled paths on different time grids cannot be compared."""


class CouplingBroken(RuntimeError):
    """Shared-randomness paths differed before the capacity-exceedance time."""


@dataclass(frozen=True)
class FluidTrajectory:
    """``values[t, i]`` is the fluid level of class ``i`` at ``times[t]``."""

    times: np.ndarray
    values: np.ndarray

    def to_csv(self) -> str:
        k = self.values.shape[1]
        lines = ["t," + ",".join(f"y_{i + 1}" for i in range(k))]
        for t, row in zip(self.times, self.values):
            lines.append(f"{float(t)!r}," + ",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CoupledRun:
    """A main-system path next to its per-class reference queues.

    ``first_divergence_time`` is the first instant the reference jobs jointly
    request more than ``n`` servers (None if that never happens within the
    horizon); strictly before it the two count paths are identical, which
    ``verified_events`` counts.
    """

    main_times: np.ndarray
    main_counts: np.ndarray
    ref_times: np.ndarray
    ref_counts: np.ndarray
    servers_per_class: tuple[int, ...]
    first_divergence_time: float | None
    verified_events: int


def _mu_rho(
    cfg: ValidatedConfig | None, mu, rho
) -> tuple[np.ndarray, np.ndarray]:
    if cfg is not None:
        return (
            np.array([c.service_rate for c in cfg.classes], dtype=np.float64),
            np.asarray(cfg.loads.per_class, dtype=np.float64),
        )
    if mu is None or rho is None:
        raise ValueError("pass either cfg or both mu and rho")
    return np.asarray(mu, dtype=np.float64), np.asarray(rho, dtype=np.float64)


def fluid_solution(
    y0,
    t,
    cfg: ValidatedConfig | None = None,
    *,
    mu=None,
    rho=None,
) -> np.ndarray:
    """Closed-form fluid solution below the kink.

    Valid when ``y0_i <= 1/(mu_i*rho_i)`` for every class (then the
    trajectory never leaves the smooth branch); otherwise raises
    :class:`OutOfClosedFormRegime`.  ``t`` may be a scalar or a grid; the
    result has one row per grid time.
    """
    mu, rho = _mu_rho(cfg, mu, rho)
    y0 = np.asarray(y0, dtype=np.float64)
    with np.errstate(divide="ignore"):
        limit = np.where(rho > 0, 1.0 / (mu * rho), np.inf)
    if np.any(y0 > limit):
        bad = int(np.argmax(y0 > limit))
        raise OutOfClosedFormRegime(
            f"y0[{bad}]={y0[bad]:.6g} exceeds 1/(mu*rho)={limit[bad]:.6g}"
        )
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = (y0 - 1.0 / mu) * np.exp(-mu * t_arr[:, None]) + 1.0 / mu
    return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


def fluid_integrate(
    y0,
    horizon: float,
    dt: float = 1e-3,
    cfg: ValidatedConfig | None = None,
    *,
    mu=None,
    rho=None,
) -> FluidTrajectory:
    """Fixed-step RK4 integration of the full piecewise-smooth right side.

    Works from any nonnegative starting point, including above the kink where
    the closed form does not apply.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be > 0")
    mu, rho = _mu_rho(cfg, mu, rho)
    with np.errstate(divide="ignore"):
        cap = np.where(rho > 0, 1.0 / rho, np.inf)

    def rhs(y):
        return 1.0 - np.minimum(mu * y, cap)

    steps = int(round(horizon / dt))
    values = np.empty((steps + 1, len(mu)))
    y = np.asarray(y0, dtype=np.float64).copy()
    values[0] = y
    for s in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        values[s + 1] = y
    return FluidTrajectory(times=np.arange(steps + 1) * dt, values=values)


def equilibrium(cfg: ValidatedConfig) -> tuple[float, ...]:
    """Fluid equilibrium (1/mu_1, ..., 1/mu_K); independent of server needs."""
    return tuple(1.0 / c.service_rate for c in cfg.classes)


def coupling_safety_margin(y0, cfg: ValidatedConfig) -> float:
    """How much the reference paths may deviate before capacity could bind.

    Positive exactly when every class starts below ``1/(rho*mu_i)``; raises
    :class:`HypothesisViolated` otherwise.
    """
    mu = np.array([c.service_rate for c in cfg.classes])
    rho_i = np.asarray(cfg.loads.per_class)
    rho = cfg.loads.total
    y0 = np.asarray(y0, dtype=np.float64)
    if np.any(y0 < 0) or np.any(y0 >= 1.0 / (rho * mu)):
        raise HypothesisViolated(
            "need 0 <= y0_i < 1/(rho*mu_i) for every class"
        )
    high = y0 >= 1.0 / mu
    occupied = float(
        np.sum(rho_i[high] * mu[high] * y0[high]) + np.sum(rho_i[~high])
    )
    return (1.0 - occupied) / (mu.max() * rho)


def sup_distance(a, b, class_summed: bool = True) -> float:
    """Largest pointwise deviation between two paths on the same grid.

    With ``class_summed`` the deviation at a grid time is the sum over
    classes of absolute differences (then maximized over times); without it,
    the maximum is over times and classes jointly.
    """
    if not np.array_equal(np.asarray(a.times), np.asarray(b.times)):
        raise GridMismatch("paths are sampled on different time grids")
    diff = np.abs(np.asarray(a.values, float) - np.asarray(b.values, float))
    if diff.size == 0:
        return 0.0
    if class_summed:
        return float(diff.sum(axis=1).max())
    return float(diff.max())


def _run_reference_queues(
    cfg: ValidatedConfig, seed: int, horizon: float
) -> tuple[np.ndarray, np.ndarray, float | None]:
    """K per-class M/M/floor(n/m_i) queues driven by the run's substreams."""
    k = cfg.num_classes
    n = cfg.num_servers
    servers = [n // c.server_need for c in cfg.classes]
    need = [c.server_need for c in cfg.classes]
    arr_streams, svc_streams = class_streams(cfg, seed)

    y = [0] * k
    in_service = [0] * k
    waiting = [0] * k
    heap: list[tuple[float, int, int]] = []
    seq = 0
    for c in range(k):
        if cfg.classes[c].arrival_rate > 0:
            heapq.heappush(heap, (arr_streams[c].next(), seq, c))
            seq += 1

    times: list[float] = []
    counts: list[tuple[int, ...]] = []
    divergence: float | None = None
    while heap:
        t, _, code = heapq.heappop(heap)
        if t > horizon:
            break
        if code < k:
            c = code
            y[c] += 1
            if in_service[c] < servers[c]:
                in_service[c] += 1
                heapq.heappush(heap, (t + svc_streams[c].next(), seq, k + c))
                seq += 1
            else:
                waiting[c] += 1
            heapq.heappush(heap, (t + arr_streams[c].next(), seq, c))
            seq += 1
            if divergence is None and sum(need[i] * y[i] for i in range(k)) > n:
                divergence = t
        else:
            c = code - k
            y[c] -= 1
            in_service[c] -= 1
            if waiting[c] > 0:
                waiting[c] -= 1
                in_service[c] += 1
                heapq.heappush(heap, (t + svc_streams[c].next(), seq, k + c))
                seq += 1
        times.append(t)
        counts.append(tuple(y))
    return (
        np.array(times),
        np.array(counts, dtype=np.int64).reshape(len(counts), k),
        divergence,
    )


def coupled_reference_run(
    cfg: ValidatedConfig, seed: int, horizon: float
) -> CoupledRun:
    """Run the FCFS system and its per-class reference queues on shared draws.

    Both sides start empty and consume identical arrival substreams; the j-th
    class-``i`` job to enter service consumes the j-th class-``i`` service
    draw on either side.  Until the first time the reference jobs jointly
    request more than ``n`` servers, every job enters service on arrival in
    both systems, so the per-class count paths coincide exactly; this is
    checked event by event and :class:`CouplingBroken` is raised on any
    mismatch.
    """
    main = _run_fcfs(cfg, seed, max_time=float(horizon), record_events=True)
    ref_times, ref_counts, divergence = _run_reference_queues(cfg, seed, horizon)

    main_times = main["events_t"]
    main_counts = main["events_x"]
    limit = divergence if divergence is not None else np.inf
    m_pre = int(np.searchsorted(main_times, limit, side="left"))
    r_pre = int(np.searchsorted(ref_times, limit, side="left"))
    if m_pre != r_pre:
        raise CouplingBroken(
            f"{m_pre} main events vs {r_pre} reference events before t={limit}"
        )
    if not (
        np.array_equal(main_times[:m_pre], ref_times[:r_pre])
        and np.array_equal(main_counts[:m_pre], ref_counts[:r_pre])
    ):
        raise CouplingBroken("per-class counts differed before divergence")
    return CoupledRun(
        main_times=main_times,
        main_counts=main_counts,
        ref_times=ref_times,
        ref_counts=ref_counts,
        servers_per_class=tuple(cfg.num_servers // c.server_need for c in cfg.classes),
        first_divergence_time=divergence,
        verified_events=m_pre,
    )
