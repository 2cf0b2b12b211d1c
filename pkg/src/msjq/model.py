"""Domain model for the FCFS multi-server-job cluster.

A cluster has ``n`` identical servers and ``K`` job classes.  A class-``i``
job occupies ``m_i`` servers simultaneously for an exponentially distributed
service duration with rate ``mu_i``, and class-``i`` jobs arrive in a Poisson
stream of rate ``lambda_i``.  Jobs are served strictly first-come
first-served: an arriving job enters service only if the queue is empty and
at least ``m_i`` servers are idle, otherwise it waits, and a waiting job that
does not fit blocks every job behind it (head-of-line blocking).

The full Markov state is the arrival-ordered sequence of the classes of all
jobs present.  Which of those jobs are in service is a pure function of the
sequence: the maximal prefix whose cumulative server need fits into ``n``
servers (FCFS only ever admits the head of the queue, so in-service jobs
always form a prefix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ValidationError(ValueError):
    """A cluster configuration that no simulation could serve."""


class NeedExceedsServers(ValidationError):
    """Some class demands more servers than the cluster has."""


class EmptyClassList(ValidationError):
    """A cluster with no job classes."""


class NonPositiveRate(ValidationError):
    """A service rate that is not strictly positive, or a negative arrival rate."""


@dataclass(frozen=True)
class JobClassSpec:
    """One job class: how many servers it needs and how fast it arrives/serves.

    Invariants (enforced by :func:`validate_config`):
        server_need >= 1, service_rate > 0, arrival_rate >= 0.
    """

    class_id: int
    server_need: int
    service_rate: float
    arrival_rate: float


@dataclass(frozen=True)
class LoadProfile:
    """Per-class and total normalized server-time demand.

    ``per_class[i] = lambda_i * m_i / (n * mu_i)``; ``total`` is their sum.
    """

    per_class: tuple[float, ...]
    total: float


@dataclass(frozen=True)
class ClusterConfig:
    """Raw cluster description: server count plus the job classes, unchecked."""

    num_servers: int
    classes: tuple[JobClassSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))


@dataclass(frozen=True)
class ValidatedConfig:
    """A :class:`ClusterConfig` annotated with derived quantities.

    Carries the maximum server need, the load profile, and the sufficient
    stability classification (``rho < 1 - m_max/n``).  ``borderline`` is set
    when the total load sits within 1e-9 of the threshold, in which case the
    strict classification is not trustworthy.
    """

    num_servers: int
    classes: tuple[JobClassSpec, ...]
    m_max: int
    loads: LoadProfile
    stability_threshold: float
    provably_stable: bool
    borderline: bool

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def needs(self) -> tuple[int, ...]:
        return tuple(c.server_need for c in self.classes)

    @property
    def service_rates(self) -> tuple[float, ...]:
        return tuple(c.service_rate for c in self.classes)

    @property
    def arrival_rates(self) -> tuple[float, ...]:
        return tuple(c.arrival_rate for c in self.classes)


@dataclass(frozen=True)
class SystemState:
    """Arrival-ordered classes of all jobs present; ``jobs[0]`` is the oldest."""

    jobs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "jobs", tuple(self.jobs))

    def __len__(self) -> int:
        return len(self.jobs)


@dataclass(frozen=True)
class Occupancy:
    """Per-class job counts split into in-system and queued, plus busy servers.

    Invariants: ``in_queue[i] <= in_system[i]``;
    ``busy_servers = sum(m_i * (in_system[i] - in_queue[i])) <= n``; and if
    anything is queued, the head-of-queue job does not fit into the idle
    servers.
    """

    in_system: tuple[int, ...]
    in_queue: tuple[int, ...]
    busy_servers: int

    def idle_servers(self, num_servers: int) -> int:
        return num_servers - self.busy_servers

    def in_service(self) -> tuple[int, ...]:
        return tuple(x - q for x, q in zip(self.in_system, self.in_queue))


def total_load(cfg: ClusterConfig | ValidatedConfig) -> LoadProfile:
    """Load profile of a config: per_class[i] = lambda_i*m_i/(n*mu_i)."""
    n = cfg.num_servers
    per_class = tuple(
        c.arrival_rate * c.server_need / (n * c.service_rate) for c in cfg.classes
    )
    return LoadProfile(per_class=per_class, total=math.fsum(per_class))


def arrival_rates_from_loads(
    num_servers: int,
    target_loads: tuple[float, ...],
    needs: tuple[int, ...],
    service_rates: tuple[float, ...],
) -> tuple[float, ...]:
    """Invert the load formula: lambda_i = n * rho_i * mu_i / m_i.

    Round-trips with :func:`total_load` to 1e-12 relative.
    """
    return tuple(
        num_servers * rho * mu / m
        for rho, m, mu in zip(target_loads, needs, service_rates)
    )


_BORDERLINE_EPS = 1e-9


def validate_config(cfg: ClusterConfig) -> ValidatedConfig:
    """Check a cluster config and annotate it with loads and stability.

    Raises :class:`EmptyClassList`, :class:`NonPositiveRate` or
    :class:`NeedExceedsServers` for configs a simulation could never serve.
    """
    if cfg.num_servers < 1:
        raise ValidationError(f"num_servers must be >= 1, got {cfg.num_servers}")
    if not cfg.classes:
        raise EmptyClassList("cluster has no job classes")
    for c in cfg.classes:
        if c.server_need < 1:
            raise ValidationError(
                f"class {c.class_id}: server_need must be >= 1, got {c.server_need}"
            )
        if c.service_rate <= 0:
            raise NonPositiveRate(
                f"class {c.class_id}: service_rate must be > 0, got {c.service_rate}"
            )
        if c.arrival_rate < 0:
            raise NonPositiveRate(
                f"class {c.class_id}: arrival_rate must be >= 0, got {c.arrival_rate}"
            )
        if c.server_need > cfg.num_servers:
            raise NeedExceedsServers(
                f"class {c.class_id} needs {c.server_need} servers, "
                f"cluster has {cfg.num_servers}"
            )
    ids = [c.class_id for c in cfg.classes]
    if ids != list(range(1, len(ids) + 1)):
        raise ValidationError(f"class_ids must be 1..K without gaps, got {ids}")

    m_max = max(c.server_need for c in cfg.classes)
    loads = total_load(cfg)
    threshold = 1.0 - m_max / cfg.num_servers
    return ValidatedConfig(
        num_servers=cfg.num_servers,
        classes=cfg.classes,
        m_max=m_max,
        loads=loads,
        stability_threshold=threshold,
        provably_stable=loads.total < threshold,
        borderline=abs(loads.total - threshold) < _BORDERLINE_EPS,
    )


def in_service_prefix(
    state: SystemState, cfg: ClusterConfig | ValidatedConfig
) -> Occupancy:
    """Occupancy implied by a state: the maximal feasible prefix is in service.

    Scans the jobs from the head accumulating server needs; every job in the
    maximal prefix whose cumulative need fits into ``n`` is in service, the
    first job that does not fit and everything behind it is queued.
    """
    n = cfg.num_servers
    need = {c.class_id: c.server_need for c in cfg.classes}
    k = len(cfg.classes)
    in_system = [0] * k
    in_queue = [0] * k
    busy = 0
    serving = True
    for cid in state.jobs:
        in_system[cid - 1] += 1
        if serving and busy + need[cid] <= n:
            busy += need[cid]
        else:
            serving = False
            in_queue[cid - 1] += 1
    return Occupancy(
        in_system=tuple(in_system), in_queue=tuple(in_queue), busy_servers=busy
    )
