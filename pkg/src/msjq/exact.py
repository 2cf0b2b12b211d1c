"""Brute-force ground truth on small instances.

Enumerates every arrival-ordered state with at most ``L`` jobs, assembles the
truncated transition-rate matrix (arrivals at the ``L``-job boundary are
dropped, which keeps the truncated chain a proper CTMC and makes the
truncation bias measurable as the stationary mass on the boundary), and
solves for the stationary distribution.  From the distribution it computes
the exact queueing probability by arrival-epoch conditioning and the exact
expected work drift.  The Erlang-C closed form is included for the divisible
single-class reduction.

States are never materialized as Python objects in bulk: a state of length
``l`` is an integer ``offset[l] + v`` where ``v`` is the base-``K`` value of
its class digits, so encode/decode are O(L) arithmetic and the generator is
built one length-block at a time with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import ClusterConfig, SystemState, ValidatedConfig


class BudgetExceeded(ValueError):
    """The requested truncation enumerates more states than allowed."""


class SolverDidNotConverge(RuntimeError):
    """Stationary solve failed to reach the requested residual."""


class TruncationTooCoarse(ValueError):
    """Boundary mass too large for the requested exact functional."""


class UnstableOfferedLoad(ValueError):
    """Erlang-C requested with offered load at or above the server count."""


DEFAULT_STATE_BUDGET = 200_000


class StateEnumeration:
    """All class-id sequences of length 0..L in length-lexicographic order.

    Index 0 is the empty state.  States of length ``l`` occupy the index
    range ``[offsets[l], offsets[l+1])`` and within a length are ordered by
    the base-``K`` value of their digit string (head job = most significant
    digit).
    """

    def __init__(self, num_classes: int, max_jobs: int):
        if num_classes < 1 or max_jobs < 0:
            raise ValueError("need num_classes >= 1 and max_jobs >= 0")
        self.num_classes = num_classes
        self.max_jobs = max_jobs
        counts = [num_classes**l for l in range(max_jobs + 1)]
        self.offsets = np.concatenate(([0], np.cumsum(counts, dtype=np.int64)))

    def __len__(self) -> int:
        return int(self.offsets[-1])

    def length_of(self, index: int) -> int:
        return int(np.searchsorted(self.offsets, index, side="right") - 1)

    def decode(self, index: int) -> tuple[int, ...]:
        """Class-id tuple (ids 1..K) for a state index."""
        if not 0 <= index < len(self):
            raise IndexError(index)
        l = self.length_of(index)
        v = index - int(self.offsets[l])
        digits = []
        for _ in range(l):
            digits.append(v % self.num_classes)
            v //= self.num_classes
        return tuple(d + 1 for d in reversed(digits))

    def encode(self, jobs: tuple[int, ...] | SystemState) -> int:
        """Index of a class-id tuple (inverse of :meth:`decode`)."""
        if isinstance(jobs, SystemState):
            jobs = jobs.jobs
        l = len(jobs)
        if l > self.max_jobs:
            raise IndexError(f"state has {l} jobs, truncation is {self.max_jobs}")
        v = 0
        for cid in jobs:
            if not 1 <= cid <= self.num_classes:
                raise ValueError(f"invalid class id {cid}")
            v = v * self.num_classes + (cid - 1)
        return int(self.offsets[l]) + v

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for i in range(len(self)):
            yield self.decode(i)

    def length_blocks(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        """Yield (length, state indices, digit matrix) per length block.

        The digit matrix has one row per state of that length and one column
        per position; entries are zero-based class indices.
        """
        k = self.num_classes
        for l in range(self.max_jobs + 1):
            count = k**l
            v = np.arange(count, dtype=np.int64)
            digits = np.empty((count, l), dtype=np.int64)
            for j in range(l):
                digits[:, j] = (v // k ** (l - 1 - j)) % k
            yield l, int(self.offsets[l]) + v, digits


@dataclass(frozen=True)
class TruncatedChain:
    """Truncated CTMC: enumerated states, generator, and per-state occupancy.

    ``generator`` rows sum to zero; rows of boundary states (length exactly
    ``L``, indices >= ``boundary_start``) have their arrival transitions
    dropped.  ``busy_servers[u]`` and ``has_queue[u]`` are derived from the
    in-service prefix rule.
    """

    states: StateEnumeration
    generator: sp.csr_matrix
    truncation_length: int
    boundary_start: int
    busy_servers: np.ndarray
    has_queue: np.ndarray


@dataclass(frozen=True)
class StationaryDistribution:
    probabilities: np.ndarray
    residual_norm: float
    boundary_mass: float


@dataclass(frozen=True)
class ExactQueueing:
    """Exact queueing probabilities with the truncation bias as an error bar."""

    per_class: tuple[float, ...]
    overall: float
    boundary_mass: float


def enumerate_states(
    cfg: ClusterConfig | ValidatedConfig,
    max_jobs: int,
    budget: int = DEFAULT_STATE_BUDGET,
) -> StateEnumeration:
    """Enumerate all states with at most ``max_jobs`` jobs.

    Raises :class:`BudgetExceeded` when the total state count would exceed
    ``budget`` (default 2e5); pass a larger budget explicitly for bigger
    truncations.
    """
    k = len(cfg.classes)
    total = (k ** (max_jobs + 1) - 1) // (k - 1) if k > 1 else max_jobs + 1
    if total > budget:
        raise BudgetExceeded(
            f"{total} states for K={k}, L={max_jobs} exceeds budget {budget}"
        )
    return StateEnumeration(num_classes=k, max_jobs=max_jobs)


def build_generator(
    states: StateEnumeration, cfg: ClusterConfig | ValidatedConfig
) -> TruncatedChain:
    """Assemble the truncated transition-rate matrix.

    From a state ``u``: a class-``i`` arrival appends ``i`` at rate
    ``lambda_i`` (dropped when ``u`` already holds ``L`` jobs); each
    in-service job departs at its class service rate, deleting it from the
    sequence.  Queued jobs never depart.  The diagonal is the negative row
    sum, so rows sum to zero exactly.
    """
    n = cfg.num_servers
    k = states.num_classes
    big_l = states.max_jobs
    need = np.array([c.server_need for c in cfg.classes], dtype=np.int64)
    mu = np.array([c.service_rate for c in cfg.classes], dtype=np.float64)
    lam = np.array([c.arrival_rate for c in cfg.classes], dtype=np.float64)

    total = len(states)
    busy = np.zeros(total, dtype=np.int64)
    has_queue = np.zeros(total, dtype=bool)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []

    for l, idx, digits in states.length_blocks():
        v = idx - int(states.offsets[l])
        if l == 0:
            in_service = np.zeros((1, 0), dtype=bool)
        else:
            cum_need = need[digits].cumsum(axis=1)
            in_service = cum_need <= n
            busy[idx] = np.where(in_service, need[digits], 0).sum(axis=1)
            has_queue[idx] = ~in_service[:, -1]

        if l < big_l:
            base_child = int(states.offsets[l + 1])
            for c in range(k):
                if lam[c] <= 0.0:
                    continue
                rows.append(idx.astype(np.int32))
                cols.append((base_child + v * k + c).astype(np.int32))
                data.append(np.full(len(idx), lam[c]))

        if l >= 1:
            base_parent = int(states.offsets[l - 1])
            for j in range(l):
                mask = in_service[:, j]
                if not mask.any():
                    continue
                vm = v[mask]
                high = vm // k ** (l - j)
                low = vm % k ** (l - 1 - j)
                target = high * k ** (l - 1 - j) + low
                rows.append(idx[mask].astype(np.int32))
                cols.append((base_parent + target).astype(np.int32))
                data.append(mu[digits[mask, j]])

    if rows:
        coo = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(total, total),
        )
        gen = coo.tocsr()
    else:
        gen = sp.csr_matrix((total, total))
    out_rates = np.asarray(gen.sum(axis=1)).ravel()
    gen = gen + sp.diags(-out_rates, format="csr")
    boundary_start = int(states.offsets[big_l]) if big_l >= 1 else total
    return TruncatedChain(
        states=states,
        generator=gen,
        truncation_length=big_l,
        boundary_start=boundary_start,
        busy_servers=busy,
        has_queue=has_queue,
    )


def stationary_distribution(
    chain: TruncatedChain,
    tol: float = 1e-10,
    direct_limit: int = 50_000,
    max_iterations: int = 50_000,
) -> StationaryDistribution:
    """Solve pi Q = 0, sum(pi) = 1 on the truncated chain.

    Small chains are solved by sparse direct elimination; larger ones by
    uniformized power iteration, warm-started from a direct solve of a
    shallower truncation of the same chain, until the residual
    ``max|pi Q|`` drops to ``tol``.
    """
    total = chain.generator.shape[0]
    qt = chain.generator.transpose().tocsr()

    if total <= direct_limit:
        pi = _solve_direct(qt, total)
    else:
        pi = _warm_start(chain, direct_limit)
        diag = chain.generator.diagonal()
        rate = 1.05 * float(-diag.min())
        for iteration in range(max_iterations):
            flow = qt @ pi
            if iteration % 16 == 0 and float(np.abs(flow).max()) <= tol:
                break
            pi = pi + flow / rate
            if iteration % 64 == 0:
                pi = np.maximum(pi, 0.0)
                pi /= pi.sum()
        else:
            raise SolverDidNotConverge(
                f"residual {np.abs(qt @ pi).max():.3e} after {max_iterations} "
                f"iterations (tol {tol})"
            )

    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    residual = float(np.abs(qt @ pi).max())
    if residual > tol:
        raise SolverDidNotConverge(f"residual {residual:.3e} exceeds tol {tol}")
    boundary_mass = float(pi[chain.boundary_start :].sum())
    return StationaryDistribution(
        probabilities=pi, residual_norm=residual, boundary_mass=boundary_mass
    )


def _solve_direct(qt: sp.csr_matrix, total: int) -> np.ndarray:
    """pi from Q^T pi = 0 with the first equation replaced by normalization."""
    coo = qt.tocoo()
    keep = coo.row != 0
    rows = np.concatenate([coo.row[keep], np.zeros(total, dtype=np.int64)])
    cols = np.concatenate([coo.col[keep], np.arange(total, dtype=np.int64)])
    data = np.concatenate([coo.data[keep], np.ones(total)])
    a = sp.coo_matrix((data, (rows, cols)), shape=(total, total)).tocsc()
    b = np.zeros(total)
    b[0] = 1.0
    return spla.spsolve(a, b)


def _warm_start(chain: TruncatedChain, direct_limit: int) -> np.ndarray:
    """Initial guess: direct solve of the same chain cut to a shallower L."""
    states = chain.states
    k = states.num_classes
    shallow = states.max_jobs
    while shallow > 0 and states.offsets[shallow + 1] > direct_limit:
        shallow -= 1
    cut = int(states.offsets[shallow + 1])
    if shallow == 0:
        pi = np.zeros(len(states))
        pi[0] = 1.0
        return pi
    sub = chain.generator[:cut, :cut].tocsr()
    out_rates = np.asarray(sub.sum(axis=1)).ravel()
    sub = sub + sp.diags(-out_rates, format="csr")
    sub_pi = _solve_direct(sub.transpose().tocsr(), cut)
    pi = np.zeros(len(states))
    pi[:cut] = np.maximum(sub_pi, 0.0)
    pi /= pi.sum()
    return pi


def exact_queueing_probability(
    dist: StationaryDistribution,
    chain: TruncatedChain,
    cfg: ValidatedConfig,
    boundary_threshold: float = 1e-8,
) -> ExactQueueing:
    """Exact per-class and overall queueing probability.

    An arriving class-``i`` job queues in state ``u`` iff the queue is
    nonempty or fewer than ``m_i`` servers are idle; since Poisson arrivals
    see the stationary state, ``P_Q(i)`` is the stationary mass of those
    states.  The overall value weights classes by their arrival-rate shares.
    ``boundary_mass`` bounds the truncation bias and is reported alongside.
    """
    if dist.boundary_mass > boundary_threshold:
        raise TruncationTooCoarse(
            f"boundary mass {dist.boundary_mass:.3e} exceeds "
            f"{boundary_threshold:.3e}; increase the truncation length"
        )
    n = cfg.num_servers
    idle = n - chain.busy_servers
    pi = dist.probabilities
    per_class = tuple(
        float(pi[chain.has_queue | (idle < c.server_need)].sum())
        for c in cfg.classes
    )
    lam = np.array([c.arrival_rate for c in cfg.classes])
    lam_total = lam.sum()
    if lam_total > 0:
        overall = float(np.dot(lam / lam_total, per_class))
    else:
        overall = float(np.mean(per_class))
    return ExactQueueing(
        per_class=per_class, overall=overall, boundary_mass=dist.boundary_mass
    )


def exact_mean_drift(
    dist: StationaryDistribution, chain: TruncatedChain, cfg: ValidatedConfig
) -> float:
    """Stationary expectation of the work drift, sum_u pi(u) * drift_g(u).

    On the untruncated chain this is exactly zero; on the truncated chain a
    residue proportional to the boundary mass remains, because the drift
    formula still counts arrival work that the truncated generator drops at
    the boundary.
    """
    n_rho = cfg.num_servers * cfg.loads.total
    return float(np.dot(dist.probabilities, n_rho - chain.busy_servers))


def work_function_values(chain: TruncatedChain, cfg: ValidatedConfig) -> np.ndarray:
    """Total expected work g(u) = sum_i m_i*x_i/mu_i for every enumerated state."""
    work = np.array(
        [c.server_need / c.service_rate for c in cfg.classes], dtype=np.float64
    )
    g = np.zeros(len(chain.states))
    for l, idx, digits in chain.states.length_blocks():
        if l:
            g[idx] = work[digits].sum(axis=1)
    return g


def stationary_generator_drift(
    dist: StationaryDistribution, chain: TruncatedChain, cfg: ValidatedConfig
) -> float:
    """Expected drift of the work function under the solved chain's own generator.

    Computes ``pi . (Q g)``; by stationarity this is exactly zero, so the
    returned value measures only the quality of the solve.  Contrast with
    :func:`exact_mean_drift`, which evaluates the closed-form drift and
    therefore retains the arrival work the truncation drops at the boundary.
    """
    return float(np.dot(dist.probabilities, chain.generator @ work_function_values(chain, cfg)))


def expected_class_shortfall(
    dist: StationaryDistribution,
    chain: TruncatedChain,
    cfg: ValidatedConfig,
    class_id: int,
) -> float:
    """Stationary expectation of (n*rho_i - m_i*X_i)+ for one class."""
    c = cfg.classes[class_id - 1]
    target = cfg.num_servers * cfg.loads.per_class[class_id - 1]
    pi = dist.probabilities
    acc = 0.0
    for _, idx, digits in chain.states.length_blocks():
        counts = (digits == (class_id - 1)).sum(axis=1)
        shortfall = np.maximum(target - c.server_need * counts, 0.0)
        acc += float(np.dot(pi[idx], shortfall))
    return acc


def erlang_c(servers: int, offered_load: float) -> float:
    """Waiting probability of an M/M/c queue with offered load a = lambda/mu.

    Uses the Erlang-B recursion for numerical stability at large ``c``.
    Raises :class:`UnstableOfferedLoad` when ``a >= c``.
    """
    if servers < 1:
        raise ValueError(f"servers must be >= 1, got {servers}")
    if offered_load < 0:
        raise ValueError(f"offered load must be >= 0, got {offered_load}")
    if offered_load >= servers:
        raise UnstableOfferedLoad(
            f"offered load {offered_load} >= servers {servers}"
        )
    blocking = 1.0
    for k in range(1, servers + 1):
        blocking = offered_load * blocking / (k + offered_load * blocking)
    utilization = offered_load / servers
    return blocking / (1.0 - utilization * (1.0 - blocking))


def export_distribution_csv(
    dist: StationaryDistribution, chain: TruncatedChain
) -> str:
    """Stationary distribution as CSV text: state string, probability."""
    lines = ["state,probability"]
    for i, pi in enumerate(dist.probabilities):
        jobs = chain.states.decode(i)
        label = "-".join(str(c) for c in jobs) if jobs else "empty"
        lines.append(f"{label},{float(pi)!r}")
    return "\n".join(lines) + "\n"
