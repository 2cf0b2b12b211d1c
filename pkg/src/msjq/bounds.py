"""Closed-form stability and queueing-probability certificates.

Everything here is plain arithmetic on a validated config or an occupancy:
the sufficient stability margin, the queueing-probability upper bound, the
expected-work Lyapunov function and its exact drift, the two-case drift
envelope, the generic drift tail/moment bounds, and the classifier for the
joint load/server-need scaling regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Occupancy, ValidatedConfig


class HypothesisViolated(ValueError):
    """A bound was requested outside the hypothesis under which it holds."""


@dataclass(frozen=True)
class StabilityMargin:
    rho: float
    threshold: float
    provably_stable: bool
    borderline: bool


@dataclass(frozen=True)
class DriftBoundParams:
    """Inputs to the generic drift bounds.

    ``threshold_B``: level above which the Lyapunov drift is at most
    ``-decay_gamma``; ``max_jump_v``: largest possible single-transition jump
    of the Lyapunov value; ``up_rate_delta``: maximum total upward drift rate.
    Note ``decay_gamma`` is the drift decay rate, unrelated to the server-need
    scaling exponent in :class:`ScalingRegime`.
    """

    threshold_B: float
    decay_gamma: float
    max_jump_v: float
    up_rate_delta: float


@dataclass(frozen=True)
class ScalingRegime:
    """Joint scaling of load and server need as the cluster grows.

    Load scales as ``1 - beta * n**-alpha`` and the maximum server need as
    ``Theta(n**gamma_need)``.  ``beta`` is nominally in (0, 1); 1.0 is
    accepted so the heavier-traffic sweep presets can be classified too.
    """

    alpha: float
    beta: float
    gamma_need: float

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.gamma_need <= 1:
            raise ValueError(f"gamma_need must be in [0, 1], got {self.gamma_need}")


def stability_margin(cfg: ValidatedConfig) -> StabilityMargin:
    """Sufficient stability condition: rho < 1 - m_max/n."""
    return StabilityMargin(
        rho=cfg.loads.total,
        threshold=cfg.stability_threshold,
        provably_stable=cfg.provably_stable,
        borderline=cfg.borderline,
    )


def queueing_probability_bound(cfg: ValidatedConfig) -> tuple[float, float]:
    """Upper bound on the steady-state queueing probability.

    Returns ``(raw, clamped)`` where
    ``raw = (3K*sqrt(m_max/n) + m_max/n) / (1 - rho)`` and ``clamped`` is
    ``min(raw, 1)``.  The raw value can exceed 1 at small ``n``; it is only
    guaranteed to be a probability bound asymptotically.

    Raises :class:`HypothesisViolated` unless ``rho < 1 - m_max/n``.
    """
    rho = cfg.loads.total
    ratio = cfg.m_max / cfg.num_servers
    if rho >= 1.0 - ratio:
        raise HypothesisViolated(
            f"rho={rho:.6g} >= 1 - m_max/n = {1.0 - ratio:.6g}; bound requires "
            "the stability hypothesis"
        )
    raw = (3.0 * cfg.num_classes * math.sqrt(ratio) + ratio) / (1.0 - rho)
    return raw, min(raw, 1.0)


def lyapunov_g(occ: Occupancy, cfg: ValidatedConfig) -> float:
    """Total expected work in the system: sum_i m_i * x_i / mu_i."""
    return math.fsum(
        c.server_need * x / c.service_rate for c, x in zip(cfg.classes, occ.in_system)
    )


def drift_g(occ: Occupancy, cfg: ValidatedConfig) -> float:
    """Exact drift of the expected-work function: n*rho - sum_i m_i*(x_i - q_i).

    The subtracted term is exactly the number of busy servers, so the drift
    is positive while spare capacity exceeds the incoming work rate and
    negative once the cluster is nearly full.
    """
    busy = math.fsum(
        c.server_need * (x - q)
        for c, x, q in zip(cfg.classes, occ.in_system, occ.in_queue)
    )
    return cfg.num_servers * cfg.loads.total - busy


def envelope_h(occ: Occupancy, cfg: ValidatedConfig) -> float:
    """Two-case upper envelope of the work drift (up to an additive m_max).

    ``n*rho - sum_i m_i*x_i`` while the total requested servers fit below
    ``n - m_max`` (inclusive), and ``-n*(1 - rho)`` above that level.
    """
    n = cfg.num_servers
    requested = math.fsum(
        c.server_need * x for c, x in zip(cfg.classes, occ.in_system)
    )
    if requested <= n - cfg.m_max:
        return n * cfg.loads.total - requested
    return -n * (1.0 - cfg.loads.total)


def lyapunov_f(occ: Occupancy, cfg: ValidatedConfig, class_id: int) -> float:
    """Per-class shortfall below the nominal job level: (n*rho_i - m_i*x_i)+."""
    c = cfg.classes[class_id - 1]
    rho_i = cfg.loads.per_class[class_id - 1]
    value = cfg.num_servers * rho_i - c.server_need * occ.in_system[class_id - 1]
    return max(value, 0.0)


def drift_tail_bound(p: DriftBoundParams, m: int) -> float:
    """Geometric tail bound: P(V > B + 2*m*v_max) <= (delta/(delta+gamma))**(m+1)."""
    if m < 0:
        raise ValueError(f"m must be a nonnegative integer, got {m}")
    ratio = p.up_rate_delta / (p.up_rate_delta + p.decay_gamma)
    return min(max(ratio ** (m + 1), 0.0), 1.0)


def drift_moment_bound(p: DriftBoundParams) -> float:
    """Stationary moment bound: E[V] <= B + 2*v_max*delta_max/gamma."""
    return p.threshold_B + 2.0 * p.max_jump_v * p.up_rate_delta / p.decay_gamma


def ssc_bound(cfg: ValidatedConfig, class_id: int) -> float:
    """State-space-collapse bound on the expected per-class shortfall: 3*sqrt(n*m_i)."""
    need = cfg.classes[class_id - 1].server_need
    return 3.0 * math.sqrt(cfg.num_servers * need)


def classify_regime(r: ScalingRegime) -> tuple[int, bool]:
    """Map a scaling regime to its region (1-4) and the diminishing verdict.

    Regions: 1 = constant load, constant need; 2 = constant load, scaling
    need; 3 = heavy traffic, constant need; 4 = both scaling.  The queueing
    probability diminishes iff ``2*alpha + gamma < 1``; at finite ``n`` this
    exponent rule and the bound value of
    :func:`queueing_probability_bound` should be read side by side.
    """
    if r.alpha == 0 and r.gamma_need == 0:
        region = 1
    elif r.alpha == 0:
        region = 2
    elif r.gamma_need == 0:
        region = 3
    else:
        region = 4
    return region, 2.0 * r.alpha + r.gamma_need < 1.0
