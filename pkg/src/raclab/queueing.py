"""Random-arrival dynamics: per-user queues, empirical stability and delay,
and the analytic M/G/1-with-vacations delay for the deadline-ARQ protocol.

Time is slotted but arrivals are Poisson in continuous time: a packet
landing in slot s is stamped s + U(0,1), and its sojourn runs until the
end of the slot in which its epoch finishes.  That is the convention under
which the vacation-queue delay formula (residual vacation E[V^2]/2E[V],
service from the head of the queue) is exact, and it is what the simulator
measures.

Participation decisions happen only at epoch starts: every user whose
queue is non-empty at that instant transmits its head-of-line packet with
probability p_t and then keeps transmitting (or stays silent) until the
epoch ends.  Delivered packets leave the queue whether or not they decoded
correctly; tree-pruned packets return to the head of their owner's queue
and are eligible again at the very next epoch.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import dmt
from .channel import draw_channels
from .montecarlo import BetaTable
from .protocols import EpochContext, run_epoch
from .system import AntennaConfig, ProtocolParams, binom_pmf, snr_from_db

STABILITY_SLOPE_EPS = 1e-3   # packets/slot; backlog-trend threshold
WARMUP_FRACTION = 0.2        # leading slots excluded from delay statistics


@dataclass
class QueueState:
    """One user's FIFO backlog of arrival timestamps."""

    packets: deque = field(default_factory=deque)

    def __len__(self) -> int:
        return len(self.packets)

    def push(self, timestamp: float):
        self.packets.append(timestamp)

    def pop_head(self) -> float:
        return self.packets.popleft()


@dataclass(frozen=True)
class ArrivalProcess:
    """Independent per-user, per-slot packet arrivals."""

    kind: str          # "poisson" (default) or "bernoulli"
    rate_per_user: float

    def __post_init__(self):
        if self.kind not in ("poisson", "bernoulli"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if self.rate_per_user < 0:
            raise ValueError("arrival rate must be nonnegative")
        if self.kind == "bernoulli" and self.rate_per_user > 1:
            raise ValueError("bernoulli arrival rate cannot exceed 1 per slot")

    def draw(self, rng: np.random.Generator, slots: int, users: int) -> np.ndarray:
        if self.kind == "poisson":
            return rng.poisson(self.rate_per_user, size=(slots, users))
        return (rng.random((slots, users)) < self.rate_per_user).astype(np.int64)


@dataclass
class DelayReport:
    """Outcome of one random-arrival simulation at a single load point."""

    protocol: str
    total_rate: float            # packets/slot summed over users
    snr_db: float | None
    delay: float                 # mean sojourn, slots
    delay_ci: float              # 95% half-width via batch means
    pe: float                    # fraction of non-idle epochs with a decode error
    nonidle_epochs: int
    verdict: str                 # stable | unstable | inconclusive
    backlog_slope: float         # packets/slot trend over the second half
    packets: int                 # departures counted in the delay statistics
    arrivals: int
    delivered: int
    horizon_slots: int
    seed: int | list | tuple


# ---------------------------------------------------------------------------
# analytic side (deadline-ARQ protocol)
# ---------------------------------------------------------------------------

def _beta_round_sums(beta: BetaTable, weights) -> tuple[float, float]:
    """Sum of survival probabilities and their (2*round+1)-weighted sum."""
    plain = 0.0
    squared = 0.0
    deadline = beta.deadline
    for k, w in weights:
        for ell in range(1, deadline):
            b = beta.beta(k, ell)
            plain += w * b
            squared += w * (2 * ell + 1) * b
    return plain, squared


def solve_transmission_probability(
    total_rate: float,
    users: int,
    p_t: float,
    deadline: int,
    beta: BetaTable,
) -> float | None:
    """Steady-state per-epoch transmission probability of a single user.

    Root of  K*p = total_rate * (1 + mean extra rounds at collision mix p),
    located by bisection on (0, p_t] to width 1e-14.  Returns 0.0 for an
    empty system (zero arrivals) and None when no root exists below p_t,
    which signals an unstable load.
    """
    if total_rate < 0:
        raise ValueError("arrival rate must be nonnegative")
    if total_rate == 0.0:
        return 0.0

    def g(p: float) -> float:
        extra = sum(
            binom_pmf(users, k, p) * sum(beta.beta(k, ell) for ell in range(1, deadline))
            for k in range(1, users + 1)
        )
        return users * p - total_rate * (1.0 + extra)

    if g(p_t) < 0.0:
        return None
    lo, hi = 0.0, p_t
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return 0.5 * (lo + hi)


def epoch_length_moments(
    p: float, users: int, deadline: int, beta: BetaTable
) -> tuple[float, float, float, float]:
    """First two moments of the tagged user's relevant and irrelevant epochs.

    Relevant epochs include the tagged transmission, so the other K-1 users
    contribute Binomial(K-1, p) colliders on top of it; irrelevant epochs
    see only the others.  Returns (E[U], E[U^2], E[V], E[V^2]).
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    relevant = [(k, binom_pmf(users - 1, k - 1, p)) for k in range(1, users + 1)]
    other = [(k, binom_pmf(users - 1, k, p)) for k in range(1, users)]
    u1, u2 = _beta_round_sums(beta, relevant)
    v1, v2 = _beta_round_sums(beta, other)
    return 1.0 + u1, 1.0 + u2, 1.0 + v1, 1.0 + v2


def analytic_delay(
    total_rate: float,
    users: int,
    p_t: float,
    deadline: int,
    beta: BetaTable,
) -> float:
    """M/G/1-with-vacations mean delay of the deadline-ARQ protocol, in slots.

    Service is the head-of-line time E[Y] = E[U] + (1/p_t - 1) E[V] (a
    geometric number of skipped epochs precedes the transmitted one), the
    vacation is the irrelevant epoch, and the moments are evaluated at the
    fixed-point transmission probability.  Returns inf outside the
    stability region.  Exact in the regime where U and V are i.i.d.
    """
    if not (0.0 < p_t <= 1.0):
        raise ValueError(f"p_t must lie in (0, 1], got {p_t}")
    penalty = dmt.irarq_round_penalty(_users_config(users), p_t, beta.values)
    if total_rate >= p_t * users / penalty:
        return math.inf
    p = solve_transmission_probability(total_rate, users, p_t, deadline, beta)
    if p is None:
        return math.inf
    eu, eu2, ev, ev2 = epoch_length_moments(p, users, deadline, beta)
    skip = 1.0 / p_t - 1.0
    service = eu + skip * ev
    denom = 2.0 * (users - total_rate * service)
    if denom <= 0.0:
        return math.inf
    second = eu2 + (2.0 - p_t) * (1.0 - p_t) / p_t**2 * ev2 + 2.0 * skip * eu * ev
    return service + total_rate * second / denom + ev2 / (2.0 * ev)


def _users_config(users: int) -> AntennaConfig:
    # antenna counts are irrelevant for the round-penalty weights
    return AntennaConfig(users=users, tx=1, rx=1)


# ---------------------------------------------------------------------------
# simulation side
# ---------------------------------------------------------------------------

def simulate_random_arrivals(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    total_rate: float,
    snr_db: float | None,
    horizon_slots: int,
    seed,
    arrivals: str = "poisson",
    trace: bool = False,
) -> DelayReport:
    """Drive the protocol with randomly arriving packets for ``horizon_slots``.

    The stability verdict regresses the total backlog against time over the
    second half of the horizon: trend below STABILITY_SLOPE_EPS in absolute
    value is stable, a positive trend above it is unstable, anything else
    is inconclusive.  Work conservation (arrivals = departures + final
    backlog) is asserted exactly.
    """
    if horizon_slots < 10:
        raise ValueError("horizon too short")
    if total_rate < 0:
        raise ValueError("arrival rate must be nonnegative")
    rng = np.random.default_rng(seed)
    snr = None if snr_db is None else snr_from_db(snr_db)
    process = ArrivalProcess(arrivals, total_rate / config.users)
    queues = [QueueState() for _ in range(config.users)]
    warmup_time = WARMUP_FRACTION * horizon_slots

    slot = 0
    epoch_id = 0
    n_arrivals = 0
    n_delivered = 0
    delays: list[float] = []
    errors = 0
    nonidle = 0
    backlog_t: list[int] = []
    backlog_v: list[int] = []

    while slot < horizon_slots:
        candidates = [i for i in range(config.users) if len(queues[i]) > 0]
        if params.p_t < 1.0 and candidates:
            coins = rng.random(len(candidates))
            participants = tuple(u for u, c in zip(candidates, coins) if c < params.p_t)
        else:
            participants = tuple(candidates)

        channels = None
        if snr is not None:
            channels = draw_channels(config, snr, rng, epoch=epoch_id)
        ctx = EpochContext(
            participants=participants,
            params=params,
            rng=rng,
            channels=channels,
            config=config,
            epoch_id=epoch_id,
            collect_trace=trace,
        )
        outcome = run_epoch(protocol, ctx)
        end_time = slot + outcome.length

        if participants:
            nonidle += 1
            if outcome.any_error:
                errors += 1
        for u in participants:
            if outcome.delivered[u]:
                stamp = queues[u].pop_head()
                n_delivered += 1
                if stamp >= warmup_time:
                    delays.append(end_time - stamp)
            # pruned packets stay at the head, eligible next epoch

        counts = process.draw(rng, outcome.length, config.users)
        for offset in range(outcome.length):
            base = slot + offset
            for u in range(config.users):
                c = int(counts[offset, u])
                if c:
                    n_arrivals += c
                    for frac in np.sort(rng.random(c)):
                        queues[u].push(base + float(frac))

        slot = end_time
        epoch_id += 1
        backlog_t.append(slot)
        backlog_v.append(sum(len(q) for q in queues))

    if n_arrivals != n_delivered + sum(len(q) for q in queues):
        raise AssertionError("packet ledger out of balance")

    t = np.asarray(backlog_t, dtype=float)
    v = np.asarray(backlog_v, dtype=float)
    half = t >= horizon_slots / 2.0
    if half.sum() >= 2 and np.ptp(t[half]) > 0:
        slope = float(np.polyfit(t[half], v[half], 1)[0])
    else:
        slope = 0.0
    if abs(slope) < STABILITY_SLOPE_EPS:
        verdict = "stable"
    elif slope > STABILITY_SLOPE_EPS:
        verdict = "unstable"
    else:
        verdict = "inconclusive"

    if delays:
        mean_delay = float(np.mean(delays))
        ci = _batch_means_ci(delays)
    else:
        mean_delay = math.nan
        ci = math.nan
    pe = errors / nonidle if nonidle else 0.0

    return DelayReport(
        protocol=protocol,
        total_rate=total_rate,
        snr_db=snr_db,
        delay=mean_delay,
        delay_ci=ci,
        pe=pe,
        nonidle_epochs=nonidle,
        verdict=verdict,
        backlog_slope=slope,
        packets=len(delays),
        arrivals=n_arrivals,
        delivered=n_delivered,
        horizon_slots=horizon_slots,
        seed=seed,
    )


def _batch_means_ci(delays: list[float], batches: int = 20) -> float:
    """95% half-width from batch means; sojourns are serially correlated."""
    n = len(delays)
    if n < 2 * batches:
        return float(1.96 * np.std(delays, ddof=1) / math.sqrt(n))
    size = n // batches
    means = [float(np.mean(delays[i * size : (i + 1) * size])) for i in range(batches)]
    return float(1.96 * np.std(means, ddof=1) / math.sqrt(batches))


@dataclass
class ScanResult:
    """Stability verdicts across an ascending arrival-rate grid."""

    grid: list[float]
    verdicts: list[str]
    reports: list[DelayReport]
    boundary: float | None     # midpoint between last stable and first unstable

    def verdict_at(self, rate: float) -> str:
        return self.verdicts[self.grid.index(rate)]


def stability_boundary_scan(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    snr_db: float | None,
    rate_grid,
    seed: int,
    horizon_slots: int = 40_000,
    arrivals: str = "poisson",
) -> ScanResult:
    """Classify each load on the grid and bracket the stability boundary.

    A declining backlog (inconclusive verdict with negative trend) counts
    as stable for bracketing purposes; the boundary is the midpoint of the
    last such load and the first unstable one.
    """
    grid = sorted(float(x) for x in rate_grid)
    if not grid:
        raise ValueError("rate grid must be nonempty")
    verdicts = []
    reports = []
    for i, lam in enumerate(grid):
        rep = simulate_random_arrivals(
            protocol, config, params, lam, snr_db, horizon_slots, [seed, i], arrivals
        )
        reports.append(rep)
        verdicts.append(rep.verdict)
    boundary = None
    for i, rep in enumerate(reports):
        if rep.verdict == "unstable":
            boundary = (grid[i - 1] + grid[i]) / 2.0 if i > 0 else grid[i] / 2.0
            break
    return ScanResult(grid=grid, verdicts=verdicts, reports=reports, boundary=boundary)
