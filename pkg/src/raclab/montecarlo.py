"""Monte Carlo estimation engine for the random-access laboratory.

Estimates per-round survival probabilities (beta tables), fully-loaded
throughput via renewal-reward accounting, system error probability, and
diversity exponents fitted from error-probability samples.

Reproducibility contract: work is split into fixed-size chunks and chunk i
of a run tagged ``tag`` uses the generator ``default_rng([seed, tag, i])``.
Partial results are pure sums merged in chunk order, so estimates are
bitwise identical for a given (arguments, seed) no matter how many worker
threads execute the chunks.  SNR is expressed in dB at this interface and
converted to linear internally; ``snr_db=None`` selects the infinite-SNR
limit in which decoding outcomes are deterministic indicator thresholds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dmt
from .channel import (
    asymptotic_first_decodable_round,
    asymptotic_single_user_outage,
    batch_first_decodable_round,
)
from .system import GTA, IRARQ, ONDMA, AntennaConfig, ProtocolParams, binom_pmf, snr_from_db

DEFAULT_CHUNK = 1 << 18

# stream tags keep the independent estimators on disjoint substreams
_TAG_ERROR = 1
_TAG_THROUGHPUT = 2
_TAG_BETA = 3          # + k for collision size k
_TAG_GTA_STATS = 99


# ---------------------------------------------------------------------------
# beta tables
# ---------------------------------------------------------------------------

@dataclass
class BetaTable:
    """Per-round survival probabilities of a k-user collision.

    ``values[k-1, ell]`` is the probability that joint decoding still fails
    after ``ell`` rounds given k initial colliders; column 0 is 1 by
    definition and rows are nonincreasing.  ``epoch_length_mean/var`` hold
    the matching min(first success, deadline) statistics used to propagate
    uncertainty into renewal-reward predictions.
    """

    values: np.ndarray            # shape (users, deadline + 1)
    source: str                   # "monte-carlo" | "high-snr-indicator" | "closed-form"
    trials: int
    snr: float | None             # linear SNR, None for the infinite-SNR table
    stderr: np.ndarray | None = None
    epoch_length_mean: np.ndarray | None = None
    epoch_length_var: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be a (users, deadline+1) array")
        if not np.allclose(vals[:, 0], 1.0):
            raise ValueError("survival probability at round 0 must be 1")
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
            raise ValueError("survival probabilities must lie in [0, 1]")
        if np.any(np.diff(vals, axis=1) > 1e-12):
            raise ValueError("survival probabilities must be nonincreasing in rounds")
        self.values = vals

    @property
    def users(self) -> int:
        return self.values.shape[0]

    @property
    def deadline(self) -> int:
        return self.values.shape[1] - 1

    def beta(self, k: int, rounds: int) -> float:
        return float(self.values[k - 1, rounds])

    def alpha(self, k: int, rounds: int) -> float:
        """Probability the epoch resolves exactly at round ``rounds``."""
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        return float(self.values[k - 1, rounds - 1] - self.values[k - 1, rounds])

    @classmethod
    def from_indicators(
        cls, config: AntennaConfig, multiplexing_gain: float, deadline: int
    ) -> "BetaTable":
        """Infinite-SNR table: survival indicators and deterministic lengths."""
        vals = np.ones((config.users, deadline + 1))
        length = np.zeros(config.users)
        for k in range(1, config.users + 1):
            for ell in range(1, deadline + 1):
                vals[k - 1, ell] = dmt.beta_highsnr(
                    k, config.tx, config.rx, multiplexing_gain, ell
                )
            length[k - 1] = min(
                asymptotic_first_decodable_round(k, config, multiplexing_gain), deadline
            )
        return cls(
            values=vals,
            source="high-snr-indicator",
            trials=0,
            snr=None,
            stderr=np.zeros_like(vals),
            epoch_length_mean=length,
            epoch_length_var=np.zeros(config.users),
        )


def _chunk_plan(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def _map_chunks(fn, sizes: list[int], workers: int) -> list:
    """Run fn(chunk_index, chunk_size) over all chunks, results in index order."""
    if workers <= 1 or len(sizes) <= 1:
        return [fn(i, n) for i, n in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, n) for i, n in enumerate(sizes)]
        return [f.result() for f in futures]


def estimate_beta(
    config: AntennaConfig,
    snr_db: float,
    rate: float,
    deadline: int,
    trials: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> BetaTable:
    """Monte Carlo survival probabilities for every collision size k = 1..K.

    For each trial a fresh channel set is drawn, the first decodable round
    is located, and every earlier round counts as a survival.  The derived
    exactly-at-round view is available as :meth:`BetaTable.alpha`.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if deadline < 1:
        raise ValueError("deadline must be >= 1")
    snr = snr_from_db(snr_db)
    users, rx, tx = config.users, config.rx, config.tx
    values = np.ones((users, deadline + 1))
    stderr = np.zeros((users, deadline + 1))
    len_mean = np.zeros(users)
    len_var = np.zeros(users)
    sizes = _chunk_plan(trials, chunk)

    for k in range(1, users + 1):
        def one_chunk(idx, n, k=k):
            rng = np.random.default_rng([seed, _TAG_BETA + k, idx])
            gains = (
                rng.standard_normal((n, k, rx, tx)) + 1j * rng.standard_normal((n, k, rx, tx))
            ) / math.sqrt(2.0)
            needed = batch_first_decodable_round(gains, snr, rate)
            exceed = np.array([(needed > ell).sum() for ell in range(1, deadline + 1)])
            capped = np.minimum(needed, deadline).astype(float)
            return exceed, capped.sum(), (capped**2).sum()

        partials = _map_chunks(one_chunk, sizes, workers)
        exceed = sum(p[0] for p in partials)
        s1 = sum(p[1] for p in partials)
        s2 = sum(p[2] for p in partials)
        beta = exceed / trials
        values[k - 1, 1:] = beta
        stderr[k - 1, 1:] = np.sqrt(np.maximum(beta * (1 - beta), 0.0) / trials)
        len_mean[k - 1] = s1 / trials
        len_var[k - 1] = max(s2 / trials - (s1 / trials) ** 2, 0.0)

    return BetaTable(
        values=values,
        source="monte-carlo",
        trials=trials,
        snr=snr,
        stderr=stderr,
        epoch_length_mean=len_mean,
        epoch_length_var=len_var,
    )


# ---------------------------------------------------------------------------
# vectorised epoch batches (fully-loaded queues)
# ---------------------------------------------------------------------------

def _gta_tree_batch(k_init: np.ndarray, rng: np.random.Generator):
    """Vectorised splitting tree on group sizes only.

    Returns per-epoch (length, delivered count, pruned count); identities
    are exchangeable so callers may assign them as uniform subsets.
    """
    n = k_init.shape[0]
    lengths = np.ones(n, dtype=np.int64)
    delivered = np.zeros(n, dtype=np.int64)
    pruned = np.zeros(n, dtype=np.int64)
    delivered[k_init == 1] = 1
    group = k_init.copy()
    active = k_init >= 2
    while active.any():
        idx = np.flatnonzero(active)
        size = group[idx]
        left = rng.binomial(size, 0.5)
        empty = left == 0
        lengths[idx[empty]] += 1
        single = left == 1
        rest = size - 1
        done = single & (rest == 1)
        lengths[idx[done]] += 2
        delivered[idx[done]] += 2
        active[idx[done]] = False
        cont = single & (rest >= 2)
        lengths[idx[cont]] += 2
        delivered[idx[cont]] += 1
        group[idx[cont]] = rest[cont]
        big = left >= 2
        pruned[idx[big]] += (size - left)[big]
        lengths[idx[big]] += 1
        group[idx[big]] = left[big]
    return lengths, delivered, pruned


def _single_user_info(gains: np.ndarray, snr: float, gain: float, tx: int) -> np.ndarray:
    """Per-user mutual information for a batch of (epochs, users, rx, tx) gains."""
    rx = gains.shape[2]
    if rx == 1:
        power = np.sum(np.abs(gains) ** 2, axis=(2, 3))
        return np.log2(1.0 + (gain * snr / tx) * power)
    grams = np.einsum("nkab,nkcb->nkac", gains, gains.conj())
    dets = np.linalg.det(np.eye(rx) + (gain * snr / tx) * grams)
    return np.log2(np.maximum(dets.real, 1e-300))


def _draw_gains(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _ranks_among_participants(tx_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform random rank of each participant within its epoch's participant set."""
    keys = rng.random(tx_mask.shape)
    keys[~tx_mask] = np.inf
    order = np.argsort(keys, axis=1)
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(tx_mask.shape[1])[None, :], axis=1)
    return ranks


def _epoch_batch(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    snr: float | None,
    n: int,
    rng: np.random.Generator,
):
    """Simulate n independent fully-loaded epochs; returns per-epoch arrays.

    The generator is consumed in a fixed order (participation coins, then
    protocol-specific draws), so runs with the same seed share channel
    realisations across deadlines and SNR points.
    """
    users, rx, tx = config.users, config.rx, config.tx
    rate = None if snr is None else params.rate_at(snr)
    tx_mask = rng.random((n, users)) < params.p_t
    k_arr = tx_mask.sum(axis=1)
    error_user = np.zeros((n, users), dtype=bool)

    if protocol == IRARQ:
        deadline = params.deadline
        if deadline is None:
            raise ValueError("IR-ARQ needs a deadline")
        needed = np.ones(n, dtype=np.int64)
        for k in range(1, users + 1):
            sel = k_arr == k
            m = int(sel.sum())
            if m == 0:
                continue
            if snr is None:
                needed[sel] = asymptotic_first_decodable_round(
                    k, config, params.multiplexing_gain
                )
            else:
                gains = _draw_gains(rng, (m, k, rx, tx))
                needed[sel] = batch_first_decodable_round(gains, snr, rate)
        lengths = np.minimum(needed, deadline)
        failed = (needed > deadline) & (k_arr >= 1)
        error_user = tx_mask & failed[:, None]
        delivered = k_arr.astype(np.int64)

    elif protocol == ONDMA:
        lengths = np.maximum(k_arr, 1).astype(np.int64)
        if snr is None:
            out = asymptotic_single_user_outage(config, params.multiplexing_gain)
            outage = np.full((n, users), out, dtype=bool)
        elif params.matched_combining:
            outage = np.zeros((n, users), dtype=bool)
            gains = _draw_gains(rng, (n, users, rx, tx))
            for k in range(1, users + 1):
                sel = k_arr == k
                if not sel.any():
                    continue
                info = _single_user_info(gains[sel], snr, float(k), tx)
                outage[sel] = info < rate
        else:
            gains = _draw_gains(rng, (n, users, rx, tx))
            outage = _single_user_info(gains, snr, 1.0, tx) < rate
        error_user = tx_mask & outage
        delivered = k_arr.astype(np.int64)

    elif protocol == GTA:
        lengths, delivered, _pruned = _gta_tree_batch(k_arr.astype(np.int64), rng)
        ranks = _ranks_among_participants(tx_mask, rng)
        delivered_mask = tx_mask & (ranks < delivered[:, None])
        if snr is None:
            out = asymptotic_single_user_outage(config, params.multiplexing_gain)
            outage = np.full((n, users), out, dtype=bool)
        else:
            gains = _draw_gains(rng, (n, users, rx, tx))
            outage = _single_user_info(gains, snr, 1.0, tx) < rate
        error_user = delivered_mask & outage

    else:
        raise ValueError(f"unknown protocol {protocol!r}")

    return {
        "lengths": lengths,
        "delivered": delivered,
        "nonidle": k_arr >= 1,
        "error_user": error_user,
        "error_epoch": error_user.any(axis=1),
    }


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

@dataclass
class ErrorEstimate:
    """System error probability over non-idle epochs, with per-user rates."""

    value: float
    stderr: float
    per_user: np.ndarray          # per-user error rate, same non-idle denominator
    per_user_stderr: np.ndarray
    trials: int                   # epochs simulated, idle included
    nonidle: int
    snr_db: float | None
    seed: int


def system_error_probability(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    snr_db: float | None,
    trials: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> ErrorEstimate:
    """Fraction of non-idle epochs in which at least one message is lost.

    Every run asserts the sandwich bound: the largest per-user error count
    never exceeds the system count, which never exceeds the per-user sum.
    Both hold pathwise, so the check is exact, not statistical.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    snr = None if snr_db is None else snr_from_db(snr_db)
    sizes = _chunk_plan(trials, chunk)

    def one_chunk(idx, n):
        rng = np.random.default_rng([seed, _TAG_ERROR, idx])
        batch = _epoch_batch(protocol, config, params, snr, n, rng)
        return (
            int(batch["nonidle"].sum()),
            int(batch["error_epoch"].sum()),
            batch["error_user"].sum(axis=0),
        )

    partials = _map_chunks(one_chunk, sizes, workers)
    nonidle = sum(p[0] for p in partials)
    errors = sum(p[1] for p in partials)
    per_user_counts = sum(p[2] for p in partials)

    # hard pathwise invariant, checked on every run
    if not per_user_counts.max(initial=0) <= errors <= per_user_counts.sum():
        raise AssertionError("per-user / system error sandwich violated")

    if nonidle == 0:
        raise ValueError("no non-idle epochs simulated; increase trials")
    p = errors / nonidle
    per_user = per_user_counts / nonidle
    return ErrorEstimate(
        value=p,
        stderr=math.sqrt(max(p * (1 - p), 0.0) / nonidle),
        per_user=per_user,
        per_user_stderr=np.sqrt(np.maximum(per_user * (1 - per_user), 0.0) / nonidle),
        trials=trials,
        nonidle=nonidle,
        snr_db=snr_db,
        seed=seed,
    )


@dataclass
class ThroughputEstimate:
    """Renewal-reward throughput of back-to-back fully-loaded epochs."""

    per_rate: float               # delivered packets per slot (multiples of R)
    per_rate_stderr: float
    rate: float | None            # first-round rate R; None in the infinite-SNR mode
    slots: int
    epochs: int
    seed: int

    @property
    def bits_per_channel_use(self) -> float | None:
        return None if self.rate is None else self.per_rate * self.rate


def fully_loaded_throughput(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    snr_db: float | None,
    slots: int,
    seed: int,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> ThroughputEstimate:
    """Simulate epochs until at least ``slots`` slots elapse; ratio estimator.

    Throughput counts every delivered packet, decoded correctly or not.
    The standard error follows the delta method for the ratio of means of
    per-epoch (delivered, length) pairs.
    """
    if slots < 1:
        raise ValueError("slots must be >= 1")
    snr = None if snr_db is None else snr_from_db(snr_db)
    sums = np.zeros(5)  # W, L, WW, LL, WL
    epochs = 0
    idx = 0
    while sums[1] < slots:
        rng = np.random.default_rng([seed, _TAG_THROUGHPUT, idx])
        n = int(min(chunk, max(1024, slots)))
        batch = _epoch_batch(protocol, config, params, snr, n, rng)
        w = batch["delivered"].astype(float)
        ell = batch["lengths"].astype(float)
        sums += (w.sum(), ell.sum(), (w * w).sum(), (ell * ell).sum(), (w * ell).sum())
        epochs += n
        idx += 1
    w_sum, l_sum, ww, ll, wl = sums
    ratio = w_sum / l_sum
    mean_l = l_sum / epochs
    var_w = ww / epochs - (w_sum / epochs) ** 2
    var_l = ll / epochs - mean_l**2
    cov = wl / epochs - (w_sum / epochs) * mean_l
    var_ratio = (var_w - 2 * ratio * cov + ratio**2 * var_l) / (epochs * mean_l**2)
    rate = None if snr is None else params.rate_at(snr)
    return ThroughputEstimate(
        per_rate=ratio,
        per_rate_stderr=math.sqrt(max(var_ratio, 0.0)),
        rate=rate,
        slots=int(l_sum),
        epochs=epochs,
        seed=seed,
    )


def renewal_prediction(
    protocol: str,
    config: AntennaConfig,
    params: ProtocolParams,
    beta: BetaTable | None = None,
) -> tuple[float, float]:
    """Renewal-reward throughput prediction in multiples of R, with stderr.

    GTA and O-NDMA epochs are channel-independent, so their predictions are
    exact closed forms.  The IR-ARQ prediction divides p_t*K by one plus
    the mean number of extra rounds and inherits uncertainty from a Monte
    Carlo beta table through the stored epoch-length variances.
    """
    p_t = params.p_t
    if protocol == GTA:
        return 1.0 / dmt.gta_multiplexing_penalty(config, p_t), 0.0
    if protocol == ONDMA:
        k = config.users
        return k * p_t / (k * p_t + (1.0 - p_t) ** k), 0.0
    if protocol == IRARQ:
        if beta is None:
            raise ValueError("IR-ARQ prediction needs a beta table")
        penalty = dmt.irarq_round_penalty(config, p_t, beta.values)
        value = p_t * config.users / penalty
        if beta.trials and beta.epoch_length_var is not None:
            var_pen = sum(
                binom_pmf(config.users, k, p_t) ** 2 * beta.epoch_length_var[k - 1] / beta.trials
                for k in range(1, config.users + 1)
            )
            se = value / penalty * math.sqrt(var_pen)
        else:
            se = 0.0
        return value, se
    raise ValueError(f"unknown protocol {protocol!r}")


def gta_collision_stats(k: int, epochs: int, seed: int, chunk: int = DEFAULT_CHUNK,
                        workers: int = 1):
    """Mean epoch length and delivered count for forced k-user collisions.

    Returns (mean_length, se_length, mean_delivered, se_delivered); the
    Monte Carlo counterpart of the exact splitting-tree recursions.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    sizes = _chunk_plan(epochs, chunk)

    def one_chunk(idx, n):
        rng = np.random.default_rng([seed, _TAG_GTA_STATS, idx])
        lengths, delivered, _ = _gta_tree_batch(np.full(n, k, dtype=np.int64), rng)
        lf = lengths.astype(float)
        df = delivered.astype(float)
        return lf.sum(), (lf**2).sum(), df.sum(), (df**2).sum()

    partials = _map_chunks(one_chunk, sizes, workers)
    l1 = sum(p[0] for p in partials)
    l2 = sum(p[1] for p in partials)
    d1 = sum(p[2] for p in partials)
    d2 = sum(p[3] for p in partials)
    mean_l = l1 / epochs
    mean_d = d1 / epochs
    se_l = math.sqrt(max(l2 / epochs - mean_l**2, 0.0) / epochs)
    se_d = math.sqrt(max(d2 / epochs - mean_d**2, 0.0) / epochs)
    return mean_l, se_l, mean_d, se_d


def diversity_slope(pe_samples) -> float:
    """Least-squares diversity exponent from (linear SNR, error prob) samples.

    Fits -log2(Pe) against log2(snr) over the top decade of the sampled SNR
    range; the intercept is discarded, so any constant prefactor in Pe
    leaves the estimate unchanged.
    """
    samples = [(float(s), float(p)) for s, p in pe_samples]
    if len(samples) < 3:
        raise ValueError("need at least 3 (snr, pe) samples")
    if any(p <= 0 for _, p in samples):
        raise ValueError("error probabilities must be positive")
    top = max(s for s, _ in samples)
    window = [(s, p) for s, p in samples if s >= top / 10.0 * (1 - 1e-9)]
    if len(window) < 2:
        raise ValueError("need at least 2 samples within the top SNR decade")
    x = np.array([math.log2(s) for s, _ in window])
    y = np.array([-math.log2(p) for _, p in window])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
