"""Monte Carlo simulator of the full dissemination protocol.

Each period the distributor appends one block and multicasts the newest
``k`` headers plus ``s`` signature packets (distinct servers, all covering
the newest block).  Every packet reaches every client independently through
a Bernoulli loss channel.  A client raises its feedback bit when the block
due ``d`` periods ago is still unauthenticated as the period opens, i.e.
the feedback condition (authenticated lag > d at the new height) is
evaluated before the period's own multicast lands, and the flagged client
is resynced over reliable unicast within the same period.  Evaluating
before the period's deliveries gives each check window exactly ``d``
signature opportunities, the same window the analytical chain prices;
evaluating after them would grant a (d+1)-th opportunity and depress the
failure rate by roughly a factor ``1 - p_s`` wherever signature scarcity
dominates.  The number of feedback bits per period is the simulated
counterpart of the analytical failure rate.

Randomness is split into named substreams of one master seed:

    spawn_key (0,)      signature scheduling at the distributor
    spawn_key (1, u)    loss channel of client u
    spawn_key (2, u)    trusted-set sampling for client u

so results are bit-for-bit reproducible and adding clients never perturbs
the streams of existing ones.  Client u consumes exactly one uniform per
scheduled packet per period, blocks first in ascending height order, then
signatures in schedule order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .analysis import packet_loss_probs, signatures_per_period
from .chain import AuthTracker, BlockHeader, HeaderChain, SignatureRecord
from .codec import MockSignatureScheme
from .errors import InvalidParams
from .params import ChannelProbs, SystemParams

FAILURE_RULE = "authenticated_lag > d"


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: an operating point plus run controls.

    ``warmup`` periods are simulated but excluded from measurement; it
    defaults to ``10 * d``.  ``trusted_sets`` fixes each client's trusted
    servers explicitly; when omitted they are sampled uniformly without
    replacement per client from the client's own seed substream.
    """

    params: SystemParams
    periods: int
    warmup: int | None = None
    seed: int = 0
    trusted_sets: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self) -> None:
        if self.warmup is None:
            object.__setattr__(self, "warmup", 10 * self.params.d)
        if self.warmup < self.params.d:
            raise InvalidParams(f"warmup must be >= d, got warmup={self.warmup} d={self.params.d}")
        if self.periods <= self.warmup:
            raise InvalidParams(
                f"periods must exceed warmup, got periods={self.periods} warmup={self.warmup}"
            )
        if self.trusted_sets is not None:
            p = self.params
            if len(self.trusted_sets) != p.U:
                raise InvalidParams(
                    f"trusted_sets must list one set per client, got {len(self.trusted_sets)} for U={p.U}"
                )
            for u, servers in enumerate(self.trusted_sets):
                if len(servers) != p.V_u or len(set(servers)) != p.V_u:
                    raise InvalidParams(f"client {u} must trust exactly V_u={p.V_u} distinct servers")
                if not all(1 <= sid <= p.V for sid in servers):
                    raise InvalidParams(f"client {u} trusts a server outside 1..{p.V}")


@dataclass(frozen=True)
class PeriodSchedule:
    """What the distributor multicasts in one period."""

    block_heights: tuple[int, ...]
    signature_servers: tuple[int, ...]


def schedule_period(
    t: int, params: SystemParams, rng: np.random.Generator, s: int | None = None
) -> PeriodSchedule:
    """Multicast schedule for period ``t``.

    Repeats the newest ``min(k, t + 1)`` block heights (early periods have
    fewer blocks in existence) and samples ``s`` distinct signing servers
    uniformly from ``1..V``.
    """
    if t < 0:
        raise InvalidParams(f"period index must be >= 0, got {t}")
    if s is None:
        s = signatures_per_period(params.b, params.k, params.l_b, params.l_s, V=params.V)
    heights = tuple(range(max(0, t - params.k + 1), t + 1))
    servers = tuple((rng.choice(params.V, size=s, replace=False) + 1).tolist())
    return PeriodSchedule(block_heights=heights, signature_servers=servers)


def deliver(packet: object, channel: ChannelProbs, rng: np.random.Generator) -> bool:
    """Pass one multicast packet through a client's loss channel.

    Consumes exactly one uniform from the client's stream; block-header
    packets are lost with probability ``p_eb``, signature packets with
    ``p_es``.
    """
    loss = channel.p_eb if isinstance(packet, BlockHeader) else channel.p_es
    return rng.random() >= loss


def default_trusted_sets(params: SystemParams, seed: int) -> tuple[tuple[int, ...], ...]:
    """Sample each client's trusted servers from its own seed substream."""
    sets = []
    for u in range(params.U):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2, u))))
        chosen = sorted((rng.choice(params.V, size=params.V_u, replace=False) + 1).tolist())
        sets.append(tuple(chosen))
    return tuple(sets)


@dataclass(frozen=True)
class SimReport:
    """Result of one run, reproducible bit-for-bit from (config, seed)."""

    phi_empirical: float
    ci95: float
    per_period_failures: tuple[int, ...]
    resync_count: int
    periods: int
    warmup: int
    measured_periods: int
    seed: int
    s: int
    p_eb: float
    p_es: float
    params: SystemParams
    trusted_sets: tuple[tuple[int, ...], ...]
    failure_rule: str = FAILURE_RULE

    def to_json(self) -> str:
        """Canonical serialization: fixed key order, no whitespace."""
        doc = {
            "phi_empirical": self.phi_empirical,
            "ci95": self.ci95,
            "resync_count": self.resync_count,
            "periods": self.periods,
            "warmup": self.warmup,
            "measured_periods": self.measured_periods,
            "seed": self.seed,
            "s": self.s,
            "p_eb": self.p_eb,
            "p_es": self.p_es,
            "failure_rule": self.failure_rule,
            "params": asdict(self.params),
            "trusted_sets": [list(ts) for ts in self.trusted_sets],
            "per_period_failures": list(self.per_period_failures),
        }
        return json.dumps(doc, separators=(",", ":"))


def run(config: SimConfig) -> SimReport:
    """Simulate one configuration and measure the empirical failure rate.

    Per period: (1) the distributor appends a block, (2) each client's
    feedback condition (authenticated lag > d at the new height) is
    evaluated before any of the period's packets land, (3) the multicast
    schedule is delivered to every client through its loss channel, and
    (4) flagged clients are resynced with the last ``d + 1`` headers and a
    signature from their registered server, still within the period.  The
    early evaluation point is what aligns the measured failure rate with
    the analytical window of d signature opportunities per checked block.

    Two delivery shortcuts keep the inner loop fast without changing any
    observable state: block packets whose height is already part of a
    client's verified prefix are not handed to the tracker (duplicate
    no-ops), and signature packets from servers outside a client's trusted
    set are not handed over either (the tracker would verify and drop
    them).  Channel uniforms are still consumed for every scheduled packet,
    so the random streams are identical with and without the shortcuts.
    """
    p = config.params
    seed = config.seed
    s = signatures_per_period(p.b, p.k, p.l_b, p.l_s, V=p.V)
    channel = packet_loss_probs(p.P_bit, p.l_b, p.l_s)
    p_eb = channel.p_eb
    p_es = channel.p_es
    d = p.d
    U = p.U

    trusted_sets = config.trusted_sets
    if trusted_sets is None:
        trusted_sets = default_trusted_sets(p, seed)

    sched_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))
    client_rngs = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, u))))
        for u in range(U)
    ]

    scheme = MockSignatureScheme(p.V, key_seed=seed)
    chain = HeaderChain(chain_seed=seed, retain=max(p.k, d + 1) + 2)
    trackers = [
        AuthTracker(
            trusted=trusted_sets[u],
            registered_server=trusted_sets[u][0],
            scheme=scheme,
            genesis=chain.genesis,
            d=d,
        )
        for u in range(U)
    ]
    # Client u -> tuple of schedule consumers; inverted index server -> clients.
    trusting: dict[int, list[int]] = {}
    for u, servers in enumerate(trusted_sets):
        for sid in servers:
            trusting.setdefault(sid, []).append(u)

    per_period: list[int] = []
    measured_resyncs = 0
    last_resync = [0] * U
    sign = scheme.sign
    header_at = chain.header_at

    for t in range(1, config.periods + 1):
        header = chain.append()
        digest = header.self_hash

        # Feedback check happens as the period opens: the client knows the
        # new height t but has not yet seen any of period t's multicast.
        # The check window therefore spans exactly d signature heights
        # (t - d .. t - 1), matching the analytical chain.  Flagged clients
        # still take the period's deliveries; the resync afterwards resets
        # them wholesale either way.
        flagged = [u for u in range(U) if t - trackers[u].auth_tip > d]
        failures = len(flagged)

        sched = schedule_period(t, p, sched_rng, s=s)
        heights = sched.block_heights
        servers = sched.signature_servers
        n_blocks = len(heights)
        total = n_blocks + s
        sig_records = [SignatureRecord(server_id=sid, height=t, tag=sign(sid, digest)) for sid in servers]

        period_us = [rng.random(total).tolist() for rng in client_rngs]

        for u in range(U):
            tracker = trackers[u]
            tracker.height = t
            us = period_us[u]
            tip = tracker.chained_tip
            for i in range(n_blocks):
                hgt = heights[i]
                if hgt > tip and us[i] >= p_eb:
                    tracker.record_block(header_at(hgt))
                    tip = tracker.chained_tip

        for pos in range(s):
            consumers = trusting.get(servers[pos])
            if consumers is None:
                continue
            record = sig_records[pos]
            slot = n_blocks + pos
            for u in consumers:
                if period_us[u][slot] >= p_es:
                    trackers[u].record_signature(record)

        payload = None
        for u in flagged:
            tracker = trackers[u]
            if payload is None:
                payload = chain.window(max(0, t - d), t)
            reg = tracker.registered_server
            tracker.resync(payload, SignatureRecord(server_id=reg, height=t, tag=sign(reg, digest)))
            if t > config.warmup:
                measured_resyncs += 1
            # Resync leaves no lag, so the next feedback from this client
            # cannot come before d + 1 further periods have elapsed.
            assert t - last_resync[u] >= d + 1, "post-resync immunity violated"
            last_resync[u] = t

        if t > config.warmup:
            per_period.append(failures)

    measured = len(per_period)
    counts = np.asarray(per_period, dtype=np.int64)
    phi = float(counts.mean()) if measured else 0.0
    if measured > 1:
        ci95 = 1.96 * float(counts.std(ddof=1)) / math.sqrt(measured)
    else:
        ci95 = 0.0

    return SimReport(
        phi_empirical=phi,
        ci95=ci95,
        per_period_failures=tuple(int(c) for c in per_period),
        resync_count=measured_resyncs,
        periods=config.periods,
        warmup=config.warmup,
        measured_periods=measured,
        seed=seed,
        s=s,
        p_eb=p_eb,
        p_es=p_es,
        params=p,
        trusted_sets=trusted_sets,
        failure_rule=FAILURE_RULE,
    )


def _run_config(config: SimConfig) -> SimReport:
    """Module-level wrapper so worker processes can unpickle the target."""
    return run(config)


def simulate_many(configs: Iterable[SimConfig], jobs: int = 1) -> list[SimReport]:
    """Run several configurations, optionally across worker processes.

    Reports come back in input order and are identical for any ``jobs``
    value, since every run is driven entirely by its own seeded streams.
    """
    pending: Sequence[SimConfig] = list(configs)
    if jobs <= 1 or len(pending) <= 1:
        return [run(config) for config in pending]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_config, pending))
