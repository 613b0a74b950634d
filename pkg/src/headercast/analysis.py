"""Closed-form quality-of-service model of the dissemination scheme.

The downlink repeats each block header in ``k`` consecutive periods and fills
the rest of the per-period bit budget with ``s`` signature packets, each from
a distinct server, all covering the newest block.  A client authenticates an
older block by chaining it, through received parent links, up to any received
signature from a server it trusts.  A client *fails* a block when the block
is still unauthenticated ``d`` periods after its creation; it then resyncs
over reliable unicast.

The per-client behaviour is modelled as a renewal process with states
``0..d``.  From the critical state (state 1, the client may fail its next
check) the chain moves to state ``j`` when the first trusted signature of the
check window arrives in the window's ``j``-th period and every block up to
that period was received, and to state 0 (failure) otherwise.  All closed
forms below take that per-window view; :func:`enumerate_transition_probs`
recomputes the same distribution by brute-force enumeration of per-period
outcomes and serves as the independent oracle for tests.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import InsufficientBudget, InvalidParams, TooLarge
from .params import ChannelProbs, SystemParams

# Exact binomial ratios are used up to this V; beyond it the hypergeometric
# weight switches to log-space to avoid float overflow when converting.
_EXACT_COMB_MAX_V = 64


def signatures_per_period(b: int, k: int, l_b: int, l_s: int, *, V: int | None = None) -> int:
    """Number of signature packets that fit in one period's budget.

    The budget ``b`` first pays for ``k`` block-header packets of ``l_b``
    bits; the remainder is divided into ``l_s``-bit signature packets.  When
    ``V`` is given the result is clamped to ``V``, since at most one
    signature per server is useful in a period.

    Raises InsufficientBudget when not even one signature fits: the scheme
    cannot authenticate anything without signatures.
    """
    if b < 1 or l_b < 1 or l_s < 1 or k < 1:
        raise InvalidParams(f"budget inputs must be positive, got b={b} k={k} l_b={l_b} l_s={l_s}")
    s = (b - k * l_b) // l_s
    if V is not None:
        s = min(s, V)
    if s < 1:
        raise InsufficientBudget(
            f"budget b={b} with k={k} repetitions of {l_b}-bit headers leaves room for "
            f"{max(s, 0)} signature packets of {l_s} bits"
        )
    if s == 1:
        warnings.warn(
            "only one signature packet fits per period (s=1); a single lost packet "
            "then costs a whole period of authentication opportunity",
            RuntimeWarning,
            stacklevel=2,
        )
    return s


def packet_loss_probs(P_bit: float, l_b: int, l_s: int) -> ChannelProbs:
    """Packet loss probabilities for an independent bit-error channel.

    A packet of n bits survives only if all n bits do, so the loss
    probability is ``1 - (1 - P_bit)**n``.
    """
    if not 0.0 <= P_bit <= 1.0:
        raise InvalidParams(f"P_bit must lie in [0, 1], got {P_bit}")
    if l_b < 1 or l_s < 1:
        raise InvalidParams(f"packet sizes must be positive, got l_b={l_b} l_s={l_s}")
    return ChannelProbs(
        p_eb=1.0 - (1.0 - P_bit) ** l_b,
        p_es=1.0 - (1.0 - P_bit) ** l_s,
    )


def hypergeometric_weight(V: int, V_u: int, s: int, j: int) -> float:
    """P(exactly j of the s scheduled signatures come from trusted servers).

    The scheduler draws ``s`` distinct servers uniformly from ``V``, of which
    the client trusts ``V_u``; the count of trusted draws is hypergeometric.
    Combinations are evaluated exactly in integer arithmetic for moderate V
    and in log-space beyond that.
    """
    if not (0 <= j <= s and j <= V_u and 1 <= s <= V and 1 <= V_u <= V):
        raise InvalidParams(f"bad hypergeometric arguments V={V} V_u={V_u} s={s} j={j}")
    if s - j > V - V_u:
        return 0.0
    if V <= _EXACT_COMB_MAX_V:
        num = math.comb(V_u, j) * math.comb(V - V_u, s - j)
        return num / math.comb(V, s)
    log_num = _log_comb(V_u, j) + _log_comb(V - V_u, s - j)
    return math.exp(log_num - _log_comb(V, s))


def _log_comb(n: int, r: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)


def trusted_signature_prob(V: int, V_u: int, s: int, p_es: float) -> float:
    """Probability that a client receives at least one trusted signature in a period.

    Conditions on the number ``j`` of trusted servers among the ``s``
    scheduled ones and on at least one of those ``j`` packets surviving
    loss:  sum over j of ``(1 - p_es**j) * hypergeometric_weight``.
    """
    if s > V:
        raise InvalidParams(f"cannot schedule s={s} distinct servers out of V={V}")
    if s < 1:
        raise InvalidParams(f"s must be >= 1, got {s}")
    if not 1 <= V_u <= V:
        raise InvalidParams(f"V_u must satisfy 1 <= V_u <= V, got V_u={V_u} V={V}")
    if not 0.0 <= p_es <= 1.0:
        raise InvalidParams(f"p_es must lie in [0, 1], got {p_es}")
    total = 0.0
    for j in range(1, min(V_u, s) + 1):
        weight = hypergeometric_weight(V, V_u, s, j)
        if weight:
            total += (1.0 - p_es**j) * weight
    return min(total, 1.0)


def transition_probs(p_s: float, p_eb: float, k: int, d: int) -> list[float]:
    """Exit distribution of the critical state, indexed by destination state 0..d.

    A check window spans the ``d`` periods following a checked block's
    creation.  The window's ``i``-th block has ``min(k, d - i + 1)``
    repetition opportunities inside the window (late blocks run out of
    room).  The chain lands in state ``j`` when the first trusted signature
    arrives in window period ``j`` and blocks ``1..j`` were all received;
    entry 0 is the complementary failure mass.
    """
    _validate_window_args(p_s, p_eb, k, d)
    p = [0.0] * (d + 1)
    block_ok_k = 1.0 - p_eb**k
    for j in range(1, d + 1):
        base = p_s * (1.0 - p_s) ** (j - 1)
        if j <= d - k + 1:
            blocks = block_ok_k**j
        else:
            blocks = block_ok_k ** (d - k + 1)
            for i in range(d - k + 2, j + 1):
                blocks *= 1.0 - p_eb ** (d - i + 1)
        p[j] = base * blocks
    p[0] = max(0.0, 1.0 - math.fsum(p[1:]))
    return p


def enumerate_transition_probs(
    p_s: float, p_eb: float, k: int, d: int, *, max_outcomes: int = 4**10
) -> list[float]:
    """Brute-force oracle for :func:`transition_probs`.

    Enumerates every joint outcome of the check window: for each of the d
    window periods whether a trusted signature was received (Bernoulli p_s),
    and for each of the d window blocks whether it was received at all
    (block i is lost only when all of its ``min(k, d - i + 1)`` repetitions
    are lost).  Each outcome is walked forward: find the first period with a
    trusted signature, require every block up to it, otherwise fail.  The
    probability mass of each outcome is accumulated into its destination
    state.

    Cost is ``4**d`` outcome pairs; raises TooLarge above ``max_outcomes``.
    """
    _validate_window_args(p_s, p_eb, k, d)
    if 4**d > max_outcomes:
        raise TooLarge(f"4**{d} outcomes exceed the configured bound of {max_outcomes}")
    block_ok = [1.0 - p_eb ** min(k, d - i + 1) for i in range(1, d + 1)]
    n_masks = 1 << d

    sig_prob = [0.0] * n_masks
    first_sig = [0] * n_masks  # 1-based window period of first signature; 0 = none
    blk_prob = [0.0] * n_masks
    for mask in range(n_masks):
        sp = 1.0
        bp = 1.0
        first = 0
        for r in range(d):
            if mask >> r & 1:
                sp *= p_s
                bp *= block_ok[r]
                if first == 0:
                    first = r + 1
            else:
                sp *= 1.0 - p_s
                bp *= 1.0 - block_ok[r]
        sig_prob[mask] = sp
        blk_prob[mask] = bp
        first_sig[mask] = first

    acc = [0.0] * (d + 1)
    for sig_mask in range(n_masks):
        sp = sig_prob[sig_mask]
        if sp == 0.0:
            continue
        j = first_sig[sig_mask]
        if j == 0:
            acc[0] += sp
            continue
        need = (1 << j) - 1  # blocks 1..j all received
        ok = 0.0
        fail = 0.0
        for blk_mask in range(n_masks):
            if blk_mask & need == need:
                ok += blk_prob[blk_mask]
            else:
                fail += blk_prob[blk_mask]
        acc[j] += sp * ok
        acc[0] += sp * fail
    return acc


def _validate_window_args(p_s: float, p_eb: float, k: int, d: int) -> None:
    if not 0.0 <= p_s <= 1.0:
        raise InvalidParams(f"p_s must lie in [0, 1], got {p_s}")
    if not 0.0 <= p_eb <= 1.0:
        raise InvalidParams(f"p_eb must lie in [0, 1], got {p_eb}")
    if not 1 <= k <= d:
        raise InvalidParams(f"k must satisfy 1 <= k <= d, got k={k} d={d}")


def grouped_chain(p: list[float]) -> tuple[tuple[tuple[float, ...], ...], tuple[float, ...]]:
    """Three-state grouping of the renewal chain: failure, critical, covered.

    States 2..d are merged into one 'covered' group G.  Both state 0 and G
    return to the critical state deterministically once their sojourn ends,
    so the transition matrix over (0, 1, G) is::

        (    0,      1,       0)
        (p[0],    p[1], sum p[2:])
        (    0,      1,       0)

    The returned visit-frequency vector ``(p[0], 1, sum p[2:])`` is relative
    to one visit of the critical state and is deliberately not normalized.
    """
    if len(p) < 2:
        raise InvalidParams("transition vector needs at least states 0 and 1")
    tail = math.fsum(p[2:])
    matrix = (
        (0.0, 1.0, 0.0),
        (p[0], p[1], tail),
        (0.0, 1.0, 0.0),
    )
    pi = (p[0], 1.0, tail)
    return matrix, pi


def time_in_state_one(p: list[float], d: int | None = None) -> float:
    """Long-run fraction of periods spent in the critical state.

    One visit to the critical state is followed by a sojourn of d periods
    after a failure and of j periods after landing in state j, giving a mean
    renewal length of ``d*p[0] + sum(j * p[j])`` periods per visit.
    """
    if d is None:
        d = len(p) - 1
    elif d != len(p) - 1:
        raise InvalidParams(f"d={d} does not match transition vector of length {len(p)}")
    if d < 1:
        raise InvalidParams("need at least one non-failure state")
    denom = d * p[0] + math.fsum(j * p[j] for j in range(1, d + 1))
    if denom <= 0.0:
        raise InvalidParams("transition vector has no mass")
    return 1.0 / denom


def average_failures(U: int, T: float, p_fail: float) -> float:
    """Mean number of failing clients per period across a population of U.

    Each client fails at rate ``T * p_fail`` (it is in the critical state a
    fraction T of periods and then fails with probability ``p_fail``).
    """
    if U < 1:
        raise InvalidParams(f"U must be >= 1, got {U}")
    if T < 0.0 or p_fail < 0.0 or p_fail > 1.0:
        raise InvalidParams(f"bad rate inputs T={T} p_fail={p_fail}")
    return U * T * p_fail


@dataclass(frozen=True)
class TransitionModel:
    """Full analytical solution of one operating point.

    ``p`` is the exit distribution of the critical state (index = destination
    state), ``p_s`` the per-period trusted-signature probability, ``T`` the
    long-run fraction of periods in the critical state, and ``phi`` the mean
    number of failing clients per period.  ``valid`` records whether every
    server's signature is scheduled at least once per ``d`` periods on
    average (``V <= s * d``); phi is computed either way, the flag only marks
    where the model's trust assumptions are comfortable.
    """

    params: SystemParams
    s: int
    p_eb: float
    p_es: float
    p_s: float
    p: tuple[float, ...]
    T: float
    phi: float
    valid: bool

    def __post_init__(self) -> None:
        total = math.fsum(self.p)
        if abs(total - 1.0) > 1e-12:
            raise InvalidParams(f"transition vector sums to {total!r}, expected 1")
        if not 0.0 < self.T <= 1.0:
            raise InvalidParams(f"T must lie in (0, 1], got {self.T}")
        if not 0.0 <= self.phi <= self.params.U:
            raise InvalidParams(f"phi must lie in [0, U], got {self.phi}")


def qos(params: SystemParams) -> TransitionModel:
    """Solve the analytical model end to end for one parameter point."""
    s = signatures_per_period(params.b, params.k, params.l_b, params.l_s, V=params.V)
    channel = packet_loss_probs(params.P_bit, params.l_b, params.l_s)
    p_s = trusted_signature_prob(params.V, params.V_u, s, channel.p_es)
    p = transition_probs(p_s, channel.p_eb, params.k, params.d)
    T = time_in_state_one(p, params.d)
    phi = average_failures(params.U, T, p[0])
    return TransitionModel(
        params=params,
        s=s,
        p_eb=channel.p_eb,
        p_es=channel.p_es,
        p_s=p_s,
        p=tuple(p),
        T=T,
        phi=phi,
        valid=params.V <= s * params.d,
    )
