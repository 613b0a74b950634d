"""Scalar system parameters shared by the analytical engine and the simulator."""

from __future__ import annotations

from dataclasses import dataclass

from .codec import BLOCK_HEADER_BITS, SIGNATURE_BITS
from .errors import InvalidParams


@dataclass(frozen=True)
class SystemParams:
    """One operating point of the dissemination system.

    Attributes:
        V: number of signing servers.
        U: number of subscribed clients.
        b: downlink bit budget per block period.
        k: repetition count; each block header is multicast in k consecutive
            periods.
        d: maximum tolerated authenticated lag, in block periods.
        l_b: block-header packet size in bits.
        l_s: signature packet size in bits.
        P_bit: independent bit error probability of the lossy downlink.
        V_u: number of servers each client trusts.
    """

    V: int
    U: int
    b: int
    k: int
    d: int
    l_b: int = BLOCK_HEADER_BITS
    l_s: int = SIGNATURE_BITS
    P_bit: float = 0.0
    V_u: int = 1

    def __post_init__(self) -> None:
        if self.V < 1:
            raise InvalidParams(f"V must be >= 1, got {self.V}")
        if self.U < 1:
            raise InvalidParams(f"U must be >= 1, got {self.U}")
        if self.b < 1:
            raise InvalidParams(f"b must be positive, got {self.b}")
        if self.l_b < 1 or self.l_s < 1:
            raise InvalidParams(f"packet sizes must be positive, got l_b={self.l_b} l_s={self.l_s}")
        if not 1 <= self.k <= self.d:
            raise InvalidParams(f"k must satisfy 1 <= k <= d, got k={self.k} d={self.d}")
        if not 0.0 <= self.P_bit <= 1.0:
            raise InvalidParams(f"P_bit must lie in [0, 1], got {self.P_bit}")
        if not 1 <= self.V_u <= self.V:
            raise InvalidParams(f"V_u must satisfy 1 <= V_u <= V, got V_u={self.V_u} V={self.V}")


@dataclass(frozen=True)
class ChannelProbs:
    """Per-packet loss probabilities induced by the bit error rate.

    ``p_eb`` is the loss probability of a block-header packet, ``p_es`` of a
    signature packet.  A packet is lost when any of its bits is corrupted.
    """

    p_eb: float
    p_es: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_eb <= 1.0:
            raise InvalidParams(f"p_eb must lie in [0, 1], got {self.p_eb}")
        if not 0.0 <= self.p_es <= 1.0:
            raise InvalidParams(f"p_es must lie in [0, 1], got {self.p_es}")
