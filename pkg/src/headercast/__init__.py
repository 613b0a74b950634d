"""Authenticated blockchain header multicast: analysis and simulation.

A distributor repeatedly multicasts the newest ``k`` block headers together
with ``s`` third-party signatures over a lossy broadcast channel.  Clients
chain received headers back to any trusted signature, raise a feedback bit
when their authenticated view falls more than ``d`` blocks behind, and are
then resynced over reliable unicast.  This package provides the exact
Markov-chain quality-of-service model for that loop, a seeded Monte Carlo
simulator of the full protocol, the wire codec with a mock signature
scheme, and a CSV-producing command line front end (``headercast``).
"""

from .analysis import (
    TransitionModel,
    average_failures,
    enumerate_transition_probs,
    grouped_chain,
    hypergeometric_weight,
    packet_loss_probs,
    qos,
    signatures_per_period,
    time_in_state_one,
    transition_probs,
    trusted_signature_prob,
)
from .chain import (
    GENESIS_PARENT,
    AuthTracker,
    BlockHeader,
    HeaderChain,
    SignatureRecord,
    make_header,
    verify_link,
)
from .codec import (
    BLOCK_HEADER_BITS,
    BLOCK_HEADER_BYTES,
    DIGEST_BYTES,
    SIGNATURE_BITS,
    SIGNATURE_BYTES,
    TAG_BYTES,
    MockSignatureScheme,
    SignatureScheme,
    WireBlockHeader,
    WireSignature,
    decode_header,
    decode_signature,
    encode_header,
    encode_signature,
    header_digest,
    mix_digest,
)
from .errors import (
    BadLength,
    BadLink,
    BadSignature,
    HeadercastError,
    HeightMismatch,
    InsufficientBudget,
    InvalidParams,
    TooLarge,
    UnknownServer,
)
from .params import ChannelProbs, SystemParams
from .sim import (
    FAILURE_RULE,
    PeriodSchedule,
    SimConfig,
    SimReport,
    default_trusted_sets,
    deliver,
    run,
    schedule_period,
    simulate_many,
)

__version__ = "0.1.0"

__all__ = [
    "AuthTracker",
    "BLOCK_HEADER_BITS",
    "BLOCK_HEADER_BYTES",
    "BadLength",
    "BadLink",
    "BadSignature",
    "BlockHeader",
    "ChannelProbs",
    "DIGEST_BYTES",
    "FAILURE_RULE",
    "GENESIS_PARENT",
    "HeadercastError",
    "HeaderChain",
    "HeightMismatch",
    "InsufficientBudget",
    "InvalidParams",
    "MockSignatureScheme",
    "PeriodSchedule",
    "SIGNATURE_BITS",
    "SIGNATURE_BYTES",
    "SignatureRecord",
    "SignatureScheme",
    "SimConfig",
    "SimReport",
    "SystemParams",
    "TAG_BYTES",
    "TooLarge",
    "TransitionModel",
    "UnknownServer",
    "WireBlockHeader",
    "WireSignature",
    "average_failures",
    "decode_header",
    "decode_signature",
    "default_trusted_sets",
    "deliver",
    "encode_header",
    "encode_signature",
    "enumerate_transition_probs",
    "grouped_chain",
    "header_digest",
    "hypergeometric_weight",
    "make_header",
    "mix_digest",
    "packet_loss_probs",
    "qos",
    "run",
    "schedule_period",
    "signatures_per_period",
    "simulate_many",
    "time_in_state_one",
    "transition_probs",
    "trusted_signature_prob",
    "verify_link",
]
