"""Bit-exact wire formats, the header digest, and the signature scheme.

A block-header packet is exactly 80 bytes (640 bits) in the classic
six-field layout, all integers big-endian:

    version         u32
    parent_hash     32 bytes
    merkle_root     32 bytes
    timestamp       u32
    difficulty_bits u32
    nonce           u32

A signature packet is exactly 64 bytes (512 bits):

    server_id       u16
    height          u64
    tag             54 bytes (432 bits of signature material)

The header digest is a non-cryptographic 256-bit construction: the 80-byte
encoding is split into big-endian 64-bit words that are absorbed into four
64-bit lanes with a splitmix-style avalanche function, followed by a
cross-lane finalization.  It is deterministic across platforms and cheap to
reimplement in other languages; callers that need collision resistance can
swap in a cryptographic hash wherever a digest function is accepted.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from .errors import BadLength, UnknownServer

BLOCK_HEADER_BYTES = 80
BLOCK_HEADER_BITS = BLOCK_HEADER_BYTES * 8
SIGNATURE_BYTES = 64
SIGNATURE_BITS = SIGNATURE_BYTES * 8
TAG_BYTES = 54
DIGEST_BYTES = 32

_HEADER_STRUCT = struct.Struct(">I32s32sIII")
_SIGNATURE_STRUCT = struct.Struct(">HQ54s")

assert _HEADER_STRUCT.size == BLOCK_HEADER_BYTES
assert _SIGNATURE_STRUCT.size == SIGNATURE_BYTES


@dataclass(frozen=True)
class WireBlockHeader:
    """Payload of one 80-byte block-header packet."""

    version: int
    parent_hash: bytes
    merkle_root: bytes
    timestamp: int
    difficulty_bits: int
    nonce: int


@dataclass(frozen=True)
class WireSignature:
    """Payload of one 64-byte signature packet.

    ``height`` is the chain height of the block the tag covers; the tag is
    computed over that block's header digest.
    """

    server_id: int
    height: int
    tag: bytes


def encode_header(header: WireBlockHeader) -> bytes:
    if len(header.parent_hash) != DIGEST_BYTES:
        raise BadLength(f"parent_hash must be {DIGEST_BYTES} bytes, got {len(header.parent_hash)}")
    if len(header.merkle_root) != DIGEST_BYTES:
        raise BadLength(f"merkle_root must be {DIGEST_BYTES} bytes, got {len(header.merkle_root)}")
    return _HEADER_STRUCT.pack(
        header.version,
        header.parent_hash,
        header.merkle_root,
        header.timestamp,
        header.difficulty_bits,
        header.nonce,
    )


def decode_header(buf: bytes) -> WireBlockHeader:
    """Decode an 80-byte buffer.  Every bit pattern is structurally valid."""
    if len(buf) != BLOCK_HEADER_BYTES:
        raise BadLength(f"block header packet must be {BLOCK_HEADER_BYTES} bytes, got {len(buf)}")
    version, parent, root, ts, bits, nonce = _HEADER_STRUCT.unpack(buf)
    return WireBlockHeader(version, parent, root, ts, bits, nonce)


def encode_signature(sig: WireSignature) -> bytes:
    if len(sig.tag) != TAG_BYTES:
        raise BadLength(f"tag must be {TAG_BYTES} bytes, got {len(sig.tag)}")
    return _SIGNATURE_STRUCT.pack(sig.server_id, sig.height, sig.tag)


def decode_signature(buf: bytes) -> WireSignature:
    """Decode a 64-byte buffer.  Every bit pattern is structurally valid."""
    if len(buf) != SIGNATURE_BYTES:
        raise BadLength(f"signature packet must be {SIGNATURE_BYTES} bytes, got {len(buf)}")
    server_id, height, tag = _SIGNATURE_STRUCT.unpack(buf)
    return WireSignature(server_id, height, tag)


_MASK64 = 0xFFFFFFFFFFFFFFFF
_STEP = 0x9E3779B97F4A7C15
# Lane seeds: fractional parts of sqrt(2), sqrt(3), sqrt(5), sqrt(7), as in
# common hash IVs.  Any fixed nonzero constants would do.
_LANE_IV = (
    0x6A09E667F3BCC908,
    0xBB67AE8584CAA73B,
    0x3C6EF372FE94F82B,
    0xA54FF53A5F1D36F1,
)


def _mix64(x: int) -> int:
    """Splitmix-style 64-bit avalanche: every input bit affects every output bit."""
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_digest(data: bytes) -> bytes:
    """256-bit non-cryptographic digest of ``data``.

    The input is zero-padded to a multiple of 8 bytes and read as big-endian
    64-bit words.  Word ``i`` is offset by ``(i + 1) * golden`` (so equal
    words at different positions absorb differently), avalanched, and folded
    into lane ``i mod 4``.  Finalization mixes the input length into lane 0
    and runs two cross-lane avalanche rounds; the output is the big-endian
    concatenation of the four lanes.
    """
    lanes = list(_LANE_IV)
    padded = data + b"\x00" * (-len(data) % 8)
    for i in range(0, len(padded), 8):
        word = int.from_bytes(padded[i : i + 8], "big")
        idx = i >> 3
        lanes[idx & 3] = _mix64(lanes[idx & 3] ^ _mix64((word + (idx + 1) * _STEP) & _MASK64))
    lanes[0] ^= len(data)
    for _ in range(2):
        for j in range(4):
            lanes[j] = _mix64(((lanes[j] ^ lanes[(j + 1) & 3]) + _STEP) & _MASK64)
    return b"".join(lane.to_bytes(8, "big") for lane in lanes)


def header_digest(header: WireBlockHeader) -> bytes:
    """Digest of the 80-byte wire encoding; this is what parent_hash links to."""
    return mix_digest(encode_header(header))


class SignatureScheme:
    """Interface for producing and checking 432-bit tags over header digests.

    Server ids are 1-based.  Implementations hold the key material for every
    server; a real deployment would back ``verify`` with public keys only.
    """

    def sign(self, server_id: int, digest: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, server_id: int, digest: bytes, tag: bytes) -> bool:
        raise NotImplementedError


class MockSignatureScheme(SignatureScheme):
    """Keyed-digest stand-in for a real signature scheme.

    Each server's secret is derived from the run-wide ``key_seed``:

        secret  = blake2b(seed_be8 || server_id_be2, key=b"headercast-server-key", 32 bytes)
        tag     = blake2b(message_digest, key=secret, 54 bytes)

    i.e. the tag is the 432-bit keyed digest of the message digest under the
    server secret.  Verification recomputes the tag and compares.  This gives
    deterministic, unforgeable-without-the-key tags at hash speed, which is
    all the simulator needs.
    """

    _DERIVE_KEY = b"headercast-server-key"

    def __init__(self, num_servers: int, key_seed: int = 0):
        if num_servers < 1:
            raise UnknownServer("key table needs at least one server")
        self.num_servers = num_servers
        self.key_seed = key_seed
        seed_bytes = key_seed.to_bytes(8, "big", signed=True)
        self._secrets = {
            sid: hashlib.blake2b(
                seed_bytes + sid.to_bytes(2, "big"), key=self._DERIVE_KEY, digest_size=32
            ).digest()
            for sid in range(1, num_servers + 1)
        }

    def _secret(self, server_id: int) -> bytes:
        try:
            return self._secrets[server_id]
        except KeyError:
            raise UnknownServer(f"server id {server_id} not in key table 1..{self.num_servers}") from None

    def sign(self, server_id: int, digest: bytes) -> bytes:
        return hashlib.blake2b(digest, key=self._secret(server_id), digest_size=TAG_BYTES).digest()

    def verify(self, server_id: int, digest: bytes, tag: bytes) -> bool:
        return self.sign(server_id, digest) == tag
