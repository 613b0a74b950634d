"""Hash-linked header chain and the per-client authentication tracker.

A client holds a verified prefix of the chain (every parent link checked)
and, above it, out-of-order blocks and trusted signatures waiting for gaps
to close.  Two lags describe its position behind the chain tip ``h``:

    reception lag      h - chained_tip   (newest block of the verified prefix)
    authenticated lag  h - auth_tip      (newest block covered by a trusted
                                          signature through parent links)

One received trusted signature at height g authenticates every held block
up to g, which is what lets the multicast carry few signatures per period.
When the authenticated lag exceeds the tolerance ``d`` the client requests
a unicast resync of the last ``d + 1`` headers plus one trusted signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .codec import (
    DIGEST_BYTES,
    SignatureScheme,
    WireBlockHeader,
    WireSignature,
    header_digest,
    mix_digest,
)
from .errors import BadLink, BadSignature, HeightMismatch, InvalidParams

GENESIS_PARENT = bytes(DIGEST_BYTES)

# A signature record travels exactly as a wire signature packet.
SignatureRecord = WireSignature


@dataclass(frozen=True)
class BlockHeader:
    """A wire header annotated with its height and its own digest."""

    height: int
    wire: WireBlockHeader
    self_hash: bytes

    @property
    def parent_hash(self) -> bytes:
        return self.wire.parent_hash


def make_header(height: int, parent_hash: bytes, chain_seed: int = 0) -> BlockHeader:
    """Build a deterministic header for the given position.

    Payload fields (merkle root, nonce) are synthesized from the height and
    ``chain_seed`` so that a chain's bytes are reproducible; their content
    is opaque to the protocol.
    """
    if height < 0:
        raise InvalidParams(f"height must be >= 0, got {height}")
    root = mix_digest(b"txroot:%d:%d" % (chain_seed, height))
    wire = WireBlockHeader(
        version=1,
        parent_hash=parent_hash,
        merkle_root=root,
        timestamp=height & 0xFFFFFFFF,
        difficulty_bits=0x1D00FFFF,
        nonce=(height * 2654435761) & 0xFFFFFFFF,
    )
    return BlockHeader(height=height, wire=wire, self_hash=header_digest(wire))


def verify_link(child: BlockHeader, parent: BlockHeader) -> bool:
    """True when ``child`` commits to ``parent`` by digest.

    Raises HeightMismatch when the two are not at adjacent heights; a link
    check between non-adjacent headers is a caller bug, not a bad chain.
    """
    if child.height != parent.height + 1:
        raise HeightMismatch(f"cannot link height {child.height} to parent height {parent.height}")
    return child.parent_hash == parent.self_hash


class HeaderChain:
    """The distributor-side authoritative chain.

    Grows by one header per period via :meth:`append`.  Only a recent window
    of ``retain`` headers is kept when set; the simulator only ever needs the
    last ``max(k, d + 1)`` of them.
    """

    def __init__(self, chain_seed: int = 0, retain: int | None = None):
        if retain is not None and retain < 2:
            raise InvalidParams(f"retain must be >= 2, got {retain}")
        self.chain_seed = chain_seed
        self.retain = retain
        self.genesis = make_header(0, GENESIS_PARENT, chain_seed)
        self._headers: dict[int, BlockHeader] = {0: self.genesis}
        self._tip = self.genesis

    @property
    def tip(self) -> BlockHeader:
        return self._tip

    @property
    def height(self) -> int:
        return self._tip.height

    def append(self) -> BlockHeader:
        header = make_header(self._tip.height + 1, self._tip.self_hash, self.chain_seed)
        self._headers[header.height] = header
        self._tip = header
        if self.retain is not None and len(self._headers) > self.retain:
            for h in range(header.height - len(self._headers) + 1, header.height - self.retain + 1):
                self._headers.pop(h, None)
        return header

    def header_at(self, height: int) -> BlockHeader:
        try:
            return self._headers[height]
        except KeyError:
            raise InvalidParams(f"height {height} not available (tip {self._tip.height})") from None

    def window(self, lo: int, hi: int) -> list[BlockHeader]:
        """Headers at heights lo..hi inclusive, oldest first."""
        return [self.header_at(h) for h in range(lo, hi + 1)]


class AuthTracker:
    """Reception and authentication state of one client.

    The verified prefix is represented by ``chained_tip`` (all heights up to
    it are held and link-checked); blocks received above a gap and trusted
    signatures that cannot chain yet are buffered.  ``height`` is the current
    chain height as announced by the distributor and is advanced by the
    driver once per period.

    Delivery order within a period does not matter: a signature arriving
    before its block is buffered and applied when the block lands, and vice
    versa, so any interleaving reaches the same final lags.
    """

    def __init__(
        self,
        trusted: Iterable[int],
        registered_server: int,
        scheme: SignatureScheme,
        genesis: BlockHeader,
        d: int,
    ):
        self.trusted = frozenset(trusted)
        if not self.trusted:
            raise InvalidParams("trusted server set must not be empty")
        if registered_server not in self.trusted:
            raise InvalidParams(f"registered server {registered_server} is not in the trusted set")
        if d < 1:
            raise InvalidParams(f"d must be >= 1, got {d}")
        self.registered_server = registered_server
        self.d = d
        self._scheme = scheme
        # Clients start synchronized: genesis is held and authenticated.
        self.height = genesis.height
        self.chained_tip = genesis.height
        self.auth_tip = genesis.height
        self._headers: dict[int, BlockHeader] = {genesis.height: genesis}
        self._pending_blocks: dict[int, BlockHeader] = {}
        self._pending_sigs: dict[int, SignatureRecord] = {}

    @property
    def reception_lag(self) -> int:
        return self.height - self.chained_tip

    @property
    def auth_lag(self) -> int:
        return self.height - self.auth_tip

    @property
    def lags(self) -> tuple[int, int]:
        return (self.reception_lag, self.auth_lag)

    def received_heights(self) -> set[int]:
        """Heights currently held above the verified prefix plus the prefix tip."""
        return {self.chained_tip, *self._pending_blocks}

    def _held(self, height: int) -> BlockHeader | None:
        if height <= self.chained_tip:
            return self._headers.get(height)
        return self._pending_blocks.get(height)

    def record_block(self, header: BlockHeader) -> tuple[int, int]:
        """Ingest one multicast header; returns the updated lags.

        Duplicates are no-ops.  The parent link is checked against whichever
        copy of the parent is held; adjacency with an already-buffered child
        is checked as well, so every link is verified exactly once, when the
        later of its two endpoints arrives.
        """
        h = header.height
        if h <= self.chained_tip or h in self._pending_blocks:
            return (self.reception_lag, self.auth_lag)
        parent = self._held(h - 1)
        if parent is not None and header.parent_hash != parent.self_hash:
            raise BadLink(f"block {h} does not commit to the held parent at {h - 1}")
        child = self._pending_blocks.get(h + 1)
        if child is not None and child.parent_hash != header.self_hash:
            raise BadLink(f"buffered block {h + 1} does not commit to received block {h}")
        if h > self.height:
            self.height = h
        if h == self.chained_tip + 1:
            self._headers[h] = header
            tip = h
            pend = self._pending_blocks
            while True:
                nxt = pend.pop(tip + 1, None)
                if nxt is None:
                    break
                tip += 1
                self._headers[tip] = nxt
            self.chained_tip = tip
            if self._pending_sigs:
                self._apply_pending_sigs()
            if len(self._headers) > self.d + 8:
                self._prune()
        else:
            self._pending_blocks[h] = header
        return (self.reception_lag, self.auth_lag)

    def record_signature(self, sig: SignatureRecord) -> int:
        """Ingest one multicast signature record; returns the authenticated lag.

        The tag is verified as soon as the covered header is held (now, or
        later when a buffered signature is applied).  Signatures from
        untrusted servers are dropped after verification; trusted ones either
        advance ``auth_tip`` immediately (height chained) or wait in a
        bounded buffer for the gap below them to close.
        """
        h = sig.height
        header = self._held(h)
        if header is not None and not self._scheme.verify(sig.server_id, header.self_hash, sig.tag):
            raise BadSignature(f"signature by server {sig.server_id} over height {h} failed verification")
        if sig.server_id not in self.trusted:
            return self.auth_lag
        if h <= self.auth_tip:
            return self.auth_lag
        if h <= self.chained_tip:
            self.auth_tip = h
            self._drop_stale_sigs()
            return self.auth_lag
        self._pending_sigs[h] = sig
        if len(self._pending_sigs) > self.d + 1:
            del self._pending_sigs[min(self._pending_sigs)]
        return self.auth_lag

    def _apply_pending_sigs(self) -> None:
        ready = sorted(h for h in self._pending_sigs if h <= self.chained_tip)
        for h in ready:
            sig = self._pending_sigs.pop(h)
            header = self._headers.get(h)
            if header is not None and not self._scheme.verify(sig.server_id, header.self_hash, sig.tag):
                raise BadSignature(
                    f"buffered signature by server {sig.server_id} over height {h} failed verification"
                )
            if h > self.auth_tip:
                self.auth_tip = h
        self._drop_stale_sigs()

    def _drop_stale_sigs(self) -> None:
        stale = [h for h in self._pending_sigs if h <= self.auth_tip]
        for h in stale:
            del self._pending_sigs[h]

    def needs_feedback(self, d: int | None = None) -> bool:
        """True when the authenticated lag exceeds the tolerance (strictly)."""
        return self.auth_lag > (self.d if d is None else d)

    def resync(self, headers: Sequence[BlockHeader], sig: SignatureRecord) -> None:
        """Adopt a reliably-delivered run of recent headers plus one signature.

        The run must be internally linked and end at the height the signature
        covers; the signature must verify and come from a trusted server.
        On success the tracker is fully synchronized at the run's newest
        height and all buffered state is discarded.
        """
        if not headers:
            raise BadLink("resync payload is empty")
        for parent, child in zip(headers, headers[1:]):
            if child.height != parent.height + 1:
                raise BadLink(
                    f"resync payload heights are not consecutive: {parent.height} -> {child.height}"
                )
            if not verify_link(child, parent):
                raise BadLink(f"resync payload link broken at height {child.height}")
        newest = headers[-1]
        if sig.height != newest.height:
            raise BadSignature(
                f"resync signature covers height {sig.height}, payload ends at {newest.height}"
            )
        if sig.server_id not in self.trusted:
            raise BadSignature(f"resync signature by untrusted server {sig.server_id}")
        if not self._scheme.verify(sig.server_id, newest.self_hash, sig.tag):
            raise BadSignature(f"resync signature by server {sig.server_id} failed verification")
        anchor = self._held(headers[0].height - 1)
        if anchor is not None and headers[0].parent_hash != anchor.self_hash:
            raise BadLink(f"resync payload does not commit to held header at {anchor.height}")
        self._headers = {header.height: header for header in headers}
        self._pending_blocks.clear()
        self._pending_sigs.clear()
        self.chained_tip = newest.height
        self.auth_tip = newest.height
        if newest.height > self.height:
            self.height = newest.height

    def _prune(self) -> None:
        floor = min(self.auth_tip, self.height - self.d - 1)
        if floor <= 0:
            return
        for h in [h for h in self._headers if h < floor]:
            del self._headers[h]
