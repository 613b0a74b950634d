"""Chain linkage and client authentication-state tests."""

import random

import pytest

from headercast.chain import (
    GENESIS_PARENT,
    AuthTracker,
    HeaderChain,
    SignatureRecord,
    make_header,
    verify_link,
)
from headercast.codec import MockSignatureScheme
from headercast.errors import BadLink, BadSignature, HeightMismatch, InvalidParams


def build_world(n_servers=4, d=10, chain_seed=0, trusted=(1,), registered=1):
    scheme = MockSignatureScheme(n_servers, key_seed=chain_seed)
    chain = HeaderChain(chain_seed=chain_seed)
    tracker = AuthTracker(
        trusted=trusted,
        registered_server=registered,
        scheme=scheme,
        genesis=chain.genesis,
        d=d,
    )
    return scheme, chain, tracker


def sig_for(scheme, chain, server_id, height):
    header = chain.header_at(height)
    return SignatureRecord(
        server_id=server_id, height=height, tag=scheme.sign(server_id, header.self_hash)
    )


def test_make_header_is_deterministic_and_seed_sensitive():
    a = make_header(3, bytes(32), chain_seed=1)
    b = make_header(3, bytes(32), chain_seed=1)
    c = make_header(3, bytes(32), chain_seed=2)
    assert a == b
    assert a.self_hash != c.self_hash
    with pytest.raises(InvalidParams):
        make_header(-1, bytes(32))


def test_verify_link_accepts_real_child_rejects_forgery():
    chain = HeaderChain()
    first = chain.append()
    second = chain.append()
    assert verify_link(second, first)
    forged = make_header(2, bytes(32))
    assert not verify_link(forged, first)
    with pytest.raises(HeightMismatch):
        verify_link(second, chain.genesis)


def test_chain_growth_and_window():
    chain = HeaderChain(chain_seed=5)
    assert chain.height == 0
    assert chain.genesis.parent_hash == GENESIS_PARENT
    for expected in range(1, 8):
        header = chain.append()
        assert header.height == expected
    window = chain.window(3, 7)
    assert [h.height for h in window] == [3, 4, 5, 6, 7]
    for parent, child in zip(window, window[1:]):
        assert verify_link(child, parent)


def test_chain_retention_prunes_old_heights():
    chain = HeaderChain(retain=5)
    for _ in range(20):
        chain.append()
    assert chain.header_at(20).height == 20
    assert chain.header_at(16).height == 16
    with pytest.raises(InvalidParams):
        chain.header_at(10)
    with pytest.raises(InvalidParams):
        HeaderChain(retain=1)


def test_tracker_starts_synchronized_at_genesis():
    _, _, tracker = build_world()
    assert tracker.lags == (0, 0)
    assert not tracker.needs_feedback()


def test_tracker_constructor_validation():
    scheme = MockSignatureScheme(4)
    chain = HeaderChain()
    with pytest.raises(InvalidParams):
        AuthTracker(trusted=(), registered_server=1, scheme=scheme, genesis=chain.genesis, d=4)
    with pytest.raises(InvalidParams):
        AuthTracker(trusted=(1, 2), registered_server=3, scheme=scheme, genesis=chain.genesis, d=4)
    with pytest.raises(InvalidParams):
        AuthTracker(trusted=(1,), registered_server=1, scheme=scheme, genesis=chain.genesis, d=0)


def test_in_order_blocks_and_signature_advance_both_tips():
    scheme, chain, tracker = build_world()
    for t in range(1, 4):
        header = chain.append()
        tracker.height = t
        tracker.record_block(header)
    assert tracker.lags == (0, 3)
    tracker.record_signature(sig_for(scheme, chain, 1, 3))
    assert tracker.lags == (0, 0)


def test_one_signature_authenticates_all_held_blocks_below_it():
    scheme, chain, tracker = build_world()
    for t in range(1, 7):
        tracker.height = t
        tracker.record_block(chain.append())
    assert tracker.auth_lag == 6
    tracker.record_signature(sig_for(scheme, chain, 1, 4))
    # Covers heights 1..4 through the parent links.
    assert tracker.auth_tip == 4
    assert tracker.auth_lag == 2


def test_out_of_order_blocks_buffer_and_cascade():
    scheme, chain, tracker = build_world()
    headers = [chain.append() for _ in range(4)]
    tracker.height = 4
    tracker.record_block(headers[2])  # height 3 first
    assert tracker.chained_tip == 0
    assert tracker.received_heights() == {0, 3}
    tracker.record_block(headers[0])  # height 1 chains
    assert tracker.chained_tip == 1
    tracker.record_block(headers[1])  # height 2 closes the gap: cascade to 3
    assert tracker.chained_tip == 3
    tracker.record_block(headers[3])
    assert tracker.chained_tip == 4
    assert tracker.reception_lag == 0


def test_duplicate_blocks_are_no_ops():
    scheme, chain, tracker = build_world()
    header = chain.append()
    tracker.height = 1
    before = tracker.record_block(header)
    after = tracker.record_block(header)
    assert before == after == (0, 1)


def test_wrong_parent_link_is_rejected():
    scheme, chain, tracker = build_world()
    chain.append()
    tracker.height = 1
    tracker.record_block(chain.header_at(1))
    fork = HeaderChain(chain_seed=99)
    fork.append()
    bad_second = fork.append()
    with pytest.raises(BadLink):
        tracker.record_block(bad_second)


def test_buffered_child_is_checked_when_parent_arrives():
    scheme, chain, tracker = build_world()
    chain.append()
    chain.append()
    fork = HeaderChain(chain_seed=99)
    fork.append()
    forged_two = fork.append()
    tracker.height = 2
    tracker.record_block(forged_two)  # buffered above the gap
    with pytest.raises(BadLink):
        tracker.record_block(chain.header_at(1))


def test_signature_before_block_is_buffered_then_applied():
    scheme, chain, tracker = build_world()
    for _ in range(3):
        chain.append()
    tracker.height = 3
    tracker.record_signature(sig_for(scheme, chain, 1, 2))
    assert tracker.auth_tip == 0
    tracker.record_block(chain.header_at(1))
    assert tracker.auth_tip == 0
    tracker.record_block(chain.header_at(2))
    assert tracker.auth_tip == 2


def test_stale_and_untrusted_signatures_change_nothing():
    scheme, chain, tracker = build_world(trusted=(1, 2), registered=1)
    for t in range(1, 4):
        tracker.height = t
        tracker.record_block(chain.append())
    tracker.record_signature(sig_for(scheme, chain, 2, 3))
    assert tracker.auth_tip == 3
    # Stale: covers a height at or below the authenticated tip.
    tracker.record_signature(sig_for(scheme, chain, 1, 2))
    assert tracker.auth_tip == 3
    # Untrusted but honest: verified, then dropped.
    chain.append()
    tracker.height = 4
    tracker.record_block(chain.header_at(4))
    tracker.record_signature(sig_for(scheme, chain, 3, 4))
    assert tracker.auth_tip == 3


def test_tampered_signature_raises_when_header_is_held():
    scheme, chain, tracker = build_world(trusted=(1, 2))
    chain.append()
    tracker.height = 1
    tracker.record_block(chain.header_at(1))
    good = sig_for(scheme, chain, 1, 1)
    tampered = SignatureRecord(
        server_id=good.server_id,
        height=good.height,
        tag=bytes([good.tag[0] ^ 1]) + good.tag[1:],
    )
    with pytest.raises(BadSignature):
        tracker.record_signature(tampered)
    # Even from an untrusted server: a held header means the tag is checked.
    bad_untrusted = SignatureRecord(server_id=3, height=1, tag=good.tag)
    with pytest.raises(BadSignature):
        tracker.record_signature(bad_untrusted)


def test_buffered_tampered_signature_raises_at_application_time():
    scheme, chain, tracker = build_world()
    chain.append()
    chain.append()
    good = sig_for(scheme, chain, 1, 2)
    tampered = SignatureRecord(
        server_id=1, height=2, tag=bytes([good.tag[0] ^ 1]) + good.tag[1:]
    )
    tracker.height = 2
    tracker.record_signature(tampered)  # nothing held at 2 yet: buffered
    tracker.record_block(chain.header_at(1))
    with pytest.raises(BadSignature):
        tracker.record_block(chain.header_at(2))


def test_signature_buffer_is_bounded():
    scheme, chain, tracker = build_world(d=4)
    for _ in range(12):
        chain.append()
    tracker.height = 12
    # Nothing below chains, so all of these wait; the buffer keeps at most
    # d + 1 of them, dropping the oldest.
    for h in range(2, 12):
        tracker.record_signature(sig_for(scheme, chain, 1, h))
    assert len(tracker._pending_sigs) == 5
    assert min(tracker._pending_sigs) == 7


def test_delivery_order_within_a_period_does_not_matter():
    """Any interleaving of the same packet set reaches the same state."""
    base_scheme = MockSignatureScheme(4, key_seed=0)
    chain = HeaderChain(chain_seed=0)
    for _ in range(8):
        chain.append()
    deliveries = [("b", h) for h in (1, 2, 3, 5, 6)]
    deliveries += [("s", h) for h in (2, 5, 6)]
    outcomes = set()
    rng = random.Random(2024)
    for _ in range(60):
        tracker = AuthTracker(
            trusted=(1,), registered_server=1, scheme=base_scheme,
            genesis=chain.genesis, d=10,
        )
        tracker.height = 8
        order = deliveries[:]
        rng.shuffle(order)
        for kind, h in order:
            if kind == "b":
                tracker.record_block(chain.header_at(h))
            else:
                tracker.record_signature(sig_for(base_scheme, chain, 1, h))
        outcomes.add(
            (tracker.chained_tip, tracker.auth_tip, frozenset(tracker.received_heights()))
        )
    assert outcomes == {(3, 2, frozenset({3, 5, 6}))}


def test_lag_walkthrough_tolerance_boundary():
    """Partial reception drives both lags to the tolerance edge and past it."""
    scheme, chain, tracker = build_world(d=4)
    for _ in range(7):
        chain.append()
    tracker.height = 6
    tracker.record_block(chain.header_at(1))
    tracker.record_block(chain.header_at(2))
    tracker.record_signature(sig_for(scheme, chain, 1, 2))
    assert tracker.lags == (4, 4)
    assert not tracker.needs_feedback()  # lag d is still tolerated
    tracker.height = 7
    assert tracker.lags == (5, 5)
    assert tracker.needs_feedback()  # lag d + 1 crosses the line
    assert tracker.needs_feedback(5) is False


def test_fully_received_client_keeps_lags_zero_and_one():
    # With every packet received, the reception lag stays 0 and the
    # authenticated lag alternates 1 (before the period's signature) / 0.
    scheme, chain, tracker = build_world()
    for t in range(1, 30):
        tracker.height = t
        tracker.record_block(chain.append())
        assert tracker.lags == (0, 1)
        tracker.record_signature(sig_for(scheme, chain, 1, t))
        assert tracker.lags == (0, 0)


def test_resync_restores_full_synchronization():
    scheme, chain, tracker = build_world(d=10)
    for _ in range(12):
        chain.append()
    tracker.height = 12
    assert tracker.auth_lag == 12
    payload = chain.window(2, 12)
    assert len(payload) == 11  # d + 1 headers
    tracker.resync(payload, sig_for(scheme, chain, 1, 12))
    assert tracker.lags == (0, 0)
    assert not tracker.needs_feedback()


def test_resync_rejects_bad_payloads():
    scheme, chain, tracker = build_world(d=10)
    for _ in range(12):
        chain.append()
    tracker.height = 12
    payload = chain.window(2, 12)
    good_sig = sig_for(scheme, chain, 1, 12)

    with pytest.raises(BadLink):
        tracker.resync([], good_sig)
    with pytest.raises(BadLink):
        tracker.resync(list(reversed(payload)), good_sig)

    fork = HeaderChain(chain_seed=77)
    for _ in range(12):
        fork.append()
    mixed = payload[:5] + fork.window(7, 12)
    with pytest.raises(BadLink):
        tracker.resync(mixed, good_sig)

    with pytest.raises(BadSignature):
        tracker.resync(payload, sig_for(scheme, chain, 1, 11))
    with pytest.raises(BadSignature):
        tracker.resync(payload, sig_for(scheme, chain, 2, 12))  # untrusted
    tampered = SignatureRecord(
        server_id=1, height=12, tag=bytes(len(good_sig.tag))
    )
    with pytest.raises(BadSignature):
        tracker.resync(payload, tampered)
    # None of the rejected payloads moved the tracker.
    assert tracker.lags == (12, 12)


def test_resync_checks_the_anchor_link():
    scheme, chain, tracker = build_world(d=4)
    for _ in range(6):
        chain.append()
    tracker.height = 6
    tracker.record_block(chain.header_at(1))
    fork = HeaderChain(chain_seed=123)
    for _ in range(6):
        fork.append()
    # Even with a validly signed, internally linked run, adoption must fail
    # when the run does not commit to the held honest block at height 1.
    signed_fork_tip = SignatureRecord(
        server_id=1, height=6, tag=scheme.sign(1, fork.header_at(6).self_hash)
    )
    with pytest.raises(BadLink):
        tracker.resync(fork.window(2, 6), signed_fork_tip)


def test_resync_clears_buffered_state():
    scheme, chain, tracker = build_world(d=4)
    for _ in range(8):
        chain.append()
    tracker.height = 8
    tracker.record_block(chain.header_at(5))  # stuck above a gap
    tracker.record_signature(sig_for(scheme, chain, 1, 7))  # waits for 7
    tracker.resync(chain.window(4, 8), sig_for(scheme, chain, 1, 8))
    assert tracker.lags == (0, 0)
    assert tracker._pending_blocks == {}
    assert tracker._pending_sigs == {}


def test_long_run_memory_stays_bounded():
    scheme, chain, tracker = build_world(d=6)
    rng = random.Random(8)
    for t in range(1, 1500):
        tracker.height = t
        header = chain.append()
        if rng.random() < 0.9:
            tracker.record_block(header)
        if rng.random() < 0.5:
            tracker.record_signature(sig_for(scheme, chain, 1, t))
        if tracker.needs_feedback():
            payload = chain.window(max(0, t - 6), t)
            tracker.resync(payload, sig_for(scheme, chain, 1, t))
        assert len(tracker._headers) <= tracker.d + 9
        assert len(tracker._pending_sigs) <= tracker.d + 1
    assert tracker.auth_tip >= 1500 - 7
