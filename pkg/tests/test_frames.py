import math
import struct
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from nbfi import frames as F
from nbfi.core import PALETTE
from nbfi.freqplan import SubbandPlan

ids = st.integers(0, 2**32 - 1)
iters = st.integers(0, 255)
payloads = st.binary(min_size=9, max_size=9)
ROUNDS = settings(max_examples=10_000, deadline=None)


@ROUNDS
@given(ids, iters, payloads, st.integers(0, 2**24 - 1), st.binary(min_size=F.UL_FILLER_LEN, max_size=F.UL_FILLER_LEN))
def test_ul_round_trip(modem_id, it, payload, mic, filler):
    fr = F.UlFrame(modem_id, it, payload, mic, F.crc24(modem_id, it, payload), filler)
    wire = F.encode_ul(fr)
    assert len(wire) == 36
    assert F.decode_ul(wire) == fr
    assert F.encode_ul(F.decode_ul(wire)) == wire


@ROUNDS
@given(ids, iters, payloads)
def test_dl_round_trip(modem_id, it, payload):
    fr = F.DlFrame.build(modem_id, it, payload)
    wire = F.encode_dl(fr)
    assert len(wire) == 36
    assert F.decode_dl(wire, modem_id) == fr


@ROUNDS
@given(st.booleans(), st.booleans(), st.booleans(), st.integers(0, 31), st.binary(min_size=8, max_size=8))
def test_transport_round_trip(sys, ack, multi, it, data):
    pkt = F.TransportPacket(sys, ack, multi, it, data)
    wire = F.encode_transport(pkt)
    assert len(wire) == 9
    assert F.decode_transport(wire) == pkt


def test_ul_layout():
    fr = F.UlFrame.build(0x1234, 5, bytes(range(1, 10)))
    wire = F.encode_ul(fr)
    assert wire[:4] == bytes.fromhex("97157a6f")
    assert struct.unpack(">I", wire[:4])[0] == F.UL_PREAMBLE == 0x97157A6F
    assert wire[4:8] == (0x1234).to_bytes(4, "big") and wire[8] == 5
    assert wire[9:18] == bytes(range(1, 10))
    # reference CRC computed independently of the codec
    ref = zlib.crc32(bytes.fromhex("00001234") + bytes([5]) + bytes(range(1, 10))) & 0xFFFFFF
    assert wire[21:24] == ref.to_bytes(3, "big")


@given(ids, iters, payloads, st.integers(0, 8), st.integers(1, 255))
def test_payload_corruption_detected(modem_id, it, payload, pos, flip):
    wire = bytearray(F.encode_ul(F.UlFrame.build(modem_id, it, payload)))
    wire[9 + pos] ^= flip
    with pytest.raises(F.CrcMismatch):
        F.decode_ul(bytes(wire))


def test_decode_errors():
    wire = F.encode_ul(F.UlFrame.build(1, 2, bytes(9)))
    with pytest.raises(F.BadPreamble):
        F.decode_ul(b"\x00" + wire[1:])
    with pytest.raises(F.LengthError):
        F.decode_ul(wire[:-1])
    with pytest.raises(F.LengthError):
        F.encode_ul(F.UlFrame(1, 2, bytes(8), 0, 0))
    with pytest.raises(ValueError):
        F.encode_ul(F.UlFrame(2**32, 2, bytes(9), 0, 0))
    assert issubclass(F.CrcMismatch, ValueError)


def test_dl_addressing():
    wire = F.encode_dl(F.DlFrame.build(42, 0, bytes(9)))
    assert struct.unpack(">I", wire[:4])[0] != F.UL_PREAMBLE
    with pytest.raises(F.BadPreamble):
        F.decode_dl(wire, 43)


def test_center_frequency_uses_low_mic_byte():
    plan = SubbandPlan(868.8e6, w_ul=3)
    a = F.UlFrame(0x10, 0, bytes(9), 0x000005, 0)
    b = F.UlFrame(0x10, 0, bytes(9), 0xABCD05, 0)
    c = F.UlFrame(0x10, 0, bytes(9), 0x000006, 0)
    assert a.center_frequency(plan, 3, 1) == b.center_frequency(plan, 3, 1)
    assert a.center_frequency(plan, 3, 1) != c.center_frequency(plan, 3, 1)
    assert a.center_frequency(plan, 3, 1) > plan.center > a.center_frequency(plan, 3, 0)


def test_mic_provider_pluggable():
    class Fixed:
        def mic(self, modem_id, crypto_iter, payload):
            return 0xABCDEF

    assert F.UlFrame.build(1, 1, bytes(9), Fixed()).mic0_7 == 0xABCDEF
    assert F.SeededMic(b"a").mic(1, 1, bytes(9)) != F.SeededMic(b"b").mic(1, 1, bytes(9))


# --------------------------------------------------------------------------
# transport


def test_transport_examples():
    assert F.encode_transport(F.TransportPacket()) == bytes(9)
    assert F.encode_transport(F.TransportPacket(True, True, True, 31))[0] == 0xFF
    assert F.TransportPacket(sys=True).header == 0x80
    assert F.TransportPacket(iter=3, multi=True).header == 0x23
    with pytest.raises(ValueError):
        F.TransportPacket(iter=32)
    with pytest.raises(F.LengthError):
        F.decode_transport(bytes(8))


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32])
def test_batch(n):
    pk = F.batch([bytes([k]) * 8 for k in range(n)], first_iter=30)
    assert [p.iter for p in pk] == [(30 + k) % 32 for k in range(n)]
    assert [p.multi for p in pk] == [True] * (n - 1) + [False]
    assert pk[-1].ack and not any(p.ack for p in pk[:-1])


@pytest.mark.parametrize("n", [0, 3, 33, 64])
def test_batch_rejects_size(n):
    with pytest.raises(ValueError):
        F.batch([bytes(8)] * n)


def test_ack_mask_examples():
    sent = F.batch([bytes(8)] * 8)
    full = F.ack_mask(range(8), 8)
    assert full.sys and F.mask_of(full) == 0xFF and F.to_retransmit(sent, full) == []
    none = F.ack_mask([], 8)
    assert F.mask_of(none) == 0 and F.to_retransmit(sent, none) == sent
    some = F.ack_mask([0, 2, 7], 8)
    assert [p.iter for p in F.to_retransmit(sent, some)] == [1, 3, 4, 5, 6]
    with pytest.raises(ValueError):
        F.ack_mask([8], 8)


@given(st.integers(0, 2**32 - 1))
def test_ack_mask_round_trip(mask):
    pkt = F.ack_mask(mask, 32)
    back = F.decode_transport(F.encode_transport(pkt))
    assert F.mask_of(back) == mask and back.sys


# --------------------------------------------------------------------------
# adaptation


def test_adapt_up_from_bn3():
    s = F.adapt_step(F.AdaptState(3), PALETTE[2].snr_rxtx + 15)
    assert PALETTE[2].snr_rxtx == 18
    assert s.bn == 4 and s.tx_power_dbm == 14


def test_adapt_down_power_first():
    s = F.AdaptState(4, tx_power_dbm=8.0)
    s = F.adapt_step(s, 5.0)
    assert (s.bn, s.tx_power_dbm) == (4, 11.0)
    s = F.adapt_step(s, 5.0)
    assert (s.bn, s.tx_power_dbm) == (4, 14.0)
    s = F.adapt_step(s, 5.0)
    assert (s.bn, s.tx_power_dbm) == (3, 14.0)


def test_adapt_hold():
    s = F.AdaptState(2, tx_power_dbm=5.0)
    assert F.adapt_step(s, 12.0) == s


def test_adapt_at_top_lowers_power():
    s = F.adapt_step(F.AdaptState(4), 60.0)
    assert (s.bn, s.tx_power_dbm) == (4, 11.0)
    low = F.AdaptState(4, tx_power_dbm=-9.0)
    assert F.adapt_step(low, 60.0).tx_power_dbm == -10.0


POWER_STEPS = math.ceil((F.MAX_POWER_DBM - F.MIN_POWER_DBM) / F.POWER_STEP_DB)


@given(st.integers(1, 4), st.sampled_from([-10.0, -4.0, 2.0, 8.0, 11.0, 14.0]), st.floats(-20, 80))
def test_adapt_converges_under_constant_snr(bn, power, snr):
    s = F.AdaptState(bn, tx_power_dbm=power)
    for _ in range(4 + POWER_STEPS):
        s = F.adapt_step(s, snr)
    assert F.adapt_step(s, snr) == s


def test_adapt_margin():
    # an 8x bandwidth step costs 10 log10(8) dB of SNR; what is left of SNR_UP
    # is the fading reserve, about 6 dB
    drop = 10 * math.log10(8)
    assert drop == pytest.approx(9.03, abs=5e-3)
    assert F.SNR_UP_DB - drop == pytest.approx(6.0, abs=0.05)
    for lo, hi in zip(PALETTE, PALETTE[1:]):
        assert hi.delta / lo.delta == 8


def test_adapt_state_validation():
    with pytest.raises(ValueError):
        F.AdaptState(5)
    with pytest.raises(ValueError):
        F.AdaptState(1, tx_power_dbm=20.0)
