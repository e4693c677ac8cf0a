"""NB-Fi frame layouts, transport header and the rate/power adaptation rule.

Error-correcting codes and the Magma cipher are out of scope: the coded body
is carried as the plaintext fields followed by opaque filler up to the coded
length, so the on-air size (and hence airtime) is right.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Protocol, Sequence

from .core import N_BN, PALETTE
from .freqplan import SubbandPlan, ul_center_frequency

UL_PREAMBLE = 0x97157A6F
UL_WIRE_LEN = 36
DL_WIRE_LEN = 36
PAYLOAD_LEN = 9
ECC_BODY_LEN = 32
UL_PLAIN_LEN = 4 + 1 + PAYLOAD_LEN + 3 + 3  # modem id, iter, payload, mic, crc
UL_FILLER_LEN = ECC_BODY_LEN - UL_PLAIN_LEN
DL_ECC_LEN = 16

SNR_UP_DB = 15.0
SNR_DOWN_DB = 10.0
POWER_STEP_DB = 3.0
MAX_POWER_DBM = 14.0
MIN_POWER_DBM = -10.0


class FrameError(ValueError):
    pass


class BadPreamble(FrameError):
    pass


class CrcMismatch(FrameError):
    pass


class LengthError(FrameError):
    pass


def crc24(modem_id: int, crypto_iter: int, payload: bytes) -> int:
    """Three least significant bytes of CRC-32 over id, iterator and payload."""
    return zlib.crc32(struct.pack(">IB", modem_id, crypto_iter) + payload) & 0xFFFFFF


def dl_preamble(modem_id: int) -> int:
    # the real function of the modem id is not public; CRC-32 is a stand-in
    return zlib.crc32(struct.pack(">I", modem_id))


def _check_fields(modem_id: int, crypto_iter: int, payload: bytes, mic0_7: int):
    if not 0 <= modem_id <= 0xFFFFFFFF:
        raise ValueError("modem_id must fit in 32 bits")
    if not 0 <= crypto_iter <= 0xFF:
        raise ValueError("crypto_iter must fit in 8 bits")
    if len(payload) != PAYLOAD_LEN:
        raise LengthError(f"payload must be {PAYLOAD_LEN} bytes, got {len(payload)}")
    if not 0 <= mic0_7 <= 0xFFFFFF:
        raise ValueError("mic0_7 must fit in 24 bits")


class MicProvider(Protocol):
    def mic(self, modem_id: int, crypto_iter: int, payload: bytes) -> int: ...


@dataclass(frozen=True)
class SeededMic:
    """Keyed BLAKE2 stand-in for the Magma MAC; only its low 24 bits are used."""

    key: bytes = b"nbfi"

    def mic(self, modem_id: int, crypto_iter: int, payload: bytes) -> int:
        h = hashlib.blake2b(struct.pack(">IB", modem_id, crypto_iter) + payload, key=self.key, digest_size=3)
        return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class UlFrame:
    modem_id: int
    crypto_iter: int
    payload: bytes
    mic0_7: int
    packet_crc: int
    filler: bytes = bytes(UL_FILLER_LEN)

    @classmethod
    def build(cls, modem_id: int, crypto_iter: int, payload: bytes, mic: MicProvider = SeededMic()) -> "UlFrame":
        payload = bytes(payload)
        m = mic.mic(modem_id, crypto_iter, payload)
        return cls(modem_id, crypto_iter, payload, m, crc24(modem_id, crypto_iter, payload))

    def center_frequency(self, plan: SubbandPlan, bn: int, parity: int) -> float:
        return ul_center_frequency(plan, PALETTE[bn - 1], parity, self.modem_id, self.mic0_7)


def encode_ul(frame: UlFrame) -> bytes:
    _check_fields(frame.modem_id, frame.crypto_iter, frame.payload, frame.mic0_7)
    if len(frame.filler) != UL_FILLER_LEN:
        raise LengthError(f"filler must be {UL_FILLER_LEN} bytes")
    out = (
        struct.pack(">IIB", UL_PREAMBLE, frame.modem_id, frame.crypto_iter)
        + frame.payload
        + frame.mic0_7.to_bytes(3, "big")
        + (frame.packet_crc & 0xFFFFFF).to_bytes(3, "big")
        + frame.filler
    )
    assert len(out) == UL_WIRE_LEN
    return out


def decode_ul(data: bytes) -> UlFrame:
    if len(data) != UL_WIRE_LEN:
        raise LengthError(f"UL frame must be {UL_WIRE_LEN} bytes, got {len(data)}")
    preamble, modem_id, it = struct.unpack_from(">IIB", data)
    if preamble != UL_PREAMBLE:
        raise BadPreamble(f"preamble 0x{preamble:08X}")
    payload = bytes(data[9:18])
    mic = int.from_bytes(data[18:21], "big")
    crc = int.from_bytes(data[21:24], "big")
    if crc != crc24(modem_id, it, payload):
        raise CrcMismatch(f"CRC 0x{crc:06X} does not match contents")
    return UlFrame(modem_id, it, payload, mic, crc, bytes(data[24:]))


@dataclass(frozen=True)
class DlFrame:
    """Downlink frame addressed to ``modem_id`` (not carried on air)."""

    modem_id: int
    crypto_iter: int
    payload: bytes
    mic0_7: int
    packet_crc: int
    ecc_check: bytes = bytes(DL_ECC_LEN)

    @classmethod
    def build(cls, modem_id: int, crypto_iter: int, payload: bytes, mic: MicProvider = SeededMic()) -> "DlFrame":
        payload = bytes(payload)
        m = mic.mic(modem_id, crypto_iter, payload)
        return cls(modem_id, crypto_iter, payload, m, crc24(modem_id, crypto_iter, payload))


def encode_dl(frame: DlFrame) -> bytes:
    _check_fields(frame.modem_id, frame.crypto_iter, frame.payload, frame.mic0_7)
    if len(frame.ecc_check) != DL_ECC_LEN:
        raise LengthError(f"ECC check field must be {DL_ECC_LEN} bytes")
    out = (
        struct.pack(">IB", dl_preamble(frame.modem_id), frame.crypto_iter)
        + frame.payload
        + frame.mic0_7.to_bytes(3, "big")
        + (frame.packet_crc & 0xFFFFFF).to_bytes(3, "big")
        + frame.ecc_check
    )
    assert len(out) == DL_WIRE_LEN
    return out


def decode_dl(data: bytes, modem_id: int) -> DlFrame:
    """Decode a downlink frame as seen by sensor ``modem_id``."""
    if len(data) != DL_WIRE_LEN:
        raise LengthError(f"DL frame must be {DL_WIRE_LEN} bytes, got {len(data)}")
    preamble, it = struct.unpack_from(">IB", data)
    if preamble != dl_preamble(modem_id):
        raise BadPreamble(f"preamble 0x{preamble:08X} is not addressed to {modem_id}")
    payload = bytes(data[5:14])
    mic = int.from_bytes(data[14:17], "big")
    crc = int.from_bytes(data[17:20], "big")
    if crc != crc24(modem_id, it, payload):
        raise CrcMismatch(f"CRC 0x{crc:06X} does not match contents")
    return DlFrame(modem_id, it, payload, mic, crc, bytes(data[20:]))


# --------------------------------------------------------------------------
# transport layer


@dataclass(frozen=True)
class TransportPacket:
    sys: bool = False
    ack: bool = False
    multi: bool = False
    iter: int = 0
    data: bytes = bytes(8)

    def __post_init__(self):
        if not 0 <= self.iter <= 31:
            raise ValueError("ITER is a 5-bit field")
        if len(self.data) != 8:
            raise LengthError(f"transport data must be 8 bytes, got {len(self.data)}")

    @property
    def header(self) -> int:
        return (self.sys << 7) | (self.ack << 6) | (self.multi << 5) | self.iter


def encode_transport(pkt: TransportPacket) -> bytes:
    return bytes([pkt.header]) + pkt.data


def decode_transport(data: bytes) -> TransportPacket:
    if len(data) != PAYLOAD_LEN:
        raise LengthError(f"transport packet must be {PAYLOAD_LEN} bytes, got {len(data)}")
    h = data[0]
    return TransportPacket(bool(h >> 7 & 1), bool(h >> 6 & 1), bool(h >> 5 & 1), h & 0x1F, bytes(data[1:]))


def batch(chunks: Sequence[bytes], first_iter: int = 0) -> list[TransportPacket]:
    """Packets for a batch of ``2**n`` chunks, n <= 5, with consecutive ITER.

    All but the last carry MULTI (acknowledge later); the last requests the ACK.
    """
    n = len(chunks)
    if n == 0 or n > 32 or n & (n - 1):
        raise ValueError("batch size must be a power of two up to 32")
    return [
        TransportPacket(sys=False, ack=k == n - 1, multi=k < n - 1, iter=(first_iter + k) % 32, data=bytes(c))
        for k, c in enumerate(chunks)
    ]


def ack_mask(received: Iterable[int] | int, batch_size: int = 32) -> TransportPacket:
    """ACK_P service packet; bit ``k`` set means position ``k`` of the batch arrived."""
    if not 1 <= batch_size <= 32:
        raise ValueError("batch size must be in 1..32")
    if isinstance(received, int):
        mask = received
    else:
        mask = 0
        for k in received:
            if not 0 <= k < batch_size:
                raise ValueError(f"position {k} outside batch of {batch_size}")
            mask |= 1 << k
    mask &= (1 << batch_size) - 1
    return TransportPacket(sys=True, ack=False, multi=False, iter=batch_size - 1,
                           data=mask.to_bytes(4, "big") + bytes(4))


def mask_of(pkt: TransportPacket) -> int:
    return int.from_bytes(pkt.data[:4], "big")


def to_retransmit(sent: Sequence[TransportPacket], ack: TransportPacket) -> list[TransportPacket]:
    """Packets whose batch position is unset in the mask, with their original ITER."""
    mask = mask_of(ack)
    return [p for k, p in enumerate(sent) if not mask >> k & 1]


# --------------------------------------------------------------------------
# rate and power adaptation


@dataclass(frozen=True)
class AdaptState:
    bn: int
    tx_power_dbm: float = MAX_POWER_DBM
    direction: Literal["ul", "dl"] = "ul"
    min_dbm: float = MIN_POWER_DBM
    max_dbm: float = MAX_POWER_DBM

    def __post_init__(self):
        if not 1 <= self.bn <= N_BN:
            raise ValueError(f"bn must be in 1..{N_BN}")
        if not self.min_dbm <= self.tx_power_dbm <= self.max_dbm:
            raise ValueError("tx power outside regulatory bounds")


def adapt_step(state: AdaptState, snr_db: float) -> AdaptState:
    up = PALETTE[state.bn - 1].snr_rxtx + SNR_UP_DB
    if snr_db >= up:
        if state.bn < N_BN:
            return replace(state, bn=state.bn + 1)
        return replace(state, tx_power_dbm=max(state.min_dbm, state.tx_power_dbm - POWER_STEP_DB))
    if snr_db < SNR_DOWN_DB:
        if state.tx_power_dbm < state.max_dbm:
            return replace(state, tx_power_dbm=min(state.max_dbm, state.tx_power_dbm + POWER_STEP_DB))
        if state.bn > 1:
            return replace(state, bn=state.bn - 1)
    return state
