"""Binary chunk-transfer protocol.

Frame layout, all integers big-endian:

    magic          u32   0x484F5244 ("HORD")
    version        u8    0x01
    msg_type       u8    1 GET_CHUNK | 2 CHUNK_DATA | 3 STAT | 4 STAT_RESP | 5 ERROR
    request_id     u64
    dataset_uuid   16 bytes
    chunk_index    u64
    payload_length u64
    payload        payload_length bytes
    crc32c         u32   over payload only

ERROR payload: u16 error code + UTF-8 message.
STAT_RESP payload: u8 chunk state (0 absent, 1 fetching, 2 present)
                   + u64 stored length + u32 stored crc32c.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import WireProtocolError
from .crc32c import crc32c

MAGIC = 0x484F5244
VERSION = 0x01

MSG_GET_CHUNK = 1
MSG_CHUNK_DATA = 2
MSG_STAT = 3
MSG_STAT_RESP = 4
MSG_ERROR = 5

ERR_NOT_OWNER = 1
ERR_OUT_OF_RANGE = 2
ERR_REMOTE_UNAVAILABLE = 3
ERR_CORRUPT = 4
ERR_UNKNOWN_DATASET = 5
ERR_BAD_REQUEST = 6

CHUNK_ABSENT = 0
CHUNK_FETCHING = 1
CHUNK_PRESENT = 2

_HEADER = struct.Struct(">IBBQ16sQQ")
HEADER_SIZE = _HEADER.size  # 46
_TRAILER = struct.Struct(">I")
_ERROR_CODE = struct.Struct(">H")
_STAT_RESP = struct.Struct(">BQI")

MAX_PAYLOAD = 1 << 30  # sanity bound on a single frame


@dataclass(frozen=True)
class Frame:
    msg_type: int
    request_id: int
    dataset_uuid: bytes
    chunk_index: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if len(frame.dataset_uuid) != 16:
        raise WireProtocolError("dataset_uuid must be exactly 16 bytes")
    header = _HEADER.pack(MAGIC, VERSION, frame.msg_type, frame.request_id,
                          frame.dataset_uuid, frame.chunk_index,
                          len(frame.payload))
    return header + frame.payload + _TRAILER.pack(crc32c(frame.payload))


def decode_frame(buf: bytes) -> Frame:
    if len(buf) < HEADER_SIZE + _TRAILER.size:
        raise WireProtocolError(f"frame too short ({len(buf)} bytes)")
    magic, version, msg_type, request_id, dataset_uuid, chunk_index, plen = \
        _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise WireProtocolError(f"bad magic 0x{magic:08X}")
    if version != VERSION:
        raise WireProtocolError(f"unsupported protocol version {version}")
    if plen > MAX_PAYLOAD:
        raise WireProtocolError(f"payload length {plen} exceeds limit")
    end = HEADER_SIZE + plen
    if len(buf) != end + _TRAILER.size:
        raise WireProtocolError(
            f"frame length {len(buf)} does not match payload length {plen}")
    payload = buf[HEADER_SIZE:end]
    (crc,) = _TRAILER.unpack_from(buf, end)
    if crc != crc32c(payload):
        raise WireProtocolError("payload checksum mismatch")
    return Frame(msg_type=msg_type, request_id=request_id,
                 dataset_uuid=dataset_uuid, chunk_index=chunk_index,
                 payload=payload)


def read_frame(read_exactly) -> Frame:
    """Decode one frame from a callable that returns exactly n bytes."""
    header = read_exactly(HEADER_SIZE)
    magic, version, msg_type, request_id, dataset_uuid, chunk_index, plen = \
        _HEADER.unpack(header)
    if magic != MAGIC:
        raise WireProtocolError(f"bad magic 0x{magic:08X}")
    if version != VERSION:
        raise WireProtocolError(f"unsupported protocol version {version}")
    if plen > MAX_PAYLOAD:
        raise WireProtocolError(f"payload length {plen} exceeds limit")
    payload = read_exactly(plen)
    (crc,) = _TRAILER.unpack(read_exactly(_TRAILER.size))
    if crc != crc32c(payload):
        raise WireProtocolError("payload checksum mismatch")
    return Frame(msg_type=msg_type, request_id=request_id,
                 dataset_uuid=dataset_uuid, chunk_index=chunk_index,
                 payload=payload)


def encode_error_payload(code: int, message: str) -> bytes:
    return _ERROR_CODE.pack(code) + message.encode("utf-8")


def decode_error_payload(payload: bytes) -> tuple[int, str]:
    if len(payload) < _ERROR_CODE.size:
        raise WireProtocolError("error payload too short")
    (code,) = _ERROR_CODE.unpack_from(payload)
    return code, payload[_ERROR_CODE.size:].decode("utf-8", errors="replace")


def encode_stat_payload(state: int, length: int, crc: int) -> bytes:
    return _STAT_RESP.pack(state, length, crc)


def decode_stat_payload(payload: bytes) -> tuple[int, int, int]:
    if len(payload) != _STAT_RESP.size:
        raise WireProtocolError("stat payload has wrong length")
    return _STAT_RESP.unpack(payload)
