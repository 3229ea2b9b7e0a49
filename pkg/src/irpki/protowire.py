"""Strict proto3 wire-format primitives.

The object and repository-file schemas used here are closed: every field
number is known, fields appear in ascending order, default values are
omitted, and varints are minimal. The decoder rejects input an encoder
following those rules would not produce, which keeps the wire form
canonical (decode then re-encode is the identity on accepted input) and
removes the unknown-field escape hatch ordinary protobuf parsers allow.
"""

from __future__ import annotations

WIRE_VARINT = 0
WIRE_LEN = 2


class ProtoError(ValueError):
    """Malformed or non-canonical proto3 input."""


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ProtoError("negative varint")
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(bits | 0x80)
        else:
            out.append(bits)
            return bytes(out)


def key(field: int, wire: int) -> bytes:
    return encode_varint((field << 3) | wire)


def varint_field(field: int, value: int) -> bytes:
    """Scalar with implicit presence: zero is omitted from the wire."""
    if value == 0:
        return b""
    return key(field, WIRE_VARINT) + encode_varint(value)


def varint_field_present(field: int, value: int) -> bytes:
    """Scalar with explicit presence (proto3 `optional`): zero is encoded."""
    return key(field, WIRE_VARINT) + encode_varint(value)


def len_field(field: int, payload: bytes) -> bytes:
    """string/bytes/message with implicit presence: empty is omitted."""
    if not payload:
        return b""
    return key(field, WIRE_LEN) + encode_varint(len(payload)) + payload


def len_field_present(field: int, payload: bytes) -> bytes:
    return key(field, WIRE_LEN) + encode_varint(len(payload)) + payload


def string_field(field: int, text: str) -> bytes:
    return len_field(field, text.encode("utf-8"))


class Reader:
    """Cursor over one message's bytes."""

    __slots__ = ("data", "pos", "end", "_last_field")

    def __init__(self, data: bytes, start: int = 0, end: int | None = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end
        self._last_field = 0

    def at_end(self) -> bool:
        return self.pos >= self.end

    def read_varint(self) -> int:
        result = 0
        shift = 0
        start = self.pos
        while True:
            if self.pos >= self.end:
                raise ProtoError("truncated varint")
            byte = self.data[self.pos]
            self.pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                break
            shift += 7
            if shift > 63:
                raise ProtoError("varint too long")
        if self.pos - start > 1 and byte == 0:
            raise ProtoError("non-minimal varint")
        if result >= 1 << 64:
            raise ProtoError("varint exceeds 64 bits")
        return result

    def read_key(self) -> tuple[int, int]:
        raw = self.read_varint()
        field, wire = raw >> 3, raw & 0x07
        if field == 0:
            raise ProtoError("field number 0")
        if wire not in (WIRE_VARINT, WIRE_LEN):
            raise ProtoError(f"unsupported wire type {wire}")
        return field, wire

    def read_len(self) -> bytes:
        n = self.read_varint()
        if self.pos + n > self.end:
            raise ProtoError("truncated length-delimited value")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


class MessageReader(Reader):
    """Field iterator enforcing the closed, ordered wire discipline.

    `fields` maps field number -> expected wire type. Non-repeated fields
    may appear once; repeated fields must be contiguous; order is strictly
    ascending across distinct field numbers.
    """

    def fields_in(self, schema: dict[int, int], repeated: frozenset[int] = frozenset()):
        prev = 0
        while not self.at_end():
            field, wire = self.read_key()
            if field not in schema:
                raise ProtoError(f"unknown field {field}")
            if schema[field] != wire:
                raise ProtoError(f"field {field}: wrong wire type {wire}")
            if field < prev or (field == prev and field not in repeated):
                raise ProtoError(f"field {field}: duplicate or out of order")
            prev = field
            if wire == WIRE_VARINT:
                yield field, self.read_varint()
            else:
                yield field, self.read_len()


def decode_string(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtoError("invalid UTF-8 in string field") from exc


def check_uint32(value: int, what: str) -> int:
    if value >= 1 << 32:
        raise ProtoError(f"{what} exceeds 32 bits")
    return value


# Timestamps follow the well-known message shape {int64 seconds = 1} with
# whole-second resolution; a nanos component is never emitted and therefore
# rejected on input.

def encode_timestamp(epoch: int) -> bytes:
    return varint_field(1, epoch)


def decode_timestamp(raw: bytes) -> int:
    reader = MessageReader(raw)
    seconds = 0
    for field, value in reader.fields_in({1: WIRE_VARINT}):
        seconds = value
    return seconds
