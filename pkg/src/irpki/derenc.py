"""Minimal strict DER encoder/decoder.

Only the constructs needed for RPKI object templates are implemented.
Encoding is canonical by construction; the reader rejects anything the
encoder would not emit (indefinite lengths, non-minimal lengths and
integers, trailing garbage), so decode followed by re-encode always
reproduces the input byte-for-byte.
"""

from __future__ import annotations

import calendar
import re

# Universal tags
TAG_BOOLEAN = 0x01
TAG_INTEGER = 0x02
TAG_BIT_STRING = 0x03
TAG_OCTET_STRING = 0x04
TAG_NULL = 0x05
TAG_OID = 0x06
TAG_UTF8 = 0x0C
TAG_PRINTABLE = 0x13
TAG_IA5 = 0x16
TAG_UTC_TIME = 0x17
TAG_GENERALIZED_TIME = 0x18
TAG_SEQUENCE = 0x30
TAG_SET = 0x31


class DerError(ValueError):
    """Malformed or non-canonical DER input."""


def _encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes([n])
    body = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return bytes([0x80 | len(body)]) + body


def tlv(tag: int, content: bytes) -> bytes:
    return bytes([tag]) + _encode_length(len(content)) + content


def sequence(*parts: bytes) -> bytes:
    return tlv(TAG_SEQUENCE, b"".join(parts))


def set_of(parts: list[bytes]) -> bytes:
    # DER SET OF orders elements by their encoded bytes.
    return tlv(TAG_SET, b"".join(sorted(parts)))


def integer(value: int) -> bytes:
    if value == 0:
        return tlv(TAG_INTEGER, b"\x00")
    neg = value < 0
    n = (value.bit_length() // 8) + 1
    body = value.to_bytes(n, "big", signed=True)
    while len(body) > 1 and (
        (body[0] == 0x00 and not body[1] & 0x80 and not neg)
        or (body[0] == 0xFF and body[1] & 0x80 and neg)
    ):
        body = body[1:]
    return tlv(TAG_INTEGER, body)


def boolean(value: bool) -> bytes:
    return tlv(TAG_BOOLEAN, b"\xff" if value else b"\x00")


def null() -> bytes:
    return tlv(TAG_NULL, b"")


def octet_string(data: bytes) -> bytes:
    return tlv(TAG_OCTET_STRING, data)


def bit_string(data: bytes, unused_bits: int = 0) -> bytes:
    if not 0 <= unused_bits <= 7 or (unused_bits and not data):
        raise DerError("invalid unused bit count")
    return tlv(TAG_BIT_STRING, bytes([unused_bits]) + data)


def oid(dotted: str) -> bytes:
    arcs = [int(a) for a in dotted.split(".")]
    if len(arcs) < 2 or arcs[0] > 2 or (arcs[0] < 2 and arcs[1] >= 40):
        raise DerError(f"invalid OID {dotted!r}")
    body = bytearray()
    for arc in [arcs[0] * 40 + arcs[1]] + arcs[2:]:
        chunk = bytearray([arc & 0x7F])
        arc >>= 7
        while arc:
            chunk.append(0x80 | (arc & 0x7F))
            arc >>= 7
        body.extend(reversed(chunk))
    return tlv(TAG_OID, bytes(body))


def ia5_string(text: str) -> bytes:
    return tlv(TAG_IA5, text.encode("ascii"))


def printable_string(text: str) -> bytes:
    if not re.fullmatch(r"[A-Za-z0-9 '()+,./:=?-]*", text):
        raise DerError(f"not a PrintableString: {text!r}")
    return tlv(TAG_PRINTABLE, text.encode("ascii"))


def explicit(number: int, inner: bytes) -> bytes:
    return tlv(0xA0 | number, inner)


def implicit(number: int, content: bytes, constructed: bool = True) -> bytes:
    tag = (0xA0 if constructed else 0x80) | number
    return tlv(tag, content)


def generalized_time(epoch: int) -> bytes:
    t = _gmtime(epoch)
    return tlv(TAG_GENERALIZED_TIME, t.encode("ascii"))


def utc_or_generalized_time(epoch: int) -> bytes:
    # X.509 convention: UTCTime through 2049, GeneralizedTime after.
    t = _gmtime(epoch)
    if 1950 <= int(t[:4]) < 2050:
        return tlv(TAG_UTC_TIME, t[2:].encode("ascii"))
    return tlv(TAG_GENERALIZED_TIME, t.encode("ascii"))


def _gmtime(epoch: int) -> str:
    import time as _time

    st = _time.gmtime(epoch)
    return (
        f"{st.tm_year:04d}{st.tm_mon:02d}{st.tm_mday:02d}"
        f"{st.tm_hour:02d}{st.tm_min:02d}{st.tm_sec:02d}Z"
    )


_UTC_RE = re.compile(rb"\A(\d{12})Z\Z")
_GEN_RE = re.compile(rb"\A(\d{14})Z\Z")


def _parse_time(tag: int, content: bytes) -> int:
    if tag == TAG_UTC_TIME:
        if not _UTC_RE.match(content):
            raise DerError("malformed UTCTime")
        yy = int(content[:2])
        year = 1900 + yy if yy >= 50 else 2000 + yy
        digits = f"{year:04d}".encode() + content[2:12]
    elif tag == TAG_GENERALIZED_TIME:
        if not _GEN_RE.match(content):
            raise DerError("malformed GeneralizedTime")
        digits = content[:14]
    else:
        raise DerError("expected a time value")
    s = digits.decode("ascii")
    try:
        return calendar.timegm(
            (int(s[0:4]), int(s[4:6]), int(s[6:8]), int(s[8:10]), int(s[10:12]), int(s[12:14]), 0, 0, 0)
        )
    except ValueError as exc:
        raise DerError(f"invalid time: {s}") from exc


class Reader:
    """Cursor over a DER byte string with strict, canonical-only parsing."""

    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, start: int = 0, end: int | None = None):
        self.data = data
        self.pos = start
        self.end = len(data) if end is None else end

    def at_end(self) -> bool:
        return self.pos >= self.end

    def done(self) -> None:
        if not self.at_end():
            raise DerError(f"{self.end - self.pos} trailing bytes")

    def peek_tag(self) -> int | None:
        return self.data[self.pos] if self.pos < self.end else None

    def read_tlv(self) -> tuple[int, bytes]:
        tag, start, stop = self._read_header()
        self.pos = stop
        return tag, self.data[start:stop]

    def read_element(self) -> bytes:
        """Full TLV bytes of the next element."""
        start = self.pos
        _, _, stop = self._read_header()
        self.pos = stop
        return self.data[start:stop]

    def _read_header(self) -> tuple[int, int, int]:
        if self.pos >= self.end:
            raise DerError("truncated input")
        tag = self.data[self.pos]
        i = self.pos + 1
        if i >= self.end:
            raise DerError("truncated length")
        first = self.data[i]
        i += 1
        if first < 0x80:
            length = first
        elif first == 0x80:
            raise DerError("indefinite length is not DER")
        else:
            n = first & 0x7F
            if i + n > self.end:
                raise DerError("truncated length")
            length = int.from_bytes(self.data[i : i + n], "big")
            if self.data[i] == 0 or length < 0x80 or n > 4:
                raise DerError("non-minimal length encoding")
            i += n
        if i + length > self.end:
            raise DerError("value overruns input")
        return tag, i, i + length

    def expect(self, tag: int) -> bytes:
        got, content = self.read_tlv()
        if got != tag:
            raise DerError(f"expected tag 0x{tag:02x}, got 0x{got:02x}")
        return content

    def enter(self, tag: int = TAG_SEQUENCE) -> "Reader":
        content = self.expect(tag)
        return Reader(content)

    def read_integer(self) -> int:
        content = self.expect(TAG_INTEGER)
        if not content:
            raise DerError("empty INTEGER")
        if len(content) > 1 and (
            (content[0] == 0x00 and not content[1] & 0x80)
            or (content[0] == 0xFF and content[1] & 0x80)
        ):
            raise DerError("non-minimal INTEGER")
        return int.from_bytes(content, "big", signed=True)

    def read_oid(self) -> str:
        content = self.expect(TAG_OID)
        if not content or content[-1] & 0x80:
            raise DerError("malformed OID")
        arcs = []
        value = 0
        for i, byte in enumerate(content):
            if value == 0 and byte == 0x80:
                raise DerError("non-minimal OID arc")
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                arcs.append(value)
                value = 0
        first = arcs[0]
        if first < 40:
            head = [0, first]
        elif first < 80:
            head = [1, first - 40]
        else:
            head = [2, first - 80]
        return ".".join(str(a) for a in head + arcs[1:])

    def read_octet_string(self) -> bytes:
        return self.expect(TAG_OCTET_STRING)

    def read_bit_string(self) -> tuple[bytes, int]:
        content = self.expect(TAG_BIT_STRING)
        if not content:
            raise DerError("empty BIT STRING")
        unused = content[0]
        if unused > 7 or (unused and len(content) == 1):
            raise DerError("invalid BIT STRING padding")
        if unused and content[-1] & ((1 << unused) - 1):
            raise DerError("BIT STRING padding bits not zero")
        return content[1:], unused

    def read_boolean(self) -> bool:
        content = self.expect(TAG_BOOLEAN)
        if content == b"\xff":
            return True
        if content == b"\x00":
            return False
        raise DerError("non-canonical BOOLEAN")

    def read_time(self) -> int:
        tag, content = self.read_tlv()
        return _parse_time(tag, content)

    def read_ia5(self) -> str:
        content = self.expect(TAG_IA5)
        try:
            return content.decode("ascii")
        except UnicodeDecodeError as exc:
            raise DerError("non-ASCII IA5String") from exc
