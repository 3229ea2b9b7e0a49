"""IP prefix and AS-number resources, including the X.509 delegation
extension encodings (address blocks and AS identifiers) and the
containment checks used during chain validation."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass

from . import derenc

AFI_IPV4 = 1
AFI_IPV6 = 2

OID_IP_RESOURCES = "1.3.6.1.5.5.7.1.7"
OID_AS_RESOURCES = "1.3.6.1.5.5.7.1.8"

# Marker for a delegation extension set to inherit from the issuer.
INHERIT = "inherit"


def family_bits(family: int) -> int:
    if family == AFI_IPV4:
        return 32
    if family == AFI_IPV6:
        return 128
    raise ValueError(f"unknown address family {family}")


@dataclass(frozen=True, order=True)
class Prefix:
    family: int
    address: int  # full-width integer with all host bits zero
    length: int

    def __post_init__(self) -> None:
        width = family_bits(self.family)
        if not 0 <= self.length <= width:
            raise ValueError(f"prefix length {self.length} out of range")
        if self.address >> width:
            raise ValueError("address wider than family")
        if self.length < width and self.address & ((1 << (width - self.length)) - 1):
            raise ValueError("host bits set below prefix length")

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        net = ipaddress.ip_network(text, strict=True)
        family = AFI_IPV4 if net.version == 4 else AFI_IPV6
        return cls(family, int(net.network_address), net.prefixlen)

    def __str__(self) -> str:
        width = family_bits(self.family)
        addr = ipaddress.ip_address(self.address) if width == 32 else ipaddress.IPv6Address(self.address)
        return f"{addr}/{self.length}"

    def covers(self, other: "Prefix") -> bool:
        if self.family != other.family or self.length > other.length:
            return False
        shift = family_bits(self.family) - self.length
        return (self.address >> shift) == (other.address >> shift)

    def to_bits(self) -> tuple[bytes, int]:
        """(packed prefix bits, unused bit count) for a DER BIT STRING."""
        width = family_bits(self.family)
        nbytes = (self.length + 7) // 8
        data = self.address.to_bytes(width // 8, "big")[:nbytes]
        unused = (8 - self.length % 8) % 8 if self.length else 0
        return data, unused

    @classmethod
    def from_bits(cls, family: int, data: bytes, unused: int) -> "Prefix":
        length = len(data) * 8 - unused
        width = family_bits(family)
        if length > width:
            raise ValueError("prefix longer than family width")
        address = int.from_bytes(data + b"\x00" * (width // 8 - len(data)), "big")
        return cls(family, address, length)


def prefixes_covered(children: tuple[Prefix, ...], parents: tuple[Prefix, ...]) -> bool:
    return all(any(p.covers(c) for p in parents) for c in children)


def asns_covered(children: tuple[tuple[int, int], ...], parents: tuple[tuple[int, int], ...]) -> bool:
    return all(any(lo <= a and b <= hi for lo, hi in parents) for a, b in children)


def _afi_octets(family: int) -> bytes:
    return family.to_bytes(2, "big")


def encode_ip_resources(resources: tuple[Prefix, ...] | str) -> bytes:
    """IPAddrBlocks extension value; `INHERIT` marks both families inherited."""
    if resources == INHERIT:
        families = [
            derenc.sequence(derenc.octet_string(_afi_octets(afi)), derenc.null())
            for afi in (AFI_IPV4, AFI_IPV6)
        ]
        return derenc.sequence(*families)
    families = []
    for afi in (AFI_IPV4, AFI_IPV6):
        group = sorted(p for p in resources if p.family == afi)
        if not group:
            continue
        encoded = [derenc.bit_string(*p.to_bits()) for p in group]
        families.append(
            derenc.sequence(derenc.octet_string(_afi_octets(afi)), derenc.sequence(*encoded))
        )
    return derenc.sequence(*families)


def decode_ip_resources(value: bytes) -> tuple[Prefix, ...] | str:
    outer = derenc.Reader(value).enter()
    prefixes: list[Prefix] = []
    inherit = False
    while not outer.at_end():
        fam_reader = outer.enter()
        afi_bytes = fam_reader.read_octet_string()
        if len(afi_bytes) != 2:
            raise derenc.DerError("bad AFI length")
        family = int.from_bytes(afi_bytes, "big")
        if fam_reader.peek_tag() == derenc.TAG_NULL:
            fam_reader.expect(derenc.TAG_NULL)
            inherit = True
        else:
            seq = fam_reader.enter()
            while not seq.at_end():
                bits, unused = seq.read_bit_string()
                prefixes.append(Prefix.from_bits(family, bits, unused))
            seq.done()
        fam_reader.done()
    outer.done()
    if inherit:
        if prefixes:
            raise derenc.DerError("mixed inherit and explicit address blocks")
        return INHERIT
    return tuple(prefixes)


def encode_as_resources(resources: tuple[tuple[int, int], ...] | str) -> bytes:
    """ASIdentifiers extension value (asnum choice only)."""
    if resources == INHERIT:
        choice = derenc.null()
    else:
        items = []
        for lo, hi in sorted(resources):
            if lo == hi:
                items.append(derenc.integer(lo))
            else:
                items.append(derenc.sequence(derenc.integer(lo), derenc.integer(hi)))
        choice = derenc.sequence(*items)
    return derenc.sequence(derenc.explicit(0, choice))


def decode_as_resources(value: bytes) -> tuple[tuple[int, int], ...] | str:
    outer = derenc.Reader(value).enter()
    choice = derenc.Reader(outer.expect(0xA0))
    outer.done()
    tag = choice.peek_tag()
    if tag == derenc.TAG_NULL:
        choice.expect(derenc.TAG_NULL)
        choice.done()
        return INHERIT
    seq = choice.enter()
    choice.done()
    ranges: list[tuple[int, int]] = []
    while not seq.at_end():
        if seq.peek_tag() == derenc.TAG_INTEGER:
            value_int = seq.read_integer()
            ranges.append((value_int, value_int))
        else:
            pair = seq.enter()
            ranges.append((pair.read_integer(), pair.read_integer()))
            pair.done()
    seq.done()
    return tuple(ranges)
