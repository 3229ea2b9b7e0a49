"""Payload object codecs: route authorizations and manifests in every
envelope/encoding combination the repository variants use.

Envelope axis:
  cms_ee        two signatures: an embedded one-off certificate signed by
                the CA, plus a content signature by the one-off key
  direct_signed one CA signature over the content portion
  unsigned      no signature; authenticity comes from the manifest hash

Encoding axis: `der` or `proto3`. Envelope and encoding pick the file
extension: a CMS/DER object keeps the classic `.roa`/`.mft` extension,
everything else is `.iroa`/`.imft`.

Wire shapes (all emitted canonically, parsed strictly):
  .roa/.mft       CMS SignedData (DER) with one embedded certificate
  .iroa/.imft DER unsigned: SEQUENCE {contentType OID, content}
                  signed:   SEQUENCE {SEQUENCE {contentType, content, ski},
                                      signatureAlgorithm, signature BIT STRING}
  .iroa proto     bare ROA message, or an envelope message carrying the
                  content-type OID string, content bytes, optional embedded
                  certificate, signature, and signer key id
  .imft proto     manifest message {content, meta, signature}; with an
                  embedded certificate the envelope message is used instead

Verifying one object costs exactly 2 / 1 / 0 signature verifications for
cms_ee / direct_signed / unsigned.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, replace

from . import crypto, derenc, protowire, x509
from .protowire import WIRE_LEN, WIRE_VARINT
from .resources import INHERIT, Prefix, family_bits, prefixes_covered

OID_SIGNED_DATA = "1.2.840.113549.1.7.2"
OID_CT_ROA = "1.2.840.113549.1.9.16.1.24"
OID_CT_MFT = "1.2.840.113549.1.9.16.1.26"
OID_ATTR_CONTENT_TYPE = "1.2.840.113549.1.9.3"
OID_ATTR_MESSAGE_DIGEST = "1.2.840.113549.1.9.4"
OID_ATTR_SIGNING_TIME = "1.2.840.113549.1.9.5"

CMS_EE = "cms_ee"
DIRECT_SIGNED = "direct_signed"
UNSIGNED = "unsigned"
DER = "der"
PROTO3 = "proto3"
CRL_STANDALONE = "standalone"
CRL_MERGED = "merged"

VERIFY_COST = {CMS_EE: 2, DIRECT_SIGNED: 1, UNSIGNED: 0}

_NAME_RE = re.compile(r"\A[A-Za-z0-9_-]+\.[a-z]{3,4}\Z")

_SIG_ALG_DER = derenc.sequence(derenc.oid(crypto.OID_SHA256_WITH_RSA), derenc.null())
_DIGEST_ALG_DER = derenc.sequence(derenc.oid(crypto.OID_SHA256), derenc.null())
_RSA_ALG_DER = derenc.sequence(derenc.oid(crypto.OID_RSA_ENCRYPTION), derenc.null())


class ObjectError(ValueError):
    """Payload violates an invariant or the wire form is not accepted."""


@dataclass(frozen=True)
class CodecVariant:
    envelope: str
    encoding: str
    crl_mode: str = CRL_STANDALONE

    def __post_init__(self) -> None:
        if self.envelope not in (CMS_EE, DIRECT_SIGNED, UNSIGNED):
            raise ObjectError(f"unknown envelope {self.envelope!r}")
        if self.encoding not in (DER, PROTO3):
            raise ObjectError(f"unknown encoding {self.encoding!r}")
        if self.crl_mode not in (CRL_STANDALONE, CRL_MERGED):
            raise ObjectError(f"unknown crl mode {self.crl_mode!r}")
        if self.crl_mode == CRL_MERGED and self.envelope != DIRECT_SIGNED:
            raise ObjectError("a merged revocation list requires the directly signed manifest")

    @property
    def verify_cost(self) -> int:
        return VERIFY_COST[self.envelope]


LEGACY_ROA = CodecVariant(CMS_EE, DER)
LEGACY_MFT = CodecVariant(CMS_EE, DER, CRL_STANDALONE)
IMPROVED_ROA = CodecVariant(UNSIGNED, PROTO3)
IMPROVED_MFT = CodecVariant(DIRECT_SIGNED, PROTO3, CRL_MERGED)


def extension_for(kind: str, variant: CodecVariant) -> str:
    legacy = variant.envelope == CMS_EE and variant.encoding == DER
    if kind == "roa":
        return ".roa" if legacy else ".iroa"
    if kind == "manifest":
        return ".mft" if legacy else ".imft"
    raise ObjectError(f"unknown object kind {kind!r}")


@dataclass(frozen=True)
class RoaPrefix:
    prefix: Prefix
    max_length: int | None = None

    def __post_init__(self) -> None:
        if self.max_length is not None:
            if not self.prefix.length <= self.max_length <= family_bits(self.prefix.family):
                raise ObjectError(
                    f"max length {self.max_length} outside "
                    f"[{self.prefix.length}, {family_bits(self.prefix.family)}]"
                )

    @property
    def effective_max_length(self) -> int:
        return self.prefix.length if self.max_length is None else self.max_length

    def sort_key(self):
        return (self.prefix.family, self.prefix.address, self.prefix.length,
                -1 if self.max_length is None else self.max_length)


@dataclass(frozen=True)
class RoaPayload:
    asn: int
    prefixes: tuple[RoaPrefix, ...]
    serial: int
    not_before: int
    not_after: int

    def __post_init__(self) -> None:
        if not 0 <= self.asn < 1 << 32:
            raise ObjectError("origin AS number out of 32-bit range")
        if not self.prefixes:
            raise ObjectError("prefix list must not be empty")
        keys = [p.sort_key() for p in self.prefixes]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            raise ObjectError("prefixes must be unique and sorted")
        if self.serial <= 0:
            raise ObjectError("serial must be positive")
        if self.not_before >= self.not_after:
            raise ObjectError("empty validity window")

    def bare_prefixes(self) -> tuple[Prefix, ...]:
        return tuple(p.prefix for p in self.prefixes)


@dataclass(frozen=True)
class ManifestPayload:
    number: int
    this_update: int
    next_update: int
    file_list: tuple[tuple[str, bytes], ...]
    revoked: tuple[tuple[int, int], ...] | None = None
    """Revocation entries when the revocation list is merged into the
    manifest; None when a standalone CRL accompanies it."""

    def __post_init__(self) -> None:
        if self.number <= 0:
            raise ObjectError("manifest number must be positive")
        if self.this_update >= self.next_update:
            raise ObjectError("empty validity window")
        names = [name for name, _ in self.file_list]
        if names != sorted(names) or len(set(names)) != len(names):
            raise ObjectError("file list must be unique and sorted by name")
        for name, digest in self.file_list:
            if not _NAME_RE.match(name):
                raise ObjectError(f"unsafe file name {name!r}")
            if len(digest) != 32:
                raise ObjectError("file hashes must be 32 bytes")
        if self.revoked is not None:
            serials = [serial for serial, _ in self.revoked]
            if serials != sorted(serials) or len(set(serials)) != len(serials):
                raise ObjectError("revoked serials must be unique and sorted")
            for name, _ in self.file_list:
                if name.endswith(".crl"):
                    raise ObjectError("merged manifest must not list a standalone CRL")


@dataclass(frozen=True)
class SigningContext:
    """Keys and naming needed to wrap content in a signed envelope."""

    ca_key: crypto.KeyPair
    ca_name: str
    ca_name_serial: str | None = None
    ee_key: crypto.KeyPair | None = None
    object_uri: str | None = None
    crl_uri: str | None = None
    aia_uri: str | None = None


@dataclass(frozen=True)
class DecodedObject:
    kind: str
    variant: CodecVariant
    payload: RoaPayload | ManifestPayload
    ee_der: bytes | None = None
    ee_cert: x509.Certificate | None = None
    signed_attrs: bytes | None = None  # raw attribute bytes (without SET header)
    signature: bytes | None = None
    ski: bytes | None = None


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    payload: RoaPayload | ManifestPayload | None
    reason: str | None
    decoded: DecodedObject | None = None


# --------------------------------------------------------------------------
# content encodings
# --------------------------------------------------------------------------

def _encode_ip_blocks_der(prefixes: tuple[RoaPrefix, ...]) -> bytes:
    families = []
    for family in (1, 2):
        group = [p for p in prefixes if p.prefix.family == family]
        if not group:
            continue
        addresses = []
        for item in group:
            parts = [derenc.bit_string(*item.prefix.to_bits())]
            if item.max_length is not None:
                parts.append(derenc.integer(item.max_length))
            addresses.append(derenc.sequence(*parts))
        families.append(
            derenc.sequence(
                derenc.octet_string(family.to_bytes(2, "big")),
                derenc.sequence(*addresses),
            )
        )
    return derenc.sequence(*families)


def _decode_ip_blocks_der(reader: derenc.Reader) -> tuple[RoaPrefix, ...]:
    blocks = reader.enter()
    prefixes: list[RoaPrefix] = []
    while not blocks.at_end():
        fam_reader = blocks.enter()
        afi = fam_reader.read_octet_string()
        if len(afi) != 2:
            raise ObjectError("bad address family length")
        family = int.from_bytes(afi, "big")
        addresses = fam_reader.enter()
        fam_reader.done()
        while not addresses.at_end():
            entry = addresses.enter()
            bits, unused = entry.read_bit_string()
            max_length = None
            if not entry.at_end():
                max_length = entry.read_integer()
            entry.done()
            try:
                prefix = Prefix.from_bits(family, bits, unused)
                prefixes.append(RoaPrefix(prefix, max_length))
            except ValueError as exc:
                raise ObjectError(str(exc)) from exc
        addresses.done()
    blocks.done()
    return tuple(prefixes)


def _encode_roa_content_der(payload: RoaPayload, improved: bool) -> bytes:
    parts = [derenc.integer(payload.asn)]
    if improved:
        parts.append(derenc.integer(payload.serial))
        parts.append(derenc.generalized_time(payload.not_before))
        parts.append(derenc.generalized_time(payload.not_after))
    parts.append(_encode_ip_blocks_der(payload.prefixes))
    return derenc.sequence(*parts)


def _decode_roa_content_der(
    data: bytes, improved: bool, serial: int = 0, validity: tuple[int, int] = (0, 0)
) -> RoaPayload:
    top = derenc.Reader(data)
    body = top.enter()
    top.done()
    asn = body.read_integer()
    if improved:
        serial = body.read_integer()
        validity = (body.read_time(), body.read_time())
    prefixes = _decode_ip_blocks_der(body)
    body.done()
    try:
        return RoaPayload(asn, prefixes, serial, validity[0], validity[1])
    except ObjectError:
        raise
    except ValueError as exc:
        raise ObjectError(str(exc)) from exc


def _encode_mft_content_der(payload: ManifestPayload) -> bytes:
    entries = [
        derenc.sequence(derenc.ia5_string(name), derenc.bit_string(digest))
        for name, digest in payload.file_list
    ]
    parts = [
        derenc.integer(payload.number),
        derenc.generalized_time(payload.this_update),
        derenc.generalized_time(payload.next_update),
        derenc.oid(crypto.OID_SHA256),
        derenc.sequence(*entries),
    ]
    if payload.revoked is not None:
        revocations = [
            derenc.sequence(derenc.integer(serial), derenc.utc_or_generalized_time(when))
            for serial, when in payload.revoked
        ]
        parts.append(derenc.sequence(*revocations))
    return derenc.sequence(*parts)


def _decode_mft_content_der(data: bytes, merged: bool) -> ManifestPayload:
    top = derenc.Reader(data)
    body = top.enter()
    top.done()
    number = body.read_integer()
    this_update = body.read_time()
    next_update = body.read_time()
    if body.read_oid() != crypto.OID_SHA256:
        raise ObjectError("unsupported manifest hash algorithm")
    files = body.enter()
    file_list: list[tuple[str, bytes]] = []
    while not files.at_end():
        entry = files.enter()
        name = entry.read_ia5()
        digest, unused = entry.read_bit_string()
        if unused:
            raise ObjectError("file hash bits not octet-aligned")
        entry.done()
        file_list.append((name, digest))
    files.done()
    revoked = None
    if merged:
        revoked_reader = body.enter()
        revoked_list: list[tuple[int, int]] = []
        while not revoked_reader.at_end():
            entry = revoked_reader.enter()
            revoked_list.append((entry.read_integer(), entry.read_time()))
            entry.done()
        revoked_reader.done()
        revoked = tuple(revoked_list)
    body.done()
    return ManifestPayload(number, this_update, next_update, tuple(file_list), revoked)


def _encode_meta_proto(
    oid_str: str, serial: int, not_before: int, not_after: int, ski: bytes | None
) -> bytes:
    return (
        protowire.string_field(1, oid_str)
        + protowire.varint_field(2, serial)
        + protowire.len_field(3, protowire.encode_timestamp(not_before))
        + protowire.len_field(4, protowire.encode_timestamp(not_after))
        + (protowire.len_field_present(5, ski) if ski is not None else b"")
    )


def _decode_meta_proto(raw: bytes, expect_oid: str) -> tuple[int, int, int, bytes | None]:
    reader = protowire.MessageReader(raw)
    oid_str = ""
    serial = not_before = not_after = 0
    ski = None
    schema = {1: WIRE_LEN, 2: WIRE_VARINT, 3: WIRE_LEN, 4: WIRE_LEN, 5: WIRE_LEN}
    for field, value in reader.fields_in(schema):
        if field == 1:
            oid_str = protowire.decode_string(value)
        elif field == 2:
            serial = value
        elif field == 3:
            not_before = protowire.decode_timestamp(value)
        elif field == 4:
            not_after = protowire.decode_timestamp(value)
        else:
            ski = value
    if oid_str != expect_oid:
        raise ObjectError(f"unexpected content-type oid {oid_str!r}")
    return serial, not_before, not_after, ski


def _encode_roa_message(payload: RoaPayload, meta: bytes | None) -> bytes:
    groups = b""
    for family in (1, 2):
        group = [p for p in payload.prefixes if p.prefix.family == family]
        if not group:
            continue
        entries = b""
        for item in group:
            bits, _ = item.prefix.to_bits()
            ip = bytes([item.prefix.length]) + bits
            entry = protowire.len_field_present(1, ip)
            if item.max_length is not None:
                entry += protowire.varint_field_present(2, item.max_length)
            entries += protowire.len_field_present(2, entry)
        groups += protowire.len_field_present(
            2, protowire.varint_field(1, family) + entries
        )
    body = protowire.varint_field(1, payload.asn) + groups
    if meta is not None:
        body += protowire.len_field_present(3, meta)
    return body


def _decode_roa_message(
    raw: bytes, with_meta: bool, serial: int = 0, validity: tuple[int, int] = (0, 0)
) -> RoaPayload:
    reader = protowire.MessageReader(raw)
    asn = 0
    prefixes: list[RoaPrefix] = []
    meta = None
    schema = {1: WIRE_VARINT, 2: WIRE_LEN, 3: WIRE_LEN}
    for field, value in reader.fields_in(schema, repeated=frozenset({2})):
        if field == 1:
            asn = value
        elif field == 2:
            prefixes.extend(_decode_ip_and_fam(value))
        else:
            meta = value
    if with_meta:
        if meta is None:
            raise ObjectError("missing object metadata")
        serial, not_before, not_after, ski = _decode_meta_proto(meta, OID_CT_ROA)
        if ski is not None:
            raise ObjectError("bare payload must not carry a signer key id")
        validity = (not_before, not_after)
    elif meta is not None:
        raise ObjectError("unexpected metadata in enveloped payload")
    try:
        return RoaPayload(asn, tuple(prefixes), serial, validity[0], validity[1])
    except ObjectError:
        raise
    except ValueError as exc:
        raise ObjectError(str(exc)) from exc


def _decode_ip_and_fam(raw: bytes) -> list[RoaPrefix]:
    reader = protowire.MessageReader(raw)
    family = 0
    out: list[RoaPrefix] = []
    for field, value in reader.fields_in(
        {1: WIRE_VARINT, 2: WIRE_LEN}, repeated=frozenset({2})
    ):
        if field == 1:
            family = protowire.check_uint32(value, "address family")
        else:
            entry = protowire.MessageReader(value)
            ip = None
            max_length = None
            for efield, evalue in entry.fields_in({1: WIRE_LEN, 2: WIRE_VARINT}):
                if efield == 1:
                    ip = evalue
                else:
                    max_length = protowire.check_uint32(evalue, "max length")
            if ip is None or len(ip) < 1:
                raise ObjectError("missing prefix bytes")
            length = ip[0]
            expected = (length + 7) // 8
            if len(ip) - 1 != expected:
                raise ObjectError("prefix byte count does not match length")
            try:
                prefix = Prefix.from_bits(family, ip[1:], (8 - length % 8) % 8 if length else 0)
                out.append(RoaPrefix(prefix, max_length))
            except ValueError as exc:
                raise ObjectError(str(exc)) from exc
    return out


def _encode_mft_message(
    payload: ManifestPayload, meta: bytes | None, signature: bytes | None
) -> bytes:
    hash_list = b"".join(
        protowire.len_field_present(
            2,
            protowire.string_field(1, name) + protowire.len_field_present(2, digest),
        )
        for name, digest in payload.file_list
    )
    hashes = protowire.string_field(1, crypto.OID_SHA256) + hash_list
    content = protowire.len_field_present(1, hashes)
    if payload.revoked is not None:
        for serial, when in payload.revoked:
            entry = protowire.varint_field(1, serial) + protowire.len_field(
                2, protowire.encode_timestamp(when)
            )
            content += protowire.len_field_present(2, entry)
    body = protowire.len_field_present(1, content)
    if meta is not None:
        body += protowire.len_field_present(2, meta)
    if signature is not None:
        sig_msg = protowire.string_field(1, crypto.OID_SHA256_WITH_RSA) + protowire.len_field_present(3, signature)
        body += protowire.len_field_present(3, sig_msg)
    return body


def _decode_mft_message(
    raw: bytes, merged: bool, expect_signature: bool
) -> tuple[ManifestPayload, bytes | None, bytes | None, bytes]:
    """Returns (payload, ski, signature, signed-portion bytes)."""
    reader = protowire.MessageReader(raw)
    content_raw = meta_raw = sig_raw = None
    tbs_end = 0
    schema = {1: WIRE_LEN, 2: WIRE_LEN, 3: WIRE_LEN}
    for field, value in reader.fields_in(schema):
        if field == 1:
            content_raw = value
            tbs_end = reader.pos
        elif field == 2:
            meta_raw = value
            tbs_end = reader.pos
        else:
            sig_raw = value
    if content_raw is None or meta_raw is None:
        raise ObjectError("manifest missing content or metadata")
    tbs = raw[:tbs_end]

    creader = protowire.MessageReader(content_raw)
    hashes_raw = None
    revoked: list[tuple[int, int]] = []
    saw_revoked = False
    for field, value in creader.fields_in({1: WIRE_LEN, 2: WIRE_LEN}, repeated=frozenset({2})):
        if field == 1:
            hashes_raw = value
        else:
            saw_revoked = True
            entry = protowire.MessageReader(value)
            serial = when = 0
            for efield, evalue in entry.fields_in({1: WIRE_VARINT, 2: WIRE_LEN}):
                if efield == 1:
                    serial = evalue
                else:
                    when = protowire.decode_timestamp(evalue)
            revoked.append((serial, when))
    if hashes_raw is None:
        raise ObjectError("manifest missing hash list")
    if saw_revoked and not merged:
        raise ObjectError("revocations present in a standalone-CRL manifest")

    hreader = protowire.MessageReader(hashes_raw)
    algorithm = ""
    file_list: list[tuple[str, bytes]] = []
    for field, value in hreader.fields_in({1: WIRE_LEN, 2: WIRE_LEN}, repeated=frozenset({2})):
        if field == 1:
            algorithm = protowire.decode_string(value)
        else:
            entry = protowire.MessageReader(value)
            name = ""
            digest = b""
            for efield, evalue in entry.fields_in({1: WIRE_LEN, 2: WIRE_LEN}):
                if efield == 1:
                    name = protowire.decode_string(evalue)
                else:
                    digest = evalue
            file_list.append((name, digest))
    if algorithm != crypto.OID_SHA256:
        raise ObjectError(f"unsupported manifest hash algorithm {algorithm!r}")

    number, this_update, next_update, ski = _decode_meta_proto(meta_raw, OID_CT_MFT)

    signature = None
    if expect_signature:
        if sig_raw is None:
            raise ObjectError("manifest missing signature")
        sreader = protowire.MessageReader(sig_raw)
        algorithm = ""
        for field, value in sreader.fields_in({1: WIRE_LEN, 2: WIRE_LEN, 3: WIRE_LEN}):
            if field == 1:
                algorithm = protowire.decode_string(value)
            elif field == 2:
                raise ObjectError("unexpected signature parameters")
            else:
                signature = value
        if algorithm != crypto.OID_SHA256_WITH_RSA or signature is None:
            raise ObjectError("malformed manifest signature")
    elif sig_raw is not None:
        raise ObjectError("unexpected signature field")

    payload = ManifestPayload(
        number, this_update, next_update, tuple(file_list), tuple(revoked) if merged else None
    )
    return payload, ski, signature, tbs


# --------------------------------------------------------------------------
# envelopes
# --------------------------------------------------------------------------

def _issue_ee_certificate(
    signer: SigningContext,
    *,
    serial: int,
    not_before: int,
    not_after: int,
    ip_resources: tuple[Prefix, ...] | str,
    as_resources,
) -> x509.Certificate:
    if signer.ee_key is None:
        raise ObjectError("a one-off key is required for the CMS envelope")
    return x509.build_certificate(
        signer.ca_key,
        serial=serial,
        issuer=signer.ca_name,
        issuer_name_serial=signer.ca_name_serial,
        subject=signer.ee_key.key_id.hex(),
        not_before=not_before,
        not_after=not_after,
        subject_spki=signer.ee_key.spki,
        is_ca=False,
        ip_resources=ip_resources,
        as_resources=as_resources,
        sia_object_uri=signer.object_uri,
        crldp_uri=signer.crl_uri,
        aia_uri=signer.aia_uri,
    )


def _signed_attrs(content_type: str, econtent: bytes, signing_time: int) -> bytes:
    attrs = [
        derenc.sequence(
            derenc.oid(OID_ATTR_CONTENT_TYPE), derenc.tlv(derenc.TAG_SET, derenc.oid(content_type))
        ),
        derenc.sequence(
            derenc.oid(OID_ATTR_MESSAGE_DIGEST),
            derenc.tlv(derenc.TAG_SET, derenc.octet_string(crypto.sha256(econtent))),
        ),
        derenc.sequence(
            derenc.oid(OID_ATTR_SIGNING_TIME),
            derenc.tlv(derenc.TAG_SET, derenc.utc_or_generalized_time(signing_time)),
        ),
    ]
    return b"".join(sorted(attrs))


def _wrap_cms_der(
    content_type: str,
    econtent: bytes,
    ee_der: bytes,
    ee_ski: bytes,
    attrs: bytes,
    signature: bytes,
) -> bytes:
    signer_info = derenc.sequence(
        derenc.integer(3),
        derenc.tlv(0x80, ee_ski),
        _DIGEST_ALG_DER,
        derenc.tlv(0xA0, attrs),
        _RSA_ALG_DER,
        derenc.octet_string(signature),
    )
    signed_data = derenc.sequence(
        derenc.integer(3),
        derenc.tlv(derenc.TAG_SET, _DIGEST_ALG_DER),
        derenc.sequence(
            derenc.oid(content_type),
            derenc.explicit(0, derenc.octet_string(econtent)),
        ),
        derenc.tlv(0xA0, ee_der),
        derenc.tlv(derenc.TAG_SET, signer_info),
    )
    return derenc.sequence(derenc.oid(OID_SIGNED_DATA), derenc.explicit(0, signed_data))


def _unwrap_cms_der(data: bytes, expect_type: str):
    """Returns (econtent, ee_der, attrs_raw, signature)."""
    top = derenc.Reader(data)
    outer = top.enter()
    top.done()
    if outer.read_oid() != OID_SIGNED_DATA:
        raise ObjectError("not a CMS signed object")
    signed_data = derenc.Reader(outer.expect(0xA0)).enter()
    outer.done()
    if signed_data.read_integer() != 3:
        raise ObjectError("unsupported CMS version")
    digest_algs = signed_data.expect(derenc.TAG_SET)
    if digest_algs != _DIGEST_ALG_DER:
        raise ObjectError("unsupported digest algorithm set")
    encap = signed_data.enter()
    if encap.read_oid() != expect_type:
        raise ObjectError("unexpected content type")
    econtent_wrap = derenc.Reader(encap.expect(0xA0))
    econtent = econtent_wrap.read_octet_string()
    econtent_wrap.done()
    encap.done()
    certs = derenc.Reader(signed_data.expect(0xA0))
    ee_der = certs.read_element()
    certs.done()
    signer_infos = derenc.Reader(signed_data.expect(derenc.TAG_SET))
    signed_data.done()
    signer = signer_infos.enter()
    signer_infos.done()
    if signer.read_integer() != 3:
        raise ObjectError("unsupported signer info version")
    sid = signer.expect(0x80)
    if signer.expect(derenc.TAG_SEQUENCE) != _DIGEST_ALG_DER[2:]:
        raise ObjectError("unsupported signer digest algorithm")
    attrs = signer.expect(0xA0)
    if signer.expect(derenc.TAG_SEQUENCE) != _RSA_ALG_DER[2:]:
        raise ObjectError("unsupported signature algorithm")
    signature = signer.read_octet_string()
    signer.done()
    _check_signed_attrs(attrs, expect_type)
    return econtent, ee_der, attrs, signature, sid


def _check_signed_attrs(attrs: bytes, expect_type: str) -> None:
    reader = derenc.Reader(attrs)
    seen: dict[str, bytes] = {}
    order: list[bytes] = []
    while not reader.at_end():
        raw = reader.read_element()
        attr = derenc.Reader(raw).enter()
        attr_oid = attr.read_oid()
        value_set = derenc.Reader(attr.expect(derenc.TAG_SET))
        attr.done()
        value = value_set.read_element()
        value_set.done()
        if attr_oid in seen:
            raise ObjectError("duplicate signed attribute")
        seen[attr_oid] = value
        order.append(raw)
    if sorted(order) != order:
        raise ObjectError("signed attributes not in canonical order")
    if set(seen) != {OID_ATTR_CONTENT_TYPE, OID_ATTR_MESSAGE_DIGEST, OID_ATTR_SIGNING_TIME}:
        raise ObjectError("unexpected signed attribute set")
    ct = derenc.Reader(seen[OID_ATTR_CONTENT_TYPE])
    if ct.read_oid() != expect_type:
        raise ObjectError("content-type attribute mismatch")


def _attrs_message_digest(attrs: bytes) -> bytes:
    reader = derenc.Reader(attrs)
    while not reader.at_end():
        attr = reader.enter()
        attr_oid = attr.read_oid()
        value_set = derenc.Reader(attr.expect(derenc.TAG_SET))
        attr.done()
        if attr_oid == OID_ATTR_MESSAGE_DIGEST:
            return value_set.read_octet_string()
    raise ObjectError("missing message digest attribute")


def _wrap_direct_der(content_type: str, content: bytes, ski: bytes, signature: bytes) -> bytes:
    tbs = derenc.sequence(derenc.oid(content_type), content, derenc.octet_string(ski))
    return derenc.sequence(tbs, _SIG_ALG_DER, derenc.bit_string(signature))


def _direct_der_tbs(content_type: str, content: bytes, ski: bytes) -> bytes:
    return derenc.sequence(derenc.oid(content_type), content, derenc.octet_string(ski))


def _unwrap_direct_der(data: bytes, expect_type: str):
    """Returns (content TLV bytes, ski, signature, tbs bytes)."""
    top = derenc.Reader(data)
    outer = top.enter()
    top.done()
    tbs = outer.read_element()
    alg = outer.expect(derenc.TAG_SEQUENCE)
    if alg != _SIG_ALG_DER[2:]:
        raise ObjectError("unsupported signature algorithm")
    signature, unused = outer.read_bit_string()
    if unused:
        raise ObjectError("signature bits not octet-aligned")
    outer.done()
    inner = derenc.Reader(tbs).enter()
    if inner.read_oid() != expect_type:
        raise ObjectError("unexpected content type")
    content = inner.read_element()
    ski = inner.read_octet_string()
    inner.done()
    if len(ski) != 20:
        raise ObjectError("signer key id must be 20 bytes")
    return content, ski, signature, tbs


def _wrap_unsigned_der(content_type: str, content: bytes) -> bytes:
    return derenc.sequence(derenc.oid(content_type), content)


def _unwrap_unsigned_der(data: bytes, expect_type: str) -> bytes:
    top = derenc.Reader(data)
    outer = top.enter()
    top.done()
    if outer.read_oid() != expect_type:
        raise ObjectError("unexpected content type")
    content = outer.read_element()
    outer.done()
    return content


_ENVELOPE_SCHEMA = {1: WIRE_LEN, 2: WIRE_LEN, 3: WIRE_LEN, 4: WIRE_LEN, 5: WIRE_LEN}


def _wrap_proto_envelope(
    content_type: str,
    content: bytes,
    ee_der: bytes | None,
    signature: bytes,
    ski: bytes | None,
) -> bytes:
    return (
        protowire.string_field(1, content_type)
        + protowire.len_field_present(2, content)
        + (protowire.len_field_present(3, ee_der) if ee_der is not None else b"")
        + protowire.len_field_present(4, signature)
        + (protowire.len_field_present(5, ski) if ski is not None else b"")
    )


def _proto_envelope_tbs(content_type: str, content: bytes, ski: bytes | None) -> bytes:
    return (
        protowire.string_field(1, content_type)
        + protowire.len_field_present(2, content)
        + (protowire.len_field_present(5, ski) if ski is not None else b"")
    )


def _unwrap_proto_envelope(data: bytes, expect_type: str):
    """Returns (content, ee_der or None, signature, ski or None)."""
    reader = protowire.MessageReader(data)
    oid_str = None
    content = ee_der = signature = ski = None
    for field, value in reader.fields_in(_ENVELOPE_SCHEMA):
        if field == 1:
            oid_str = protowire.decode_string(value)
        elif field == 2:
            content = value
        elif field == 3:
            ee_der = value
        elif field == 4:
            signature = value
        else:
            ski = value
    if oid_str != expect_type:
        raise ObjectError(f"unexpected content type {oid_str!r}")
    if content is None or signature is None:
        raise ObjectError("envelope missing content or signature")
    if (ee_der is None) == (ski is None):
        raise ObjectError("envelope must carry either a certificate or a signer key id")
    return content, ee_der, signature, ski


def _peek_proto_envelope(data: bytes, content_type: str) -> bool:
    """True when `data` starts with the envelope's content-type string field."""
    marker = protowire.string_field(1, content_type)
    return data.startswith(marker)


# --------------------------------------------------------------------------
# public codec operations
# --------------------------------------------------------------------------

def encode_roa(
    payload: RoaPayload, variant: CodecVariant, signer: SigningContext | None = None
) -> bytes:
    if (signer is None) != (variant.envelope == UNSIGNED):
        raise ObjectError("signer required exactly when the envelope is signed")
    if variant.envelope == UNSIGNED:
        if variant.encoding == DER:
            return _wrap_unsigned_der(OID_CT_ROA, _encode_roa_content_der(payload, improved=True))
        meta = _encode_meta_proto(OID_CT_ROA, payload.serial, payload.not_before, payload.not_after, None)
        return _encode_roa_message(payload, meta)

    if variant.envelope == DIRECT_SIGNED:
        if variant.encoding == DER:
            content = _encode_roa_content_der(payload, improved=True)
            tbs = _direct_der_tbs(OID_CT_ROA, content, signer.ca_key.key_id)
            return _wrap_direct_der(OID_CT_ROA, content, signer.ca_key.key_id, crypto.sign(signer.ca_key, tbs))
        meta = _encode_meta_proto(OID_CT_ROA, payload.serial, payload.not_before, payload.not_after, None)
        content = _encode_roa_message(payload, meta)
        tbs = _proto_envelope_tbs(OID_CT_ROA, content, signer.ca_key.key_id)
        signature = crypto.sign(signer.ca_key, tbs)
        return _wrap_proto_envelope(OID_CT_ROA, content, None, signature, signer.ca_key.key_id)

    # cms_ee
    ee = _issue_ee_certificate(
        signer,
        serial=payload.serial,
        not_before=payload.not_before,
        not_after=payload.not_after,
        ip_resources=payload.bare_prefixes(),
        as_resources=None,
    )
    if variant.encoding == DER:
        econtent = _encode_roa_content_der(payload, improved=False)
        attrs = _signed_attrs(OID_CT_ROA, econtent, payload.not_before)
        signature = crypto.sign(signer.ee_key, derenc.tlv(derenc.TAG_SET, attrs))
        return _wrap_cms_der(OID_CT_ROA, econtent, ee.der, signer.ee_key.key_id, attrs, signature)
    content = _encode_roa_message(payload, None)
    tbs = _proto_envelope_tbs(OID_CT_ROA, content, None)
    signature = crypto.sign(signer.ee_key, tbs)
    return _wrap_proto_envelope(OID_CT_ROA, content, ee.der, signature, None)


def decode_roa(data: bytes, variant: CodecVariant | None = None) -> DecodedObject:
    if not data:
        raise ObjectError("empty input")
    try:
        decoded = _decode_roa_any(data)
    except (derenc.DerError, protowire.ProtoError) as exc:
        raise ObjectError(f"malformed route authorization: {exc}") from exc
    if variant is not None and (
        decoded.variant.envelope != variant.envelope or decoded.variant.encoding != variant.encoding
    ):
        raise ObjectError(
            f"expected {variant.envelope}/{variant.encoding}, "
            f"found {decoded.variant.envelope}/{decoded.variant.encoding}"
        )
    return decoded


def _decode_roa_any(data: bytes) -> DecodedObject:
    if data[0] == derenc.TAG_SEQUENCE:
        inner_tag = derenc.Reader(data).enter().peek_tag()
        if inner_tag == derenc.TAG_OID and _unsigned_der_probe(data, OID_CT_ROA):
            content = _unwrap_unsigned_der(data, OID_CT_ROA)
            payload = _decode_roa_content_der(content, improved=True)
            return DecodedObject("roa", CodecVariant(UNSIGNED, DER), payload)
        if inner_tag == derenc.TAG_OID:
            econtent, ee_der, attrs, signature, sid = _unwrap_cms_der(data, OID_CT_ROA)
            ee = x509.parse_certificate(ee_der)
            _check_sid(sid, ee)
            payload = _decode_roa_content_der(
                econtent, improved=False, serial=ee.serial, validity=(ee.not_before, ee.not_after)
            )
            return DecodedObject(
                "roa", CodecVariant(CMS_EE, DER), payload,
                ee_der=ee_der, ee_cert=ee, signed_attrs=attrs, signature=signature, ski=ee.ski,
            )
        content, ski, signature, _ = _unwrap_direct_der(data, OID_CT_ROA)
        payload = _decode_roa_content_der(content, improved=True)
        return DecodedObject(
            "roa", CodecVariant(DIRECT_SIGNED, DER), payload, signature=signature, ski=ski
        )
    if _peek_proto_envelope(data, OID_CT_ROA):
        content, ee_der, signature, ski = _unwrap_proto_envelope(data, OID_CT_ROA)
        if ee_der is not None:
            ee = x509.parse_certificate(ee_der)
            payload = _decode_roa_message(
                content, with_meta=False, serial=ee.serial, validity=(ee.not_before, ee.not_after)
            )
            return DecodedObject(
                "roa", CodecVariant(CMS_EE, PROTO3), payload,
                ee_der=ee_der, ee_cert=ee, signature=signature, ski=ee.ski,
            )
        payload = _decode_roa_message(content, with_meta=True)
        return DecodedObject(
            "roa", CodecVariant(DIRECT_SIGNED, PROTO3), payload, signature=signature, ski=ski
        )
    payload = _decode_roa_message(data, with_meta=True)
    return DecodedObject("roa", CodecVariant(UNSIGNED, PROTO3), payload)


def _unsigned_der_probe(data: bytes, content_type: str) -> bool:
    try:
        reader = derenc.Reader(data).enter()
        return reader.read_oid() == content_type and reader.peek_tag() == derenc.TAG_SEQUENCE
    except derenc.DerError:
        return False


def _check_sid(sid: bytes, ee: x509.Certificate) -> None:
    if sid != ee.ski:
        raise ObjectError("signer identifier does not match embedded certificate")


def encode_manifest(
    payload: ManifestPayload, variant: CodecVariant, signer: SigningContext | None = None
) -> bytes:
    if signer is None:
        raise ObjectError("manifests are always signed")
    if variant.envelope == UNSIGNED:
        raise ObjectError("manifests are always signed")
    merged = variant.crl_mode == CRL_MERGED
    if merged != (payload.revoked is not None):
        raise ObjectError("revocation entries present iff the manifest merges the CRL")

    if variant.envelope == DIRECT_SIGNED:
        if variant.encoding == DER:
            content = _encode_mft_content_der(payload)
            tbs = _direct_der_tbs(OID_CT_MFT, content, signer.ca_key.key_id)
            return _wrap_direct_der(OID_CT_MFT, content, signer.ca_key.key_id, crypto.sign(signer.ca_key, tbs))
        meta = _encode_meta_proto(
            OID_CT_MFT, payload.number, payload.this_update, payload.next_update, signer.ca_key.key_id
        )
        tbs = _encode_mft_message(payload, meta, None)
        signature = crypto.sign(signer.ca_key, tbs)
        return _encode_mft_message(payload, meta, signature)

    # cms_ee
    ee = _issue_ee_certificate(
        signer,
        serial=payload.number,
        not_before=payload.this_update,
        not_after=payload.next_update,
        ip_resources=INHERIT,
        as_resources=INHERIT,
    )
    if variant.encoding == DER:
        econtent = _encode_mft_content_der(payload)
        attrs = _signed_attrs(OID_CT_MFT, econtent, payload.this_update)
        signature = crypto.sign(signer.ee_key, derenc.tlv(derenc.TAG_SET, attrs))
        return _wrap_cms_der(OID_CT_MFT, econtent, ee.der, signer.ee_key.key_id, attrs, signature)
    meta = _encode_meta_proto(OID_CT_MFT, payload.number, payload.this_update, payload.next_update, None)
    content = _encode_mft_message(payload, meta, None)
    tbs = _proto_envelope_tbs(OID_CT_MFT, content, None)
    signature = crypto.sign(signer.ee_key, tbs)
    return _wrap_proto_envelope(OID_CT_MFT, content, ee.der, signature, None)


def decode_manifest(data: bytes, variant: CodecVariant | None = None) -> DecodedObject:
    if not data:
        raise ObjectError("empty input")
    try:
        decoded = _decode_manifest_any(data)
    except (derenc.DerError, protowire.ProtoError) as exc:
        raise ObjectError(f"malformed manifest: {exc}") from exc
    if variant is not None and decoded.variant != variant:
        raise ObjectError(
            f"expected {variant.envelope}/{variant.encoding}/{variant.crl_mode}, found "
            f"{decoded.variant.envelope}/{decoded.variant.encoding}/{decoded.variant.crl_mode}"
        )
    return decoded


def _decode_manifest_any(data: bytes) -> DecodedObject:
    if data[0] == derenc.TAG_SEQUENCE:
        inner_tag = derenc.Reader(data).enter().peek_tag()
        if inner_tag == derenc.TAG_OID:
            econtent, ee_der, attrs, signature, sid = _unwrap_cms_der(data, OID_CT_MFT)
            ee = x509.parse_certificate(ee_der)
            _check_sid(sid, ee)
            payload = _decode_mft_content_der(econtent, merged=False)
            return DecodedObject(
                "manifest", CodecVariant(CMS_EE, DER, CRL_STANDALONE), payload,
                ee_der=ee_der, ee_cert=ee, signed_attrs=attrs, signature=signature, ski=ee.ski,
            )
        content, ski, signature, _ = _unwrap_direct_der(data, OID_CT_MFT)
        merged = _der_mft_is_merged(content)
        payload = _decode_mft_content_der(content, merged=merged)
        mode = CRL_MERGED if merged else CRL_STANDALONE
        return DecodedObject(
            "manifest", CodecVariant(DIRECT_SIGNED, DER, mode), payload, signature=signature, ski=ski
        )
    if _peek_proto_envelope(data, OID_CT_MFT):
        content, ee_der, signature, ski = _unwrap_proto_envelope(data, OID_CT_MFT)
        if ee_der is None:
            raise ObjectError("directly signed proto manifests use the manifest message")
        ee = x509.parse_certificate(ee_der)
        payload, meta_ski, _, _ = _decode_mft_message(content, merged=False, expect_signature=False)
        if meta_ski is not None:
            raise ObjectError("enveloped manifest content must not carry a signer key id")
        return DecodedObject(
            "manifest", CodecVariant(CMS_EE, PROTO3, CRL_STANDALONE), payload,
            ee_der=ee_der, ee_cert=ee, signature=signature, ski=ee.ski,
        )
    payload, ski, signature, _ = _decode_mft_message(data, merged=True, expect_signature=True)
    if ski is None:
        raise ObjectError("manifest metadata missing the signer key id")
    return DecodedObject(
        "manifest", CodecVariant(DIRECT_SIGNED, PROTO3, CRL_MERGED), payload,
        signature=signature, ski=ski,
    )


def _der_mft_is_merged(content: bytes) -> bool:
    """A merged manifest has the revocation list after the file list."""
    reader = derenc.Reader(content).enter()
    count = 0
    while not reader.at_end():
        reader.read_tlv()
        count += 1
    return count == 6


def reencode(decoded: DecodedObject) -> bytes:
    """Reassemble the exact wire bytes from a decoded object.

    Signatures and embedded certificates are spliced from the parse, so
    this works without any keys and reproduces the input byte-for-byte
    for every accepted input.
    """
    kind, variant, payload = decoded.kind, decoded.variant, decoded.payload
    if kind == "roa":
        if variant == CodecVariant(UNSIGNED, DER):
            return _wrap_unsigned_der(OID_CT_ROA, _encode_roa_content_der(payload, improved=True))
        if variant == CodecVariant(UNSIGNED, PROTO3):
            meta = _encode_meta_proto(OID_CT_ROA, payload.serial, payload.not_before, payload.not_after, None)
            return _encode_roa_message(payload, meta)
        if variant == CodecVariant(DIRECT_SIGNED, DER):
            content = _encode_roa_content_der(payload, improved=True)
            return _wrap_direct_der(OID_CT_ROA, content, decoded.ski, decoded.signature)
        if variant == CodecVariant(DIRECT_SIGNED, PROTO3):
            meta = _encode_meta_proto(OID_CT_ROA, payload.serial, payload.not_before, payload.not_after, None)
            content = _encode_roa_message(payload, meta)
            return _wrap_proto_envelope(OID_CT_ROA, content, None, decoded.signature, decoded.ski)
        if variant == CodecVariant(CMS_EE, DER):
            econtent = _encode_roa_content_der(payload, improved=False)
            return _wrap_cms_der(
                OID_CT_ROA, econtent, decoded.ee_der, decoded.ski, decoded.signed_attrs, decoded.signature
            )
        content = _encode_roa_message(payload, None)
        return _wrap_proto_envelope(OID_CT_ROA, content, decoded.ee_der, decoded.signature, None)
    if kind == "manifest":
        if variant.encoding == DER and variant.envelope == CMS_EE:
            econtent = _encode_mft_content_der(payload)
            return _wrap_cms_der(
                OID_CT_MFT, econtent, decoded.ee_der, decoded.ski, decoded.signed_attrs, decoded.signature
            )
        if variant.encoding == DER:
            content = _encode_mft_content_der(payload)
            return _wrap_direct_der(OID_CT_MFT, content, decoded.ski, decoded.signature)
        if variant.envelope == CMS_EE:
            meta = _encode_meta_proto(OID_CT_MFT, payload.number, payload.this_update, payload.next_update, None)
            content = _encode_mft_message(payload, meta, None)
            return _wrap_proto_envelope(OID_CT_MFT, content, decoded.ee_der, decoded.signature, None)
        meta = _encode_meta_proto(
            OID_CT_MFT, payload.number, payload.this_update, payload.next_update, decoded.ski
        )
        return _encode_mft_message(payload, meta, decoded.signature)
    raise ObjectError(f"unknown object kind {kind!r}")


# --------------------------------------------------------------------------
# authenticity
# --------------------------------------------------------------------------

def verify_object_authenticity(
    data: bytes,
    variant: CodecVariant | None,
    issuer: x509.Certificate,
    manifest_hash: bytes | None = None,
    *,
    clock: int,
    revoked: frozenset[int] | set[int] = frozenset(),
    issuer_prefixes: tuple[Prefix, ...] | None = None,
    kind: str = "roa",
) -> VerificationResult:
    """Full per-object check: signatures per envelope, hash for unsigned
    objects, validity window, revocation, and prefix containment."""
    try:
        decoded = decode_roa(data, variant) if kind == "roa" else decode_manifest(data, variant)
    except ObjectError as exc:
        return VerificationResult(False, None, f"decode: {exc}")

    envelope = decoded.variant.envelope
    if envelope == UNSIGNED:
        if manifest_hash is None:
            return VerificationResult(False, None, "unsigned object requires a manifest hash", decoded)
        if crypto.sha256(data) != manifest_hash:
            return VerificationResult(False, None, "manifest hash mismatch", decoded)
    elif manifest_hash is not None and crypto.sha256(data) != manifest_hash:
        return VerificationResult(False, None, "manifest hash mismatch", decoded)

    if envelope == CMS_EE:
        ee = decoded.ee_cert
        if ee.aki != issuer.ski:
            return VerificationResult(False, None, "certificate issuer key mismatch", decoded)
        if not crypto.verify(issuer.spki, ee.tbs, ee.signature):
            return VerificationResult(False, None, "embedded certificate signature invalid", decoded)
        if decoded.signed_attrs is not None:
            digest = _attrs_message_digest(decoded.signed_attrs)
            econtent = (
                _encode_roa_content_der(decoded.payload, improved=False)
                if kind == "roa"
                else _encode_mft_content_der(decoded.payload)
            )
            if digest != crypto.sha256(econtent):
                return VerificationResult(False, None, "content digest mismatch", decoded)
            signed = derenc.tlv(derenc.TAG_SET, decoded.signed_attrs)
        else:
            signed = (
                _encode_roa_message(decoded.payload, None)
                if kind == "roa"
                else _encode_mft_message(
                    decoded.payload,
                    _encode_meta_proto(
                        OID_CT_MFT, decoded.payload.number,
                        decoded.payload.this_update, decoded.payload.next_update, None,
                    ),
                    None,
                )
            )
            signed = _proto_envelope_tbs(OID_CT_ROA if kind == "roa" else OID_CT_MFT, signed, None)
        if not crypto.verify(ee.spki, signed, decoded.signature):
            return VerificationResult(False, None, "content signature invalid", decoded)
        if kind == "roa" and ee.ip_resources != INHERIT:
            if not prefixes_covered(decoded.payload.bare_prefixes(), ee.ip_resources):
                return VerificationResult(False, None, "prefixes exceed certificate resources", decoded)
    elif envelope == DIRECT_SIGNED:
        if decoded.ski != issuer.ski:
            return VerificationResult(False, None, "signer key id does not match issuer", decoded)
        if decoded.variant.encoding == DER:
            content = (
                _encode_roa_content_der(decoded.payload, improved=True)
                if kind == "roa"
                else _encode_mft_content_der(decoded.payload)
            )
            tbs = _direct_der_tbs(OID_CT_ROA if kind == "roa" else OID_CT_MFT, content, decoded.ski)
        elif kind == "roa":
            meta = _encode_meta_proto(
                OID_CT_ROA, decoded.payload.serial,
                decoded.payload.not_before, decoded.payload.not_after, None,
            )
            content = _encode_roa_message(decoded.payload, meta)
            tbs = _proto_envelope_tbs(OID_CT_ROA, content, decoded.ski)
        else:
            meta = _encode_meta_proto(
                OID_CT_MFT, decoded.payload.number,
                decoded.payload.this_update, decoded.payload.next_update, decoded.ski,
            )
            tbs = _encode_mft_message(decoded.payload, meta, None)
        if not crypto.verify(issuer.spki, tbs, decoded.signature):
            return VerificationResult(False, None, "signature invalid", decoded)

    payload = decoded.payload
    not_before = payload.not_before if kind == "roa" else payload.this_update
    not_after = payload.not_after if kind == "roa" else payload.next_update
    if clock >= not_after:
        return VerificationResult(False, None, "expired", decoded)
    if clock < not_before:
        return VerificationResult(False, None, "not yet valid", decoded)
    serial = payload.serial if kind == "roa" else payload.number
    if serial in revoked:
        return VerificationResult(False, None, "revoked", decoded)
    if kind == "roa":
        parent = issuer_prefixes
        if parent is None and issuer.ip_resources != INHERIT:
            parent = issuer.ip_resources
        if parent is not None and not prefixes_covered(payload.bare_prefixes(), parent):
            return VerificationResult(False, None, "prefixes exceed issuer resources", decoded)
    return VerificationResult(True, payload, None, decoded)
