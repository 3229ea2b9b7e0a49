"""X.509 subset for the repository trust tree: CA and one-off signing
certificates, revocation lists, and trust-anchor locator files.

The emitted profile is deliberately closed. Certificates carry exactly
the fields this package produces, and the parser rejects anything else,
so a certificate that decodes is always one this profile could have
issued.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass

from . import crypto, derenc
from .resources import (
    INHERIT,
    OID_AS_RESOURCES,
    OID_IP_RESOURCES,
    Prefix,
    asns_covered,
    decode_as_resources,
    decode_ip_resources,
    encode_as_resources,
    encode_ip_resources,
    prefixes_covered,
)

OID_CN = "2.5.4.3"
OID_SERIAL_ATTR = "2.5.4.5"
OID_BASIC_CONSTRAINTS = "2.5.29.19"
OID_SKI = "2.5.29.14"
OID_AKI = "2.5.29.35"
OID_KEY_USAGE = "2.5.29.15"
OID_CRLDP = "2.5.29.31"
OID_CRL_NUMBER = "2.5.29.20"
OID_AIA = "1.3.6.1.5.5.7.1.1"
OID_SIA = "1.3.6.1.5.5.7.1.11"
OID_POLICIES = "2.5.29.32"
OID_POLICY_RPKI = "1.3.6.1.5.5.7.14.2"
OID_ACCESS_CA_ISSUERS = "1.3.6.1.5.5.7.48.2"
OID_ACCESS_CA_REPOSITORY = "1.3.6.1.5.5.7.48.5"
OID_ACCESS_SIGNED_OBJECT = "1.3.6.1.5.5.7.48.11"
OID_ACCESS_NOTIFY = "1.3.6.1.5.5.7.48.13"

_SIG_ALG = derenc.sequence(derenc.oid(crypto.OID_SHA256_WITH_RSA), derenc.null())


class CertificateError(ValueError):
    """Certificate or CRL violates the emitted profile."""


@dataclass(frozen=True)
class Certificate:
    serial: int
    issuer: str
    subject: str
    issuer_name_serial: str | None
    subject_name_serial: str | None
    not_before: int
    not_after: int
    spki: bytes
    is_ca: bool
    ip_resources: tuple[Prefix, ...] | str
    as_resources: tuple[tuple[int, int], ...] | str | None
    sia_repo_uri: str | None
    sia_notification_uri: str | None
    sia_object_uri: str | None
    crldp_uri: str | None
    aia_uri: str | None
    aki: bytes
    ski: bytes
    tbs: bytes
    signature: bytes
    der: bytes

    def self_signed(self) -> bool:
        return (
            self.aki == self.ski
            and self.issuer == self.subject
            and self.issuer_name_serial == self.subject_name_serial
        )


def encode_name(cn: str, name_serial: str | None = None) -> bytes:
    """Subject/issuer name: a CommonName RDN plus an optional serialNumber
    RDN, the shape deployed repositories emit."""
    rdns = [derenc.set_of([derenc.sequence(derenc.oid(OID_CN), derenc.printable_string(cn))])]
    if name_serial is not None:
        rdns.append(
            derenc.set_of(
                [derenc.sequence(derenc.oid(OID_SERIAL_ATTR), derenc.printable_string(name_serial))]
            )
        )
    return derenc.sequence(*rdns)


def decode_name(reader: derenc.Reader) -> tuple[str, str | None]:
    rdns = reader.enter()
    cn = name_serial = None
    while not rdns.at_end():
        rdn = derenc.Reader(rdns.expect(derenc.TAG_SET)).enter()
        attr_oid = rdn.read_oid()
        value = rdn.expect(derenc.TAG_PRINTABLE).decode("ascii")
        rdn.done()
        if attr_oid == OID_CN and cn is None:
            cn = value
        elif attr_oid == OID_SERIAL_ATTR and name_serial is None and cn is not None:
            name_serial = value
        else:
            raise CertificateError("unexpected name attribute")
    rdns.done()
    if cn is None:
        raise CertificateError("name without CommonName")
    return cn, name_serial


def _extension(oid_str: str, value: bytes, critical: bool = False) -> bytes:
    parts = [derenc.oid(oid_str)]
    if critical:
        parts.append(derenc.boolean(True))
    parts.append(derenc.octet_string(value))
    return derenc.sequence(*parts)


def _uri_general_name(uri: str) -> bytes:
    return derenc.tlv(0x86, uri.encode("ascii"))


def _access_description(method_oid: str, uri: str) -> bytes:
    return derenc.sequence(derenc.oid(method_oid), _uri_general_name(uri))


def _key_usage(is_ca: bool) -> bytes:
    if is_ca:
        return derenc.tlv(derenc.TAG_BIT_STRING, b"\x01\x06")  # keyCertSign | cRLSign
    return derenc.tlv(derenc.TAG_BIT_STRING, b"\x07\x80")  # digitalSignature


def build_certificate(
    issuer_key: crypto.KeyPair,
    *,
    serial: int,
    issuer: str,
    subject: str,
    not_before: int,
    not_after: int,
    subject_spki: bytes,
    is_ca: bool,
    ip_resources: tuple[Prefix, ...] | str,
    as_resources: tuple[tuple[int, int], ...] | str | None,
    issuer_name_serial: str | None = None,
    sia_repo_uri: str | None = None,
    sia_notification_uri: str | None = None,
    sia_object_uri: str | None = None,
    crldp_uri: str | None = None,
    aia_uri: str | None = None,
) -> Certificate:
    if serial <= 0:
        raise CertificateError("serial must be positive")
    if not_before >= not_after:
        raise CertificateError("empty validity window")
    if issuer_name_serial is None and issuer == subject:
        issuer_name_serial = str(serial)
    ski = crypto.key_id_from_spki(subject_spki)
    extensions = []
    if is_ca:
        extensions.append(_extension(OID_BASIC_CONSTRAINTS, derenc.sequence(derenc.boolean(True)), critical=True))
    extensions.append(_extension(OID_SKI, derenc.octet_string(ski)))
    extensions.append(
        _extension(OID_AKI, derenc.sequence(derenc.tlv(0x80, issuer_key.key_id)))
    )
    extensions.append(_extension(OID_KEY_USAGE, _key_usage(is_ca), critical=True))
    if crldp_uri:
        point = derenc.sequence(derenc.implicit(0, derenc.implicit(0, _uri_general_name(crldp_uri))))
        extensions.append(_extension(OID_CRLDP, derenc.sequence(point)))
    if aia_uri:
        extensions.append(
            _extension(OID_AIA, derenc.sequence(_access_description(OID_ACCESS_CA_ISSUERS, aia_uri)))
        )
    access = []
    if sia_repo_uri:
        access.append(_access_description(OID_ACCESS_CA_REPOSITORY, sia_repo_uri))
    if sia_notification_uri:
        access.append(_access_description(OID_ACCESS_NOTIFY, sia_notification_uri))
    if sia_object_uri:
        access.append(_access_description(OID_ACCESS_SIGNED_OBJECT, sia_object_uri))
    if access:
        extensions.append(_extension(OID_SIA, derenc.sequence(*access)))
    if not is_ca:
        policy = derenc.sequence(derenc.sequence(derenc.oid(OID_POLICY_RPKI)))
        extensions.append(_extension(OID_POLICIES, policy, critical=True))
    extensions.append(_extension(OID_IP_RESOURCES, encode_ip_resources(ip_resources), critical=True))
    if as_resources is not None:
        extensions.append(_extension(OID_AS_RESOURCES, encode_as_resources(as_resources), critical=True))

    tbs = derenc.sequence(
        derenc.explicit(0, derenc.integer(2)),
        derenc.integer(serial),
        _SIG_ALG,
        encode_name(issuer, issuer_name_serial),
        derenc.sequence(
            derenc.utc_or_generalized_time(not_before),
            derenc.utc_or_generalized_time(not_after),
        ),
        encode_name(subject, str(serial)),
        subject_spki,
        derenc.explicit(3, derenc.sequence(*extensions)),
    )
    signature = crypto.sign(issuer_key, tbs)
    der = derenc.sequence(tbs, _SIG_ALG, derenc.bit_string(signature))
    return parse_certificate(der)


def issue_ca_certificate(
    issuer_key: crypto.KeyPair,
    issuer_cert: Certificate | None,
    **template,
) -> Certificate:
    """Issue a CA certificate; `issuer_cert=None` means self-signed root.

    For non-root issuance the requested resources must sit inside the
    issuer's own delegations.
    """
    if issuer_cert is not None:
        ips = template["ip_resources"]
        asns = template["as_resources"]
        parent_ips = issuer_cert.ip_resources
        parent_asns = issuer_cert.as_resources
        if ips != INHERIT and parent_ips != INHERIT and not prefixes_covered(ips, parent_ips):
            raise CertificateError("requested prefixes exceed issuer resources")
        if (
            asns is not None
            and asns != INHERIT
            and parent_asns is not None
            and parent_asns != INHERIT
            and not asns_covered(asns, parent_asns)
        ):
            raise CertificateError("requested AS numbers exceed issuer resources")
    return build_certificate(issuer_key, is_ca=True, **template)


def _expect_sig_alg(reader: derenc.Reader) -> None:
    alg = reader.enter()
    if alg.read_oid() != crypto.OID_SHA256_WITH_RSA:
        raise CertificateError("unsupported signature algorithm")
    alg.expect(derenc.TAG_NULL)
    alg.done()


def parse_certificate(der: bytes) -> Certificate:
    top = derenc.Reader(der)
    outer = top.enter()
    tbs = outer.read_element()
    _expect_sig_alg(outer)
    signature, unused = outer.read_bit_string()
    if unused:
        raise CertificateError("signature bits not octet-aligned")
    outer.done()
    top.done()

    body = derenc.Reader(tbs).enter()
    version = derenc.Reader(body.expect(0xA0))
    if version.read_integer() != 2:
        raise CertificateError("only X.509 v3 is emitted")
    version.done()
    serial = body.read_integer()
    if serial <= 0:
        raise CertificateError("serial must be positive")
    _expect_sig_alg(body)
    issuer, issuer_name_serial = decode_name(body)
    validity = body.enter()
    not_before = validity.read_time()
    not_after = validity.read_time()
    validity.done()
    if not_before >= not_after:
        raise CertificateError("empty validity window")
    subject, subject_name_serial = decode_name(body)
    spki = body.read_element()
    exts = derenc.Reader(body.expect(0xA3)).enter()
    body.done()

    is_ca = False
    ski = aki = None
    key_usage_ok = False
    ip_resources: tuple[Prefix, ...] | str | None = None
    as_resources: tuple[tuple[int, int], ...] | str | None = None
    sia_repo = sia_notify = sia_object = crldp = aia = None
    seen: set[str] = set()
    while not exts.at_end():
        ext = exts.enter()
        ext_oid = ext.read_oid()
        if ext_oid in seen:
            raise CertificateError(f"duplicate extension {ext_oid}")
        seen.add(ext_oid)
        critical = False
        if ext.peek_tag() == derenc.TAG_BOOLEAN:
            critical = ext.read_boolean()
        value = ext.read_octet_string()
        ext.done()
        inner = derenc.Reader(value)
        if ext_oid == OID_BASIC_CONSTRAINTS:
            bc = inner.enter()
            is_ca = bc.read_boolean()
            bc.done()
        elif ext_oid == OID_SKI:
            ski = inner.read_octet_string()
        elif ext_oid == OID_AKI:
            aki_seq = inner.enter()
            aki = aki_seq.expect(0x80)
            aki_seq.done()
        elif ext_oid == OID_KEY_USAGE:
            inner.read_bit_string()
            key_usage_ok = critical
        elif ext_oid == OID_CRLDP:
            points = inner.enter()
            dp = points.enter()
            points.done()
            dpn = derenc.Reader(derenc.Reader(dp.expect(0xA0)).expect(0xA0))
            dp.done()
            crldp = dpn.expect(0x86).decode("ascii")
            dpn.done()
        elif ext_oid == OID_AIA:
            aia = _single_access(inner, OID_ACCESS_CA_ISSUERS)
        elif ext_oid == OID_SIA:
            sia_repo, sia_notify, sia_object = _parse_sia(inner)
        elif ext_oid == OID_POLICIES:
            policies = inner.enter()
            policy = policies.enter()
            policies.done()
            if policy.read_oid() != OID_POLICY_RPKI:
                raise CertificateError("unexpected certificate policy")
            policy.done()
        elif ext_oid == OID_IP_RESOURCES:
            ip_resources = decode_ip_resources(value)
            inner = derenc.Reader(b"")
        elif ext_oid == OID_AS_RESOURCES:
            as_resources = decode_as_resources(value)
            inner = derenc.Reader(b"")
        else:
            raise CertificateError(f"unknown extension {ext_oid}")
        inner.done()
    exts.done()

    if ski is None or aki is None or not key_usage_ok:
        raise CertificateError("missing required extension")
    if ip_resources is None:
        raise CertificateError("missing address delegation extension")
    if ski != crypto.key_id_from_spki(spki):
        raise CertificateError("SKI does not match public key")
    return Certificate(
        serial=serial,
        issuer=issuer,
        subject=subject,
        issuer_name_serial=issuer_name_serial,
        subject_name_serial=subject_name_serial,
        not_before=not_before,
        not_after=not_after,
        spki=spki,
        is_ca=is_ca,
        ip_resources=ip_resources,
        as_resources=as_resources,
        sia_repo_uri=sia_repo,
        sia_notification_uri=sia_notify,
        sia_object_uri=sia_object,
        crldp_uri=crldp,
        aia_uri=aia,
        aki=aki,
        ski=ski,
        tbs=tbs,
        signature=signature,
        der=der,
    )


def _single_access(reader: derenc.Reader, expect_method: str) -> str:
    seq = reader.enter()
    desc = seq.enter()
    seq.done()
    if desc.read_oid() != expect_method:
        raise CertificateError("unexpected access method")
    uri = desc.expect(0x86).decode("ascii")
    desc.done()
    return uri


def _parse_sia(reader: derenc.Reader) -> tuple[str | None, str | None, str | None]:
    repo = notify = obj = None
    seq = reader.enter()
    while not seq.at_end():
        desc = seq.enter()
        method = desc.read_oid()
        uri = desc.expect(0x86).decode("ascii")
        desc.done()
        if method == OID_ACCESS_CA_REPOSITORY:
            repo = uri
        elif method == OID_ACCESS_NOTIFY:
            notify = uri
        elif method == OID_ACCESS_SIGNED_OBJECT:
            obj = uri
        else:
            raise CertificateError(f"unknown access method {method}")
    seq.done()
    return repo, notify, obj


def verify_certificate(cert: Certificate, issuer_spki: bytes) -> bool:
    return crypto.verify(issuer_spki, cert.tbs, cert.signature)


@dataclass(frozen=True)
class RevocationList:
    issuer: str
    issuer_name_serial: str | None
    number: int
    this_update: int
    next_update: int
    revoked: tuple[tuple[int, int], ...]  # (serial, revocation time)
    aki: bytes
    tbs: bytes
    signature: bytes
    der: bytes


def build_crl(
    issuer_key: crypto.KeyPair,
    *,
    issuer: str,
    number: int,
    this_update: int,
    next_update: int,
    revoked: tuple[tuple[int, int], ...],
    issuer_name_serial: str | None = None,
) -> bytes:
    if len({serial for serial, _ in revoked}) != len(revoked):
        raise CertificateError("duplicate revoked serial")
    parts = [
        derenc.integer(1),
        _SIG_ALG,
        encode_name(issuer, issuer_name_serial),
        derenc.utc_or_generalized_time(this_update),
        derenc.utc_or_generalized_time(next_update),
    ]
    if revoked:
        entries = [
            derenc.sequence(derenc.integer(serial), derenc.utc_or_generalized_time(when))
            for serial, when in sorted(revoked)
        ]
        parts.append(derenc.sequence(*entries))
    extensions = derenc.sequence(
        _extension(OID_AKI, derenc.sequence(derenc.tlv(0x80, issuer_key.key_id))),
        _extension(OID_CRL_NUMBER, derenc.integer(number)),
    )
    parts.append(derenc.explicit(0, extensions))
    tbs = derenc.sequence(*parts)
    signature = crypto.sign(issuer_key, tbs)
    return derenc.sequence(tbs, _SIG_ALG, derenc.bit_string(signature))


def parse_crl(der: bytes) -> RevocationList:
    top = derenc.Reader(der)
    outer = top.enter()
    tbs = outer.read_element()
    _expect_sig_alg(outer)
    signature, unused = outer.read_bit_string()
    if unused:
        raise CertificateError("signature bits not octet-aligned")
    outer.done()
    top.done()

    body = derenc.Reader(tbs).enter()
    if body.read_integer() != 1:
        raise CertificateError("only CRL v2 is emitted")
    _expect_sig_alg(body)
    issuer, issuer_name_serial = decode_name(body)
    this_update = body.read_time()
    next_update = body.read_time()
    revoked: list[tuple[int, int]] = []
    if body.peek_tag() == derenc.TAG_SEQUENCE:
        entries = body.enter()
        while not entries.at_end():
            entry = entries.enter()
            revoked.append((entry.read_integer(), entry.read_time()))
            entry.done()
        entries.done()
        if not revoked:
            raise CertificateError("empty revokedCertificates must be omitted")
    exts = derenc.Reader(body.expect(0xA0)).enter()
    body.done()
    aki = number = None
    while not exts.at_end():
        ext = exts.enter()
        ext_oid = ext.read_oid()
        value = derenc.Reader(ext.read_octet_string())
        ext.done()
        if ext_oid == OID_AKI:
            seq = value.enter()
            aki = seq.expect(0x80)
            seq.done()
        elif ext_oid == OID_CRL_NUMBER:
            number = value.read_integer()
        else:
            raise CertificateError(f"unknown CRL extension {ext_oid}")
        value.done()
    exts.done()
    if aki is None or number is None:
        raise CertificateError("missing CRL extension")
    if len({serial for serial, _ in revoked}) != len(revoked):
        raise CertificateError("duplicate revoked serial")
    return RevocationList(
        issuer=issuer,
        issuer_name_serial=issuer_name_serial,
        number=number,
        this_update=this_update,
        next_update=next_update,
        revoked=tuple(revoked),
        aki=aki,
        tbs=tbs,
        signature=signature,
        der=der,
    )


def verify_crl(crl: RevocationList, issuer_spki: bytes) -> bool:
    return crypto.verify(issuer_spki, crl.tbs, crl.signature)


@dataclass(frozen=True)
class TrustAnchorLocator:
    notification_uri: str
    spki: bytes


def encode_tal(notification_uri: str, spki: bytes) -> bytes:
    if "://" not in notification_uri:
        raise CertificateError("notification URI must be absolute")
    b64 = base64.b64encode(spki).decode("ascii")
    wrapped = "\n".join(b64[i : i + 64] for i in range(0, len(b64), 64))
    return f"{notification_uri}\n\n{wrapped}\n".encode("ascii")


def parse_tal(data: bytes) -> TrustAnchorLocator:
    text = data.decode("ascii")
    lines = text.splitlines()
    if len(lines) < 3 or lines[1].strip():
        raise CertificateError("malformed TAL")
    uri = lines[0].strip()
    if "://" not in uri:
        raise CertificateError("notification URI must be absolute")
    b64 = "".join(line.strip() for line in lines[2:])
    if not re.fullmatch(r"[A-Za-z0-9+/=]+", b64):
        raise CertificateError("malformed TAL key")
    spki = base64.b64decode(b64, validate=True)
    crypto.public_numbers_from_spki(spki)
    return TrustAnchorLocator(uri, spki)
