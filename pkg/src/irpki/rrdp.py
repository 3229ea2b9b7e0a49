"""Repository delta protocol files: notification, snapshot, delta.

Three serializations:

  legacy_xml      RFC 8182 shape: flat `<publish uri="...">` entries with
                  absolute object URIs and base64 content
  improved_xml    objects grouped under one `<ca repo="...">` element per
                  publication point; entries carry only the file name
  improved_proto  proto3 messages mirroring the grouped layout; notification
                  references are relative to the notification's directory

XML handling is strict: document type declarations, entity definitions,
and processing instructions are rejected before parsing, encoders never
emit inter-element whitespace, and base64 is unwrapped.
"""

from __future__ import annotations

import base64
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace

from . import protowire
from .crypto import sha256
from .protowire import WIRE_LEN, WIRE_VARINT

XMLNS = "http://www.ripe.net/rpki/rrdp"

LEGACY_XML = "legacy_xml"
IMPROVED_XML = "improved_xml"
IMPROVED_PROTO = "improved_proto"
FORMATS = (LEGACY_XML, IMPROVED_XML, IMPROVED_PROTO)

_SESSION_RE = re.compile(r"\A[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}\Z")
_NAME_RE = re.compile(r"\A[A-Za-z0-9_-]+\.[a-z]{3,4}\Z")
_URI_RE = re.compile(r"\A[A-Za-z0-9._~:/#@!$&'()*+,;=%-]+\Z")


class RrdpError(ValueError):
    """Malformed repository file."""


class DeltaError(ValueError):
    """Delta cannot be applied; the fetcher must fall back to a snapshot."""


@dataclass(frozen=True)
class NotificationFile:
    session_id: str
    serial: int
    snapshot_ref: tuple[str, bytes]  # (uri, sha256)
    delta_refs: tuple[tuple[str, bytes, int], ...]  # (uri, sha256, serial), descending


@dataclass(frozen=True)
class CaContent:
    repo_uri: str
    entries: tuple[tuple[str, bytes], ...]  # (name, object bytes)


@dataclass(frozen=True)
class RepositorySnapshot:
    session_id: str
    serial: int
    cas: tuple[CaContent, ...]

    def as_set(self) -> frozenset[tuple[str, str, bytes]]:
        return frozenset(
            (ca.repo_uri, name, content) for ca in self.cas for name, content in ca.entries
        )


@dataclass(frozen=True)
class DeltaCa:
    repo_uri: str
    modified: tuple[tuple[str, bytes | None, bytes], ...]  # (name, old hash | None, content)
    withdrawn: tuple[tuple[str, bytes], ...]  # (name, hash of removed object)


@dataclass(frozen=True)
class DeltaFile:
    session_id: str
    serial: int
    cas: tuple[DeltaCa, ...]


def _check_session(session_id: str) -> None:
    if not _SESSION_RE.match(session_id):
        raise RrdpError(f"not a session UUID: {session_id!r}")


def _check_name(name: str) -> None:
    if not _NAME_RE.match(name):
        raise RrdpError(f"unsafe object name: {name!r}")


def _check_uri(uri: str) -> None:
    if not _URI_RE.match(uri):
        raise RrdpError(f"unsafe URI: {uri!r}")


def _check_hash(digest: bytes) -> None:
    if len(digest) != 32:
        raise RrdpError("hashes must be 32 bytes")


def validate_snapshot(snapshot: RepositorySnapshot) -> None:
    _check_session(snapshot.session_id)
    seen_repos: set[str] = set()
    for ca in snapshot.cas:
        _check_uri(ca.repo_uri)
        if ca.repo_uri in seen_repos:
            raise RrdpError(f"repository listed twice: {ca.repo_uri}")
        seen_repos.add(ca.repo_uri)
        names = [name for name, _ in ca.entries]
        if len(set(names)) != len(names):
            raise RrdpError(f"duplicate object name under {ca.repo_uri}")
        for name in names:
            _check_name(name)


def validate_delta(delta: DeltaFile) -> None:
    _check_session(delta.session_id)
    seen_repos: set[str] = set()
    for ca in delta.cas:
        _check_uri(ca.repo_uri)
        if ca.repo_uri in seen_repos:
            raise RrdpError(f"repository listed twice: {ca.repo_uri}")
        seen_repos.add(ca.repo_uri)
        names = [name for name, _, _ in ca.modified] + [name for name, _ in ca.withdrawn]
        if len(set(names)) != len(names):
            raise RrdpError(f"object named twice in one delta under {ca.repo_uri}")
        for name in names:
            _check_name(name)
        for _, digest, _ in ca.modified:
            if digest is not None:
                _check_hash(digest)
        for _, digest in ca.withdrawn:
            _check_hash(digest)


def validate_notification(notification: NotificationFile) -> None:
    _check_session(notification.session_id)
    _check_uri(notification.snapshot_ref[0])
    _check_hash(notification.snapshot_ref[1])
    expected = notification.serial
    for uri, digest, serial in notification.delta_refs:
        _check_uri(uri)
        _check_hash(digest)
        if serial != expected:
            raise RrdpError("delta references must descend contiguously from the serial")
        expected -= 1


# --------------------------------------------------------------------------
# XML
# --------------------------------------------------------------------------

_XML_HEADER = '<?xml version="1.0" encoding="UTF-8"?>'


def _b64(content: bytes) -> str:
    return base64.b64encode(content).decode("ascii")


def _strict_xml_root(data: bytes) -> ET.Element:
    if b"<!DOCTYPE" in data or b"<!ENTITY" in data:
        raise RrdpError("document type declarations are rejected")
    decl_end = 0
    if data.startswith(b"<?xml"):
        decl_end = data.find(b"?>")
        if decl_end < 0:
            raise RrdpError("unterminated XML declaration")
        decl_end += 2
    if b"<?" in data[decl_end:]:
        raise RrdpError("processing instructions are rejected")
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise RrdpError(f"XML parse error: {exc}") from exc


def _tag(element: ET.Element, expected: str) -> None:
    if element.tag != f"{{{XMLNS}}}{expected}":
        raise RrdpError(f"expected <{expected}>, found {element.tag}")


def _attrs(element: ET.Element, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict:
    keys = set(element.attrib)
    missing = set(required) - keys
    extra = keys - set(required) - set(optional)
    if missing or extra:
        raise RrdpError(f"bad attributes on <{element.tag}>: missing {missing or '{}'}, extra {extra or '{}'}")
    return element.attrib


def _header_attrs(element: ET.Element, kind: str) -> tuple[str, int]:
    attrs = _attrs(element, ("version", "session_id", "serial"))
    if attrs["version"] != "1":
        raise RrdpError(f"unsupported {kind} version {attrs['version']!r}")
    session = attrs["session_id"]
    _check_session(session)
    serial = int(attrs["serial"])
    if serial < 0 or serial >= 1 << 64:
        raise RrdpError("serial out of range")
    return session, serial


def _parse_hex_hash(text: str) -> bytes:
    if not re.fullmatch(r"[0-9a-f]{64}", text):
        raise RrdpError("hashes must be 64 lowercase hex digits")
    return bytes.fromhex(text)


def _no_text(element: ET.Element) -> None:
    if (element.text or "").strip() or (element.tail or "").strip():
        raise RrdpError("unexpected character data")


def _element_text(element: ET.Element) -> bytes:
    if len(element) != 0:
        raise RrdpError("unexpected child elements")
    try:
        return base64.b64decode((element.text or "").strip().encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError) as exc:
        raise RrdpError(f"invalid base64 content: {exc}") from exc


def _split_object_uri(uri: str) -> tuple[str, str]:
    head, _, name = uri.rpartition("/")
    if not head or not name:
        raise RrdpError(f"object URI without a directory: {uri!r}")
    return head + "/", name


def encode_notification(notification: NotificationFile, fmt: str) -> bytes:
    validate_notification(notification)
    if fmt == IMPROVED_PROTO:
        snap_uri, snap_hash = notification.snapshot_ref
        body = (
            protowire.varint_field(1, notification.serial)
            + protowire.string_field(2, notification.session_id)
            + protowire.len_field_present(
                3, protowire.string_field(1, snap_uri) + protowire.len_field_present(2, snap_hash)
            )
        )
        for uri, digest, serial in notification.delta_refs:
            body += protowire.len_field_present(
                4,
                protowire.string_field(1, uri)
                + protowire.len_field_present(2, digest)
                + protowire.varint_field(3, serial),
            )
        return body
    if fmt not in (LEGACY_XML, IMPROVED_XML):
        raise RrdpError(f"unknown format {fmt!r}")
    snap_uri, snap_hash = notification.snapshot_ref
    parts = [
        _XML_HEADER,
        f'<notification xmlns="{XMLNS}" version="1" '
        f'session_id="{notification.session_id}" serial="{notification.serial}">',
        f'<snapshot uri="{snap_uri}" hash="{snap_hash.hex()}"/>',
    ]
    for uri, digest, serial in notification.delta_refs:
        parts.append(f'<delta serial="{serial}" uri="{uri}" hash="{digest.hex()}"/>')
    parts.append("</notification>")
    return "".join(parts).encode("ascii")


def decode_notification(data: bytes, fmt: str) -> NotificationFile:
    if fmt == IMPROVED_PROTO:
        reader = protowire.MessageReader(data)
        serial = 0
        session = ""
        snapshot_ref = None
        deltas: list[tuple[str, bytes, int]] = []
        schema = {1: WIRE_VARINT, 2: WIRE_LEN, 3: WIRE_LEN, 4: WIRE_LEN}
        for field, value in reader.fields_in(schema, repeated=frozenset({4})):
            if field == 1:
                serial = value
            elif field == 2:
                session = protowire.decode_string(value)
            elif field == 3:
                snapshot_ref = _decode_ref(value, with_serial=False)
            else:
                deltas.append(_decode_ref(value, with_serial=True))
        if snapshot_ref is None:
            raise RrdpError("notification missing snapshot reference")
        notification = NotificationFile(session, serial, snapshot_ref[:2], tuple(deltas))
    elif fmt in (LEGACY_XML, IMPROVED_XML):
        root = _strict_xml_root(data)
        _tag(root, "notification")
        session, serial = _header_attrs(root, "notification")
        _no_text(root)
        snapshot_ref = None
        deltas = []
        for child in root:
            _no_text(child)
            if len(child) != 0 or (child.text or "").strip():
                raise RrdpError("unexpected content in reference element")
            if child.tag == f"{{{XMLNS}}}snapshot":
                if snapshot_ref is not None:
                    raise RrdpError("multiple snapshot references")
                attrs = _attrs(child, ("uri", "hash"))
                snapshot_ref = (attrs["uri"], _parse_hex_hash(attrs["hash"]))
            elif child.tag == f"{{{XMLNS}}}delta":
                attrs = _attrs(child, ("serial", "uri", "hash"))
                deltas.append((attrs["uri"], _parse_hex_hash(attrs["hash"]), int(attrs["serial"])))
            else:
                raise RrdpError(f"unexpected element {child.tag}")
        if snapshot_ref is None:
            raise RrdpError("notification missing snapshot reference")
        notification = NotificationFile(session, serial, snapshot_ref, tuple(deltas))
    else:
        raise RrdpError(f"unknown format {fmt!r}")
    validate_notification(notification)
    return notification


def _decode_ref(raw: bytes, with_serial: bool) -> tuple[str, bytes, int]:
    reader = protowire.MessageReader(raw)
    uri = ""
    digest = b""
    serial = 0
    schema = {1: WIRE_LEN, 2: WIRE_LEN}
    if with_serial:
        schema[3] = WIRE_VARINT
    for field, value in reader.fields_in(schema):
        if field == 1:
            uri = protowire.decode_string(value)
        elif field == 2:
            digest = value
        else:
            serial = value
    return uri, digest, serial


def encode_snapshot(snapshot: RepositorySnapshot, fmt: str) -> bytes:
    validate_snapshot(snapshot)
    if fmt == IMPROVED_PROTO:
        body = protowire.varint_field(1, snapshot.serial) + protowire.string_field(
            2, snapshot.session_id
        )
        for ca in snapshot.cas:
            entries = b"".join(
                protowire.len_field_present(
                    2, protowire.string_field(1, name) + protowire.len_field(2, content)
                )
                for name, content in ca.entries
            )
            body += protowire.len_field_present(3, protowire.string_field(1, ca.repo_uri) + entries)
        return body
    if fmt == LEGACY_XML:
        parts = [
            _XML_HEADER,
            f'<snapshot xmlns="{XMLNS}" version="1" '
            f'session_id="{snapshot.session_id}" serial="{snapshot.serial}">',
        ]
        for ca in snapshot.cas:
            for name, content in ca.entries:
                parts.append(f'<publish uri="{ca.repo_uri}{name}">{_b64(content)}</publish>')
        parts.append("</snapshot>")
        return "".join(parts).encode("ascii")
    if fmt == IMPROVED_XML:
        parts = [
            _XML_HEADER,
            f'<snapshot xmlns="{XMLNS}" version="1" '
            f'session_id="{snapshot.session_id}" serial="{snapshot.serial}">',
        ]
        for ca in snapshot.cas:
            parts.append(f'<ca repo="{ca.repo_uri}">')
            for name, content in ca.entries:
                parts.append(f'<publish name="{name}">{_b64(content)}</publish>')
            parts.append("</ca>")
        parts.append("</snapshot>")
        return "".join(parts).encode("ascii")
    raise RrdpError(f"unknown format {fmt!r}")


def decode_snapshot(data: bytes, fmt: str) -> RepositorySnapshot:
    if fmt == IMPROVED_PROTO:
        reader = protowire.MessageReader(data)
        serial = 0
        session = ""
        cas: list[CaContent] = []
        for field, value in reader.fields_in(
            {1: WIRE_VARINT, 2: WIRE_LEN, 3: WIRE_LEN}, repeated=frozenset({3})
        ):
            if field == 1:
                serial = value
            elif field == 2:
                session = protowire.decode_string(value)
            else:
                cas.append(_decode_proto_ca(value))
        snapshot = RepositorySnapshot(session, serial, tuple(cas))
    elif fmt == LEGACY_XML:
        root = _strict_xml_root(data)
        _tag(root, "snapshot")
        session, serial = _header_attrs(root, "snapshot")
        _no_text(root)
        order: list[str] = []
        grouped: dict[str, list[tuple[str, bytes]]] = {}
        for child in root:
            _tag(child, "publish")
            if (child.tail or "").strip():
                raise RrdpError("unexpected character data")
            attrs = _attrs(child, ("uri",))
            repo_uri, name = _split_object_uri(attrs["uri"])
            if repo_uri not in grouped:
                order.append(repo_uri)
                grouped[repo_uri] = []
            grouped[repo_uri].append((name, _element_text(child)))
        snapshot = RepositorySnapshot(
            session, serial, tuple(CaContent(repo, tuple(grouped[repo])) for repo in order)
        )
    elif fmt == IMPROVED_XML:
        root = _strict_xml_root(data)
        _tag(root, "snapshot")
        session, serial = _header_attrs(root, "snapshot")
        _no_text(root)
        cas = []
        for ca_el in root:
            _tag(ca_el, "ca")
            if (ca_el.text or "").strip() or (ca_el.tail or "").strip():
                raise RrdpError("unexpected character data")
            attrs = _attrs(ca_el, ("repo",))
            entries = []
            for child in ca_el:
                _tag(child, "publish")
                if (child.tail or "").strip():
                    raise RrdpError("unexpected character data")
                entry_attrs = _attrs(child, ("name",))
                entries.append((entry_attrs["name"], _element_text(child)))
            cas.append(CaContent(attrs["repo"], tuple(entries)))
        snapshot = RepositorySnapshot(session, serial, tuple(cas))
    else:
        raise RrdpError(f"unknown format {fmt!r}")
    validate_snapshot(snapshot)
    return snapshot


def _decode_proto_ca(raw: bytes) -> CaContent:
    reader = protowire.MessageReader(raw)
    repo = ""
    entries: list[tuple[str, bytes]] = []
    for field, value in reader.fields_in({1: WIRE_LEN, 2: WIRE_LEN}, repeated=frozenset({2})):
        if field == 1:
            repo = protowire.decode_string(value)
        else:
            entry = protowire.MessageReader(value)
            name = ""
            content = b""
            for efield, evalue in entry.fields_in({1: WIRE_LEN, 2: WIRE_LEN}):
                if efield == 1:
                    name = protowire.decode_string(evalue)
                else:
                    content = evalue
            entries.append((name, content))
    return CaContent(repo, tuple(entries))


def encode_delta(delta: DeltaFile, fmt: str) -> bytes:
    validate_delta(delta)
    if fmt == IMPROVED_PROTO:
        body = protowire.varint_field(1, delta.serial) + protowire.string_field(2, delta.session_id)
        for ca in delta.cas:
            ca_body = protowire.string_field(1, ca.repo_uri)
            for name, digest, content in ca.modified:
                entry = protowire.string_field(1, name)
                if digest is not None:
                    entry += protowire.len_field_present(2, digest)
                entry += protowire.len_field_present(3, content)
                ca_body += protowire.len_field_present(2, entry)
            for name, digest in ca.withdrawn:
                entry = protowire.string_field(1, name) + protowire.len_field_present(2, digest)
                ca_body += protowire.len_field_present(3, entry)
            body += protowire.len_field_present(3, ca_body)
        return body
    if fmt == LEGACY_XML:
        parts = [
            _XML_HEADER,
            f'<delta xmlns="{XMLNS}" version="1" '
            f'session_id="{delta.session_id}" serial="{delta.serial}">',
        ]
        for ca in delta.cas:
            for name, digest, content in ca.modified:
                hash_attr = f' hash="{digest.hex()}"' if digest is not None else ""
                parts.append(f'<publish uri="{ca.repo_uri}{name}"{hash_attr}>{_b64(content)}</publish>')
            for name, digest in ca.withdrawn:
                parts.append(f'<withdraw uri="{ca.repo_uri}{name}" hash="{digest.hex()}"/>')
        parts.append("</delta>")
        return "".join(parts).encode("ascii")
    if fmt == IMPROVED_XML:
        parts = [
            _XML_HEADER,
            f'<delta xmlns="{XMLNS}" version="1" '
            f'session_id="{delta.session_id}" serial="{delta.serial}">',
        ]
        for ca in delta.cas:
            parts.append(f'<ca repo="{ca.repo_uri}">')
            for name, digest, content in ca.modified:
                hash_attr = f' hash="{digest.hex()}"' if digest is not None else ""
                parts.append(f'<publish name="{name}"{hash_attr}>{_b64(content)}</publish>')
            for name, digest in ca.withdrawn:
                parts.append(f'<withdraw name="{name}" hash="{digest.hex()}"/>')
            parts.append("</ca>")
        parts.append("</delta>")
        return "".join(parts).encode("ascii")
    raise RrdpError(f"unknown format {fmt!r}")


def decode_delta(data: bytes, fmt: str) -> DeltaFile:
    if fmt == IMPROVED_PROTO:
        reader = protowire.MessageReader(data)
        serial = 0
        session = ""
        cas: list[DeltaCa] = []
        for field, value in reader.fields_in(
            {1: WIRE_VARINT, 2: WIRE_LEN, 3: WIRE_LEN}, repeated=frozenset({3})
        ):
            if field == 1:
                serial = value
            elif field == 2:
                session = protowire.decode_string(value)
            else:
                cas.append(_decode_proto_delta_ca(value))
        delta = DeltaFile(session, serial, tuple(cas))
    elif fmt == LEGACY_XML:
        root = _strict_xml_root(data)
        _tag(root, "delta")
        session, serial = _header_attrs(root, "delta")
        _no_text(root)
        order: list[str] = []
        modified: dict[str, list] = {}
        withdrawn: dict[str, list] = {}
        for child in root:
            if (child.tail or "").strip():
                raise RrdpError("unexpected character data")
            if child.tag == f"{{{XMLNS}}}publish":
                attrs = _attrs(child, ("uri",), optional=("hash",))
                repo_uri, name = _split_object_uri(attrs["uri"])
                digest = _parse_hex_hash(attrs["hash"]) if "hash" in attrs else None
                if repo_uri not in modified and repo_uri not in withdrawn:
                    order.append(repo_uri)
                modified.setdefault(repo_uri, []).append((name, digest, _element_text(child)))
            elif child.tag == f"{{{XMLNS}}}withdraw":
                if len(child) != 0 or (child.text or "").strip():
                    raise RrdpError("withdraw elements carry no content")
                attrs = _attrs(child, ("uri", "hash"))
                repo_uri, name = _split_object_uri(attrs["uri"])
                if repo_uri not in modified and repo_uri not in withdrawn:
                    order.append(repo_uri)
                withdrawn.setdefault(repo_uri, []).append((name, _parse_hex_hash(attrs["hash"])))
            else:
                raise RrdpError(f"unexpected element {child.tag}")
        delta = DeltaFile(
            session,
            serial,
            tuple(
                DeltaCa(repo, tuple(modified.get(repo, ())), tuple(withdrawn.get(repo, ())))
                for repo in order
            ),
        )
    elif fmt == IMPROVED_XML:
        root = _strict_xml_root(data)
        _tag(root, "delta")
        session, serial = _header_attrs(root, "delta")
        _no_text(root)
        cas = []
        for ca_el in root:
            _tag(ca_el, "ca")
            if (ca_el.text or "").strip() or (ca_el.tail or "").strip():
                raise RrdpError("unexpected character data")
            attrs = _attrs(ca_el, ("repo",))
            mods: list = []
            wdraws: list = []
            for child in ca_el:
                if (child.tail or "").strip():
                    raise RrdpError("unexpected character data")
                if child.tag == f"{{{XMLNS}}}publish":
                    entry_attrs = _attrs(child, ("name",), optional=("hash",))
                    digest = _parse_hex_hash(entry_attrs["hash"]) if "hash" in entry_attrs else None
                    mods.append((entry_attrs["name"], digest, _element_text(child)))
                elif child.tag == f"{{{XMLNS}}}withdraw":
                    if len(child) != 0 or (child.text or "").strip():
                        raise RrdpError("withdraw elements carry no content")
                    entry_attrs = _attrs(child, ("name", "hash"))
                    wdraws.append((entry_attrs["name"], _parse_hex_hash(entry_attrs["hash"])))
                else:
                    raise RrdpError(f"unexpected element {child.tag}")
            cas.append(DeltaCa(attrs["repo"], tuple(mods), tuple(wdraws)))
        delta = DeltaFile(session, serial, tuple(cas))
    else:
        raise RrdpError(f"unknown format {fmt!r}")
    validate_delta(delta)
    return delta


def _decode_proto_delta_ca(raw: bytes) -> DeltaCa:
    reader = protowire.MessageReader(raw)
    repo = ""
    modified: list = []
    withdrawn: list = []
    for field, value in reader.fields_in(
        {1: WIRE_LEN, 2: WIRE_LEN, 3: WIRE_LEN}, repeated=frozenset({2, 3})
    ):
        if field == 1:
            repo = protowire.decode_string(value)
            continue
        entry = protowire.MessageReader(value)
        name = ""
        digest = content = None
        for efield, evalue in entry.fields_in({1: WIRE_LEN, 2: WIRE_LEN, 3: WIRE_LEN}):
            if efield == 1:
                name = protowire.decode_string(evalue)
            elif efield == 2:
                digest = evalue
            else:
                content = evalue
        if field == 2:
            if content is None:
                raise RrdpError("modified entry without content")
            modified.append((name, digest, content))
        else:
            if digest is None or content is not None:
                raise RrdpError("withdrawn entries carry a hash and no content")
            withdrawn.append((name, digest))
    return DeltaCa(repo, tuple(modified), tuple(withdrawn))


def apply_delta(state: RepositorySnapshot, delta: DeltaFile) -> RepositorySnapshot:
    """Advance snapshot state by one delta, enforcing session, serial
    contiguity, and the replace/withdraw hash preconditions. Any violation
    raises DeltaError, the signal to re-fetch the full snapshot."""
    if delta.session_id != state.session_id:
        raise DeltaError("session mismatch")
    if delta.serial != state.serial + 1:
        raise DeltaError(f"serial gap: state {state.serial}, delta {delta.serial}")
    content: dict[str, dict[str, bytes]] = {
        ca.repo_uri: dict(ca.entries) for ca in state.cas
    }
    order = [ca.repo_uri for ca in state.cas]
    for ca in delta.cas:
        if ca.repo_uri not in content:
            content[ca.repo_uri] = {}
            order.append(ca.repo_uri)
        objects = content[ca.repo_uri]
        for name, digest in ca.withdrawn:
            if name not in objects:
                raise DeltaError(f"withdrawal of unknown object {name}")
            if sha256(objects[name]) != digest:
                raise DeltaError(f"withdrawal hash mismatch for {name}")
            del objects[name]
        for name, digest, new_content in ca.modified:
            if digest is None:
                if name in objects:
                    raise DeltaError(f"publish without hash would overwrite {name}")
            else:
                if name not in objects:
                    raise DeltaError(f"replacement of unknown object {name}")
                if sha256(objects[name]) != digest:
                    raise DeltaError(f"replacement hash mismatch for {name}")
            objects[name] = new_content
    return RepositorySnapshot(
        state.session_id,
        delta.serial,
        tuple(CaContent(repo, tuple(content[repo].items())) for repo in order),
    )
