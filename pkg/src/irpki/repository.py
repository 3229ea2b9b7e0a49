"""Scenario-driven repository generation, legacy-to-lean conversion,
incremental publication (deltas), and tampering for tests.

A scenario fixes CA count, payload counts, one named variant bundle
("ablation"), validity spans, and a seed. Generation is a pure function
of the scenario plus the base URL: keys come from a seeded pool, names
and prefixes are derived by hashing, and no wall-clock time is read, so
identical inputs produce byte-identical trees.

On-disk layout of a generated tree:

    root.tal                     trust anchor locator
    rrdp/notification.{xml|bin}  plus snapshot/delta files
    repository/<pp>/<objects>    one directory per publication point
    private/<label>.der          CA private keys (never served)
    tree.json                    metadata the converter/tamper ops read
"""

from __future__ import annotations

import hashlib
import json
import uuid
from base64 import urlsafe_b64encode
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import crypto, objects, rrdp, x509
from .objects import (
    CMS_EE,
    CRL_MERGED,
    CRL_STANDALONE,
    DER,
    DIRECT_SIGNED,
    PROTO3,
    UNSIGNED,
    CodecVariant,
    ManifestPayload,
    RoaPayload,
    RoaPrefix,
    SigningContext,
)
from .resources import Prefix

RSYNC_BASE = "rsync://rpki.example.net/repository/"
DEFAULT_T0 = 1785542400  # 2026-08-01T00:00:00Z
CA_CERT_DAYS = 365

LEGACY_EXT = {".cer", ".roa", ".mft", ".crl"}
IMPROVED_EXT = {".cer", ".iroa", ".imft"}


class RepositoryError(ValueError):
    pass


@dataclass(frozen=True)
class Ablation:
    name: str
    roa: CodecVariant
    manifest: CodecVariant
    has_crl: bool
    rrdp_format: str


ABLATIONS: dict[str, Ablation] = {
    "legacy": Ablation(
        "legacy", CodecVariant(CMS_EE, DER), CodecVariant(CMS_EE, DER), True, rrdp.LEGACY_XML
    ),
    "no_crl": Ablation(
        "no_crl",
        CodecVariant(CMS_EE, DER),
        CodecVariant(DIRECT_SIGNED, DER, CRL_MERGED),
        False,
        rrdp.LEGACY_XML,
    ),
    "proto_over_asn1": Ablation(
        "proto_over_asn1",
        CodecVariant(CMS_EE, PROTO3),
        CodecVariant(CMS_EE, PROTO3),
        True,
        rrdp.LEGACY_XML,
    ),
    "proto_over_xml": Ablation(
        "proto_over_xml",
        CodecVariant(CMS_EE, DER),
        CodecVariant(CMS_EE, DER),
        True,
        rrdp.IMPROVED_PROTO,
    ),
    "no_ee": Ablation(
        "no_ee",
        CodecVariant(DIRECT_SIGNED, DER),
        CodecVariant(DIRECT_SIGNED, DER),
        True,
        rrdp.LEGACY_XML,
    ),
    "no_roa_sig": Ablation(
        "no_roa_sig",
        CodecVariant(UNSIGNED, DER),
        CodecVariant(DIRECT_SIGNED, DER),
        True,
        rrdp.LEGACY_XML,
    ),
    "full": Ablation(
        "full",
        CodecVariant(UNSIGNED, PROTO3),
        CodecVariant(DIRECT_SIGNED, PROTO3, CRL_MERGED),
        False,
        rrdp.IMPROVED_PROTO,
    ),
}


@dataclass(frozen=True)
class Scenario:
    ca_count: int = 1
    roas_per_ca: int | tuple[int, ...] = 0
    ablation: str = "legacy"
    seed: bytes = bytes(32)
    validity_hours: float = 48.0
    manifest_hours: float = 24.0
    key_pool_size: int = 64
    t0: int = DEFAULT_T0

    def __post_init__(self) -> None:
        if self.ca_count < 1:
            raise RepositoryError("at least one CA is required")
        if self.ablation not in ABLATIONS:
            raise RepositoryError(f"unknown ablation {self.ablation!r}")
        if len(self.seed) != 32:
            raise RepositoryError("seed must be 32 bytes")
        if isinstance(self.roas_per_ca, tuple) and len(self.roas_per_ca) != self.ca_count:
            raise RepositoryError("per-CA payload counts must match the CA count")
        if self.key_pool_size < 2:
            raise RepositoryError("key pool needs at least two keys")

    def roas_for(self, index: int) -> int:
        if isinstance(self.roas_per_ca, tuple):
            return self.roas_per_ca[index]
        return self.roas_per_ca

    @property
    def total_roas(self) -> int:
        return sum(self.roas_for(i) for i in range(self.ca_count))


def parse_scenario_file(text: str) -> Scenario:
    """`key = value` lines; # starts a comment."""
    values: dict[str, str] = {}
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RepositoryError(f"not a key=value line: {raw_line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    kwargs: dict = {}
    if "ca_count" in values:
        kwargs["ca_count"] = int(values.pop("ca_count"))
    if "roas_per_ca" in values:
        raw = values.pop("roas_per_ca")
        if "," in raw:
            kwargs["roas_per_ca"] = tuple(int(x) for x in raw.split(","))
        else:
            kwargs["roas_per_ca"] = int(raw)
    if "ablation" in values:
        kwargs["ablation"] = values.pop("ablation")
    if "seed" in values:
        raw = values.pop("seed")
        kwargs["seed"] = bytes.fromhex(raw) if len(raw) == 64 else hashlib.sha256(raw.encode()).digest()
    for key in ("validity_hours", "manifest_hours"):
        if key in values:
            kwargs[key] = float(values.pop(key))
    for key in ("key_pool_size", "t0"):
        if key in values:
            kwargs[key] = int(values.pop(key))
    if values:
        raise RepositoryError(f"unknown scenario keys: {sorted(values)}")
    return Scenario(**kwargs)


@dataclass
class RepositoryTree:
    root: Path
    base_url: str
    ablation: str
    session_id: str
    serial: int
    tal_path: Path
    files: dict[str, int] = field(default_factory=dict)

    @property
    def notification_url(self) -> str:
        ext = "bin" if ABLATIONS[self.ablation].rrdp_format == rrdp.IMPROVED_PROTO else "xml"
        return f"{self.base_url}/rrdp/notification.{ext}"

    def snapshot_size(self) -> int:
        for name in ("rrdp/snapshot.xml", "rrdp/snapshot.bin"):
            path = self.root / name
            if path.exists():
                return path.stat().st_size
        raise RepositoryError("tree has no snapshot")

    def improved_snapshot_size(self) -> int:
        path = self.root / "rrdp" / "snapshot.bin"
        if not path.exists():
            raise RepositoryError("tree has no improved snapshot")
        return path.stat().st_size


def _derive(seed: bytes, *labels) -> bytes:
    h = hashlib.sha256(seed)
    for label in labels:
        h.update(b"/")
        h.update(label.encode() if isinstance(label, str) else str(label).encode())
    return h.digest()


def _short_name(seed: bytes, *labels) -> str:
    return urlsafe_b64encode(_derive(seed, *labels)[:20]).decode().rstrip("=")


def _session_id(seed: bytes) -> str:
    raw = bytearray(_derive(seed, "session")[:16])
    raw[6] = (raw[6] & 0x0F) | 0x40
    raw[8] = (raw[8] & 0x3F) | 0x80
    return str(uuid.UUID(bytes=bytes(raw)))


def _global_prefix(index: int) -> Prefix:
    if index >= (246 - 10) * 65536:
        raise RepositoryError("prefix space exhausted")
    first = 10 + index // 65536
    return Prefix(1, (first << 24) | ((index % 65536) << 8), 24)


class _KeyPool:
    def __init__(self, seed: bytes, size: int):
        self.seed = seed
        self.size = size
        self._keys: dict[int, crypto.KeyPair] = {}

    def key(self, slot: int) -> crypto.KeyPair:
        if slot not in self._keys:
            self._keys[slot] = crypto.generate_keypair(_derive(self.seed, "key", slot))
        return self._keys[slot]

    def ca_key(self, ca_index: int) -> crypto.KeyPair:
        if ca_index == 0:
            return self.key(0)  # the trust anchor key is never shared
        return self.key(1 + (ca_index - 1) % (self.size - 1))

    def ee_key(self, counter: int) -> crypto.KeyPair:
        return self.key(1 + counter % (self.size - 1))


@dataclass
class _CaPlan:
    index: int
    label: str
    cert_serial: int
    key: crypto.KeyPair
    pp_dir: str  # 32-hex publication point directory name
    roa_count: int

    @property
    def repo_uri(self) -> str:
        return f"{RSYNC_BASE}{self.pp_dir}/"


def generate(
    scenario: Scenario, out_dir: Path | str, base_url: str = "http://127.0.0.1:8400/repo"
) -> RepositoryTree:
    """Emit a complete repository tree for the scenario.

    The first CA is the trust anchor; it publishes every other CA's
    certificate in its own publication point, and issues payloads of its
    own just like the rest.
    """
    out = Path(out_dir)
    ablation = ABLATIONS[scenario.ablation]
    pool = _KeyPool(scenario.seed, scenario.key_pool_size)
    session = _session_id(scenario.seed)
    t0 = scenario.t0
    roa_valid = (t0, t0 + int(scenario.validity_hours * 3600))
    mft_valid = (t0, t0 + int(scenario.manifest_hours * 3600))
    notification_url_xml = f"{base_url}/rrdp/notification.xml"

    plans: list[_CaPlan] = []
    for i in range(scenario.ca_count):
        plans.append(
            _CaPlan(
                index=i,
                label=_derive(scenario.seed, "ca-label", i)[:20].hex(),
                cert_serial=1 if i == 0 else i + 1,
                key=pool.ca_key(i),
                pp_dir=_derive(scenario.seed, "pp", i)[:16].hex(),
                roa_count=scenario.roas_for(i),
            )
        )
    root = plans[0]

    root_cert = x509.issue_ca_certificate(
        root.key,
        None,
        serial=root.cert_serial,
        issuer=root.label,
        subject=root.label,
        not_before=t0,
        not_after=t0 + CA_CERT_DAYS * 86400,
        subject_spki=root.key.spki,
        ip_resources=(Prefix.parse("0.0.0.0/0"), Prefix.parse("::/0")),
        as_resources=((0, (1 << 32) - 1),),
        sia_repo_uri=root.repo_uri,
        sia_notification_uri=notification_url_xml,
    )
    root_cert_name = _short_name(scenario.seed, "cer", 0) + ".cer"

    # Root-issued child certificates; serials continue in the root namespace.
    certs: dict[int, x509.Certificate] = {0: root_cert}
    cert_names: dict[int, str] = {0: root_cert_name}
    roa_base = [0] * scenario.ca_count
    next_global = scenario.roas_for(0)
    for plan in plans[1:]:
        roa_base[plan.index] = next_global
        count = plan.roa_count
        prefixes = tuple(_global_prefix(next_global + j) for j in range(count))
        asns = ((64496 + next_global, 64496 + max(next_global, next_global + count - 1)),)
        next_global += count
        certs[plan.index] = x509.issue_ca_certificate(
            plan.key,
            root_cert,
            serial=plan.cert_serial,
            issuer=root.label,
            issuer_name_serial=str(root.cert_serial),
            subject=plan.label,
            not_before=t0,
            not_after=t0 + CA_CERT_DAYS * 86400,
            subject_spki=plan.key.spki,
            ip_resources=prefixes if prefixes else (Prefix.parse(f"192.168.{plan.index % 256}.0/24"),),
            as_resources=asns,
            sia_repo_uri=plan.repo_uri,
            sia_notification_uri=notification_url_xml,
        )
        cert_names[plan.index] = _short_name(scenario.seed, "cer", plan.index) + ".cer"

    object_exts = sorted(
        {".cer", objects.extension_for("roa", ablation.roa), objects.extension_for("manifest", ablation.manifest)}
        | ({".crl"} if ablation.has_crl else set())
    )

    ca_groups: list[rrdp.CaContent] = []
    meta_cas = []
    ee_counter = 0
    for plan in plans:
        cert = certs[plan.index]
        next_serial = scenario.ca_count + 1 if plan.index == 0 else 1
        entries: dict[str, bytes] = {}
        serial_of: dict[str, int] = {}
        if plan.index == 0:
            entries[root_cert_name] = root_cert.der
            for other in plans[1:]:
                entries[cert_names[other.index]] = certs[other.index].der

        crl_name = _short_name(scenario.seed, "crl", plan.index) + ".crl"
        mft_name = _short_name(scenario.seed, "mft", plan.index) + objects.extension_for(
            "manifest", ablation.manifest
        )
        roa_ext = objects.extension_for("roa", ablation.roa)

        roa_names: dict[str, int] = {}
        base = roa_base[plan.index] if plan.index else 0
        for j in range(plan.roa_count):
            g = base + j
            payload = RoaPayload(
                asn=64496 + g,
                prefixes=(RoaPrefix(_global_prefix(g), 24),),
                serial=next_serial,
                not_before=roa_valid[0],
                not_after=roa_valid[1],
            )
            name = _short_name(scenario.seed, "roa", plan.index, j) + roa_ext
            signer = None
            if ablation.roa.envelope != UNSIGNED:
                signer = SigningContext(
                    ca_key=plan.key,
                    ca_name=plan.label,
                    ca_name_serial=str(plan.cert_serial),
                    ee_key=pool.ee_key(ee_counter) if ablation.roa.envelope == CMS_EE else None,
                    object_uri=plan.repo_uri + name,
                    crl_uri=plan.repo_uri + crl_name,
                    aia_uri=root.repo_uri + cert_names[plan.index],
                )
                ee_counter += 1
            entries[name] = objects.encode_roa(payload, ablation.roa, signer)
            roa_names[name] = next_serial
            serial_of[name] = next_serial
            next_serial += 1

        revoked: tuple[tuple[int, int], ...] = ()
        if ablation.has_crl:
            crl_number = next_serial
            next_serial += 1
            entries[crl_name] = x509.build_crl(
                plan.key,
                issuer=plan.label,
                issuer_name_serial=str(plan.cert_serial),
                number=crl_number,
                this_update=mft_valid[0],
                next_update=mft_valid[1],
                revoked=revoked,
            )
            serial_of[crl_name] = crl_number

        mft_number = next_serial
        next_serial += 1
        listed = sorted(
            (name, crypto.sha256(content))
            for name, content in entries.items()
            if name != mft_name and name != root_cert_name
        )
        mft_payload = ManifestPayload(
            number=mft_number,
            this_update=mft_valid[0],
            next_update=mft_valid[1],
            file_list=tuple(listed),
            revoked=revoked if ablation.manifest.crl_mode == CRL_MERGED else None,
        )
        mft_signer = SigningContext(
            ca_key=plan.key,
            ca_name=plan.label,
            ca_name_serial=str(plan.cert_serial),
            ee_key=pool.ee_key(ee_counter) if ablation.manifest.envelope == CMS_EE else None,
            object_uri=plan.repo_uri + mft_name,
            crl_uri=plan.repo_uri + crl_name,
            aia_uri=root.repo_uri + cert_names[plan.index],
        )
        if ablation.manifest.envelope == CMS_EE:
            ee_counter += 1
        entries[mft_name] = objects.encode_manifest(mft_payload, ablation.manifest, mft_signer)
        serial_of[mft_name] = mft_number

        ca_groups.append(rrdp.CaContent(plan.repo_uri, tuple(sorted(entries.items()))))
        meta_cas.append(
            {
                "index": plan.index,
                "label": plan.label,
                "pp_dir": plan.pp_dir,
                "repo_uri": plan.repo_uri,
                "cert_serial": plan.cert_serial,
                "cert_name": cert_names[plan.index],
                "mft_name": mft_name,
                "crl_name": crl_name if ablation.has_crl else None,
                "next_serial": next_serial,
                "roas": roa_names,
                "key_file": f"private/{plan.label}.der",
            }
        )

    snapshot = rrdp.RepositorySnapshot(session, 1, tuple(ca_groups))
    tree = RepositoryTree(
        root=out,
        base_url=base_url,
        ablation=scenario.ablation,
        session_id=session,
        serial=1,
        tal_path=out / "root.tal",
    )
    out.mkdir(parents=True, exist_ok=True)
    (out / "private").mkdir(exist_ok=True)
    for plan in plans:
        (out / "private" / f"{plan.label}.der").write_bytes(crypto.serialize_private_key(plan.key))
    _write_objects(tree, snapshot)
    _write_rrdp(tree, snapshot, ablation.rrdp_format, deltas=[])
    tree.tal_path.write_bytes(x509.encode_tal(notification_url_xml, root.key.spki))
    tree.files["root.tal"] = tree.tal_path.stat().st_size

    meta = {
        "ablation": scenario.ablation,
        "base_url": base_url,
        "session_id": session,
        "serial": 1,
        "t0": t0,
        "validity_hours": scenario.validity_hours,
        "manifest_hours": scenario.manifest_hours,
        "object_extensions": object_exts,
        "root_cert_name": root_cert_name,
        "cas": meta_cas,
    }
    (out / "tree.json").write_text(json.dumps(meta, indent=1))
    return tree


def _write_objects(tree: RepositoryTree, snapshot: rrdp.RepositorySnapshot) -> None:
    for ca in snapshot.cas:
        pp_dir = tree.root / "repository" / ca.repo_uri.removeprefix(RSYNC_BASE).strip("/")
        pp_dir.mkdir(parents=True, exist_ok=True)
        for name, content in ca.entries:
            (pp_dir / name).write_bytes(content)
            tree.files[f"repository/{ca.repo_uri.removeprefix(RSYNC_BASE).strip('/')}/{name}"] = len(content)


def _write_rrdp(
    tree: RepositoryTree,
    snapshot: rrdp.RepositorySnapshot,
    fmt: str,
    deltas: list[tuple[int, bytes]],
) -> None:
    """Write snapshot, retained deltas, and the notification that ties
    them together. `deltas` holds (serial, encoded bytes), ascending."""
    rrdp_dir = tree.root / "rrdp"
    rrdp_dir.mkdir(parents=True, exist_ok=True)
    ext = "bin" if fmt == rrdp.IMPROVED_PROTO else "xml"
    snap_bytes = rrdp.encode_snapshot(snapshot, fmt)
    (rrdp_dir / f"snapshot.{ext}").write_bytes(snap_bytes)
    tree.files[f"rrdp/snapshot.{ext}"] = len(snap_bytes)

    retained: list[tuple[str, bytes, int]] = []
    budget = len(snap_bytes)
    used = 0
    for serial, data in reversed(deltas):  # newest first
        if used + len(data) > budget:
            break
        used += len(data)
        name = f"delta-{serial}.{ext}"
        (rrdp_dir / name).write_bytes(data)
        tree.files[f"rrdp/{name}"] = len(data)
        if fmt == rrdp.IMPROVED_PROTO:
            uri = name
        else:
            uri = f"{tree.base_url}/rrdp/{name}"
        retained.append((uri, crypto.sha256(data), serial))

    if fmt == rrdp.IMPROVED_PROTO:
        snap_uri = f"snapshot.{ext}"
    else:
        snap_uri = f"{tree.base_url}/rrdp/snapshot.{ext}"
    notification = rrdp.NotificationFile(
        snapshot.session_id, snapshot.serial, (snap_uri, crypto.sha256(snap_bytes)), tuple(retained)
    )
    notif_bytes = rrdp.encode_notification(notification, fmt)
    (rrdp_dir / f"notification.{ext}").write_bytes(notif_bytes)
    tree.files[f"rrdp/notification.{ext}"] = len(notif_bytes)
    tree.serial = snapshot.serial


def load_tree(tree_dir: Path | str) -> tuple[RepositoryTree, dict]:
    root = Path(tree_dir)
    meta = json.loads((root / "tree.json").read_text())
    tree = RepositoryTree(
        root=root,
        base_url=meta["base_url"],
        ablation=meta["ablation"],
        session_id=meta["session_id"],
        serial=meta["serial"],
        tal_path=root / "root.tal",
    )
    return tree, meta


def _load_snapshot_from_disk(root: Path, meta: dict, extensions: set[str]) -> rrdp.RepositorySnapshot:
    groups = []
    for ca in meta["cas"]:
        pp = root / "repository" / ca["pp_dir"]
        entries = tuple(
            (path.name, path.read_bytes())
            for path in sorted(pp.iterdir())
            if path.suffix in extensions
        )
        groups.append(rrdp.CaContent(ca["repo_uri"], entries))
    return rrdp.RepositorySnapshot(meta["session_id"], meta["serial"], tuple(groups))


def _ca_signer(root: Path, meta: dict, ca: dict) -> crypto.KeyPair:
    return crypto.load_private_key((root / ca["key_file"]).read_bytes())


@dataclass
class ConversionReport:
    converted_cas: int = 0
    failed_cas: list[tuple[str, str]] = field(default_factory=list)
    revocations_carried: int = 0
    serial_notes: list[str] = field(default_factory=list)


def convert(tree_dir: Path | str) -> tuple[RepositoryTree, ConversionReport]:
    """Write the lean twin of a legacy tree next to it (dual publication).

    Every payload survives unchanged: one-off certificate serials become
    content serials, certificate validity becomes content validity, the
    CRL folds into the manifest, and repository files re-encode in the
    compact formats under `.bin` names. The legacy files are not touched.
    """
    root = Path(tree_dir)
    tree, meta = load_tree(root)
    if ABLATIONS[meta["ablation"]].roa != CodecVariant(CMS_EE, DER):
        raise RepositoryError("only legacy trees are converted")
    report = ConversionReport()
    clock = meta["t0"] + 1

    root_pp = root / "repository" / meta["cas"][0]["pp_dir"]
    groups: list[rrdp.CaContent] = []
    improved_meta_cas = []
    for ca in meta["cas"]:
        pp = root / "repository" / ca["pp_dir"]
        key = _ca_signer(root, meta, ca)
        cert_dir = root_pp if ca["index"] else pp
        cert_name = ca["cert_name"] if ca["index"] else meta["root_cert_name"]
        try:
            ca_cert = x509.parse_certificate((cert_dir / cert_name).read_bytes())
            entries, carried = _convert_ca(root, meta, ca, pp, key, ca_cert, clock)
        except (objects.ObjectError, x509.CertificateError, RepositoryError) as exc:
            report.failed_cas.append((ca["label"], str(exc)))
            continue
        report.converted_cas += 1
        report.revocations_carried += carried
        groups.append(rrdp.CaContent(ca["repo_uri"], entries))
        improved_meta_cas.append(ca)

    snapshot = rrdp.RepositorySnapshot(meta["session_id"], meta["serial"], tuple(groups))
    improved = RepositoryTree(
        root=root,
        base_url=meta["base_url"],
        ablation="full",
        session_id=meta["session_id"],
        serial=meta["serial"],
        tal_path=root / "root.tal",
    )
    _write_objects(improved, snapshot)
    _write_rrdp(improved, snapshot, rrdp.IMPROVED_PROTO, deltas=[])
    improved_meta = dict(meta)
    improved_meta["ablation"] = "full"
    improved_meta["object_extensions"] = sorted(IMPROVED_EXT)
    improved_meta["cas"] = improved_meta_cas
    (root / "tree-improved.json").write_text(json.dumps(improved_meta, indent=1))
    (root / "convert-report.json").write_text(
        json.dumps(
            {
                "converted_cas": report.converted_cas,
                "failed_cas": report.failed_cas,
                "revocations_carried": report.revocations_carried,
                "serial_notes": report.serial_notes,
            },
            indent=1,
        )
    )
    return improved, report


def _convert_ca(
    root: Path, meta: dict, ca: dict, pp: Path, key: crypto.KeyPair,
    ca_cert: x509.Certificate, clock: int,
):
    mft_bytes = (pp / ca["mft_name"]).read_bytes()
    checked = objects.verify_object_authenticity(
        mft_bytes, None, ca_cert, clock=clock, kind="manifest"
    )
    if not checked.accepted:
        raise RepositoryError(f"manifest rejected: {checked.reason}")
    decoded_mft = checked.decoded
    crl = x509.parse_crl((pp / ca["crl_name"]).read_bytes())
    if not x509.verify_crl(crl, key.spki):
        raise RepositoryError("revocation list signature invalid")
    listed = dict(decoded_mft.payload.file_list)

    entries: dict[str, bytes] = {}
    if ca["index"] == 0:
        for path in sorted(pp.glob("*.cer")):
            entries[path.name] = path.read_bytes()

    for name in sorted(ca["roas"]):
        data = (pp / name).read_bytes()
        if crypto.sha256(data) != listed.get(name):
            raise RepositoryError(f"{name} does not match its manifest hash")
        decoded = objects.decode_roa(data, CodecVariant(CMS_EE, DER))
        ee = decoded.ee_cert
        if not crypto.verify(key.spki, ee.tbs, ee.signature):
            raise RepositoryError(f"{name}: embedded certificate signature invalid")
        new_name = name[: -len(".roa")] + ".iroa"
        entries[new_name] = objects.encode_roa(decoded.payload, CodecVariant(UNSIGNED, PROTO3), None)

    imft_name = ca["mft_name"][: -len(".mft")] + ".imft"
    file_list = tuple(
        sorted((name, crypto.sha256(content)) for name, content in entries.items()
               if ca["index"] != 0 or name != meta["root_cert_name"])
    )
    payload = ManifestPayload(
        number=decoded_mft.payload.number,
        this_update=decoded_mft.payload.this_update,
        next_update=decoded_mft.payload.next_update,
        file_list=file_list,
        revoked=crl.revoked,
    )
    signer = SigningContext(ca_key=key, ca_name=ca["label"], ca_name_serial=str(ca["cert_serial"]))
    entries[imft_name] = objects.encode_manifest(
        payload, CodecVariant(DIRECT_SIGNED, PROTO3, CRL_MERGED), signer
    )
    return tuple(sorted(entries.items())), len(crl.revoked)


# --------------------------------------------------------------------------
# incremental publication
# --------------------------------------------------------------------------

class Publisher:
    """Applies content updates to a generated tree and publishes them as
    deltas plus a refreshed snapshot and notification."""

    def __init__(self, tree_dir: Path | str):
        self.root = Path(tree_dir)
        self.tree, self.meta = load_tree(self.root)
        self.ablation = ABLATIONS[self.meta["ablation"]]
        self._fmt = self.ablation.rrdp_format
        self._ext = "bin" if self._fmt == rrdp.IMPROVED_PROTO else "xml"
        self._deltas: list[tuple[int, bytes]] = self._existing_deltas()
        self.state = self._current_snapshot()

    def _existing_deltas(self) -> list[tuple[int, bytes]]:
        out = []
        for path in sorted((self.root / "rrdp").glob(f"delta-*.{self._ext}")):
            serial = int(path.stem.split("-")[1])
            out.append((serial, path.read_bytes()))
        return sorted(out)

    def _current_snapshot(self) -> rrdp.RepositorySnapshot:
        data = (self.root / "rrdp" / f"snapshot.{self._ext}").read_bytes()
        return rrdp.decode_snapshot(data, self._fmt)

    def _ca_meta(self, index: int) -> dict:
        for ca in self.meta["cas"]:
            if ca["index"] == index:
                return ca
        raise RepositoryError(f"no CA with index {index}")

    def add_roa(self, ca_index: int, global_index: int) -> str:
        """Issue one more payload under the given CA and publish a delta."""
        ca = self._ca_meta(ca_index)
        key = _ca_signer(self.root, self.meta, ca)
        serial = ca["next_serial"]
        ca["next_serial"] += 1
        t0 = self.meta["t0"]
        payload = RoaPayload(
            asn=64496 + global_index,
            prefixes=(RoaPrefix(_global_prefix(global_index), 24),),
            serial=serial,
            not_before=t0,
            not_after=t0 + int(self.meta["validity_hours"] * 3600),
        )
        roa_ext = objects.extension_for("roa", self.ablation.roa)
        name = _short_name(bytes.fromhex(ca["pp_dir"]) + serial.to_bytes(4, "big"), "extra") + roa_ext
        signer = None
        if self.ablation.roa.envelope != UNSIGNED:
            signer = SigningContext(
                ca_key=key,
                ca_name=ca["label"],
                ca_name_serial=str(ca["cert_serial"]),
                ee_key=crypto.generate_keypair(_derive(bytes(32), "pub-ee", ca_index, serial)),
                object_uri=ca["repo_uri"] + name,
                crl_uri=ca["repo_uri"] + (ca["crl_name"] or ""),
                aia_uri=ca["repo_uri"],
            )
        content = objects.encode_roa(payload, self.ablation.roa, signer)
        ca["roas"][name] = serial
        self._publish_ca_change(ca, key, {name: content}, withdraw=[])
        return name

    def withdraw_roa(self, ca_index: int, name: str) -> None:
        ca = self._ca_meta(ca_index)
        key = _ca_signer(self.root, self.meta, ca)
        if name not in ca["roas"]:
            raise RepositoryError(f"{name} is not published by this CA")
        del ca["roas"][name]
        self._publish_ca_change(ca, key, {}, withdraw=[name])

    def refresh_manifest(self, ca_index: int) -> None:
        ca = self._ca_meta(ca_index)
        key = _ca_signer(self.root, self.meta, ca)
        self._publish_ca_change(ca, key, {}, withdraw=[])

    def _publish_ca_change(
        self,
        ca: dict,
        key: crypto.KeyPair,
        new_objects: dict[str, bytes],
        withdraw: list[str],
        revoked_override: tuple[tuple[int, int], ...] | None = None,
    ) -> None:
        pp = self.root / "repository" / ca["pp_dir"]
        old = {name: content for name, content in self._group(ca["repo_uri"]).entries}
        current = dict(old)
        for name in withdraw:
            current.pop(name, None)
        current.update(new_objects)

        revoked = (
            revoked_override if revoked_override is not None else self._current_revocations(ca, pp)
        )
        crl_bytes = None
        if self.ablation.has_crl:
            crl_number = ca["next_serial"]
            ca["next_serial"] += 1
            crl_bytes = x509.build_crl(
                key,
                issuer=ca["label"],
                issuer_name_serial=str(ca["cert_serial"]),
                number=crl_number,
                this_update=self.meta["t0"],
                next_update=self.meta["t0"] + int(self.meta["manifest_hours"] * 3600),
                revoked=revoked,
            )
            current[ca["crl_name"]] = crl_bytes

        mft_number = ca["next_serial"]
        ca["next_serial"] += 1
        skip = {ca["mft_name"], self.meta["root_cert_name"]}
        file_list = tuple(
            sorted((name, crypto.sha256(content)) for name, content in current.items() if name not in skip)
        )
        payload = ManifestPayload(
            number=mft_number,
            this_update=self.meta["t0"],
            next_update=self.meta["t0"] + int(self.meta["manifest_hours"] * 3600),
            file_list=file_list,
            revoked=revoked if self.ablation.manifest.crl_mode == CRL_MERGED else None,
        )
        pool = _KeyPool(bytes(32), 8)
        signer = SigningContext(
            ca_key=key,
            ca_name=ca["label"],
            ca_name_serial=str(ca["cert_serial"]),
            ee_key=pool.ee_key(mft_number) if self.ablation.manifest.envelope == CMS_EE else None,
            object_uri=ca["repo_uri"] + ca["mft_name"],
            crl_uri=ca["repo_uri"] + (ca["crl_name"] or ""),
            aia_uri=ca["repo_uri"],
        )
        current[ca["mft_name"]] = objects.encode_manifest(payload, self.ablation.manifest, signer)

        modified = []
        for name in sorted(current):
            if name in old and current[name] == old[name]:
                continue
            old_hash = crypto.sha256(old[name]) if name in old else None
            modified.append((name, old_hash, current[name]))
        withdrawn = [(name, crypto.sha256(old[name])) for name in sorted(withdraw) if name in old]
        delta = rrdp.DeltaFile(
            self.state.session_id,
            self.state.serial + 1,
            (rrdp.DeltaCa(ca["repo_uri"], tuple(modified), tuple(withdrawn)),),
        )
        self.state = rrdp.apply_delta(self.state, delta)
        self._deltas.append((delta.serial, rrdp.encode_delta(delta, self._fmt)))

        for name in withdraw:
            (pp / name).unlink(missing_ok=True)
        for name, _, content in modified:
            (pp / name).write_bytes(content)

        self.meta["serial"] = self.state.serial
        self.tree.serial = self.state.serial
        _write_rrdp(self.tree, self.state, self._fmt, deltas=self._deltas)
        (self.root / "tree.json").write_text(json.dumps(self.meta, indent=1))

    def _current_revocations(self, ca: dict, pp: Path) -> tuple[tuple[int, int], ...]:
        if self.ablation.has_crl and ca["crl_name"]:
            return x509.parse_crl((pp / ca["crl_name"]).read_bytes()).revoked
        decoded = objects.decode_manifest((pp / ca["mft_name"]).read_bytes())
        return decoded.payload.revoked or ()

    def _group(self, repo_uri: str) -> rrdp.CaContent:
        for group in self.state.cas:
            if group.repo_uri == repo_uri:
                return group
        raise RepositoryError(f"unknown publication point {repo_uri}")

    def revoke(self, serial: int) -> None:
        """Legitimate revocation: record the serial, re-sign the CRL or
        merged manifest, republish."""
        for ca in self.meta["cas"]:
            if serial in ca["roas"].values() or serial == ca.get("cert_serial"):
                key = _ca_signer(self.root, self.meta, ca)
                pp = self.root / "repository" / ca["pp_dir"]
                revoked = self._current_revocations(ca, pp)
                if serial in {s for s, _ in revoked}:
                    return
                new_revoked = tuple(sorted(revoked + ((serial, self.meta["t0"]),)))
                self._publish_ca_change(ca, key, {}, withdraw=[], revoked_override=new_revoked)
                return
        raise RepositoryError(f"serial {serial} is not issued by any CA")


# --------------------------------------------------------------------------
# tampering
# --------------------------------------------------------------------------

def tamper(tree_dir: Path | str, action: str, target: str, serial: int | None = None) -> None:
    """Mutate a tree the way an attacker (or a misbehaving CA) would.

    flip_byte/delete simulate a malicious repository without key access:
    object bytes change or vanish and the repository files are re-emitted,
    but no manifest is re-signed. revoke/expire/omit use the stored keys
    (legitimate issuer actions) so revocation semantics and staleness can
    be exercised.
    """
    root = Path(tree_dir)
    tree, meta = load_tree(root)
    ablation = ABLATIONS[meta["ablation"]]
    if action == "revoke":
        if serial is None:
            raise RepositoryError("revoke needs a serial")
        Publisher(root).revoke(serial)
        return

    ca, pp = _find_target(root, meta, target)
    path = pp / target
    if action == "flip_byte":
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
    elif action == "delete":
        path.unlink()
    elif action == "expire":
        _reissue_expired(root, meta, ca, pp, target, ablation)
    elif action == "omit":
        _reissue_without(root, meta, ca, pp, target, ablation)
    else:
        raise RepositoryError(f"unknown tamper action {action!r}")

    snapshot = replace(
        _load_snapshot_from_disk(root, meta, set(meta["object_extensions"])),
        serial=meta["serial"] + 1,
    )
    meta["serial"] = snapshot.serial
    tree.serial = snapshot.serial
    for stale in (root / "rrdp").glob("delta-*"):
        stale.unlink()
    _write_rrdp(tree, snapshot, ablation.rrdp_format, deltas=[])
    (root / "tree.json").write_text(json.dumps(meta, indent=1))


def _find_target(root: Path, meta: dict, target: str):
    for ca in meta["cas"]:
        pp = root / "repository" / ca["pp_dir"]
        if (pp / target).exists():
            return ca, pp
    raise RepositoryError(f"no object named {target}")


def _reissue_expired(root: Path, meta: dict, ca: dict, pp: Path, target: str, ablation: Ablation) -> None:
    key = _ca_signer(root, meta, ca)
    decoded = objects.decode_roa((pp / target).read_bytes())
    expired = replace(
        decoded.payload, not_before=meta["t0"] - 7200, not_after=meta["t0"] - 3600
    )
    signer = None
    if ablation.roa.envelope != UNSIGNED:
        signer = SigningContext(
            ca_key=key,
            ca_name=ca["label"],
            ca_name_serial=str(ca["cert_serial"]),
            ee_key=crypto.generate_keypair(_derive(bytes(32), "expire-ee", target)),
            object_uri=ca["repo_uri"] + target,
            crl_uri=ca["repo_uri"] + (ca["crl_name"] or ""),
            aia_uri=ca["repo_uri"],
        )
    (pp / target).write_bytes(objects.encode_roa(expired, ablation.roa, signer))
    _resign_manifest(root, meta, ca, pp, ablation, skip=None)


def _reissue_without(root: Path, meta: dict, ca: dict, pp: Path, target: str, ablation: Ablation) -> None:
    _resign_manifest(root, meta, ca, pp, ablation, skip=target)


def _resign_manifest(root: Path, meta: dict, ca: dict, pp: Path, ablation: Ablation, skip: str | None) -> None:
    key = _ca_signer(root, meta, ca)
    decoded = objects.decode_manifest((pp / ca["mft_name"]).read_bytes())
    number = ca["next_serial"]
    ca["next_serial"] += 1
    skip_names = {ca["mft_name"], meta["root_cert_name"], skip or ""}
    file_list = tuple(
        sorted(
            (path.name, crypto.sha256(path.read_bytes()))
            for path in pp.iterdir()
            if path.suffix in set(meta["object_extensions"]) and path.name not in skip_names
        )
    )
    payload = ManifestPayload(
        number=number,
        this_update=decoded.payload.this_update,
        next_update=decoded.payload.next_update,
        file_list=file_list,
        revoked=decoded.payload.revoked,
    )
    signer = SigningContext(
        ca_key=key,
        ca_name=ca["label"],
        ca_name_serial=str(ca["cert_serial"]),
        ee_key=crypto.generate_keypair(_derive(bytes(32), "mft-ee", ca["label"], number))
        if ablation.manifest.envelope == CMS_EE
        else None,
        object_uri=ca["repo_uri"] + ca["mft_name"],
        crl_uri=ca["repo_uri"] + (ca["crl_name"] or ""),
        aia_uri=ca["repo_uri"],
    )
    (pp / ca["mft_name"]).write_bytes(objects.encode_manifest(payload, ablation.manifest, signer))
    (root / "tree.json").write_text(json.dumps(meta, indent=1))
