"""RSA-2048 key handling, signing, and global signature-operation counting.

All signing and verification in the package funnels through `sign` and
`verify` so the per-run operation counts reported by the validator are
exact. Key generation can be seeded, in which case primes are derived
from a SHA-256 counter stream, making fixture repositories reproducible
byte for byte.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.asymmetric.padding import PKCS1v15
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    load_der_private_key,
)

from . import derenc

RSA_EXPONENT = 65537
MODULUS_BITS = 2048
SIGNATURE_BYTES = MODULUS_BITS // 8

OID_RSA_ENCRYPTION = "1.2.840.113549.1.1.1"
OID_SHA256_WITH_RSA = "1.2.840.113549.1.1.11"
OID_SHA256 = "2.16.840.1.101.3.4.2.1"


class SignatureCounter:
    """Monotonic tally of RSA operations, shared across threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.sign_count = 0
        self.verify_count = 0

    def note_sign(self) -> None:
        with self._lock:
            self.sign_count += 1

    def note_verify(self) -> None:
        with self._lock:
            self.verify_count += 1

    def snapshot(self) -> tuple[int, int]:
        with self._lock:
            return self.sign_count, self.verify_count


counter = SignatureCounter()


def rsa_public_key_der(n: int, e: int) -> bytes:
    return derenc.sequence(derenc.integer(n), derenc.integer(e))


def spki_from_numbers(n: int, e: int) -> bytes:
    return derenc.sequence(
        derenc.sequence(derenc.oid(OID_RSA_ENCRYPTION), derenc.null()),
        derenc.bit_string(rsa_public_key_der(n, e)),
    )


def key_id_from_spki(spki: bytes) -> bytes:
    """RFC 5280 method 1: SHA-1 of the subjectPublicKey bits."""
    bits, _ = _spki_bits(spki)
    return hashlib.sha1(bits).digest()


def _spki_bits(spki: bytes) -> tuple[bytes, str]:
    outer = derenc.Reader(spki).enter()
    alg = outer.enter()
    algorithm = alg.read_oid()
    if algorithm != OID_RSA_ENCRYPTION:
        raise derenc.DerError(f"unsupported key algorithm {algorithm}")
    alg.expect(derenc.TAG_NULL)
    alg.done()
    bits, unused = outer.read_bit_string()
    if unused:
        raise derenc.DerError("public key bits not octet-aligned")
    outer.done()
    return bits, algorithm


def public_numbers_from_spki(spki: bytes) -> tuple[int, int]:
    bits, _ = _spki_bits(spki)
    reader = derenc.Reader(bits).enter()
    n = reader.read_integer()
    e = reader.read_integer()
    reader.done()
    return n, e


@dataclass(frozen=True)
class KeyPair:
    private_key: rsa.RSAPrivateKey
    spki: bytes
    key_id: bytes

    @property
    def public_spki(self) -> bytes:
        return self.spki


def _seeded_prime(seed: bytes, label: bytes, bits: int = MODULUS_BITS // 2) -> int:
    nbytes = bits // 8
    for attempt in range(64):
        material = b""
        block = 0
        while len(material) < nbytes:
            material += hashlib.sha256(
                seed + label + attempt.to_bytes(4, "big") + block.to_bytes(4, "big")
            ).digest()
            block += 1
        candidate = int.from_bytes(material[:nbytes], "big")
        candidate |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(candidate))
        if p.bit_length() == bits and p % RSA_EXPONENT != 1:
            return p
    raise RuntimeError("prime derivation failed")


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """RSA-2048 keypair; deterministic when a seed is supplied."""
    if seed is None:
        private = rsa.generate_private_key(RSA_EXPONENT, MODULUS_BITS)
        numbers = private.private_numbers().public_numbers
        n = numbers.n
    else:
        p = _seeded_prime(seed, b"p")
        q = _seeded_prime(seed, b"q")
        if p == q:
            raise RuntimeError("degenerate prime pair")
        n = p * q
        d = int(gmpy2.invert(RSA_EXPONENT, gmpy2.lcm(p - 1, q - 1)))
        private = rsa.RSAPrivateNumbers(
            p,
            q,
            d,
            rsa.rsa_crt_dmp1(d, p),
            rsa.rsa_crt_dmq1(d, q),
            int(gmpy2.invert(q, p)),
            rsa.RSAPublicNumbers(RSA_EXPONENT, n),
        ).private_key()
    spki = spki_from_numbers(n, RSA_EXPONENT)
    return KeyPair(private, spki, key_id_from_spki(spki))


def sign(key: KeyPair, message: bytes) -> bytes:
    counter.note_sign()
    return key.private_key.sign(message, PKCS1v15(), SHA256())


_pubkey_cache: dict[bytes, rsa.RSAPublicKey] = {}
_pubkey_lock = threading.Lock()


def _public_key(spki: bytes) -> rsa.RSAPublicKey:
    with _pubkey_lock:
        cached = _pubkey_cache.get(spki)
    if cached is not None:
        return cached
    n, e = public_numbers_from_spki(spki)
    key = rsa.RSAPublicNumbers(e, n).public_key()
    with _pubkey_lock:
        _pubkey_cache[spki] = key
    return key


def verify(spki: bytes, message: bytes, signature: bytes) -> bool:
    """True iff `signature` is a valid RSA/SHA-256 signature by `spki`.

    Malformed keys or signatures yield False, never an exception.
    """
    counter.note_verify()
    try:
        _public_key(spki).verify(signature, message, PKCS1v15(), SHA256())
        return True
    except (InvalidSignature, ValueError, derenc.DerError):
        return False


def serialize_private_key(key: KeyPair) -> bytes:
    return key.private_key.private_bytes(Encoding.DER, PrivateFormat.PKCS8, NoEncryption())


def load_private_key(der: bytes) -> KeyPair:
    private = load_der_private_key(der, password=None)
    if not isinstance(private, rsa.RSAPrivateKey):
        raise ValueError("not an RSA private key")
    numbers = private.private_numbers().public_numbers
    spki = spki_from_numbers(numbers.n, numbers.e)
    return KeyPair(private, spki, key_id_from_spki(spki))


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()
