"""A small CA plus one leaf certificate per kind of validation flaw."""

from __future__ import annotations

import datetime as dt
import enum
import ipaddress
import json
from dataclasses import dataclass
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import ExtendedKeyUsageOID, NameOID

CA_NAME = "evacs-audit corpus CA"
ORG_NAME = "evacs-audit test corpus"
MISMATCH_HOST = "wrong.host.invalid"
LEAF_LIFETIME = dt.timedelta(days=90)
MANIFEST = "corpus.json"


class Flaw(str, enum.Enum):
    VALID = "valid"
    EXPIRED = "expired"
    UNTRUSTED_ISSUER = "untrusted_issuer"
    HOSTNAME_MISMATCH = "hostname_mismatch"
    MISSING_HOSTNAME = "missing_hostname"


@dataclass(frozen=True)
class CertSpec:
    flaw: Flaw
    subject_common_name: str | None
    subject_alt_names: tuple[str, ...]
    not_before: dt.datetime
    not_after: dt.datetime
    issuer: str  # "corpus_ca" or "self"
    cert_path: Path
    key_path: Path

    def to_dict(self) -> dict:
        return {
            "flaw": self.flaw.value,
            "subject_common_name": self.subject_common_name,
            "subject_alt_names": list(self.subject_alt_names),
            "not_before": self.not_before.isoformat(),
            "not_after": self.not_after.isoformat(),
            "issuer": self.issuer,
            "cert": self.cert_path.name,
            "key": self.key_path.name,
        }

    @classmethod
    def from_dict(cls, data: dict, root: Path) -> "CertSpec":
        return cls(
            Flaw(data["flaw"]),
            data["subject_common_name"],
            tuple(data["subject_alt_names"]),
            dt.datetime.fromisoformat(data["not_before"]),
            dt.datetime.fromisoformat(data["not_after"]),
            data["issuer"],
            root / data["cert"],
            root / data["key"],
        )


@dataclass(frozen=True)
class Corpus:
    root: Path
    base_hostname: str
    ca_cert_path: Path
    ca_key_path: Path
    specs: dict[Flaw, CertSpec]

    def __getitem__(self, flaw: Flaw | str) -> CertSpec:
        return self.specs[Flaw(flaw)]


def _general_name(host: str) -> x509.GeneralName:
    try:
        return x509.IPAddress(ipaddress.ip_address(host))
    except ValueError:
        return x509.DNSName(host)


def _write_key(key: ec.EllipticCurvePrivateKey, path: Path) -> None:
    path.write_bytes(key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    ))
    path.chmod(0o600)


def _write_cert(cert: x509.Certificate, path: Path) -> None:
    path.write_bytes(cert.public_bytes(serialization.Encoding.PEM))


def _make_ca(now: dt.datetime) -> tuple[x509.Certificate, ec.EllipticCurvePrivateKey]:
    key = ec.generate_private_key(ec.SECP256R1())
    name = x509.Name([
        x509.NameAttribute(NameOID.ORGANIZATION_NAME, ORG_NAME),
        x509.NameAttribute(NameOID.COMMON_NAME, CA_NAME),
    ])
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - dt.timedelta(days=1))
        .not_valid_after(now + dt.timedelta(days=3650))
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=False, content_commitment=False, key_encipherment=False,
                data_encipherment=False, key_agreement=False, key_cert_sign=True, crl_sign=True,
                encipher_only=False, decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(key.public_key()), critical=False)
        .sign(key, hashes.SHA256())
    )
    return cert, key


def _make_leaf(
    common_name: str | None,
    alt_names: tuple[str, ...],
    not_before: dt.datetime,
    not_after: dt.datetime,
    ca: tuple[x509.Certificate, ec.EllipticCurvePrivateKey] | None,
) -> tuple[x509.Certificate, ec.EllipticCurvePrivateKey]:
    key = ec.generate_private_key(ec.SECP256R1())
    attrs = [x509.NameAttribute(NameOID.ORGANIZATION_NAME, ORG_NAME)]
    if common_name:
        attrs.append(x509.NameAttribute(NameOID.COMMON_NAME, common_name))
    subject = x509.Name(attrs)
    if ca is None:
        issuer_name, signing_key, issuer_public = subject, key, key.public_key()
    else:
        issuer_name, signing_key, issuer_public = ca[0].subject, ca[1], ca[1].public_key()
    builder = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer_name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=True, content_commitment=False, key_encipherment=False,
                data_encipherment=False, key_agreement=False, key_cert_sign=False, crl_sign=False,
                encipher_only=False, decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(x509.ExtendedKeyUsage([ExtendedKeyUsageOID.SERVER_AUTH]), critical=False)
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(key.public_key()), critical=False)
        .add_extension(x509.AuthorityKeyIdentifier.from_issuer_public_key(issuer_public), critical=False)
    )
    if alt_names:
        builder = builder.add_extension(
            x509.SubjectAlternativeName([_general_name(h) for h in alt_names]), critical=False
        )
    return builder.sign(signing_key, hashes.SHA256()), key


def generate_corpus(output_dir: str | Path, base_hostname: str = "localhost",
                    now: dt.datetime | None = None) -> Corpus:
    """Write ``ca-cert.pem`` and ``<flaw>-cert.pem``/``<flaw>-key.pem`` for every flaw.

    Each flawed leaf breaks exactly one of: time validity, issuer trust,
    hostname. ``corpus.json`` records what was generated.
    """
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    now = (now or dt.datetime.now(dt.timezone.utc)).replace(microsecond=0)
    ca = _make_ca(now)
    ca_cert_path, ca_key_path = root / "ca-cert.pem", root / "ca-key.pem"
    _write_cert(ca[0], ca_cert_path)
    _write_key(ca[1], ca_key_path)

    fresh = (now - dt.timedelta(hours=1), now + LEAF_LIFETIME)
    stale = (now - dt.timedelta(days=1) - LEAF_LIFETIME, now - dt.timedelta(days=1))
    plan = {
        Flaw.VALID: (base_hostname, (base_hostname,), fresh, "corpus_ca"),
        Flaw.EXPIRED: (base_hostname, (base_hostname,), stale, "corpus_ca"),
        Flaw.UNTRUSTED_ISSUER: (base_hostname, (base_hostname,), fresh, "self"),
        Flaw.HOSTNAME_MISMATCH: (MISMATCH_HOST, (MISMATCH_HOST,), fresh, "corpus_ca"),
        Flaw.MISSING_HOSTNAME: (None, (), fresh, "corpus_ca"),
    }
    specs = {}
    for flaw, (cn, sans, (nb, na), issuer) in plan.items():
        cert, key = _make_leaf(cn, sans, nb, na, ca if issuer == "corpus_ca" else None)
        cert_path, key_path = root / f"{flaw.value}-cert.pem", root / f"{flaw.value}-key.pem"
        _write_cert(cert, cert_path)
        _write_key(key, key_path)
        specs[flaw] = CertSpec(flaw, cn, sans, nb, na, issuer, cert_path, key_path)

    manifest = {
        "base_hostname": base_hostname,
        "ca_cert": ca_cert_path.name,
        "ca_key": ca_key_path.name,
        "leaves": [s.to_dict() for s in specs.values()],
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return Corpus(root, base_hostname, ca_cert_path, ca_key_path, specs)


def load_corpus(corpus_dir: str | Path) -> Corpus:
    root = Path(corpus_dir)
    manifest = json.loads((root / MANIFEST).read_text())
    specs = {}
    for entry in manifest["leaves"]:
        spec = CertSpec.from_dict(entry, root)
        specs[spec.flaw] = spec
    return Corpus(root, manifest["base_hostname"], root / manifest["ca_cert"], root / manifest["ca_key"], specs)
