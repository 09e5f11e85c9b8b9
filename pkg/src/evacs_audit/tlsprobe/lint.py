"""Static checks on a server certificate, before any handshake is attempted."""

from __future__ import annotations

import datetime as dt
import ipaddress
from dataclasses import asdict, dataclass
from pathlib import Path

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.x509.oid import NameOID


class LintError(ValueError):
    pass


@dataclass(frozen=True)
class LintReport:
    path: str
    expected_host: str
    names: tuple[str, ...]
    hostname_present: bool
    hostname_matches: bool
    currently_valid: bool
    self_signed: bool

    @property
    def clean(self) -> bool:
        return self.hostname_present and self.hostname_matches and self.currently_valid and not self.self_signed

    def to_dict(self) -> dict:
        data = asdict(self)
        data["names"] = list(self.names)
        data["clean"] = self.clean
        return data


def load_certificate(path: str | Path) -> x509.Certificate:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise LintError(f"{path}: {exc.strerror}") from exc
    try:
        return x509.load_pem_x509_certificate(data)
    except ValueError:
        try:
            return x509.load_der_x509_certificate(data)
        except ValueError:
            raise LintError(f"{path}: not a PEM or DER certificate") from None


def san_names(cert: x509.Certificate) -> tuple[list[str], list[str]]:
    """DNS names and IP addresses from subjectAltName (empty when absent)."""
    try:
        ext = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
    except x509.ExtensionNotFound:
        return [], []
    return ext.get_values_for_type(x509.DNSName), [str(ip) for ip in ext.get_values_for_type(x509.IPAddress)]


def common_names(cert: x509.Certificate) -> list[str]:
    return [str(a.value) for a in cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)]


def _dns_match(pattern: str, host: str) -> bool:
    pattern, host = pattern.lower().rstrip("."), host.lower().rstrip(".")
    if pattern == host:
        return True
    p_labels, h_labels = pattern.split("."), host.split(".")
    return (
        p_labels[0] == "*"
        and len(p_labels) == len(h_labels)
        and len(p_labels) > 2
        and p_labels[1:] == h_labels[1:]
    )


def hostname_matches(cert: x509.Certificate, host: str) -> bool:
    """subjectAltName decides when present; the common name is only a fallback."""
    dns, ips = san_names(cert)
    try:
        ip = ipaddress.ip_address(host)
    except ValueError:
        ip = None
    if ip is not None:
        return any(ipaddress.ip_address(a) == ip for a in ips)
    if dns or ips:
        return any(_dns_match(name, host) for name in dns)
    return any(_dns_match(name, host) for name in common_names(cert))


def is_self_signed(cert: x509.Certificate) -> bool:
    if cert.issuer != cert.subject:
        return False
    try:
        cert.verify_directly_issued_by(cert)
    except (ValueError, TypeError, InvalidSignature):
        return False
    return True


def is_current(cert: x509.Certificate, now: dt.datetime | None = None) -> bool:
    now = now or dt.datetime.now(dt.timezone.utc)
    return cert.not_valid_before_utc <= now <= cert.not_valid_after_utc


def lint_certificate(pem_path: str | Path, expected_host: str,
                     now: dt.datetime | None = None) -> LintReport:
    cert = load_certificate(pem_path)
    dns, ips = san_names(cert)
    names = tuple(dict.fromkeys(dns + ips + common_names(cert)))
    return LintReport(
        path=str(pem_path),
        expected_host=expected_host,
        names=names,
        hostname_present=bool(names),
        hostname_matches=hostname_matches(cert, expected_host),
        currently_valid=is_current(cert, now),
        self_signed=is_self_signed(cert),
    )
