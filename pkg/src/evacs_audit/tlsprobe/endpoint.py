"""Local TLS echo servers and the strict/lax reference clients that probe them."""

from __future__ import annotations

import enum
import logging
import socket
import ssl
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from cryptography import x509

from .corpus import CertSpec
from .lint import is_current

log = logging.getLogger(__name__)

PROBE_PAYLOAD = b"PING evacs-audit\n"


class ClientMode(str, enum.Enum):
    STRICT = "strict"
    LAX = "lax"


class FailureReason(str, enum.Enum):
    EXPIRED = "expired"
    UNTRUSTED = "untrusted"
    HOSTNAME = "hostname"
    OTHER = "other"


# OpenSSL X509_V_ERR_* codes
_VERIFY_CODES = {
    9: FailureReason.EXPIRED,     # certificate is not yet valid
    10: FailureReason.EXPIRED,    # certificate has expired
    2: FailureReason.UNTRUSTED,   # unable to get issuer certificate
    18: FailureReason.UNTRUSTED,  # self-signed leaf
    19: FailureReason.UNTRUSTED,  # self-signed certificate in chain
    20: FailureReason.UNTRUSTED,  # unable to get local issuer certificate
    21: FailureReason.UNTRUSTED,  # unable to verify the first certificate
    62: FailureReason.HOSTNAME,   # hostname mismatch
    64: FailureReason.HOSTNAME,   # IP address mismatch
}
_PRIORITY = (FailureReason.EXPIRED, FailureReason.UNTRUSTED, FailureReason.HOSTNAME, FailureReason.OTHER)


class ProbeNetworkError(OSError):
    """The endpoint could not be reached; distinct from a certificate rejection."""


@dataclass(frozen=True)
class ProbeOutcome:
    endpoint: str
    client_mode: ClientMode
    accepted: bool
    failure_reason: FailureReason | None = None
    tls_version: str | None = None
    cipher: str | None = None
    detail: str = ""

    def __post_init__(self) -> None:
        if self.accepted and self.failure_reason is not None:
            raise ValueError("an accepted probe cannot carry a failure reason")

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "mode": self.client_mode.value,
            "accepted": self.accepted,
            "reason": self.failure_reason.value if self.failure_reason else None,
            "tls_version": self.tls_version,
            "cipher": self.cipher,
            "detail": self.detail,
        }


class ServerHandle:
    """A TLS echo server on a background thread. One connection at a time."""

    def __init__(self, cert_path: Path, key_path: Path, host: str = "127.0.0.1", port: int = 0):
        self._ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        self._ctx.load_cert_chain(str(cert_path), str(key_path))
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
        except OSError:
            self._sock.close()
            raise
        self._sock.listen(8)
        self._sock.settimeout(0.05)
        self.host, self.port = self._sock.getsockname()[:2]
        self.handshakes = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name=f"tls-echo-{self.port}", daemon=True)
        self._thread.start()

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except (socket.timeout, BlockingIOError):
                continue
            except OSError:
                break
            self._handle(conn)

    def _handle(self, conn: socket.socket) -> None:
        conn.settimeout(2.0)
        try:
            with self._ctx.wrap_socket(conn, server_side=True) as tls:
                self.handshakes += 1
                data = tls.recv(65536)
                if data:
                    tls.sendall(data)
        except (ssl.SSLError, OSError) as exc:
            # clients that reject our certificate abort the handshake
            log.debug("server %s: %s", self.address, exc)
        finally:
            conn.close()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=1.0)
        self._sock.close()

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(cert_spec: CertSpec, port: int = 0, host: str = "127.0.0.1") -> ServerHandle:
    return ServerHandle(cert_spec.cert_path, cert_spec.key_path, host, port)


def _client_context(mode: ClientMode, trust_anchors: Sequence[str | Path]) -> ssl.SSLContext:
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
    if mode is ClientMode.LAX:
        ctx.check_hostname = False
        ctx.verify_mode = ssl.CERT_NONE
        return ctx
    for anchor in trust_anchors:
        ctx.load_verify_locations(cafile=str(anchor))
    return ctx


def _connect(host: str, port: int, timeout: float) -> socket.socket:
    try:
        return socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ProbeNetworkError(exc.errno, f"cannot reach {host}:{port}: {exc}") from exc


def fetch_leaf(host: str, port: int, expected_host: str, timeout: float = 5.0) -> x509.Certificate:
    """Whatever leaf the server presents, fetched without validating it."""
    ctx = _client_context(ClientMode.LAX, ())
    with _connect(host, port, timeout) as raw:
        with ctx.wrap_socket(raw, server_hostname=expected_host) as tls:
            der = tls.getpeercert(binary_form=True)
    return x509.load_der_x509_certificate(der)


def probe(host: str, port: int, expected_host: str, mode: ClientMode | str,
          trust_anchors: Sequence[str | Path] = (), timeout: float = 5.0) -> ProbeOutcome:
    """Handshake, send one line, read the echo.

    Strict mode lets OpenSSL enforce trust, validity and hostname. When several
    checks fail the reason reported is the first of expired, untrusted,
    hostname. Lax mode disables verification but still speaks TLS.
    """
    mode = ClientMode(mode)
    endpoint = f"{host}:{port}"
    ctx = _client_context(mode, trust_anchors)
    raw = _connect(host, port, timeout)
    try:
        with ctx.wrap_socket(raw, server_hostname=expected_host) as tls:
            tls.sendall(PROBE_PAYLOAD)
            echo = tls.recv(len(PROBE_PAYLOAD))
            cipher = tls.cipher()
            version = tls.version()
        detail = "echo ok" if echo == PROBE_PAYLOAD else f"unexpected echo {echo!r}"
        return ProbeOutcome(endpoint, mode, True, None, version, cipher[0] if cipher else None, detail)
    except ssl.SSLCertVerificationError as exc:
        reasons = {_VERIFY_CODES.get(exc.verify_code, FailureReason.OTHER)}
        if FailureReason.EXPIRED not in reasons:
            try:
                if not is_current(fetch_leaf(host, port, expected_host, timeout)):
                    reasons.add(FailureReason.EXPIRED)
            except (OSError, ValueError) as again:
                log.debug("could not refetch leaf from %s: %s", endpoint, again)
        reason = next(r for r in _PRIORITY if r in reasons)
        return ProbeOutcome(endpoint, mode, False, reason, detail=exc.verify_message or str(exc))
    except ssl.SSLError as exc:
        return ProbeOutcome(endpoint, mode, False, FailureReason.OTHER, detail=str(exc))
    except (ConnectionError, socket.timeout) as exc:
        raise ProbeNetworkError(getattr(exc, "errno", None), f"{endpoint}: {exc}") from exc
    finally:
        raw.close()
