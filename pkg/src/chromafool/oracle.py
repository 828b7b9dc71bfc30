"""Attacker-facing face pipeline oracles and query accounting.

A pipeline verdict bundles the three stages an access-control system runs:
a hard anti-spoofing label, a face-quality score in [0, 1] and an optional
matched identity.  The attacker sees nothing else.  Sessions meter the
query budget: every successful classification costs exactly one query,
quality and match included.

Built-in oracles make the toolkit self-contained: ``colorgate`` accepts an
image when its mean-channel chroma falls near a secret target (a synthetic
stand-in for a color-sensitive classifier), ``always-spoof`` never accepts.
External classifiers attach over a line-delimited JSON protocol, either as
a child process or over HTTP.
"""

from __future__ import annotations

import base64
import io
import json
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage

from .imagecore import ColorMode, Image, grayscale, resize_bilinear

__all__ = [
    "SPOOFING",
    "BONAFIDE",
    "DEFAULT_SECRET_CHROMA",
    "DEFAULT_TOLERANCE",
    "MATCH_THRESHOLD",
    "TEMPLATE_SIZE",
    "PipelineVerdict",
    "QueryBudgetExceeded",
    "TransportError",
    "MalformedResponseError",
    "OutOfRangeResponseError",
    "Gallery",
    "enroll_template",
    "match_identity",
    "colorgate_verdict",
    "ColorgateOracle",
    "AlwaysSpoofOracle",
    "ExecOracle",
    "HttpOracle",
    "OracleSession",
    "OracleSpec",
    "parse_oracle_spec",
    "build_oracle",
    "encode_png",
    "decode_verdict",
]

SPOOFING = 0
BONAFIDE = 1

#: Secret chroma of the default colorgate: a purple-dominant direction.
DEFAULT_SECRET_CHROMA = (0.45, 0.10, 0.45)
DEFAULT_TOLERANCE = 0.14

MATCH_THRESHOLD = 0.8
TEMPLATE_SIZE = 64

_RETRIES = 3
_BACKOFF = 0.1


class QueryBudgetExceeded(RuntimeError):
    """The session's query limit is spent; the attack must surrender."""


class TransportError(RuntimeError):
    """An external oracle could not be reached after all retries."""


class MalformedResponseError(ValueError):
    """An external oracle answered with an undecodable or invalid document."""


class OutOfRangeResponseError(MalformedResponseError):
    """A decodable response whose fields violate the verdict invariants."""


@dataclass(frozen=True)
class PipelineVerdict:
    """One pipeline answer: hard label, quality score, optional identity."""

    label: int
    quality: float
    match_id: str | None = None

    def __post_init__(self):
        if self.label not in (SPOOFING, BONAFIDE):
            raise OutOfRangeResponseError(f"label {self.label} not in {{0, 1}}")
        if not (0.0 <= self.quality <= 1.0):
            raise OutOfRangeResponseError(
                f"quality {self.quality} outside [0, 1]"
            )


# ---------------------------------------------------------------------------
# identity matching


def enroll_template(img: Image) -> np.ndarray:
    """Enrollment template: the grayscale image resized to 64 x 64."""
    return resize_bilinear(grayscale(img), TEMPLATE_SIZE, TEMPLATE_SIZE)


def _normalize(v: np.ndarray) -> np.ndarray | None:
    flat = v.astype(np.float64).ravel()
    flat = flat - flat.mean()
    norm = np.linalg.norm(flat)
    if norm == 0.0:
        return None
    return flat / norm


class Gallery:
    """Enrolled identities and their grayscale templates.

    Templates are normalized (zero mean, unit norm) once at enrollment and
    stacked into one matrix, so a match is a resize plus a single matrix
    product.
    """

    def __init__(self):
        self._ids: list[str] = []
        self._templates: list[np.ndarray] = []
        self._normalized: list[np.ndarray | None] = []
        self._matrix = None

    def __len__(self):
        return len(self._ids)

    def enroll(self, identity: str, template: np.ndarray) -> None:
        t = np.asarray(template, dtype=np.float64)
        if t.shape != (TEMPLATE_SIZE, TEMPLATE_SIZE):
            raise ValueError(
                f"template must be {TEMPLATE_SIZE}x{TEMPLATE_SIZE}, got {t.shape}"
            )
        self._ids.append(str(identity))
        self._templates.append(t)
        self._normalized.append(_normalize(t))
        self._matrix = None

    def enroll_image(self, identity: str, img: Image) -> None:
        self.enroll(identity, enroll_template(img))

    def _template_matrix(self) -> np.ndarray:
        if self._matrix is None:
            rows = [tn if tn is not None
                    else np.zeros(TEMPLATE_SIZE * TEMPLATE_SIZE)
                    for tn in self._normalized]
            self._matrix = np.stack(rows)
        return self._matrix

    def match(self, img: Image) -> tuple[str | None, float]:
        """Best-correlated enrolled identity, or None below the threshold.

        Returns (identity, score); normalized cross-correlation is invariant
        to any positive scaling of the probe's gray values.
        """
        if not self._ids:
            return None, 0.0
        probe = _normalize(_probe_gray(img))
        if probe is None:
            return None, 0.0
        scores = self._template_matrix() @ probe
        best = int(np.argmax(scores))
        best_score = float(scores[best])
        if best_score >= MATCH_THRESHOLD and self._normalized[best] is not None:
            return self._ids[best], best_score
        return None, best_score


def _probe_gray(img: Image) -> np.ndarray:
    """Grayscale probe at template size; fast 4x block path for 256x256."""
    h, w = img.height, img.width
    if h == 4 * TEMPLATE_SIZE and w == 4 * TEMPLATE_SIZE:
        # bilinear at an exact 4x half-pixel decimation reduces to the mean
        # of the central 2x2 block; equivalent to resize_bilinear here
        g = grayscale(img)
        inner = g[1:, 1:]
        blocks = (inner[0::4, 0::4][:TEMPLATE_SIZE, :TEMPLATE_SIZE]
                  + inner[0::4, 1::4][:TEMPLATE_SIZE, :TEMPLATE_SIZE]
                  + inner[1::4, 0::4][:TEMPLATE_SIZE, :TEMPLATE_SIZE]
                  + inner[1::4, 1::4][:TEMPLATE_SIZE, :TEMPLATE_SIZE])
        return blocks * 0.25
    return resize_bilinear(grayscale(img), TEMPLATE_SIZE, TEMPLATE_SIZE)


def match_identity(img: Image, gallery: Gallery) -> str | None:
    """Identity of the best template with NCC >= 0.8, else None."""
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    return gallery.match(img)[0]


# ---------------------------------------------------------------------------
# built-in oracles


def colorgate_verdict(img: Image, secret_chroma, tolerance: float,
                      gallery: Gallery | None = None) -> PipelineVerdict:
    """Verdict of the synthetic color-sensitive pipeline.

    Bonafide iff the Euclidean distance between the image's mean-channel
    chroma and ``secret_chroma`` is below ``tolerance``; an all-black image
    is Spoofing by convention.  Quality rewards mid-gray brightness and
    penalizes saturated values; the identity comes from the NCC matcher.

    The arithmetic below (channel means, gray mean from the means, exact
    0/255 saturation count) is the wire-conformance contract: external
    reference bridges reproduce it bit for bit.
    """
    secret = np.asarray(secret_chroma, dtype=np.float64).reshape(3)
    if (secret < 0).any() or abs(float(secret.sum()) - 1.0) > 1e-9:
        raise ValueError("secret chroma must lie on the unit simplex")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    pixels = img.pixels
    means = pixels.reshape(-1, 3).mean(axis=0, dtype=np.float64)
    total = float(means.sum())
    # the grayscale transform is linear, so the gray mean is the weighted
    # channel-mean combination
    gray_mean = 0.3 * float(means[0]) + 0.59 * float(means[1]) \
        + 0.11 * float(means[2])
    brightness_term = max(0.0, 1.0 - abs(gray_mean - 128.0) / 128.0)
    saturated = int(np.count_nonzero(pixels == 0))
    saturated += int(np.count_nonzero(pixels == 255))
    quality = brightness_term * (1.0 - saturated / pixels.size)
    if total == 0.0:
        label = SPOOFING
    else:
        chroma = means / total
        dist = float(np.linalg.norm(chroma - secret))
        label = BONAFIDE if dist < tolerance else SPOOFING
    match_id = gallery.match(img)[0] if gallery is not None else None
    return PipelineVerdict(label=label, quality=quality, match_id=match_id)


class ColorgateOracle:
    """Deterministic synthetic victim with a secret chroma acceptance ball."""

    def __init__(self, secret_chroma=DEFAULT_SECRET_CHROMA,
                 tolerance=DEFAULT_TOLERANCE, gallery: Gallery | None = None):
        self.secret_chroma = tuple(float(v) for v in secret_chroma)
        self.tolerance = float(tolerance)
        self.gallery = gallery
        # validate eagerly on a probe-free path
        s = np.asarray(self.secret_chroma)
        if (s < 0).any() or abs(float(s.sum()) - 1.0) > 1e-9:
            raise ValueError("secret chroma must lie on the unit simplex")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def verdict(self, img: Image) -> PipelineVerdict:
        return colorgate_verdict(img, self.secret_chroma, self.tolerance,
                                 self.gallery)

    def close(self):
        pass


class AlwaysSpoofOracle:
    """Constant oracle: everything is a spoof.  Unsatisfiable by design."""

    def verdict(self, img: Image) -> PipelineVerdict:
        return PipelineVerdict(label=SPOOFING, quality=0.5, match_id=None)

    def close(self):
        pass


# ---------------------------------------------------------------------------
# wire protocol


def encode_png(img: Image) -> bytes:
    """Lossless PNG bytes of an integer-mode image."""
    if img.mode is not ColorMode.INTEGER:
        raise ValueError("wire transmission requires an integer-mode image")
    buf = io.BytesIO()
    _PILImage.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_request(request_id: str, img: Image) -> bytes:
    doc = {"id": request_id,
           "image_png_b64": base64.b64encode(encode_png(img)).decode("ascii")}
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def decode_verdict(text: str, expect_id: str) -> PipelineVerdict:
    """Parse and validate one wire response document."""
    try:
        doc = json.loads(text)
    except (ValueError, TypeError) as exc:
        raise MalformedResponseError(
            f"undecodable oracle response: {text!r}"
        ) from exc
    if not isinstance(doc, dict):
        raise MalformedResponseError(f"response is not an object: {text!r}")
    if "error" in doc:
        raise MalformedResponseError(f"oracle error response: {doc['error']!r}")
    if doc.get("id") != expect_id:
        raise MalformedResponseError(
            f"response id {doc.get('id')!r} does not match request {expect_id!r}"
        )
    if "label" not in doc:
        raise MalformedResponseError(f"response missing 'label': {text!r}")
    if "quality" not in doc:
        raise MalformedResponseError(f"response missing 'quality': {text!r}")
    label = doc["label"]
    quality = doc["quality"]
    match_id = doc.get("match_id")
    if label not in (0, 1):
        raise OutOfRangeResponseError(f"label {label!r} not in {{0, 1}}")
    if not isinstance(quality, (int, float)) or not 0.0 <= quality <= 1.0:
        raise OutOfRangeResponseError(f"quality {quality!r} outside [0, 1]")
    if match_id is not None and not isinstance(match_id, str):
        raise MalformedResponseError(f"match_id {match_id!r} is not a string")
    return PipelineVerdict(label=int(label), quality=float(quality),
                           match_id=match_id)


class ExecOracle:
    """External classifier spoken to over a child process's stdio."""

    def __init__(self, command: str):
        self.command = command
        self._argv = shlex.split(command)
        if not self._argv:
            raise ValueError("empty oracle command")
        self._proc = None
        self._counter = 0

    def _ensure_process(self):
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            )
        return self._proc

    def _shutdown_process(self):
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
            self._proc = None

    def verdict(self, img: Image) -> PipelineVerdict:
        self._counter += 1
        request_id = f"q{self._counter}"
        payload = encode_request(request_id, img)
        last_exc = None
        for attempt in range(_RETRIES):
            try:
                proc = self._ensure_process()
                proc.stdin.write(payload)
                proc.stdin.flush()
                line = proc.stdout.readline()
                if not line:
                    raise TransportError("oracle process closed its stdout")
                return decode_verdict(line.decode("utf-8"), request_id)
            except (OSError, TransportError) as exc:
                last_exc = exc
                self._shutdown_process()
                time.sleep(_BACKOFF * (2 ** attempt))
        raise TransportError(
            f"oracle command failed after {_RETRIES} attempts: {last_exc}"
        )

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except Exception:
                self._shutdown_process()
        self._proc = None


class HttpOracle:
    """External classifier behind POST <base>/v1/classify."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._counter = 0

    def verdict(self, img: Image) -> PipelineVerdict:
        self._counter += 1
        request_id = f"q{self._counter}"
        payload = encode_request(request_id, img)
        url = self.base_url + "/v1/classify"
        last_exc = None
        for attempt in range(_RETRIES):
            req = urllib.request.Request(
                url, data=payload,
                headers={"Content-Type": "application/json"}, method="POST",
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    if resp.status != 200:
                        raise TransportError(f"HTTP status {resp.status}")
                    body = resp.read().decode("utf-8")
                return decode_verdict(body, request_id)
            except urllib.error.HTTPError as exc:
                last_exc = TransportError(f"HTTP status {exc.code}")
                time.sleep(_BACKOFF * (2 ** attempt))
            except (urllib.error.URLError, OSError, TransportError) as exc:
                last_exc = exc
                time.sleep(_BACKOFF * (2 ** attempt))
        raise TransportError(
            f"oracle endpoint failed after {_RETRIES} attempts: {last_exc}"
        )

    def close(self):
        pass


# ---------------------------------------------------------------------------
# sessions and specs


class OracleSession:
    """One metered conversation with an oracle.

    classify() costs exactly one query per successful verdict; transport
    retries that never produced a verdict cost nothing.  Calls serialize on
    an internal lock, so the counter is race-free and stdio transports see
    strictly ordered requests.  Images must be integer mode: what is metered
    is the raster a camera could have produced, and the wire and built-in
    paths then see bit-identical pixels.
    """

    def __init__(self, oracle, query_limit: int):
        if query_limit < 1:
            raise ValueError("query limit must be positive")
        self._oracle = oracle
        self._limit = int(query_limit)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    @property
    def limit(self) -> int:
        return self._limit

    @property
    def remaining(self) -> int:
        return self._limit - self._count

    def extend_limit(self, extra: int) -> None:
        """Grant additional budget (used for post-attack verification)."""
        if extra < 0:
            raise ValueError("extension must be non-negative")
        with self._lock:
            self._limit += int(extra)

    def classify(self, img: Image) -> PipelineVerdict:
        if img.mode is not ColorMode.INTEGER:
            raise ValueError("classify requires an integer-mode image")
        with self._lock:
            if self._count >= self._limit:
                raise QueryBudgetExceeded(
                    f"query limit of {self._limit} exhausted"
                )
            verdict = self._oracle.verdict(img)
            self._count += 1
        return verdict

    def close(self):
        self._oracle.close()


@dataclass(frozen=True)
class OracleSpec:
    """Parsed oracle selector: which kind, plus its parameter string."""

    kind: str
    value: str = ""

    def describe(self) -> str:
        return f"{self.kind}:{self.value}" if self.value else self.kind


def parse_oracle_spec(text: str) -> OracleSpec:
    """Parse selectors like builtin:colorgate, exec:"cmd ..." or http:URL."""
    if ":" not in text:
        raise ValueError(f"oracle spec {text!r} must look like kind:value")
    head, rest = text.split(":", 1)
    head = head.strip().lower()
    if head == "builtin":
        name = rest.strip().lower()
        if name not in ("colorgate", "always-spoof"):
            raise ValueError(f"unknown builtin oracle {rest!r}")
        return OracleSpec(kind="builtin", value=name)
    if head == "exec":
        cmd = rest.strip()
        if cmd.startswith('"') and cmd.endswith('"') and len(cmd) >= 2:
            cmd = cmd[1:-1]
        if not cmd:
            raise ValueError("exec oracle needs a command line")
        return OracleSpec(kind="exec", value=cmd)
    if head == "http":
        if not rest.strip():
            raise ValueError("http oracle needs a URL")
        return OracleSpec(kind="http", value=rest.strip())
    raise ValueError(f"unknown oracle kind {head!r}")


def build_oracle(spec: OracleSpec, secret_chroma=DEFAULT_SECRET_CHROMA,
                 tolerance=DEFAULT_TOLERANCE, gallery: Gallery | None = None):
    """Instantiate the oracle an OracleSpec names."""
    if spec.kind == "builtin":
        if spec.value == "colorgate":
            return ColorgateOracle(secret_chroma, tolerance, gallery)
        return AlwaysSpoofOracle()
    if spec.kind == "exec":
        return ExecOracle(spec.value)
    if spec.kind == "http":
        return HttpOracle(spec.value)
    raise ValueError(f"unknown oracle kind {spec.kind!r}")
