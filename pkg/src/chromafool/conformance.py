"""Golden-transcript conformance probe for external oracles.

The probe holds one frozen request (a fixed 8 x 8 purple-gradient raster
chosen to be accepted by the default gate) and the exact response a
conforming classifier bridge returns for it.  ``oracle-check`` replays the
request and compares: byte equality for wire transports, decoded-value
equality for built-ins.
"""

from __future__ import annotations

import json

import numpy as np

from .imagecore import ColorMode, Image
from .oracle import (OracleSpec, build_oracle, decode_verdict, encode_request,
                     DEFAULT_SECRET_CHROMA, DEFAULT_TOLERANCE)

__all__ = ["GOLDEN_REQUEST_ID", "golden_image", "golden_request_bytes",
           "GOLDEN_RESPONSE", "run_oracle_check"]

GOLDEN_REQUEST_ID = "golden-0"

#: Exact line a conforming bridge answers for the golden request (with the
#: default gate parameters and no enrolled gallery).
GOLDEN_RESPONSE = (
    '{"id": "golden-0", "label": 1, "quality": 0.6060546875, '
    '"match_id": null}\n'
)


def golden_image() -> Image:
    """Deterministic 8 x 8 raster whose chroma sits inside the default gate."""
    y, x = np.mgrid[0:8, 0:8]
    r = (120 + 4 * x + 2 * y).astype(np.uint8)
    g = (30 + x).astype(np.uint8)
    pixels = np.stack([r, g, r], axis=-1)
    return Image(pixels, ColorMode.INTEGER)


def golden_request_bytes() -> bytes:
    return encode_request(GOLDEN_REQUEST_ID, golden_image())


def _expected_verdict():
    return decode_verdict(GOLDEN_RESPONSE, GOLDEN_REQUEST_ID)


def run_oracle_check(spec: OracleSpec,
                     secret_chroma=DEFAULT_SECRET_CHROMA,
                     tolerance=DEFAULT_TOLERANCE) -> tuple[bool, str]:
    """Replay the golden request against an oracle and compare the verdict.

    Wire oracles (exec, http) must reproduce the golden response bytes
    exactly; built-ins must produce the same decoded verdict.
    """
    expected = _expected_verdict()
    if spec.kind == "exec":
        import subprocess

        proc = subprocess.Popen(
            __import__("shlex").split(spec.value),
            stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        )
        try:
            proc.stdin.write(golden_request_bytes())
            proc.stdin.flush()
            line = proc.stdout.readline().decode("utf-8")
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)
        if line != GOLDEN_RESPONSE:
            return False, (f"byte mismatch:\n  expected {GOLDEN_RESPONSE!r}"
                           f"\n  received {line!r}")
        return True, "golden transcript reproduced byte-for-byte"
    if spec.kind == "http":
        import urllib.request

        req = urllib.request.Request(
            spec.value.rstrip("/") + "/v1/classify",
            data=golden_request_bytes(),
            headers={"Content-Type": "application/json"}, method="POST",
        )
        with urllib.request.urlopen(req, timeout=10) as resp:
            body = resp.read().decode("utf-8")
        if body not in (GOLDEN_RESPONSE, GOLDEN_RESPONSE.rstrip("\n")):
            return False, (f"byte mismatch:\n  expected {GOLDEN_RESPONSE!r}"
                           f"\n  received {body!r}")
        return True, "golden transcript reproduced byte-for-byte"

    oracle = build_oracle(spec, secret_chroma=secret_chroma,
                          tolerance=tolerance)
    verdict = oracle.verdict(golden_image())
    same = (verdict.label == expected.label
            and abs(verdict.quality - expected.quality) < 1e-12
            and verdict.match_id == expected.match_id)
    if not same:
        return False, f"verdict mismatch: got {verdict}, expected {expected}"
    return True, "builtin verdict matches the golden transcript"


def regenerate_golden_response() -> str:
    """Recompute the canonical response text from the built-in gate.

    Maintenance helper: the frozen GOLDEN_RESPONSE constant above must equal
    this output (asserted by the test suite).
    """
    oracle = build_oracle(OracleSpec("builtin", "colorgate"))
    verdict = oracle.verdict(golden_image())
    doc = {"id": GOLDEN_REQUEST_ID, "label": verdict.label,
           "quality": verdict.quality, "match_id": verdict.match_id}
    return json.dumps(doc) + "\n"
