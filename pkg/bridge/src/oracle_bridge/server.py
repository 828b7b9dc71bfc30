"""Protocol plumbing: line-delimited JSON over stdio, or the same over HTTP.

One request per line: ``{"id": <str>, "image_png_b64": <base64 PNG>}``.
One response per request, in order: ``{"id", "label", "quality",
"match_id"}`` on success, ``{"id", "error"}`` on anything malformed; the
server never dies on bad input.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .model import VerdictError

__all__ = ["handle_request_line", "serve_stdio", "serve_http"]


def _decode_image(b64_text: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64_text, validate=True)
    except (binascii.Error, TypeError, ValueError) as exc:
        raise ValueError(f"invalid base64 payload: {exc}") from exc
    try:
        with PILImage.open(io.BytesIO(raw)) as im:
            if im.mode != "RGB":
                raise ValueError(f"expected RGB image, got mode {im.mode!r}")
            return np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError("payload is not a decodable image") from exc


def _error_response(request_id, message: str) -> str:
    return json.dumps({"id": request_id, "error": message}) + "\n"


def handle_request_line(line: str, verdict_fn) -> str:
    """Answer one protocol line; malformed input yields an error response."""
    request_id = None
    try:
        doc = json.loads(line)
        if not isinstance(doc, dict):
            raise ValueError("request is not a JSON object")
        request_id = doc.get("id")
        if not isinstance(request_id, str):
            request_id = None
            raise ValueError("request missing string 'id'")
        payload = doc.get("image_png_b64")
        if not isinstance(payload, str):
            raise ValueError("request missing 'image_png_b64'")
        pixels = _decode_image(payload)
        label, quality, match_id = verdict_fn(pixels)
        return json.dumps({"id": request_id, "label": label,
                           "quality": quality, "match_id": match_id}) + "\n"
    except (ValueError, VerdictError, KeyError, TypeError) as exc:
        return _error_response(request_id, str(exc))
    except Exception as exc:  # model raised: report, keep serving
        return _error_response(request_id, f"{type(exc).__name__}: {exc}")


def serve_stdio(verdict_fn, stdin=None, stdout=None) -> None:
    """Serve until stdin closes; strictly one in-order response per line."""
    import sys

    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for raw in stdin:
        if not raw.strip():
            continue
        try:
            line = raw.decode("utf-8")
        except UnicodeDecodeError:
            stdout.write(_error_response(None, "undecodable bytes").encode())
            stdout.flush()
            continue
        response = handle_request_line(line, verdict_fn)
        stdout.write(response.encode("utf-8"))
        stdout.flush()


def serve_http(verdict_fn, port: int, ready_callback=None) -> None:
    """Serve POST /v1/classify on the given port until interrupted."""

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path != "/v1/classify":
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8", errors="replace")
            response = handle_request_line(body, verdict_fn).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(response)))
            self.end_headers()
            self.wfile.write(response)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", port), Handler)
    if ready_callback is not None:
        ready_callback(server)
    try:
        server.serve_forever()
    finally:
        server.server_close()
