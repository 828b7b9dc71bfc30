"""Reference bridge: anti-spoofing verdicts over line-delimited JSON.

Wraps a verdict model (the built-in color-gate mirror or a user module)
behind the wire protocol attacking tools speak: stdio child-process mode
for local runs, HTTP for remote models.
"""

from .model import (ColorGateMirror, TemplateMatcher, VerdictError,
                    wrap_user_model)
from .server import handle_request_line, serve_http, serve_stdio

__version__ = "0.1.0"
