"""Line-delimited JSON service over TCP.

One JSON object per line in, one per line out. Requests carry an
optional correlation "id" which is echoed verbatim in the response.
Malformed lines answer {"error": "BadRequest"} without closing the
connection; engine errors answer {"error": <code>, "message": ...}.
"""

from __future__ import annotations

import json
import socketserver
from typing import Any

import numpy as np

from prodreid.errors import BadRequest, ProdReidError
from prodreid.frontdoor.runtime import Engine

_MAX_LINE = 64 * 1024 * 1024  # refuse absurd single-line payloads


def _require(payload: dict, key: str, kind: type) -> Any:
    if key not in payload:
        raise BadRequest(f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, kind):
        raise BadRequest(f"field {key!r} must be {kind.__name__}")
    return value


def handle_request(engine: Engine, payload: dict) -> dict:
    """Dispatch one decoded request object to the engine."""
    op = _require(payload, "op", str)
    if op == "stats":
        return engine.stats()
    if op == "query":
        values = _require(payload, "values", list)
        k = payload.get("k")
        tau = payload.get("tau")
        vote_k = payload.get("vote_k", 5)
        if k is not None and not isinstance(k, int):
            raise BadRequest("field 'k' must be int")
        if tau is not None and not isinstance(tau, (int, float)):
            raise BadRequest("field 'tau' must be a number")
        if not isinstance(vote_k, int):
            raise BadRequest("field 'vote_k' must be int")
        try:
            query = np.asarray(values, dtype=np.float32)
        except (TypeError, ValueError) as exc:
            raise BadRequest(f"field 'values' is not a numeric vector: {exc}") from exc
        response, decision = engine.query(
            query, k=k, tau=None if tau is None else float(tau), vote_k=vote_k
        )
        out = decision.as_dict()
        out["hits"] = [hit.as_dict() for hit in response.hits]
        out["timings_us"] = response.timings_us
        return out
    if op == "enroll":
        label = _require(payload, "label", str)
        raw_vectors = _require(payload, "vectors", list)
        if not raw_vectors:
            raise BadRequest("field 'vectors' must be non-empty")
        vectors = []
        for row in raw_vectors:
            if not isinstance(row, list):
                raise BadRequest("field 'vectors' must be a list of vectors")
            try:
                vectors.append(np.asarray(row, dtype=np.float32))
            except (TypeError, ValueError) as exc:
                raise BadRequest(f"bad vector in 'vectors': {exc}") from exc
        return engine.enroll(label, vectors)
    raise BadRequest(f"unknown op {op!r}")


def process_line(engine: Engine, line: bytes) -> dict:
    """Turn one raw request line into one response object. Never raises."""
    correlation: Any = None
    try:
        try:
            payload = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadRequest(f"malformed JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise BadRequest("request must be a JSON object")
        correlation = payload.get("id")
        out = handle_request(engine, payload)
    except ProdReidError as exc:
        out = {"error": exc.code, "message": str(exc)}
    except Exception as exc:  # keep the connection alive on surprises
        out = {"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}
    if correlation is not None:
        out["id"] = correlation
    return out


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        engine: Engine = self.server.engine  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline(_MAX_LINE)
            if not line:
                return
            if not line.strip():
                continue
            out = process_line(engine, line)
            self.wfile.write(json.dumps(out).encode("utf-8") + b"\n")
            self.wfile.flush()


class ReidServer(socketserver.ThreadingTCPServer):
    """TCP server bound to an Engine; one thread per connection."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, engine: Engine, host: str = "127.0.0.1", port: int = 0):
        self.engine = engine
        super().__init__((host, port), _Handler)

    @property
    def bound_port(self) -> int:
        return self.server_address[1]
