"""NDJSON tagging server.

Speaks the line protocol expected by the audiolime subprocess
predictor: a one-line handshake on startup, then one JSON reply per
request line, in request order, until stdin closes. A malformed
request gets an error reply; nothing a client sends can crash the
loop.
"""

import base64
import binascii
import dataclasses
import json
import sys

import numpy as np

from .adapter import external_model
from .heuristics import RULE_BASED_TAGS, rule_based_scores

PROTOCOL_VERSION = 1
MODES = ("rule_based", "external_model")


@dataclasses.dataclass(frozen=True)
class ShimConfig:
    """What the server declares in its handshake and enforces per request."""

    mode: str = "rule_based"
    input_rate: int = 8000
    input_length: int = 8000
    tags: tuple = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.input_rate <= 0:
            raise ValueError("input_rate must be positive")
        if self.input_length <= 0:
            raise ValueError("input_length must be positive")
        if self.mode == "rule_based":
            if self.tags is not None and tuple(self.tags) != RULE_BASED_TAGS:
                raise ValueError(
                    f"rule_based mode always scores {RULE_BASED_TAGS}"
                )
            tags = RULE_BASED_TAGS
        else:
            if not self.tags:
                raise ValueError("external_model mode requires tags")
            tags = tuple(str(t) for t in self.tags)
            if len(set(tags)) != len(tags):
                raise ValueError("tags must be unique")
        object.__setattr__(self, "tags", tags)


def serve(config: ShimConfig, stdin=None, stdout=None) -> None:
    """Run the request loop until the input stream closes."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    _write(
        stdout,
        {
            "protocol": PROTOCOL_VERSION,
            "input_rate": config.input_rate,
            "input_length": config.input_length,
            "tags": list(config.tags),
        },
    )
    for line in stdin:
        if not line.strip():
            continue
        _write(stdout, _reply(config, line))


def _write(stdout, payload: dict) -> None:
    stdout.write(json.dumps(payload) + "\n")
    stdout.flush()


def _reply(config: ShimConfig, line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"id": None, "error": f"invalid JSON: {exc}"}
    if not isinstance(msg, dict):
        return {"id": None, "error": "request must be a JSON object"}
    request_id = msg.get("id")
    # bool is an int subclass but not a valid id
    if isinstance(request_id, bool) or not isinstance(request_id, int) or request_id < 0:
        return {"id": None, "error": "missing or invalid id"}
    try:
        samples = _decode_request(config, msg)
        scores = _score(config, samples)
    except Exception as exc:  # noqa: BLE001 - the loop must outlive any request
        return {"id": request_id, "error": str(exc) or type(exc).__name__}
    return {"id": request_id, "scores": scores}


def _decode_request(config: ShimConfig, msg: dict) -> np.ndarray:
    rate = msg.get("sample_rate")
    if rate != config.input_rate:
        raise ValueError(f"expected sample_rate {config.input_rate}, got {rate!r}")
    pcm = msg.get("pcm")
    if not isinstance(pcm, str):
        raise ValueError("pcm must be a base64 string")
    try:
        raw = base64.b64decode(pcm, validate=True)
    except binascii.Error as exc:
        raise ValueError(f"pcm is not valid base64: {exc}") from exc
    if len(raw) % 4:
        raise ValueError(
            f"pcm decodes to {len(raw)} bytes, not a whole number of float32 samples"
        )
    samples = np.frombuffer(raw, dtype="<f4")
    if len(samples) != config.input_length:
        raise ValueError(
            f"expected {config.input_length} samples, got {len(samples)}"
        )
    if not np.all(np.isfinite(samples)):
        raise ValueError("pcm contains non-finite samples")
    return samples


def _score(config: ShimConfig, samples: np.ndarray) -> dict:
    if config.mode == "rule_based":
        raw = rule_based_scores(samples, config.input_rate)
    else:
        raw = external_model(samples, config.input_rate, config.tags)
    missing = [tag for tag in config.tags if tag not in raw]
    if missing:
        raise ValueError(f"model did not score tags: {missing}")
    return {tag: float(raw[tag]) for tag in config.tags}
