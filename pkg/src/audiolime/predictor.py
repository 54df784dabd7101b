"""Black-box tagger interface: in-process toy models and a wire-protocol client.

The engine only ever sees `score_batch(clips) -> list[TagScores]`, so a
deterministic toy tagger and an external model behind a subprocess are
interchangeable. Toy kinds are pure functions; the subprocess client
speaks newline-delimited JSON (see the protocol constants below).
"""

from __future__ import annotations

import base64
import json
import math
import queue
import shlex
import subprocess
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .audio import AudioClip, resample
from .decomposition import ComponentSet, SeparatorSpec, separate_hpss
from .errors import AmbiguousMaskError, InvalidInputError, PredictorError

PROTOCOL_VERSION = 1

# toy_linear refuses to attribute a clip whose recovered mask entries sit
# further than this from 0 or 1, or whose reconstruction misses by more
# than this relative error.
MASK_ROUND_SLACK = 0.25
MASK_RESIDUAL_TOL = 1e-6

_QUIET_SCALE = 0.01


@dataclass(frozen=True, eq=False)
class TagScores:
    """Probability-like score per tag; insertion order is preserved."""

    scores: dict

    def __post_init__(self) -> None:
        if not self.scores:
            raise InvalidInputError("TagScores needs at least one tag")
        clean = {}
        for tag, value in self.scores.items():
            value = float(value)
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"score for tag {tag!r} outside [0, 1]: {value}")
            clean[str(tag)] = value
        object.__setattr__(self, "scores", clean)

    @property
    def top_tag(self) -> str:
        """Tag with the maximal score; ties go to the lexicographically smallest tag."""
        return min(self.scores, key=lambda tag: (-self.scores[tag], tag))

    def __getitem__(self, tag: str) -> float:
        return self.scores[tag]


@dataclass(frozen=True)
class PredictorSpec:
    """Configuration selecting and parameterizing a predictor.

    input_rate/input_length fix the model's expected input; clips are
    resampled and center-padded/truncated to match. Either may be None
    for the toy kinds, meaning "accept the clip as-is"; for subprocess
    predictors both are declared by the child's handshake.
    """

    kind: str
    input_rate: int | None = None
    input_length: int | None = None
    # toy_linear settings
    component_set: ComponentSet | None = None
    weights: tuple = ()
    bias: float = 0.0
    # subprocess settings
    command: tuple = ()
    max_in_flight: int = 32
    timeout: float = 30.0
    # toy_energy settings
    separator: SeparatorSpec = field(default_factory=SeparatorSpec)

    def __post_init__(self) -> None:
        if self.kind not in ("toy_energy", "toy_linear", "subprocess"):
            raise InvalidInputError(f"unknown predictor kind {self.kind!r}")
        for name in ("input_rate", "input_length"):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise InvalidInputError(f"{name} must be positive, got {value}")
        if self.kind == "toy_linear":
            if self.component_set is None:
                raise InvalidInputError("toy_linear needs a component_set")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
            if len(self.weights) != len(self.component_set):
                raise InvalidInputError(
                    f"got {len(self.weights)} weights for "
                    f"{len(self.component_set)} components"
                )
        if self.kind == "subprocess":
            if not self.command:
                raise InvalidInputError("subprocess predictor needs a command line")
            object.__setattr__(self, "command", tuple(self.command))
            if self.max_in_flight < 1:
                raise InvalidInputError("max_in_flight must be >= 1")


def _fit_input(clip: AudioClip, rate: int | None, length: int | None) -> AudioClip:
    """Resample then center-pad or center-truncate to the model's input size."""
    if rate is not None and clip.sample_rate != rate:
        clip = resample(clip, rate)
    if length is None or len(clip) == length:
        return clip
    if len(clip) > length:
        start = (len(clip) - length) // 2
        return AudioClip(clip.samples[start : start + length], clip.sample_rate)
    pad = length - len(clip)
    left = pad // 2
    return AudioClip(
        np.pad(clip.samples, (left, pad - left)), clip.sample_rate
    )


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def toy_energy_tagger(clip: AudioClip, separator: SeparatorSpec | None = None) -> TagScores:
    """Deterministic tagger over {harmonic, percussive, quiet}.

    quiet = exp(-RMS / 0.01); the remaining mass 1 - quiet is split
    between harmonic and percussive in proportion to the energy of the
    corresponding separation estimate, so the ground truth dependence of
    every score on the input is known by construction.
    """
    quiet = math.exp(-clip.rms() / _QUIET_SCALE)
    parts = dict(separate_hpss(clip, separator))
    energy_h = float(np.sum(np.square(parts["harmonic"].samples, dtype=np.float64)))
    energy_p = float(np.sum(np.square(parts["percussive"].samples, dtype=np.float64)))
    total = energy_h + energy_p
    share_h = 0.5 if total == 0.0 else energy_h / total
    rest = 1.0 - quiet
    return TagScores(
        {"harmonic": rest * share_h, "percussive": rest * (1.0 - share_h), "quiet": quiet}
    )


class _MaskRecovery:
    """Least-squares attribution of rendered clips back to binary masks."""

    def __init__(self, component_set: ComponentSet):
        stack = np.stack(
            [c.audio.samples.astype(np.float64) for c in component_set.components]
        )
        self.stack = stack
        try:
            self.gram = cho_factor(stack @ stack.T)
        except np.linalg.LinAlgError as exc:
            raise AmbiguousMaskError(
                "component energies are collinear; masks are not identifiable"
            ) from exc

    def recover(self, clips: np.ndarray) -> np.ndarray:
        """clips: batch x samples float64 -> batch x d binary masks."""
        raw = cho_solve(self.gram, self.stack @ clips.T).T
        bits = np.rint(raw)
        off = np.abs(raw - bits)
        bad_round = (off > MASK_ROUND_SLACK) | ~np.isin(bits, (0.0, 1.0))
        recon = bits @ self.stack
        err = np.linalg.norm(recon - clips, axis=1)
        scale = np.maximum(np.linalg.norm(clips, axis=1), 1e-12)
        bad_fit = err > MASK_RESIDUAL_TOL * np.maximum(scale, 1.0)
        bad = bad_round.any(axis=1) | bad_fit
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise AmbiguousMaskError(
                f"clip {i} not attributable to a unique binary mask "
                f"(nearest {bits[i].astype(int).tolist()}, "
                f"max rounding gap {off[i].max():.3f}, "
                f"relative residual {err[i] / scale[i]:.2e})"
            )
        return bits


def toy_linear_tagger(
    clip: AudioClip,
    component_set: ComponentSet,
    weights,
    bias: float = 0.0,
) -> TagScores:
    """Black box that is exactly linear in the component mask.

    Recovers the binary mask the clip was composed from (least-squares
    against the component stack, rounded, verified by reconstruction)
    and returns {target: sigmoid(w . z + b), other: 1 - target}. A clip
    that does not match any mask raises AmbiguousMaskError rather than
    guessing.
    """
    recovery = _MaskRecovery(component_set)
    z = recovery.recover(clip.samples.astype(np.float64)[None, :])[0]
    value = _sigmoid(float(np.dot(np.asarray(weights, dtype=np.float64), z)) + bias)
    return TagScores({"target": value, "other": 1.0 - value})


class _ToyEnergyPredictor:
    tags = ("harmonic", "percussive", "quiet")

    def __init__(self, spec: PredictorSpec):
        self.spec = spec

    def score_batch(self, clips) -> list[TagScores]:
        return [
            toy_energy_tagger(
                _fit_input(c, self.spec.input_rate, self.spec.input_length),
                self.spec.separator,
            )
            for c in clips
        ]

    def close(self) -> None:
        pass


class _ToyLinearPredictor:
    tags = ("target", "other")

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        self.recovery = _MaskRecovery(spec.component_set)
        self.weights = np.asarray(spec.weights, dtype=np.float64)

    def score_batch(self, clips) -> list[TagScores]:
        prepared = [
            _fit_input(c, self.spec.input_rate, self.spec.input_length) for c in clips
        ]
        expected = self.recovery.stack.shape[1]
        for c in prepared:
            if len(c) != expected:
                raise InvalidInputError(
                    f"toy_linear expects clips of {expected} samples, got {len(c)}"
                )
        batch = np.stack([c.samples.astype(np.float64) for c in prepared])
        masks = self.recovery.recover(batch)
        values = masks @ self.weights + self.spec.bias
        out = []
        for v in values:
            s = _sigmoid(float(v))
            out.append(TagScores({"target": s, "other": 1.0 - s}))
        return out

    def close(self) -> None:
        pass


class _SubprocessPredictor:
    """Client for an external tagger speaking the NDJSON wire protocol.

    One child process; requests are pipelined up to max_in_flight and
    replies are matched by id, so out-of-order replies are legal. Writes
    are serialized under a lock, making the client safe to share.
    """

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        self._lock = threading.Lock()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                list(spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise PredictorError(f"cannot start predictor {spec.command}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        handshake = self._read_json(what="handshake")
        if handshake.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise PredictorError(
                f"unsupported protocol {handshake.get('protocol')!r} in handshake"
            )
        try:
            self.input_rate = int(handshake["input_rate"])
            self.input_length = int(handshake["input_length"])
            self.tags = tuple(str(t) for t in handshake["tags"])
        except (KeyError, TypeError, ValueError) as exc:
            self.close()
            raise PredictorError(f"malformed handshake: {handshake!r}") from exc
        for name, declared in (("input_rate", self.input_rate), ("input_length", self.input_length)):
            configured = getattr(spec, name)
            if configured is not None and configured != declared:
                self.close()
                raise PredictorError(
                    f"predictor declares {name}={declared}, spec says {configured}"
                )

    def _pump(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_json(self, what: str) -> dict:
        try:
            line = self._lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            raise PredictorError(f"timed out waiting for {what}") from None
        if line is None:
            try:
                code = self._proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                code = None
            raise PredictorError(f"predictor exited (code {code}) before {what}")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PredictorError(f"predictor sent invalid JSON for {what}: {line!r}") from exc
        if not isinstance(msg, dict):
            raise PredictorError(f"predictor sent non-object JSON for {what}: {msg!r}")
        return msg

    def _send(self, request_id: int, clip: AudioClip) -> None:
        pcm = base64.b64encode(clip.samples.astype("<f4").tobytes()).decode("ascii")
        line = json.dumps(
            {"id": request_id, "sample_rate": clip.sample_rate, "pcm": pcm}
        )
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PredictorError(
                f"predictor pipe closed while sending request {request_id}: {exc}"
            ) from exc

    def _parse_reply(self, msg: dict) -> tuple[int, TagScores]:
        if "id" not in msg:
            raise PredictorError(f"reply without id: {msg!r}")
        reply_id = msg["id"]
        if "error" in msg:
            raise PredictorError(f"predictor error for request {reply_id}: {msg['error']}")
        raw = msg.get("scores")
        if not isinstance(raw, dict) or not raw:
            raise PredictorError(f"reply {reply_id} lacks scores: {msg!r}")
        clean = {}
        for tag, value in raw.items():
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise PredictorError(
                    f"reply {reply_id}: non-numeric score for {tag!r}"
                ) from None
            if not math.isfinite(value):
                raise PredictorError(f"reply {reply_id}: non-finite score for {tag!r}")
            if not 0.0 <= value <= 1.0:
                warnings.warn(
                    f"predictor score {value} for {tag!r} clamped to [0, 1]",
                    stacklevel=4,
                )
                value = min(1.0, max(0.0, value))
            clean[str(tag)] = value
        return int(reply_id), TagScores(clean)

    def score_batch(self, clips) -> list[TagScores]:
        clips = list(clips)
        with self._lock:
            ids = list(range(self._next_id, self._next_id + len(clips)))
            self._next_id += len(clips)
            pending: set[int] = set()
            results: dict[int, TagScores] = {}
            sent = 0
            while len(results) < len(clips):
                while sent < len(clips) and len(pending) < self.spec.max_in_flight:
                    clip = _fit_input(clips[sent], self.input_rate, self.input_length)
                    self._send(ids[sent], clip)
                    pending.add(ids[sent])
                    sent += 1
                reply_id, scores = self._parse_reply(self._read_json(what="reply"))
                if reply_id not in pending:
                    raise PredictorError(f"reply id {reply_id} matches no pending request")
                pending.remove(reply_id)
                results[reply_id] = scores
        return [results[i] for i in ids]

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()


class Predictor:
    """Context-manager handle over an opened predictor backend."""

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        if spec.kind == "toy_energy":
            self._impl = _ToyEnergyPredictor(spec)
        elif spec.kind == "toy_linear":
            self._impl = _ToyLinearPredictor(spec)
        else:
            self._impl = _SubprocessPredictor(spec)

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def tags(self) -> tuple:
        return tuple(self._impl.tags)

    @property
    def is_pure(self) -> bool:
        """Whether equal clips are guaranteed equal scores (toy kinds only)."""
        return self.spec.kind != "subprocess"

    @property
    def input_rate(self) -> int | None:
        return getattr(self._impl, "input_rate", self.spec.input_rate)

    @property
    def input_length(self) -> int | None:
        return getattr(self._impl, "input_length", self.spec.input_length)

    def score_batch(self, clips) -> list[TagScores]:
        clips = list(clips)
        if not clips:
            raise InvalidInputError("predict needs a nonempty batch")
        return self._impl.score_batch(clips)

    def score(self, clip: AudioClip) -> TagScores:
        return self.score_batch([clip])[0]

    def close(self) -> None:
        self._impl.close()

    def __enter__(self) -> "Predictor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_predictor(spec: PredictorSpec) -> Predictor:
    """Open a predictor; use as a context manager so subprocesses get reaped."""
    return Predictor(spec)


def predict(spec: PredictorSpec, clips) -> list[TagScores]:
    """One-shot batch scoring; order of results matches order of clips."""
    with open_predictor(spec) as p:
        return p.score_batch(clips)


def parse_predictor_flag(text: str, component_set: ComponentSet | None = None) -> PredictorSpec:
    """Parse the CLI's --predictor syntax.

    Accepted forms: "toy-energy", "toy-linear:<w1>,<w2>,...[;bias=<b>]",
    and "cmd:<command line>" (shell-style quoting).
    """
    if text == "toy-energy":
        return PredictorSpec(kind="toy_energy")
    if text.startswith("toy-linear:"):
        body = text[len("toy-linear:") :]
        bias = 0.0
        if ";" in body:
            body, tail = body.split(";", 1)
            if not tail.startswith("bias="):
                raise InvalidInputError(f"bad toy-linear option {tail!r} (expected bias=<b>)")
            bias = float(tail[len("bias=") :])
        try:
            weights = tuple(float(w) for w in body.split(","))
        except ValueError as exc:
            raise InvalidInputError(f"bad toy-linear weights {body!r}") from exc
        if component_set is None:
            raise InvalidInputError("toy-linear predictor needs a decomposition first")
        return PredictorSpec(
            kind="toy_linear", component_set=component_set, weights=weights, bias=bias
        )
    if text.startswith("cmd:"):
        command = tuple(shlex.split(text[len("cmd:") :]))
        if not command:
            raise InvalidInputError("cmd: predictor needs a command line")
        return PredictorSpec(kind="subprocess", command=command)
    raise InvalidInputError(
        f"unknown predictor {text!r} (expected toy-energy, toy-linear:..., or cmd:...)"
    )
