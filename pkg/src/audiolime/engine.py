"""Surrogate fitting: sample masks, render and score them, fit ridge weights.

The pipeline is mask sampling -> rendering via compose -> black-box
scoring -> L2-regularized least squares on the centered system -> top-k
positive coefficients. Everything is seeded and deterministic; the same
(audio, configuration, seed) triple reproduces explanations bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .audio import AudioClip
from .decomposition import (
    ComponentSet,
    SeparatorSpec,
    build_component_set,
    compose,
    load_stems,
    render_batch,
    separate_hpss,
)
from .errors import InvalidInputError, PredictorError, SingularSystemError
from .predictor import Predictor, PredictorSpec, open_predictor
from .slime import GridSpec, build_grid_component_set

DEFAULT_NUM_SAMPLES = 2 ** 14
DEFAULT_LAMBDA = 1.0
DEFAULT_TOP_K = 3

# residual gate for the normal-equations solve, relative to the rhs norm
_SOLVE_RESIDUAL_TOL = 1e-8
# condition-number gate applied when lambda = 0 and nothing damps the system
_MAX_CONDITION = 1e12

_SCORING_CHUNK = 256


def derive_seed(*parts) -> int:
    """Stable 64-bit sub-seed from a root seed and any hashable labels."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True, eq=False)
class PerturbationSet:
    """Sampled masks with their black-box targets for one explained tag."""

    masks: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    rng_seed: int
    tag: str

    def __post_init__(self) -> None:
        masks = np.asarray(self.masks, dtype=np.uint8)
        targets = np.asarray(self.targets, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if masks.ndim != 2 or not (masks.shape[0] == targets.shape[0] == weights.shape[0]):
            raise InvalidInputError(
                f"inconsistent perturbation shapes {masks.shape}, "
                f"{targets.shape}, {weights.shape}"
            )
        if not (masks[0] == 1).all():
            raise InvalidInputError("row 0 must be the all-ones mask")
        if not np.isfinite(targets).all() or targets.min() < 0.0 or targets.max() > 1.0:
            raise InvalidInputError("targets must be finite and in [0, 1]")
        if weights.min() < 0.0:
            raise InvalidInputError("sample weights must be nonnegative")
        for name, arr in (("masks", masks), ("targets", targets), ("weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_samples(self) -> int:
        return int(self.masks.shape[0])

    @property
    def num_components(self) -> int:
        return int(self.masks.shape[1])


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    """Linear surrogate for one tag over the component mask space."""

    coefficients: np.ndarray
    intercept: float
    ridge_lambda: float
    r_squared: float
    explained_tag: str

    def __post_init__(self) -> None:
        coef = np.asarray(self.coefficients, dtype=np.float64)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)


@dataclass(frozen=True, eq=False)
class Explanation:
    """Top-k positive components, their audio rendering, and run metadata."""

    component_ids: tuple
    coefficients: np.ndarray
    k: int
    audio: AudioClip
    metadata: dict = field(default_factory=dict)


def sample_masks(num_components: int, num_samples: int, seed: int) -> np.ndarray:
    """n x d' binary matrix: row 0 all ones, the rest i.i.d. Bernoulli(0.5)."""
    if num_components < 1:
        raise InvalidInputError(f"need at least one component, got {num_components}")
    if num_samples < 2:
        raise InvalidInputError(f"need at least two samples, got {num_samples}")
    rng = np.random.Generator(np.random.PCG64(seed))
    masks = rng.integers(0, 2, size=(num_samples, num_components), dtype=np.uint8)
    masks[0] = 1
    return masks


def _as_predictor(predictor):
    """Accept an open Predictor or a PredictorSpec; report whether we own it."""
    if isinstance(predictor, Predictor):
        return predictor, False
    if isinstance(predictor, PredictorSpec):
        return open_predictor(predictor), True
    raise InvalidInputError(f"expected Predictor or PredictorSpec, got {type(predictor)!r}")


def _score_clips(pred: Predictor, clips: list, tag: str) -> np.ndarray:
    out = np.empty(len(clips), dtype=np.float64)
    for start in range(0, len(clips), _SCORING_CHUNK):
        chunk = clips[start : start + _SCORING_CHUNK]
        try:
            scores = pred.score_batch(chunk)
        except PredictorError as exc:
            raise PredictorError(
                f"scoring masks [{start}, {start + len(chunk)}) failed: {exc}"
            ) from exc
        for i, s in enumerate(scores):
            out[start + i] = s[tag]
    return out


def score_perturbations(
    component_set: ComponentSet,
    masks: np.ndarray,
    predictor,
    tag: str,
    rng_seed: int = 0,
) -> PerturbationSet:
    """Render each mask via compose and extract the named tag's score.

    For the pure in-process predictors, duplicate masks are rendered and
    scored once and the score is broadcast to all duplicates; by
    determinism of those predictors the result is identical to scoring
    every row. Subprocess predictors are scored row by row.
    """
    masks = np.asarray(masks, dtype=np.uint8)
    pred, owned = _as_predictor(predictor)
    try:
        if tag not in pred.tags:
            raise InvalidInputError(
                f"tag {tag!r} not in predictor tags {list(pred.tags)}"
            )
        rate = component_set.original.sample_rate
        if pred.is_pure:
            uniq, inverse = np.unique(masks, axis=0, return_inverse=True)
            rendered = render_batch(component_set, uniq)
            clips = [AudioClip(row, rate) for row in rendered]
            targets = _score_clips(pred, clips, tag)[inverse.reshape(-1)]
        else:
            rendered = render_batch(component_set, masks)
            clips = [AudioClip(row, rate) for row in rendered]
            targets = _score_clips(pred, clips, tag)
    finally:
        if owned:
            pred.close()
    weights = np.ones(masks.shape[0], dtype=np.float64)
    return PerturbationSet(masks, targets, weights, rng_seed, tag)


def fit_ridge(perturbations: PerturbationSet, ridge_lambda: float = DEFAULT_LAMBDA) -> SurrogateModel:
    """Solve the centered, intercept-unpenalized ridge system by normal equations.

    Minimizes sum_i weight_i (w . z_i + b - y_i)^2 + lambda ||w||^2. The
    solve is a symmetric positive-definite factorization; a singular
    system with lambda = 0 is reported, never silently regularized.
    """
    if ridge_lambda < 0:
        raise InvalidInputError(f"lambda must be >= 0, got {ridge_lambda}")
    n, d = perturbations.masks.shape
    if n < d + 1:
        raise InvalidInputError(f"need at least d' + 1 = {d + 1} samples, got {n}")
    Z = perturbations.masks.astype(np.float64)
    y = perturbations.targets
    w = perturbations.weights
    w_total = w.sum()
    if w_total <= 0.0:
        raise InvalidInputError("sample weights sum to zero")
    z_mean = (w @ Z) / w_total
    y_mean = float(w @ y) / w_total
    Zc = Z - z_mean
    yc = y - y_mean
    A = (Zc * w[:, None]).T @ Zc + ridge_lambda * np.eye(d)
    b = Zc.T @ (w * yc)
    if ridge_lambda == 0.0 and np.linalg.cond(A) > _MAX_CONDITION:
        raise SingularSystemError(
            "normal equations are singular or near-singular with lambda = 0; "
            "refusing to regularize silently"
        )
    try:
        coef = cho_solve(cho_factor(A), b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            f"normal equations not positive definite (lambda = {ridge_lambda}): {exc}"
        ) from exc
    residual = float(np.linalg.norm(A @ coef - b))
    if residual > _SOLVE_RESIDUAL_TOL * max(float(np.linalg.norm(b)), 1e-12):
        raise SingularSystemError(
            f"normal-equations residual {residual:.3e} exceeds tolerance; "
            "system too ill-conditioned"
        )
    intercept = y_mean - float(coef @ z_mean)
    fitted = Z @ coef + intercept
    ss_res = float(w @ np.square(y - fitted))
    ss_tot = float(w @ np.square(yc))
    # constant targets leave only centering round-off in ss_tot; report a
    # perfect fit instead of dividing rounding noise by rounding noise
    noise_floor = w_total * (np.finfo(np.float64).eps * max(1.0, abs(y_mean))) ** 2
    r_squared = 1.0 if ss_tot <= noise_floor else 1.0 - ss_res / ss_tot
    return SurrogateModel(coef, intercept, float(ridge_lambda), r_squared, perturbations.tag)


def positive_components(model: SurrogateModel) -> list:
    """Indices with strictly positive coefficients, largest first, index tie-break."""
    coef = model.coefficients
    order = sorted(
        (i for i in range(coef.size) if coef[i] > 0.0),
        key=lambda i: (-coef[i], i),
    )
    return order


def explain(
    component_set: ComponentSet,
    model: SurrogateModel,
    k: int = DEFAULT_TOP_K,
    metadata: dict | None = None,
) -> Explanation:
    """Select the top-k strictly positive components and render their mixture.

    With no positive coefficients the selection is empty, the audio is
    silence, and metadata["empty_explanation"] is set.
    """
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if model.coefficients.size != len(component_set):
        raise InvalidInputError(
            f"model has {model.coefficients.size} coefficients for "
            f"{len(component_set)} components"
        )
    ids = tuple(positive_components(model)[:k])
    mask = np.zeros(len(component_set), dtype=np.uint8)
    mask[list(ids)] = 1
    audio = compose(component_set, mask)
    labels = component_set.labels
    md = {
        "num_sources": component_set.num_sources,
        "num_segments": component_set.num_segments,
        "lambda": model.ridge_lambda,
        "r_squared": model.r_squared,
        "explained_tag": model.explained_tag,
        "selected_labels": [labels[i] for i in ids],
        "empty_explanation": not ids,
    }
    md.update(metadata or {})
    return Explanation(ids, model.coefficients, k, audio, md)


def build_decomposition(
    clip: AudioClip,
    separator: SeparatorSpec | None = None,
    tau: int = 1,
    grid: GridSpec | None = None,
) -> ComponentSet:
    """Build the configured ComponentSet: separation x segments, or a grid."""
    if grid is not None:
        return build_grid_component_set(clip, grid)
    separator = separator or SeparatorSpec()
    if separator.kind == "hpss_builtin":
        sources = separate_hpss(clip, separator)
    else:
        sources = load_stems(
            separator.stems_directory, len(clip), clip.sample_rate, separator.strict
        )
    return build_component_set(clip, sources, tau)


def reference_clip(component_set: ComponentSet, pred: Predictor) -> AudioClip:
    """The clip whose top tag is explained by default.

    toy_linear is only defined on compose renderings, so for it the
    all-ones rendering stands in for the original; other predictors
    score the original clip itself.
    """
    if pred.kind == "toy_linear":
        return compose(component_set, np.ones(len(component_set), dtype=np.uint8))
    return component_set.original


def explain_clip(
    clip: AudioClip,
    predictor,
    *,
    seed: int,
    separator: SeparatorSpec | None = None,
    tau: int = 1,
    grid: GridSpec | None = None,
    num_samples: int = DEFAULT_NUM_SAMPLES,
    ridge_lambda: float = DEFAULT_LAMBDA,
    k: int = DEFAULT_TOP_K,
    tag: str | None = None,
) -> Explanation:
    """Full pipeline: decompose, sample, score, fit, select, render."""
    component_set = build_decomposition(clip, separator, tau, grid)
    pred, owned = _as_predictor(predictor)
    try:
        if tag is None:
            tag = pred.score(reference_clip(component_set, pred)).top_tag
        masks = sample_masks(len(component_set), num_samples, seed)
        perturbations = score_perturbations(component_set, masks, pred, tag, rng_seed=seed)
        model = fit_ridge(perturbations, ridge_lambda)
    finally:
        if owned:
            pred.close()
    kind = "grid" if grid is not None else (separator or SeparatorSpec()).kind
    metadata = {
        "decomposition": kind,
        "seed": seed,
        "num_samples": num_samples,
    }
    return explain(component_set, model, k, metadata)
