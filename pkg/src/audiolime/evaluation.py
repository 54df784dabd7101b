"""Fidelity experiment: does the top-k explanation keep the original top tag?

For every clip window and every requested method, the harness fits the
surrogate, renders the top-k explanation audio, feeds it back to the
black box, and records whether the predicted tag survived. The
random_positive baseline draws k components uniformly from the
audioLIME surrogate's positive-weight set.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .decomposition import SeparatorSpec, compose
from .engine import (
    DEFAULT_LAMBDA,
    DEFAULT_NUM_SAMPLES,
    build_decomposition,
    derive_seed,
    fit_ridge,
    positive_components,
    reference_clip,
    sample_masks,
    score_perturbations,
)
from .errors import InvalidInputError
from .predictor import Predictor, PredictorSpec, open_predictor
from .slime import GridSpec, build_grid_component_set

METHODS = ("audiolime", "slime", "random_positive")


@dataclass(frozen=True)
class FidelityTrial:
    """One (clip window, method, k) fidelity outcome."""

    clip_id: str
    window_index: int
    method: str
    k: int
    original_tag: str
    explanation_tag: str
    same: bool
    seed: int
    original_score: float
    explanation_score: float


@dataclass(frozen=True)
class EvalConfig:
    """Shared experiment settings; methods and ks are run_fidelity arguments."""

    seed: int = 0
    tau: int = 1
    num_samples: int = DEFAULT_NUM_SAMPLES
    ridge_lambda: float = DEFAULT_LAMBDA
    separator: SeparatorSpec = field(default_factory=SeparatorSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    jobs: int = 1


@dataclass(frozen=True, eq=False)
class FidelityReport:
    """All trials plus the per-(method, k) aggregate fractions."""

    trials: tuple
    aggregates: tuple
    config: dict


def _windows(clip: AudioClip, window_length: int | None):
    """Tile non-overlapping windows from the start; drop a trailing partial.

    A clip shorter than one window yields the whole clip as window 0.
    """
    if window_length is None or len(clip) <= window_length:
        yield 0, clip
        return
    count = len(clip) // window_length
    for i in range(count):
        seg = clip.samples[i * window_length : (i + 1) * window_length]
        yield i, AudioClip(seg, clip.sample_rate)


def _select_random_positive(positives: list, k: int, seed: int) -> tuple:
    """k components uniform without replacement; all of them if fewer than k."""
    if len(positives) <= k:
        return tuple(positives)
    rng = np.random.Generator(np.random.PCG64(seed))
    picked = rng.choice(len(positives), size=k, replace=False)
    return tuple(positives[int(i)] for i in picked)


def _window_trials(
    clip_id: str,
    window_index: int,
    window: AudioClip,
    pred: Predictor,
    methods: tuple,
    ks: tuple,
    config: EvalConfig,
) -> list:
    needs_audiolime = bool({"audiolime", "random_positive"} & set(methods))
    fits = {}
    seeds = {}
    if needs_audiolime or pred.kind == "toy_linear":
        cset_a = build_decomposition(window, config.separator, config.tau)
    else:
        cset_a = None
    original_scores = pred.score(
        reference_clip(cset_a, pred) if pred.kind == "toy_linear" else window
    )
    original_tag = original_scores.top_tag

    if needs_audiolime:
        seed_a = derive_seed(config.seed, clip_id, window_index, "masks")
        masks = sample_masks(len(cset_a), config.num_samples, seed_a)
        model = fit_ridge(
            score_perturbations(cset_a, masks, pred, original_tag, rng_seed=seed_a),
            config.ridge_lambda,
        )
        fits["audiolime"] = (cset_a, positive_components(model))
        seeds["audiolime"] = seed_a
    if "slime" in methods:
        cset_s = build_grid_component_set(window, config.grid)
        seed_s = derive_seed(config.seed, clip_id, window_index, "slime-masks")
        masks = sample_masks(len(cset_s), config.num_samples, seed_s)
        model = fit_ridge(
            score_perturbations(cset_s, masks, pred, original_tag, rng_seed=seed_s),
            config.ridge_lambda,
        )
        fits["slime"] = (cset_s, positive_components(model))
        seeds["slime"] = seed_s

    jobs = []
    for method in METHODS:
        if method not in methods:
            continue
        for k in ks:
            if method == "random_positive":
                cset, positives = fits["audiolime"]
                seed = derive_seed(config.seed, clip_id, window_index, "random", k)
                ids = _select_random_positive(positives, k, seed)
            else:
                cset, positives = fits[method]
                seed = seeds[method]
                ids = tuple(positives[:k])
            mask = np.zeros(len(cset), dtype=np.uint8)
            mask[list(ids)] = 1
            jobs.append((method, k, seed, compose(cset, mask)))

    trials = []
    if jobs:
        scored = pred.score_batch([audio for *_, audio in jobs])
        for (method, k, seed, _), scores in zip(jobs, scored):
            tag = scores.top_tag
            trials.append(
                FidelityTrial(
                    clip_id=clip_id,
                    window_index=window_index,
                    method=method,
                    k=k,
                    original_tag=original_tag,
                    explanation_tag=tag,
                    same=tag == original_tag,
                    seed=seed,
                    original_score=original_scores[original_tag],
                    explanation_score=scores.scores.get(original_tag, 0.0),
                )
            )
    return trials


def _clip_pairs(clips) -> list:
    """Normalize input to (clip_id, AudioClip) pairs with stable ids."""
    pairs = []
    for i, item in enumerate(clips):
        if isinstance(item, AudioClip):
            pairs.append((f"clip{i:03d}", item))
        else:
            clip_id, clip = item
            pairs.append((str(clip_id), clip))
    if len({cid for cid, _ in pairs}) != len(pairs):
        raise InvalidInputError("clip ids must be unique")
    return pairs


def run_fidelity(
    clips,
    predictor,
    methods=("audiolime", "random_positive"),
    ks=(1, 2, 3),
    config: EvalConfig | None = None,
) -> FidelityReport:
    """Run the fidelity experiment over all clips, methods, and ks.

    ``clips`` is a list of AudioClip or (id, AudioClip) pairs. Windows
    are tiled to the predictor's declared input length (whole clip when
    it declares none). Trials are deterministic given config.seed; they
    are independent jobs, parallelized across config.jobs threads
    without affecting results.
    """
    config = config or EvalConfig()
    methods = tuple(methods)
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or min(ks) < 1:
        raise InvalidInputError(f"ks must be positive integers, got {ks}")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InvalidInputError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    if not methods:
        raise InvalidInputError("no methods requested")
    pairs = _clip_pairs(clips)
    if not pairs:
        raise InvalidInputError("no input clips")

    own_pred = isinstance(predictor, PredictorSpec)
    pred = open_predictor(predictor) if own_pred else predictor
    try:
        work = []
        for clip_id, clip in pairs:
            for window_index, window in _windows(clip, pred.input_length):
                work.append((clip_id, window_index, window))
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                futures = [
                    pool.submit(
                        _window_trials, cid, widx, win, pred, methods, ks, config
                    )
                    for cid, widx, win in work
                ]
                per_window = [f.result() for f in futures]
        else:
            per_window = [
                _window_trials(cid, widx, win, pred, methods, ks, config)
                for cid, widx, win in work
            ]
    finally:
        if own_pred:
            pred.close()

    trials = [t for group in per_window for t in group]
    trials.sort(key=lambda t: (t.clip_id, t.window_index, METHODS.index(t.method), t.k))
    counts = {}
    for t in trials:
        same, total = counts.get((t.method, t.k), (0, 0))
        counts[(t.method, t.k)] = (same + (1 if t.same else 0), total + 1)
    aggregates = tuple(
        {"method": method, "k": k, "fidelity": same / total, "count": total}
        for (method, k), (same, total) in sorted(counts.items())
    )
    config_echo = {
        "seed": config.seed,
        "tau": config.tau,
        "num_samples": config.num_samples,
        "ridge_lambda": config.ridge_lambda,
        "separator": config.separator.kind,
        "grid": f"{config.grid.freq_bands}x{config.grid.time_bands}",
        "methods": list(methods),
        "ks": list(ks),
        "num_clips": len(pairs),
        "num_windows": len(work),
        "predictor": pred.kind if not own_pred else predictor.kind,
    }
    return FidelityReport(tuple(trials), aggregates, config_echo)


def export_report(report: FidelityReport, path, chart: bool = True) -> None:
    """Write the report as CSV plus a JSON sidecar and an SVG line chart.

    ``path`` names the CSV file; the sidecar and chart take the same
    name with .json/.svg suffixes. Output bytes depend only on the
    report contents, so reruns with equal seeds produce equal files.
    """
    if not report.trials:
        raise InvalidInputError("cannot export an empty report")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["method,k,fidelity,count"]
    for row in report.aggregates:
        lines.append(f"{row['method']},{row['k']},{row['fidelity']:.6f},{row['count']}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "config": report.config,
        "aggregates": list(report.aggregates),
        "trials": [dataclasses.asdict(t) for t in report.trials],
    }
    path.with_suffix(".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    if chart:
        from .plotting import save_fidelity_chart

        save_fidelity_chart(report.aggregates, path.with_suffix(".svg"))
