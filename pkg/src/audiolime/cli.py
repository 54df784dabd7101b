"""Command-line interface: explain, evaluate, decompose.

Every run writes run_config.json into --out-dir before doing any work,
then its own outputs (WAVs, JSON, CSV, SVG charts) with fixed names.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
from contextlib import contextmanager
from pathlib import Path

from .audio import load_wav, save_wav
from .decomposition import SeparatorSpec, segment_boundaries
from .engine import (
    DEFAULT_LAMBDA,
    DEFAULT_NUM_SAMPLES,
    DEFAULT_TOP_K,
    build_decomposition,
    explain,
    fit_ridge,
    reference_clip,
    sample_masks,
    score_perturbations,
)
from .errors import AudioLimeError, InvalidInputError
from .evaluation import EvalConfig, export_report, run_fidelity
from .predictor import open_predictor, parse_predictor_flag
from .slime import GridSpec

log = logging.getLogger("audiolime")

_METHOD_ALIASES = {"audiolime": "audiolime", "slime": "slime", "random": "random_positive"}


class _StageFailure(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def _stage(name: str):
    try:
        yield
    except _StageFailure:
        raise
    except Exception as exc:
        raise _StageFailure(name, exc) from exc


def _parse_separator(text: str, strict: bool) -> SeparatorSpec:
    if text == "hpss":
        return SeparatorSpec(strict=strict)
    if text.startswith("stems:"):
        directory = text[len("stems:") :]
        if not directory:
            raise InvalidInputError("stems separator needs a directory: stems:<dir>")
        return SeparatorSpec(
            kind="stems_directory", stems_directory=directory, strict=strict
        )
    raise InvalidInputError(f"unknown separator {text!r} (expected hpss or stems:<dir>)")


def _parse_grid(text: str) -> GridSpec:
    try:
        f, t = text.lower().split("x")
        return GridSpec(freq_bands=int(f), time_bands=int(t))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"grid must look like 4x4, got {text!r}") from exc


def _parse_methods(text: str) -> tuple:
    methods = []
    for name in text.split(","):
        name = name.strip()
        if name not in _METHOD_ALIASES:
            raise argparse.ArgumentTypeError(
                f"unknown method {name!r} (choose from {', '.join(_METHOD_ALIASES)})"
            )
        methods.append(_METHOD_ALIASES[name])
    return tuple(dict.fromkeys(methods))


def _parse_ks(text: str) -> tuple:
    try:
        ks = tuple(int(k) for k in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"ks must be integers, got {text!r}") from exc
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"ks must be positive, got {text!r}")
    return ks


def _write_run_config(args: argparse.Namespace, seed: int, out_dir: Path) -> None:
    echo = {
        k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")
    }
    echo["resolved_seed"] = seed
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_config.json").write_text(
        json.dumps(echo, sort_keys=True, indent=2, default=str) + "\n", encoding="utf-8"
    )


def _component_filename(component) -> str:
    return f"{component.source_label}_seg{component.segment_index}.wav"


def cmd_explain(args: argparse.Namespace, seed: int) -> int:
    out_dir = Path(args.out_dir)
    _write_run_config(args, seed, out_dir)
    with _stage("input"):
        clip = load_wav(args.input)
    with _stage("decomposition"):
        separator = _parse_separator(args.separator, args.strict)
        cset = build_decomposition(clip, separator, args.segments)
    with _stage("predictor"):
        spec = parse_predictor_flag(args.predictor, cset)
        pred = open_predictor(spec)
    try:
        with _stage("surrogate"):
            tag = args.tag or pred.score(reference_clip(cset, pred)).top_tag
            masks = sample_masks(len(cset), args.samples, seed)
            perturbations = score_perturbations(cset, masks, pred, tag, rng_seed=seed)
            model = fit_ridge(perturbations, args.ridge_lambda)
            explanation = explain(
                cset,
                model,
                args.top_k,
                metadata={
                    "decomposition": separator.kind,
                    "seed": seed,
                    "num_samples": args.samples,
                    "input": Path(args.input).name,
                },
            )
            explanation_scores = pred.score(explanation.audio)
    finally:
        pred.close()
    with _stage("report"):
        save_wav(explanation.audio, out_dir / "explanation.wav")
        comp_dir = out_dir / "components"
        comp_dir.mkdir(parents=True, exist_ok=True)
        component_rows = []
        for i, component in enumerate(cset.components):
            name = _component_filename(component)
            save_wav(component.audio, comp_dir / name)
            component_rows.append(
                {
                    "id": i,
                    "label": cset.labels[i],
                    "source_label": component.source_label,
                    "segment_index": component.segment_index,
                    "coefficient": float(explanation.coefficients[i]),
                    "file": f"components/{name}",
                }
            )
        document = {
            "schema": "audiolime_explanation_v1",
            "component_ids": list(explanation.component_ids),
            "coefficients": [float(c) for c in explanation.coefficients],
            "k": explanation.k,
            "audio": "explanation.wav",
            "metadata": explanation.metadata,
            "components": component_rows,
            "explanation_top_tag": explanation_scores.top_tag,
        }
        (out_dir / "explanation.json").write_text(
            json.dumps(document, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        from .plotting import save_coefficient_chart

        save_coefficient_chart(
            cset.labels,
            explanation.coefficients,
            explanation.component_ids,
            out_dir / "coefficients.svg",
            tag=tag,
        )
    selected = ", ".join(explanation.metadata["selected_labels"]) or "(none positive)"
    print(f"explained tag: {tag}")
    print(f"top-{explanation.k} components: {selected}")
    print(f"explanation audio top tag: {explanation_scores.top_tag}")
    print(f"outputs written to {out_dir}")
    return 0


def cmd_evaluate(args: argparse.Namespace, seed: int) -> int:
    out_dir = Path(args.out_dir)
    _write_run_config(args, seed, out_dir)
    with _stage("inputs"):
        input_dir = Path(args.inputs)
        paths = sorted(input_dir.glob("*.wav")) if input_dir.is_dir() else []
        if not paths:
            raise InvalidInputError(f"no input clips in {input_dir}")
        clips = [(p.stem, load_wav(p)) for p in paths]
    with _stage("predictor"):
        if args.predictor.startswith("toy-linear"):
            raise InvalidInputError(
                "toy-linear is defined relative to one fixed decomposition and "
                "cannot score evaluate's per-window decompositions; use "
                "toy-energy or cmd:"
            )
        spec = parse_predictor_flag(args.predictor)
    with _stage("evaluation"):
        separator = _parse_separator(args.separator, args.strict)
        config = EvalConfig(
            seed=seed,
            tau=args.segments,
            num_samples=args.samples,
            ridge_lambda=args.ridge_lambda,
            separator=separator,
            grid=args.grid,
            jobs=args.jobs,
        )
        report = run_fidelity(clips, spec, args.methods, args.ks, config)
    with _stage("report"):
        export_report(report, out_dir / "fidelity.csv")
    print("method,k,fidelity,count")
    for row in report.aggregates:
        print(f"{row['method']},{row['k']},{row['fidelity']:.6f},{row['count']}")
    print(f"outputs written to {out_dir}")
    return 0


def cmd_decompose(args: argparse.Namespace, seed: int) -> int:
    out_dir = Path(args.out_dir)
    _write_run_config(args, seed, out_dir)
    with _stage("input"):
        clip = load_wav(args.input)
    with _stage("decomposition"):
        separator = _parse_separator(args.separator, args.strict)
        cset = build_decomposition(clip, separator, args.segments)
    with _stage("report"):
        bounds = segment_boundaries(len(clip), cset.num_segments)
        rows = []
        for component in cset.components:
            name = _component_filename(component)
            save_wav(component.audio, out_dir / name)
            rows.append(
                {
                    "file": name,
                    "source_label": component.source_label,
                    "segment_index": component.segment_index,
                    "segment_start": bounds[component.segment_index],
                    "segment_end": bounds[component.segment_index + 1],
                }
            )
        manifest = {
            "schema": "audiolime_decomposition_v1",
            "input": Path(args.input).name,
            "num_sources": cset.num_sources,
            "num_segments": cset.num_segments,
            "sample_rate": clip.sample_rate,
            "length": len(clip),
            "separator": separator.kind,
            "components": rows,
        }
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(f"wrote {len(rows)} components to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiolime",
        description="Listenable explanations of black-box audio tagger predictions.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: random, printed)")
    common.add_argument("--out-dir", default="audiolime_out", help="output directory")
    common.add_argument(
        "--log-level",
        choices=("debug", "info", "warning", "error"),
        default="warning",
    )
    decomp = argparse.ArgumentParser(add_help=False)
    decomp.add_argument(
        "--separator",
        default="hpss",
        help="hpss or stems:<dir> of per-source WAV files",
    )
    decomp.add_argument("--segments", type=int, default=1, help="time segments per source")
    decomp.add_argument(
        "--strict",
        action="store_true",
        help="fail instead of resampling stems with mismatched rates",
    )
    engine = argparse.ArgumentParser(add_help=False)
    engine.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES, help="perturbation count")
    engine.add_argument("--lambda", dest="ridge_lambda", type=float, default=DEFAULT_LAMBDA)
    engine.add_argument(
        "--predictor",
        default="toy-energy",
        help='toy-energy, toy-linear:<w1>,<w2>,...[;bias=<b>], or cmd:"<command>"',
    )
    engine.add_argument("--tag", default=None, help="tag to explain (default: top predicted)")

    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser(
        "explain",
        parents=[common, decomp, engine],
        help="explain one clip's top tag with listenable components",
    )
    p_explain.add_argument("--input", required=True, help="input WAV file")
    p_explain.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p_explain.set_defaults(func=cmd_explain)

    p_eval = sub.add_parser(
        "evaluate",
        parents=[common, decomp, engine],
        help="fidelity experiment over a directory of clips",
    )
    p_eval.add_argument("--inputs", required=True, help="directory of input WAV files")
    p_eval.add_argument(
        "--methods",
        type=_parse_methods,
        default=("audiolime", "slime", "random_positive"),
        help="comma list of audiolime,slime,random",
    )
    p_eval.add_argument("--ks", type=_parse_ks, default=(1, 2, 3, 5), help="comma list of k values")
    p_eval.add_argument("--grid", type=_parse_grid, default=GridSpec(), help="slime grid, e.g. 4x4")
    p_eval.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p_eval.set_defaults(func=cmd_evaluate)

    p_dec = sub.add_parser(
        "decompose",
        parents=[common, decomp],
        help="write each (source, segment) component as a WAV",
    )
    p_dec.add_argument("--input", required=True, help="input WAV file")
    p_dec.set_defaults(func=cmd_decompose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()))
    seed = args.seed
    if seed is None:
        seed = secrets.randbits(63)
        print(f"seed: {seed}")
    try:
        return args.func(args, seed)
    except _StageFailure as exc:
        print(f"error in {exc.stage} stage: {exc.cause}", file=sys.stderr)
        return 1
    except AudioLimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
