import json

import numpy as np
import pytest

from audiolime import load_wav, save_wav
from audiolime.cli import main

from conftest import SR, dominance_clip, noise_clip, sine_clip


def write_clip(path, clip):
    save_wav(clip, path)
    return str(path)


def run_cli(*argv):
    return main(list(argv))


# --- decompose ----------------------------------------------------------


def test_decompose_hpss_writes_components_and_manifest(tmp_path, capsys) -> None:
    wav = write_clip(tmp_path / "clip.wav", noise_clip(seed=1, length=4096))
    out = tmp_path / "out"
    code = run_cli(
        "decompose", "--input", wav, "--segments", "2", "--seed", "1",
        "--out-dir", str(out),
    )
    assert code == 0
    names = {
        "harmonic_seg0.wav",
        "harmonic_seg1.wav",
        "percussive_seg0.wav",
        "percussive_seg1.wav",
    }
    assert names <= {p.name for p in out.iterdir()}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["schema"] == "audiolime_decomposition_v1"
    assert manifest["num_sources"] == 2
    assert manifest["num_segments"] == 2
    assert manifest["length"] == 4096
    rows = manifest["components"]
    assert [r["file"] for r in rows] == sorted(names.__iter__(), key=lambda n: (not n.startswith("h"), n))
    assert rows[0]["segment_start"] == 0 and rows[1]["segment_end"] == 4096
    assert (out / "run_config.json").exists()
    assert "wrote 4 components" in capsys.readouterr().out


def test_decompose_components_sum_to_reconstruction(tmp_path) -> None:
    clip = noise_clip(seed=2, length=4096)
    wav = write_clip(tmp_path / "clip.wav", clip)
    out = tmp_path / "out"
    assert run_cli(
        "decompose", "--input", wav, "--segments", "3", "--seed", "1",
        "--out-dir", str(out),
    ) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    total = np.zeros(4096, dtype=np.float64)
    for row in manifest["components"]:
        total += load_wav(out / row["file"]).samples.astype(np.float64)
    assert np.max(np.abs(total - clip.samples.astype(np.float64))) <= 1e-4


def test_decompose_stems_uses_file_labels(tmp_path) -> None:
    stems = tmp_path / "stems"
    stems.mkdir()
    write_clip(stems / "drums.wav", noise_clip(seed=3, length=2000))
    write_clip(stems / "vocals.wav", sine_clip(length=2000))
    mix = write_clip(tmp_path / "mix.wav", noise_clip(seed=4, length=2000))
    out = tmp_path / "out"
    code = run_cli(
        "decompose", "--input", mix, "--separator", f"stems:{stems}",
        "--seed", "1", "--out-dir", str(out),
    )
    assert code == 0
    assert (out / "drums_seg0.wav").exists()
    assert (out / "vocals_seg0.wav").exists()


# --- explain ------------------------------------------------------------


def explain_args(wav, out, seed="7"):
    return (
        "explain", "--input", wav, "--out-dir", str(out), "--seed", seed,
        "--segments", "2", "--samples", "64", "--top-k", "1",
        "--tag", "percussive",
    )


def test_explain_writes_all_outputs(tmp_path, capsys) -> None:
    wav = write_clip(tmp_path / "clip.wav", dominance_clip(0))
    out = tmp_path / "out"
    assert run_cli(*explain_args(wav, out)) == 0
    assert (out / "explanation.wav").exists()
    assert (out / "coefficients.svg").exists()
    assert len(list((out / "components").glob("*.wav"))) == 4
    doc = json.loads((out / "explanation.json").read_text())
    assert doc["schema"] == "audiolime_explanation_v1"
    assert doc["k"] == 1
    assert len(doc["coefficients"]) == 4
    assert len(doc["component_ids"]) == 1
    assert doc["metadata"]["explained_tag"] == "percussive"
    assert doc["metadata"]["selected_labels"][0].startswith("percussive")
    assert doc["components"][doc["component_ids"][0]]["coefficient"] > 0
    run_config = json.loads((out / "run_config.json").read_text())
    assert run_config["resolved_seed"] == 7
    stdout = capsys.readouterr().out
    assert "explained tag: percussive" in stdout
    assert "top-1 components: percussive" in stdout


def test_explain_reruns_are_byte_identical(tmp_path) -> None:
    wav = write_clip(tmp_path / "clip.wav", dominance_clip(1))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(*explain_args(wav, out1)) == 0
    assert run_cli(*explain_args(wav, out2)) == 0
    for name in ("explanation.wav", "explanation.json", "coefficients.svg"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_explain_with_too_few_samples_fails_in_surrogate_stage(tmp_path, capsys) -> None:
    wav = write_clip(tmp_path / "clip.wav", dominance_clip(2))
    out = tmp_path / "out"
    code = run_cli(
        "explain", "--input", wav, "--out-dir", str(out), "--seed", "1",
        "--segments", "2", "--samples", "2",
    )
    assert code == 1
    assert "error in surrogate stage" in capsys.readouterr().err
    # run_config.json is written before any computation
    assert (out / "run_config.json").exists()


def test_explain_missing_input_fails_in_input_stage(tmp_path, capsys) -> None:
    code = run_cli(
        "explain", "--input", str(tmp_path / "nope.wav"),
        "--out-dir", str(tmp_path / "out"), "--seed", "1",
    )
    assert code == 1
    assert "error in input stage" in capsys.readouterr().err


def test_usage_errors_exit_two(tmp_path) -> None:
    with pytest.raises(SystemExit) as exc:
        run_cli("explain")  # missing --input
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("evaluate", "--inputs", str(tmp_path), "--ks", "0")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("evaluate", "--inputs", str(tmp_path), "--methods", "magic")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("evaluate", "--inputs", str(tmp_path), "--grid", "4by4")
    assert exc.value.code == 2


def test_omitted_seed_is_generated_and_printed(tmp_path, capsys) -> None:
    wav = write_clip(tmp_path / "clip.wav", noise_clip(seed=5, length=4096))
    out = tmp_path / "out"
    assert run_cli("decompose", "--input", wav, "--out-dir", str(out)) == 0
    stdout = capsys.readouterr().out
    line = next(l for l in stdout.splitlines() if l.startswith("seed: "))
    seed = int(line.split(": ")[1])
    assert json.loads((out / "run_config.json").read_text())["resolved_seed"] == seed


# --- evaluate -----------------------------------------------------------


def test_evaluate_mini_corpus(tmp_path, capsys) -> None:
    inputs = tmp_path / "corpus"
    inputs.mkdir()
    for i in range(2):
        write_clip(inputs / f"clip{i}.wav", dominance_clip(i, length=4000))
    out = tmp_path / "out"
    code = run_cli(
        "evaluate", "--inputs", str(inputs), "--out-dir", str(out),
        "--seed", "3", "--segments", "2", "--samples", "32",
        "--methods", "audiolime,slime,random", "--ks", "1,2",
        "--grid", "2x2", "--jobs", "1",
    )
    assert code == 0
    csv = (out / "fidelity.csv").read_text().strip().split("\n")
    assert csv[0] == "method,k,fidelity,count"
    assert len(csv) == 7
    assert (out / "fidelity.json").exists()
    assert (out / "fidelity.svg").exists()
    stdout = capsys.readouterr().out
    assert "method,k,fidelity,count" in stdout
    sidecar = json.loads((out / "fidelity.json").read_text())
    assert sidecar["config"]["num_clips"] == 2
    assert {t["method"] for t in sidecar["trials"]} == {
        "audiolime", "slime", "random_positive"
    }


def test_evaluate_empty_directory_fails(tmp_path, capsys) -> None:
    inputs = tmp_path / "corpus"
    inputs.mkdir()
    code = run_cli(
        "evaluate", "--inputs", str(inputs), "--out-dir", str(tmp_path / "out"),
        "--seed", "1",
    )
    assert code == 1
    assert "no input clips" in capsys.readouterr().err


def test_evaluate_rejects_toy_linear(tmp_path, capsys) -> None:
    inputs = tmp_path / "corpus"
    inputs.mkdir()
    write_clip(inputs / "clip.wav", noise_clip(seed=6, length=4000))
    code = run_cli(
        "evaluate", "--inputs", str(inputs), "--out-dir", str(tmp_path / "out"),
        "--seed", "1", "--predictor", "toy-linear:1,2",
    )
    assert code == 1
    assert "toy-linear" in capsys.readouterr().err
