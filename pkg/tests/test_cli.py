import json
import subprocess
import sys

import pytest
import yaml

from mathrec import cli
from mathrec.latex import normalize

from conftest import TINY_MODEL, short_formulas

SUBCOMMANDS = ("build-data", "train", "eval", "predict")


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "corpus.txt"
    path.write_text("\n".join(short_formulas(12, seed=21)) + "\n")
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, corpus):
    root = tmp_path_factory.mktemp("cli_run")
    assert cli.main(["build-data", "--corpus", str(corpus), "--out", str(root / "data"),
                     "--dpis", "60", "--buckets", "0,64"]) == 0
    cfg = {"train_manifest": "data/manifest.jsonl", "output_dir": "run", "total_iterations": 4,
           "batch_size": 4, "checkpoint_interval": 2, "model": TINY_MODEL}
    (root / "train.yaml").write_text(yaml.safe_dump(cfg))
    assert cli.main(["train", "--config", str(root / "train.yaml")]) == 0
    return root


def test_help_lists_every_flag(capsys):
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    assert set(sub.choices) == set(SUBCOMMANDS)
    for name, subparser in sub.choices.items():
        with pytest.raises(SystemExit) as exc:
            cli.main([name, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for action in subparser._actions:
            for flag in action.option_strings:
                assert flag in text, f"{name}: {flag} missing from --help"
            assert action.help, f"{name}: {action.dest} has no help text"


def test_usage_error_is_config_error(capsys):
    code, _, err = run(capsys, "train")
    assert code == 2 and error_line(err)["error"] == "ConfigError"
    code, _, err = run(capsys, "build-data", "--corpus", "x", "--out", "y", "--dpis", "a,b")
    assert code == 2


def test_build_data_deterministic(capsys, corpus, tmp_path):
    for name in ("a", "b"):
        code, out, _ = run(capsys, "build-data", "--corpus", str(corpus), "--out", str(tmp_path / name),
                           "--seed", "3", "--per-bucket", "4", "--buckets", "0,8,16,64",
                           "--fonts", "dejavu-sans,dejavu-serif", "--dpis", "80,120")
        assert code == 0 and (tmp_path / name / "manifest.jsonl").is_file()
    assert ((tmp_path / "a" / "manifest.jsonl").read_bytes()
            == (tmp_path / "b" / "manifest.jsonl").read_bytes())


def test_build_data_missing_renderer(capsys, corpus, tmp_path):
    template = "missing-tex-renderer {latex_file} {out_png} {dpi} {font}"
    code, _, err = run(capsys, "build-data", "--corpus", str(corpus), "--out", str(tmp_path),
                       "--renderer", template)
    line = error_line(err)
    assert code == 4 and line["error"] == "RendererUnavailable" and template in line["message"]


def test_build_data_missing_corpus(capsys, tmp_path):
    code, _, err = run(capsys, "build-data", "--corpus", str(tmp_path / "nope.txt"),
                       "--out", str(tmp_path / "o"))
    assert code == 3 and error_line(err)["exit_code"] == 3


def test_train_outputs_and_resume(capsys, trained):
    final = trained / "run" / "checkpoints" / "final"
    assert (final / "model.pt").is_file()
    cfg = trained / "train.yaml"
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--set", "total_iterations=6",
                       "--set", "output_dir=resumed",
                       "--resume", str(trained / "run" / "checkpoints" / "step_0000002"))
    assert code == 0
    steps = [json.loads(line)["step"] for line in (trained / "resumed" / "metrics.jsonl").open()]
    assert steps == [3, 4, 5, 6]


def test_train_malformed_config(capsys, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("train_manifest: m.jsonl\noutput_dir: o\nbatch_size: many\n")
    code, _, err = run(capsys, "train", "--config", str(cfg))
    line = error_line(err)
    assert code == 2 and "batch_size" in line["message"]
    cfg.write_text("train_manifest: m.jsonl\noutput_dir: o\nmodel: {feature_dims: 3}\n")
    assert run(capsys, "train", "--config", str(cfg))[0] == 2


def test_eval_beams_and_errors(capsys, trained, tmp_path):
    manifest = trained / "data" / "manifest.jsonl"
    ckpt = trained / "run" / "checkpoints" / "final"
    for beam in ("1", "4"):
        code, out, _ = run(capsys, "eval", "--manifest", str(manifest), "--checkpoint", str(ckpt),
                           "--beam", beam, "--max-len", "6", "--out", str(tmp_path / beam))
        assert code == 0 and "overall" in out
        report = json.loads((tmp_path / beam / "report.json").read_text())
        assert set(report["overall"]) == {"bleu", "edit_distance", "exprate", "exprate_le1",
                                          "exprate_le2", "n"}
    code, _, err = run(capsys, "eval", "--manifest", str(manifest), "--checkpoint",
                       str(tmp_path / "nope"), "--out", str(tmp_path / "x"))
    assert code == 5 and error_line(err)["error"] == "CorruptCheckpoint"
    code, _, _ = run(capsys, "eval", "--manifest", str(manifest), "--checkpoint", str(ckpt),
                     "--beam", "0", "--out", str(tmp_path / "y"))
    assert code == 2


def test_predict(capsys, trained, tmp_path):
    ckpt = trained / "run" / "checkpoints" / "final"
    image = next((trained / "data" / "images").iterdir())
    code, out, _ = run(capsys, "predict", "--image", str(image), "--checkpoint", str(ckpt),
                       "--max-len", "6")
    text = out.strip("\n")
    assert code == 0 and normalize(text) == text
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    code, _, err = run(capsys, "predict", "--image", str(bad), "--checkpoint", str(ckpt))
    assert code != 0 and error_line(err)["error"] == "MissingImage"


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mathrec.cli", "eval", "--manifest",
                           str(tmp_path / "m.jsonl"), "--checkpoint", str(tmp_path),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 3
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "ManifestSchemaError"
