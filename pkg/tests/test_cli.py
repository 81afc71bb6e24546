import json
import subprocess
import sys

import pytest

from chipqa.cli import main


def synth(tmp_path, **extra):
    spec = {"seed": 3, "n_probesets": 60, "probes_per_set": 5, "n_chips": 6}
    spec.update(extra)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "data"
    assert main(["synth", "--spec", str(path), "--out", str(out)]) == 0
    return out


def test_synth_then_run(tmp_path):
    data = synth(tmp_path)
    for name in ("layout.tsv", "manifest.tsv", "ground_truth.json", "chips/chip01.tsv"):
        assert (data / name).is_file()
    out = tmp_path / "report"
    code = main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(out), "--landscapes", "weights,neg"])
    assert code == 0
    assert (out / "scores.csv").is_file()
    assert (out / "landscapes" / "chip06_neg.png").is_file()


def test_fail_flag_exit_code(tmp_path):
    data = synth(tmp_path, artifacts=[{"chip": 1, "kind": "noise_scale", "factor": 4.0}])
    code = main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "r"), "--formats", "csv"])
    assert code == 2
    assert "fail:nuse" in (tmp_path / "r" / "scores.csv").read_text()


def test_thresholds_file(tmp_path):
    data = synth(tmp_path, artifacts=[{"chip": 1, "kind": "noise_scale", "factor": 4.0}])
    th = tmp_path / "th.txt"
    th.write_text("nuse_warn = 5\nnuse_fail = 10\n")
    code = main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "r"),
                 "--formats", "csv", "--thresholds", str(th)])
    assert code == 0


def test_rsf_batches(tmp_path):
    data = synth(tmp_path)
    lines = (data / "manifest.tsv").read_text().strip().split("\n")
    labeled = [lines[0]] + [f"{ln}\t{'A' if i < 3 else 'B'}" for i, ln in enumerate(lines[1:])]
    (data / "batched.tsv").write_text("\n".join(labeled) + "\n")
    out = tmp_path / "rsf"
    assert main(["rsf", "--manifest", str(data / "batched.tsv"), "--out", str(out)]) == 0
    text = (out / "rsf.csv").read_text().split("\n")
    assert text[0] == "batch,rsf,nrsf,n_chips,n_probesets"
    assert text[1].startswith("A,") and text[2].startswith("B,")
    # unlabeled manifest cannot be split
    assert main(["rsf", "--manifest", str(data / "manifest.tsv"), "--out", str(out)]) == 1


@pytest.mark.parametrize(
    "args",
    [
        ["--background", "loess"],
        ["--landscapes", "intensity"],
        ["--huber-k", "-1"],
    ],
)
def test_bad_options_exit_1(tmp_path, args, capsys):
    data = synth(tmp_path)
    assert main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "r")] + args) == 1
    assert "chipqa: error:" in capsys.readouterr().err


def test_missing_manifest(tmp_path, capsys):
    assert main(["run", "--manifest", str(tmp_path / "nope.tsv"), "--out", str(tmp_path)]) == 1


def test_gray_signed_refused(tmp_path, capsys):
    data = synth(tmp_path)
    code = main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "r"),
                 "--landscapes", "signed", "--palette", "gray"])
    assert code == 1
    assert not (tmp_path / "r" / "scores.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chipqa.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "run" in proc.stdout
