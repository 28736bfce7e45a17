import filecmp
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from snipcap import cli
from snipcap.datamodel import load_manifest


def run_cli(args):
    return cli.main([str(a) for a in args])


@pytest.fixture()
def synth_dir(tmp_path):
    out = tmp_path / "data"
    rc = run_cli(
        [
            "synth",
            "--dataset",
            out,
            "--set",
            "synth.num_videos=6",
            "--set",
            "synth.val_videos=2",
            "--set",
            "synth.feature_dim=32",
        ]
    )
    assert rc == 0
    return out


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def test_synth_writes_both_splits(synth_dir):
    train = load_manifest(synth_dir / "train")
    val = load_manifest(synth_dir / "val")
    assert len(train.records) == 4 and len(val.records) == 2
    assert (synth_dir / "toy_kb.json").exists()
    assert (synth_dir / "effective_config.json").exists()


def test_synth_refuses_non_empty_dir_without_force(synth_dir, capsys):
    rc = run_cli(["synth", "--dataset", synth_dir])
    assert rc == cli.EXIT_VALIDATION
    rc = run_cli(["synth", "--dataset", synth_dir, "--force", "--set", "synth.num_videos=6", "--set", "synth.val_videos=2", "--set", "synth.feature_dim=32"])
    assert rc == 0


def test_synth_same_seed_byte_identical_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run_cli(["synth", "--dataset", out, "--seed", "11", "--set", "synth.num_videos=4", "--set", "synth.feature_dim=32"]) == 0
    # provenance (effective_config.json) embeds the output path; all data files
    # must match byte for byte
    def data_files(root):
        return sorted(
            p.relative_to(root)
            for p in root.rglob("*")
            if p.is_file() and p.name != "effective_config.json"
        )

    files_a, files_b = data_files(a), data_files(b)
    assert files_a == files_b and files_a
    for rel in files_a:
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel


def test_synth_rejects_cap_violation_naming_field(tmp_path, capsys):
    rc = run_cli(
        ["synth", "--dataset", tmp_path / "d", "--set", "synth.snippets_per_video=25", "--set", "synth.frames_per_snippet=1"]
    )
    assert rc == cli.EXIT_VALIDATION
    assert "snippets_per_video" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, capsys):
    rc = run_cli(["synth", "--dataset", tmp_path / "d", "--set", "nonsense.key=1"])
    assert rc == cli.EXIT_VALIDATION
    assert "nonsense" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train / generate / eval wiring (tiny settings)
# ---------------------------------------------------------------------------

TINY_MODEL_SETS = [
    "--set", 'model.d_model=32',
    "--set", 'model.heads=4',
    "--set", 'model.enc_layers=1',
    "--set", 'model.dec_layers=1',
    "--set", 'model.ffn_dim=48',
    "--set", 'model.max_sentence_len=8',
]


@pytest.fixture()
def trained_run(tmp_path, synth_dir):
    run_dir = tmp_path / "run"
    rc = run_cli(
        ["train", "--dataset", synth_dir, "--out", run_dir, "--seed", "3"]
        + TINY_MODEL_SETS
        + ["--set", "train.max_steps=6", "--set", "train.batch_size=2", "--set", "train.checkpoint_every=3"]
    )
    assert rc == 0
    return run_dir


def test_train_writes_log_checkpoints_and_report(trained_run):
    log = (trained_run / "train_log.jsonl").read_text().strip().splitlines()
    assert len(log) == 6
    entry = json.loads(log[0])
    assert {"step", "lr", "snippet", "actobj", "sentence", "total"} <= set(entry)
    assert (trained_run / "ckpt_step3" / "params.bin").exists()
    assert (trained_run / "ckpt_final" / "params.bin").exists()
    assert (trained_run / "val_report.txt").exists()


def test_resume_continues_loss_trace_identically(tmp_path, synth_dir):
    full_dir, part_dir, resume_dir = tmp_path / "full", tmp_path / "part", tmp_path / "resume"
    common = (
        ["--dataset", synth_dir, "--seed", "5"]
        + TINY_MODEL_SETS
        + ["--set", "train.batch_size=2"]
    )
    assert run_cli(["train", "--out", full_dir] + common + ["--set", "train.max_steps=8"]) == 0
    assert run_cli(["train", "--out", part_dir] + common + ["--set", "train.max_steps=4"]) == 0
    assert (
        run_cli(
            ["train", "--out", resume_dir]
            + common
            + ["--set", "train.max_steps=8", "--resume", part_dir / "ckpt_final"]
        )
        == 0
    )
    full_log = [json.loads(l) for l in (full_dir / "train_log.jsonl").read_text().splitlines()]
    resumed = [json.loads(l) for l in (resume_dir / "train_log.jsonl").read_text().splitlines()]
    assert [e["step"] for e in resumed] == [5, 6, 7, 8]
    by_step = {e["step"]: e for e in full_log}
    for entry in resumed:
        want = by_step[entry["step"]]
        assert entry["total"] == want["total"]
        assert entry["snippet"] == want["snippet"]
        assert entry["sentence"] == want["sentence"]


def test_generate_and_eval_round_trip(tmp_path, synth_dir, trained_run):
    gen_dir = tmp_path / "gen"
    rc = run_cli(
        [
            "generate",
            "--dataset",
            synth_dir,
            "--out",
            gen_dir,
            "--checkpoint",
            trained_run / "ckpt_final",
            "--split",
            "val",
            "--mode",
            "gt_proposals",
        ]
    )
    assert rc == 0
    doc_path = gen_dir / "generation_val_gt_proposals.json"
    doc = json.loads(doc_path.read_text())
    val = load_manifest(synth_dir / "val")
    for video, record in zip(doc["videos"], val.records):
        assert len(video["snippets"]) == len(record.snippets)

    eval_dir = tmp_path / "eval"
    rc = run_cli(["eval", "--dataset", synth_dir, "--out", eval_dir, "--split", "val", "--doc", doc_path])
    assert rc == 0
    report = (eval_dir / "eval_report.txt").read_text()
    assert "BLEU@4" in report and "not comparable" in report


def test_generate_unknown_video_rejected(tmp_path, synth_dir, trained_run, capsys):
    rc = run_cli(
        [
            "generate",
            "--dataset",
            synth_dir,
            "--out",
            tmp_path / "g2",
            "--checkpoint",
            trained_run / "ckpt_final",
            "--split",
            "val",
            "--videos",
            "nope",
        ]
    )
    assert rc == cli.EXIT_VALIDATION


def test_eval_ablation_table_with_two_docs(tmp_path, synth_dir, trained_run):
    gen_dir = tmp_path / "gen"
    assert (
        run_cli(
            [
                "generate",
                "--dataset", synth_dir,
                "--out", gen_dir,
                "--checkpoint", trained_run / "ckpt_final",
                "--split", "val",
            ]
        )
        == 0
    )
    doc = gen_dir / "generation_val_gt_proposals.json"
    eval_dir = tmp_path / "table"
    rc = run_cli(
        [
            "eval",
            "--dataset", synth_dir,
            "--out", eval_dir,
            "--split", "val",
            "--doc", f"settingA={doc}",
            "--doc", f"settingB={doc}",
        ]
    )
    assert rc == 0
    table = (eval_dir / "ablation_table.txt").read_text()
    assert "settingA" in table and "B@4" in table


def test_periodic_eval_on_held_out_split(tmp_path, synth_dir):
    run_dir = tmp_path / "evalrun"
    rc = run_cli(
        ["train", "--dataset", synth_dir, "--out", run_dir, "--seed", "3"]
        + TINY_MODEL_SETS
        + [
            "--set", "train.max_steps=4",
            "--set", "train.batch_size=2",
            "--set", "train.eval_every=2",
        ]
    )
    assert rc == 0
    entries = [json.loads(l) for l in (run_dir / "eval_log.jsonl").read_text().splitlines()]
    assert [e["step"] for e in entries] == [2, 4]
    assert all("bleu4" in e and "snippet_acc" in e for e in entries)


def test_loss_weight_flags_reflected_in_log_linearity(tmp_path, synth_dir):
    run_dir = tmp_path / "lam"
    rc = run_cli(
        ["train", "--dataset", synth_dir, "--out", run_dir, "--seed", "3"]
        + TINY_MODEL_SETS
        + [
            "--set", "train.max_steps=2",
            "--set", "train.batch_size=2",
            "--set", "train.lambda_snippet=0",
            "--set", "train.lambda_actobj=0",
            "--set", "train.lambda_sentence=1",
        ]
    )
    assert rc == 0
    for line in (run_dir / "train_log.jsonl").read_text().splitlines():
        entry = json.loads(line)
        assert entry["total"] == entry["sentence"]


def test_inconsistent_model_config_rejected(tmp_path, synth_dir, capsys):
    rc = run_cli(
        ["train", "--dataset", synth_dir, "--out", tmp_path / "r", "--set", "model.actobj_dim=5"]
    )
    assert rc == cli.EXIT_VALIDATION
    assert "actobj_dim" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# gradcheck command
# ---------------------------------------------------------------------------


def test_gradcheck_tiny_passes(capsys):
    rc = run_cli(["gradcheck", "--samples", "4", "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "PASS" in out


def test_gradcheck_corrupted_backward_fails():
    rc = run_cli(["gradcheck", "--samples", "4", "--seed", "0", "--corrupt-block", "out.w"])
    assert rc == cli.EXIT_CHECK_FAILED


def test_gradcheck_dropout_config_rejected(capsys):
    rc = run_cli(["gradcheck", "--set", "model.dropout=0.1"])
    assert rc == cli.EXIT_VALIDATION


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "snipcap.cli", "gradcheck", "--samples", "2"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "PASS" in proc.stdout
