import hashlib
import json
import pathlib

import numpy as np
import pytest
from click.testing import CliRunner

from graphose.cli import main
from graphose.graph import load_graphs


def run(args, **kw):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kw)


def sha(path):
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


def test_gen_graphs_basic(tmp_path):
    out = tmp_path / "graphs.jsonl"
    res = run(["gen-graphs", "--count", "10", "--seed", "7", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert len(load_graphs(out)) == 10
    assert (tmp_path / "graphs.jsonl.run_config.json").exists()


def test_gen_graphs_deterministic(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    run(["gen-graphs", "--count", "6", "--seed", "3", "--out", str(a)])
    run(["gen-graphs", "--count", "6", "--seed", "3", "--out", str(b)])
    assert sha(a) == sha(b)


def test_gen_graphs_bad_bounds_usage_error(tmp_path):
    res = CliRunner().invoke(
        main,
        ["gen-graphs", "--count", "2", "--n-min", "40", "--n-max", "30",
         "--out", str(tmp_path / "x.jsonl")],
    )
    assert res.exit_code == 2


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_min": 6, "n_max": 6}}))
    out = tmp_path / "g.jsonl"
    res = run(["gen-graphs", "--count", "4", "--seed", "1", "--out", str(out),
               "--config", str(cfg)])
    assert res.exit_code == 0
    assert all(g.n_nodes == 6 for g in load_graphs(out))
    # flags beat the file
    out2 = tmp_path / "g2.jsonl"
    run(["gen-graphs", "--count", "4", "--seed", "1", "--n-min", "9", "--n-max", "9",
         "--out", str(out2), "--config", str(cfg)])
    assert all(g.n_nodes == 9 for g in load_graphs(out2))


def test_config_env_var(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"synth": {"n_min": 5, "n_max": 5}}))
    monkeypatch.setenv("GRAPHOSE_CONFIG", str(cfg))
    out = tmp_path / "g.jsonl"
    res = run(["gen-graphs", "--count", "3", "--seed", "2", "--out", str(out)])
    assert res.exit_code == 0
    assert all(g.n_nodes == 5 for g in load_graphs(out))


def test_render_masks_surrogate(tmp_path):
    gfile = tmp_path / "g.jsonl"
    gfile.write_text('{"nodes":[{"pos":[0.5,0.5],"attrs":[],"obj":0}],"edges":[]}\n')
    out = tmp_path / "masks"
    res = run(["render-masks", "--graphs", str(gfile), "--out", str(out), "--size", "33"])
    assert res.exit_code == 0, res.output
    from PIL import Image

    img = np.asarray(Image.open(out / "graph0000_mask.png"))
    assert img.max() == 255
    assert (out / "montage.png").exists()
    assert (out / "masks.jsonl").exists()
    assert (out / "run_config.json").exists()


def test_render_masks_per_node_count(tmp_path):
    gfile = tmp_path / "g.jsonl"
    gfile.write_text(
        '{"nodes":[{"pos":[0.3,0.5],"attrs":[],"obj":0},'
        '{"pos":[0.7,0.5],"attrs":[],"obj":0},'
        '{"pos":[0.5,0.8],"attrs":[],"obj":0}],"edges":[[0,1]]}\n'
    )
    out = tmp_path / "masks"
    res = run(["render-masks", "--graphs", str(gfile), "--out", str(out), "--size", "16",
               "--per-node"])
    assert res.exit_code == 0, res.output
    pngs = sorted(p.name for p in out.glob("graph0000*.png"))
    assert len(pngs) == 4  # aggregate + 3 node masks


def test_render_masks_parse_error_exit3(tmp_path):
    gfile = tmp_path / "bad.jsonl"
    gfile.write_text("this is not json\n")
    res = CliRunner().invoke(
        main, ["render-masks", "--graphs", str(gfile), "--out", str(tmp_path / "m")]
    )
    assert res.exit_code == 3
    assert "line 1" in res.output


def test_gen_pro_cli_and_rerun_identical(tmp_path):
    args = ["gen-pro", "--count", "3", "--seed", "11", "--size", "64",
            "--out", str(tmp_path / "d1")]
    res = run(args)
    assert res.exit_code == 0, res.output
    run(["gen-pro", "--count", "3", "--seed", "11", "--size", "64",
         "--out", str(tmp_path / "d2")])
    for i in range(3):
        assert sha(tmp_path / "d1" / "images" / f"{i:06d}.png") == sha(
            tmp_path / "d2" / "images" / f"{i:06d}.png"
        )
    assert (tmp_path / "d1" / "preview.png").exists()


def test_gen_pro_kind_filter(tmp_path):
    res = run(["gen-pro", "--count", "2", "--seed", "1", "--size", "64",
               "--kinds", "pie,lattice", "--out", str(tmp_path / "d")])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "d" / "manifest.jsonl").read_text().strip().splitlines()
    for line in lines[1:]:
        assert set(json.loads(line)["kinds"]) <= {"pie", "lattice"}


def _pretrain_args(out, tmp_path, epochs=1):
    cfg = tmp_path / "train.json"
    cfg.write_text(
        json.dumps(
            {
                "synth": {"n_min": 3, "n_max": 5},
                "train": {"batches_per_epoch": 2, "batch_size": 2, "val_size": 2},
                "mask_generator": {
                    "noise_dim": 1,
                    "node_widths": [[4, 4], [4, 16]],
                    "seed_channels": 1,
                    "seed_size": 4,
                    "ladder": [["pose2d", 1, 2]],
                },
            }
        )
    )
    return [
        "pretrain", "--epochs", str(epochs), "--raster", "8", "--seed", "3",
        "--out", str(out), "--config", str(cfg),
    ], cfg


def test_pretrain_cli_deterministic(tmp_path):
    args1, _ = _pretrain_args(tmp_path / "r1", tmp_path, epochs=2)
    res = run(args1)
    assert res.exit_code == 0, res.output
    args2, _ = _pretrain_args(tmp_path / "r2", tmp_path, epochs=2)
    run(args2)
    m1 = [json.loads(x) for x in (tmp_path / "r1" / "metrics.jsonl").read_text().splitlines()]
    m2 = [json.loads(x) for x in (tmp_path / "r2" / "metrics.jsonl").read_text().splitlines()]
    assert [r["val_bce"] for r in m1] == [r["val_bce"] for r in m2]
    assert (tmp_path / "r1" / "checkpoint-best.bin").exists()
    assert (tmp_path / "r1" / "loss_curve.png").exists()


def test_pretrain_resume_continues(tmp_path):
    args_full, _ = _pretrain_args(tmp_path / "full", tmp_path, epochs=2)
    run(args_full)
    args_short, _ = _pretrain_args(tmp_path / "short", tmp_path, epochs=1)
    run(args_short)
    args_resume, _ = _pretrain_args(tmp_path / "res", tmp_path, epochs=2)
    args_resume += ["--resume", str(tmp_path / "short" / "checkpoint-last.bin")]
    res = run(args_resume)
    assert res.exit_code == 0, res.output
    full = [json.loads(x) for x in (tmp_path / "full" / "metrics.jsonl").read_text().splitlines()]
    resumed = [json.loads(x) for x in (tmp_path / "res" / "metrics.jsonl").read_text().splitlines()]
    assert resumed[-1]["val_bce"] == full[-1]["val_bce"]


def test_pretrain_divergence_exit4_with_checkpoint(tmp_path):
    args, _ = _pretrain_args(tmp_path / "div", tmp_path, epochs=1)
    args += ["--inject-nan-at", "1"]
    res = CliRunner().invoke(main, args)
    assert res.exit_code == 4
    assert (tmp_path / "div" / "checkpoint-failure.bin").exists()


def test_infer_mask_uses_checkpoint(tmp_path):
    args, _ = _pretrain_args(tmp_path / "train", tmp_path, epochs=1)
    assert run(args).exit_code == 0
    gfile = tmp_path / "g.jsonl"
    gfile.write_text(
        '{"nodes":[{"pos":[0.4,0.5],"attrs":[],"obj":0},'
        '{"pos":[0.6,0.5],"attrs":[],"obj":0}],"edges":[[0,1]]}\n'
    )
    out = tmp_path / "inferred"
    res = run(["infer-mask", "--graphs", str(gfile),
               "--model", str(tmp_path / "train" / "checkpoint-best.bin"),
               "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert len(list(out.glob("graph0000_node*.png"))) == 2


def test_demo_sensitivity_position(tmp_path):
    out = tmp_path / "demo"
    res = run(["demo-sensitivity", "--kind", "position", "--steps", "3", "--seed", "5",
               "--size", "16", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert len([p for p in out.glob("step*.png") if "layout" not in p.name]) == 3
    assert len(list(out.glob("step*_layout.png"))) == 3
    assert (out / "panel.png").exists()


def test_demo_sensitivity_attribute_bit_identical_with_model(tmp_path):
    args, _ = _pretrain_args(tmp_path / "train", tmp_path, epochs=1)
    assert run(args).exit_code == 0
    out = tmp_path / "demo"
    res = run(["demo-sensitivity", "--kind", "attribute", "--steps", "3", "--seed", "5",
               "--size", "8", "--model", str(tmp_path / "train" / "checkpoint-best.bin"),
               "--out", str(out)])
    assert res.exit_code == 0, res.output
    recs = [json.loads(x) for x in (out / "panel.jsonl").read_text().splitlines()]
    assert all(r.get("identical_to_step0", True) for r in recs)
    assert "identical: True" in res.output


def test_demo_sensitivity_missing_accepts_masked(tmp_path):
    out = tmp_path / "demo"
    res = run(["demo-sensitivity", "--kind", "missing", "--steps", "4", "--seed", "6",
               "--size", "16", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert len([p for p in out.glob("step*.png") if "layout" not in p.name]) == 4
