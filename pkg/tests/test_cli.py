"""End-to-end tests for the command-line interface.

Commands run in-process through main(argv) so exit codes, stdout, and the
files they leave behind can be checked directly. Training commands run at
doll-house scale (a few samples, two steps) because the CLI wiring, not the
optimization, is under test here.
"""

import json
import os

import numpy as np
import pytest

from docgeo.cli import (
    CliError,
    cfg_get,
    main,
    parse_config,
    parse_overrides,
)
from docgeo.formats import (
    load_image,
    load_mask,
    read_json,
    read_textlines,
    read_warp_field,
    save_image,
)
from docgeo.network import ModelConfig, RectificationNetwork, load_model, save_model

TINY = dict(model_height=96, model_width=96, model_channels=32,
            model_attn_width=64, model_heads=4, model_enc_layers=1,
            model_fusion_layers=1)


def write_cfg(path, **keys):
    lines = ["# test config"]
    for k, v in keys.items():
        lines.append("%s = %s" % (k, v))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def tree_bytes(root):
    """{relative path: file bytes} for every file under root."""
    out = {}
    for base, _, names in os.walk(root):
        for name in names:
            p = os.path.join(base, name)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Four small ground-truthed samples shared by the read-only tests."""
    root = tmp_path_factory.mktemp("data") / "set"
    cfg = tmp_path_factory.mktemp("cfg") / "gen.cfg"
    write_cfg(cfg, count=4, height=96, width=96)
    assert main(["generate", "--config", str(cfg), "--seed", "11",
                 "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="module")
def model_ckpt(tmp_path_factory):
    """Untrained model checkpoint; its zero-init flow head predicts zero flow."""
    path = tmp_path_factory.mktemp("model") / "model.pt"
    cfg = ModelConfig(height=96, width=96, channels=32, attn_width=64,
                      heads=4, enc_layers=1, fusion_layers=1)
    save_model(path, RectificationNetwork(cfg))
    return str(path)


# ------------------------------------------------------------ config file

def test_parse_config_comments_types_and_bools(tmp_path):
    p = tmp_path / "a.cfg"
    p.write_text("# header\ncount = 5  # trailing\n\nname= hi there\nflag =on\n")
    cfg = parse_config(p)
    assert cfg == {"count": "5", "name": "hi there", "flag": "on"}
    assert cfg_get(cfg, "count", 1) == 5
    assert cfg_get(cfg, "flag", False) is True
    assert cfg_get(cfg, "missing", 2.5) == 2.5


def test_parse_config_rejects_bad_lines(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("just words\n")
    with pytest.raises(CliError) as err:
        parse_config(p)
    assert err.value.code == "E_CONFIG"
    p.write_text("= value\n")
    with pytest.raises(CliError):
        parse_config(p)
    with pytest.raises(CliError) as err:
        parse_config(tmp_path / "missing.cfg")
    assert err.value.code == "E_IO"


def test_cfg_get_coercion_failure():
    with pytest.raises(CliError) as err:
        cfg_get({"count": "x"}, "count", 1)
    assert err.value.code == "E_CONFIG"
    assert "count" in err.value.message


def test_parse_overrides():
    got = parse_overrides("supervise_3d=off, lr = 0.01")
    assert got == {"supervise_3d": "off", "lr": "0.01"}
    with pytest.raises(CliError):
        parse_overrides("bogus")


# --------------------------------------------------------------- generate

def test_generate_writes_samples_and_manifest(dataset):
    dirs = sorted(d for d in os.listdir(dataset) if d.startswith("sample_"))
    assert dirs == ["sample_%05d" % i for i in range(4)]
    for d in dirs:
        for name in ("img.png", "flat.png", "mask.png", "flow.dgwf",
                     "coords.dg3d", "lines.jsonl", "meta.json"):
            assert (dataset / d / name).exists()
    manifest = read_json(str(dataset) + ".manifest.json")
    assert manifest["command"] == "generate"
    assert manifest["seed"] == 11
    assert sum(manifest["extra"]["kinds"].values()) == 4
    assert len(manifest["config_hash"]) == 64


def test_generate_deterministic_trees(tmp_path):
    cfg = write_cfg(tmp_path / "g.cfg", count=2, height=96, width=96)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(a)]) == 0
    assert main(["generate", "--config", cfg, "--seed", "7", "--out", str(b)]) == 0
    assert main(["generate", "--config", cfg, "--seed", "8", "--out", str(c)]) == 0
    ta, tb, tc = tree_bytes(a), tree_bytes(b), tree_bytes(c)
    assert ta.keys() == tb.keys()
    for rel in ta:
        assert ta[rel] == tb[rel], "%s differs between identical runs" % rel
    assert tc["sample_00000/img.png"] != ta["sample_00000/img.png"]


def test_generate_count_zero(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "z.cfg", count=0)
    out = tmp_path / "empty"
    assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
    assert out.is_dir() and list(out.iterdir()) == []
    assert "generated 0 samples" in capsys.readouterr().out


def test_generate_rejects_bad_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "bad.cfg", count="many")
    code = main(["generate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("docgeo: error [E_CONFIG]")
    assert err.count("\n") == 1

    cfg2 = write_cfg(tmp_path / "neg.cfg", count=-1)
    assert main(["generate", "--config", cfg2, "--out", str(tmp_path / "o2")]) == 1


def test_generate_rejects_bad_mix(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "mix.cfg", count=1, mix="a,b")
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "[E_CONFIG]" in capsys.readouterr().err


# --------------------------------------------------------------- annotate

def test_annotate_overwrites_lines_and_writes_mask(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "g.cfg", count=2, height=224, width=224)
    data = tmp_path / "set"
    assert main(["generate", "--config", cfg, "--seed", "3", "--out", str(data)]) == 0
    before = (data / "sample_00000" / "lines.jsonl").read_bytes()
    assert main(["annotate", str(data)]) == 0
    after = (data / "sample_00000" / "lines.jsonl").read_bytes()
    assert after != before
    lines = read_textlines(data / "sample_00000" / "lines.jsonl")
    total = sum(len(read_textlines(data / d / "lines.jsonl"))
                for d in ("sample_00000", "sample_00001"))
    assert total > 0
    for ln in lines:
        assert ln.points.shape[1] == 2
    mask = load_mask(data / "sample_00000" / "textmask.png")
    assert mask.shape == (224, 224) and mask.dtype == bool
    assert "annotated 2 samples" in capsys.readouterr().out
    assert read_json(str(data) + ".manifest.json")["command"] == "annotate"


def test_annotate_missing_dir(tmp_path, capsys):
    assert main(["annotate", str(tmp_path / "nope")]) == 1
    assert "[E_IO]" in capsys.readouterr().err


def test_annotate_empty_dir(tmp_path, capsys):
    (tmp_path / "hollow").mkdir()
    assert main(["annotate", str(tmp_path / "hollow")]) == 1
    assert "[E_DATA]" in capsys.readouterr().err


# ---------------------------------------------------------------- rectify

def test_rectify_directory_with_flows(tmp_path, dataset, model_ckpt):
    src = tmp_path / "in"
    src.mkdir()
    rng = np.random.default_rng(5)
    originals = {}
    for name in ("a", "b", "c"):
        img = rng.uniform(0.2, 0.9, size=(64, 80, 3))
        save_image(src / (name + ".png"), img)
        originals[name] = load_image(src / (name + ".png"))
    out = tmp_path / "out"
    assert main(["rectify", str(src), "--checkpoint", model_ckpt,
                 "--save-flow", "--out", str(out)]) == 0
    for name in originals:
        rect = load_image(out / (name + "_rect.png"))
        assert rect.shape == (64, 80, 3)
        # untrained zero-init head -> identity warp -> image passes through
        assert np.max(np.abs(rect - originals[name])) <= 2 / 255
        flow = read_warp_field(out / (name + "_flow.dgwf"))
        assert flow.dx.shape == (64, 80)
        assert np.allclose(flow.dx, 0) and np.allclose(flow.dy, 0)
    manifest = read_json(str(out) + ".manifest.json")
    assert manifest["extra"]["images"] == 3


def test_rectify_single_file(tmp_path, model_ckpt):
    img_path = tmp_path / "one.png"
    save_image(img_path, np.full((48, 48, 3), 0.5))
    out = tmp_path / "out"
    assert main(["rectify", str(img_path), "--checkpoint", model_ckpt,
                 "--out", str(out)]) == 0
    assert (out / "one_rect.png").exists()
    assert not (out / "one_flow.dgwf").exists()


def test_rectify_missing_checkpoint(tmp_path, capsys):
    save_image(tmp_path / "x.png", np.zeros((32, 32, 3)))
    code = main(["rectify", str(tmp_path / "x.png"),
                 "--checkpoint", str(tmp_path / "nope.pt"),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_IO]" in capsys.readouterr().err


def test_rectify_garbage_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"not a checkpoint")
    save_image(tmp_path / "x.png", np.zeros((32, 32, 3)))
    code = main(["rectify", str(tmp_path / "x.png"), "--checkpoint", str(bad),
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_FORMAT]" in capsys.readouterr().err


def test_rectify_empty_input_dir(tmp_path, model_ckpt, capsys):
    (tmp_path / "in").mkdir()
    code = main(["rectify", str(tmp_path / "in"), "--checkpoint", model_ckpt,
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_DATA]" in capsys.readouterr().err


# ------------------------------------------------------------------- eval

def test_eval_report_schema_with_ocr_unavailable(tmp_path, dataset, model_ckpt,
                                                 monkeypatch, capsys):
    monkeypatch.setenv("DOCGEO_OCR_BIN", "/definitely/not/an/ocr")
    report_path = tmp_path / "report.json"
    assert main(["eval", str(dataset), "--checkpoint", model_ckpt,
                 "--csv", "--out", str(report_path)]) == 0
    report = read_json(report_path)
    assert len(report["images"]) == 4
    for row in report["images"]:
        assert row["name"].startswith("sample_")
        assert -1.0 <= row["ms_ssim"] <= 1.0
        assert row["ld"] >= 0.0
        assert row["ed"] is None and row["cer"] is None
    assert report["mean"]["ms_ssim"] is not None
    assert report["mean"]["ed"] is None
    assert "not found" in report["ocr_skipped"]
    assert report["config"]["samples"] == 4

    csv_text = (tmp_path / "report.csv").read_text().strip().splitlines()
    assert csv_text[0] == "name,ms_ssim,ld,ed,cer"
    assert len(csv_text) == 5
    assert csv_text[1].endswith(",,")  # null OCR columns stay empty

    out = capsys.readouterr().out
    assert "eval: 4 samples" in out
    assert read_json(str(report_path) + ".manifest.json")["command"] == "eval"


def test_eval_missing_dataset(tmp_path, model_ckpt, capsys):
    code = main(["eval", str(tmp_path / "never"), "--checkpoint", model_ckpt,
                 "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert "[E_IO]" in capsys.readouterr().err


# ------------------------------------------------------------------ train

@pytest.mark.slow
def test_train_end_to_end_tiny(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "t.cfg", batch=2, max_steps=2, val_every=2,
                    val_fraction="0.25", **TINY)
    out = tmp_path / "run"
    assert main(["train", str(dataset), "--config", cfg, "--seed", "1",
                 "--out", str(out)]) == 0
    model, step, _ = load_model(out / "model.pt")
    assert step == 2
    assert model.cfg.height == 96
    csv_lines = (out / "log.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "step,total,l3d,ltext,lflow"
    assert len(csv_lines) == 3
    summary = read_json(out / "log.json")
    assert summary["steps"] == 2
    assert summary["val"] and summary["val"][-1]["step"] == 2
    assert read_json(str(out) + ".manifest.json")["command"] == "train"
    assert "model saved" in capsys.readouterr().out


def test_train_rejects_bad_ablate_flag(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "t.cfg", max_steps=1, **TINY)
    code = main(["train", str(dataset), "--config", cfg, "--ablate", "bogus",
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_CONFIG]" in capsys.readouterr().err

    code = main(["train", str(dataset), "--config", cfg,
                 "--ablate", "nonsense_flag=1", "--out", str(tmp_path / "o")])
    assert code == 1
    assert "nonsense_flag" in capsys.readouterr().err


def test_train_rejects_resolution_mismatch(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "t.cfg", max_steps=1)  # default 288x288 model
    code = main(["train", str(dataset), "--config", cfg,
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_DATA]" in capsys.readouterr().err


def test_train_rejects_bad_val_fraction(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "t.cfg", val_fraction="1.5", **TINY)
    code = main(["train", str(dataset), "--config", cfg,
                 "--out", str(tmp_path / "o")])
    assert code == 1
    assert "[E_CONFIG]" in capsys.readouterr().err


# -------------------------------------------------------------- train-seg

@pytest.mark.slow
def test_train_seg_end_to_end(tmp_path, dataset, capsys):
    from docgeo.segmenter import load_segmenter

    cfg = write_cfg(tmp_path / "s.cfg", steps=2, batch=2, base=16)
    out = tmp_path / "seg.pt"
    assert main(["train-seg", str(dataset), "--config", cfg, "--tau", "0.4",
                 "--out", str(out)]) == 0
    params = load_segmenter(out)
    assert params.tau == pytest.approx(0.4)
    assert "segmenter saved" in capsys.readouterr().out
    assert read_json(str(out) + ".manifest.json")["extra"]["final_loss"] > 0


# ----------------------------------------------------------------- ablate

@pytest.mark.slow
def test_ablate_tiny(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "a.cfg", max_steps=2, val_every=2, seeds="0",
                    val_fraction="0.25", **TINY)
    out = tmp_path / "abl"
    assert main(["ablate", str(dataset), "--config", cfg, "--out", str(out)]) == 0
    blob = read_json(out / "ablation.json")
    names = [r["name"] for r in blob["rows"]]
    assert names == ["flow-only", "flow+3d+text"]
    for row in blob["rows"]:
        assert np.isfinite(row["val_ld"]) and np.isfinite(row["val_ms_ssim"])
    assert set(blob["summary"]) == {"flow-only", "flow+3d+text"}
    table = (out / "ablation.txt").read_text()
    assert "flow-only" in table and "LD" in table
    assert "flow-only" in capsys.readouterr().out


def test_ablate_unknown_variant(tmp_path, dataset, capsys):
    cfg = write_cfg(tmp_path / "a.cfg", variants="no-such-run", **TINY)
    assert main(["ablate", str(dataset), "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 1
    assert "unknown variant" in capsys.readouterr().err


# ------------------------------------------------------------------ report

def fake_report(path, names_vals, ocr=False):
    rows = [{"name": n, "ms_ssim": v, "ld": 2.0 - v, "ed": 3 if ocr else None,
             "cer": 0.1 if ocr else None} for n, v in names_vals]
    def mean(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return float(np.mean(vals)) if vals else None
    blob = {"images": rows,
            "mean": {k: mean(k) for k in ("ms_ssim", "ld", "ed", "cer")},
            "config": {}}
    path.write_text(json.dumps(blob))
    return path


def test_report_two_runs_delta_and_byte_stable(tmp_path):
    r1 = fake_report(tmp_path / "base.json", [("s0", 0.5), ("s1", 0.6)])
    r2 = fake_report(tmp_path / "tuned.json", [("s0", 0.7), ("s1", 0.8)], ocr=True)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["report", str(r1), str(r2), "--out", str(out1)]) == 0
    assert main(["report", str(r1), str(r2), "--out", str(out2)]) == 0
    md = (out1 / "summary.md").read_text()
    assert "## base" in md and "## tuned" in md
    assert "## Delta (tuned - base)" in md
    assert "| ms_ssim | +0.2 |" in md
    assert "| ed | n/a |" in md  # base run has no OCR numbers
    for name in ("summary.md", "ms_ssim.png", "ld.png"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_report_single_run_and_empty(tmp_path):
    r = fake_report(tmp_path / "only.json", [])
    out = tmp_path / "o"
    assert main(["report", str(r), "--out", str(out)]) == 0
    md = (out / "summary.md").read_text()
    assert "0 image(s)" in md
    assert "| ms_ssim | n/a |" in md
    assert "Delta" not in md
    assert (out / "ms_ssim.png").exists()


def test_report_rejects_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"something": "else"}')
    assert main(["report", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "[E_FORMAT]" in capsys.readouterr().err

    r = fake_report(tmp_path / "r.json", [("s0", 0.5)])
    argv = ["report", str(r), str(r), str(r), "--out", str(tmp_path / "o")]
    assert main(argv) == 1
    assert "one or two" in capsys.readouterr().err


# ------------------------------------------------------------------- misc

def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "docgeo" in capsys.readouterr().out


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0


def test_internal_errors_become_one_line(tmp_path, capsys, monkeypatch):
    # unexpected exceptions inside a command still honor the one-line contract
    import docgeo.synthgen

    def boom(*a, **k):
        raise KeyError("surprise")
    monkeypatch.setattr(docgeo.synthgen, "generate_dataset", boom)
    assert main(["generate", "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("docgeo: error [E_INTERNAL] KeyError")
    assert err.count("\n") == 1
