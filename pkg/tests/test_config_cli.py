import numpy as np
import pytest

from minr import cli
from minr import config as cfgmod
from minr import imageio


def test_defaults_complete_and_typed():
    cfg = cfgmod.Config()
    assert cfg["mask.ratio"] == 0.75
    assert isinstance(cfg["train.steps"], int)
    assert isinstance(cfg["train.learning_rate"], float)
    assert isinstance(cfg["mask.fixed"], bool)


def test_set_coerces_by_default_type():
    cfg = cfgmod.Config()
    cfg.set("train.steps", "250")
    assert cfg["train.steps"] == 250
    cfg.set("mask.ratio", "0.5")
    assert cfg["mask.ratio"] == 0.5
    cfg.set("mask.fixed", "true")
    assert cfg["mask.fixed"] is True


def test_unknown_key_rejected():
    cfg = cfgmod.Config()
    with pytest.raises(cfgmod.ConfigError):
        cfg.set("train.warmup", 10)
    with pytest.raises(cfgmod.ConfigError):
        cfg["nope.nope"]


def test_parse_text_roundtrip():
    cfg = cfgmod.Config()
    cfg.set("model.mode", "ginr")
    cfg.set("train.steps", 7)
    back = cfgmod.parse_text(cfg.to_text())
    assert back == cfg


def test_parse_text_comments_and_blanks():
    cfg = cfgmod.parse_text("# comment\n\ntrain.steps = 9  # trailing\n")
    assert cfg["train.steps"] == 9


def test_bad_line_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.parse_text("train.steps 9")


def _overrides(*pairs):
    return [f"{k}={v}" for k, v in pairs]


SMALL = _overrides(
    ("data.source", "synth:faces_like"), ("data.count", 4), ("data.size", 8),
    ("model.patch_size", 4), ("model.d_model", 16), ("model.depth", 1),
    ("model.heads", 2), ("model.inr_width", 6), ("model.inr_layers", 2),
    ("model.fourier_frequencies", 1), ("baseline.d_dec", 8),
    ("baseline.dec_depth", 1), ("baseline.dec_heads", 2),
    ("train.steps", 2), ("train.batch_size", 2),
    ("eval.ratios", "0.5"), ("mask.ratio", 0.5),
)


def _sets(extra=()):
    out = []
    for item in SMALL + list(extra):
        out.extend(["--set", item])
    return out


def test_cli_train_and_eval(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.run(["train", "--out", str(out)] + _sets()) == 0
    ckpt = out / "checkpoint.bin"
    assert ckpt.exists()

    eval_out = tmp_path / "eval"
    code = cli.run(["eval", "--ckpt", str(ckpt), "--out", str(eval_out)]
                   + _sets())
    assert code == 0
    report = (eval_out / "report.csv").read_text()
    assert "psnr_full" in report
    # ID + OOD twin domain, 2 strategies x 1 ratio each
    assert report.count("\n") == 1 + 4


def test_cli_reconstruct_and_render(tmp_path):
    out = tmp_path / "run"
    cli.run(["train", "--out", str(out)] + _sets())
    ds_id = _first_id()
    rec_out = tmp_path / "rec"
    code = cli.run(["reconstruct", "--ckpt", str(out / "checkpoint.bin"),
                    "--id", ds_id, "--out", str(rec_out)] + _sets())
    assert code == 0
    assert (rec_out / f"{ds_id}_recon.png").exists()

    render_path = tmp_path / "r.png"
    code = cli.run(["render", "--ckpt", str(out / "checkpoint.bin"),
                    "--id", ds_id, "--size", "16x12",
                    "--out", str(render_path)] + _sets())
    assert code == 0
    assert imageio.read_image(render_path).shape == (16, 12, 3)


def _first_id():
    from minr import training
    cfg = cfgmod.apply_overrides(cfgmod.Config(), SMALL)
    return training.load_dataset(cfg).train[0].id


def test_cli_render_rejects_mae(tmp_path):
    out = tmp_path / "mae_run"
    cli.run(["train", "--out", str(out)] + _sets(("model.mode=mae",)))
    code = cli.run(["render", "--ckpt", str(out / "checkpoint.bin"),
                    "--id", _first_id(), "--size", "8x8"] + _sets())
    assert code == 1


def test_cli_gallery(tmp_path):
    out = tmp_path / "run"
    cli.run(["train", "--out", str(out)] + _sets())
    g = tmp_path / "g.png"
    code = cli.run(["gallery", "--ckpt", str(out / "checkpoint.bin"),
                    "--count", "1", "--out", str(g)] + _sets())
    assert code == 0
    assert imageio.read_image(g).shape == (8, 3 * 8, 3)


def test_cli_bad_override_is_error_not_crash(tmp_path):
    code = cli.run(["train", "--out", str(tmp_path / "x"),
                    "--set", "bogus.key=1"])
    assert code == 1


def test_cli_usage_error_returns_2():
    assert cli.run(["no-such-command"]) == 2
    assert cli.run([]) == 2


def test_cli_render_bad_size(tmp_path):
    out = tmp_path / "run"
    cli.run(["train", "--out", str(out)] + _sets())
    code = cli.run(["render", "--ckpt", str(out / "checkpoint.bin"),
                    "--id", _first_id(), "--size", "banana"] + _sets())
    assert code == 2
