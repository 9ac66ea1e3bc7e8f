import numpy as np
import pytest

from vdvae.cli import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    RunConfig,
    apply_overrides,
    build_run_config,
    checkpoint_values,
    load_run_config,
    main,
    parse_lines,
)
from vdvae.data import load_checkpoint, read_ppm
from vdvae.errors import ConfigError
from vdvae.model import ModelConfig
from vdvae.training import KLPhase, TrainConfig

TINY_CONFIG = """\
# desk-scale run on procedural images
dataset = synthetic
image_size = 8
width = 8
zdim = 2
enc_blocks = 8x1,4x1,1x1
dec_blocks = 1x1,4x1,8x2
dmol_mixtures = 2
synthetic_n = 16
synthetic_val = 4
batch_size = 4
total_steps = 2
log_every = 1
eval_batch_size = 4
"""


@pytest.fixture
def run_dir(tmp_path):
    config = tmp_path / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out)]) == EXIT_OK
    return out


# run configs

def test_parse_lines_tracks_line_numbers():
    values, lines = parse_lines("# comment\n\nwidth = 64  # trailing\nzdim=8\n", "a.cfg")
    assert values == {"width": "64", "zdim": "8"}
    assert lines == {"width": 3, "zdim": 4}


@pytest.mark.parametrize("text,where", [
    ("width = 1\nwidth = 2\n", "a.cfg:2"),
    ("width = 1\nnonsense\n", "a.cfg:2"),
    (" = 3\n", "a.cfg:1"),
])
def test_parse_lines_errors_name_the_line(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_lines(text, "a.cfg")


def test_unknown_key_names_its_line():
    values, lines = parse_lines("width = 8\nwidht = 9\n", "b.cfg")
    with pytest.raises(ConfigError, match="b.cfg:2: unknown key 'widht'"):
        build_run_config(values, lines, "b.cfg")


def test_bad_value_names_key_and_line():
    values, lines = parse_lines("zdim = 4\nwidth = wide\n", "c.cfg")
    with pytest.raises(ConfigError, match="c.cfg:2: invalid value for 'width'"):
        build_run_config(values, lines, "c.cfg")


def test_literal_choices_are_enforced():
    with pytest.raises(ConfigError, match="kl_phase"):
        build_run_config({"kl_phase": "warmup"})


def test_defaults_match_library_defaults():
    rc = RunConfig()
    assert rc.to_model_config() == ModelConfig()
    assert rc.to_train_config() == TrainConfig()
    assert rc.to_train_config().kl_phase is KLPhase.TRUE_KL


def test_invalid_model_is_a_config_error():
    with pytest.raises(ConfigError):
        RunConfig(width=30).to_model_config()


def test_overrides_replace_file_values(tmp_path):
    path = tmp_path / "x.cfg"
    path.write_text("width = 8\nlr = 0.1\n")
    rc = load_run_config(path, ["lr=0.5", "seed = 3"])
    assert rc.lr == 0.5 and rc.seed == 3 and rc.width == 8

    values, lines = {"width": "8"}, {"width": 1}
    apply_overrides(values, lines, ["width=16"])
    assert values == {"width": "16"} and lines == {}
    with pytest.raises(ConfigError):
        apply_overrides(values, lines, ["width"])


def test_checkpoint_settings_sit_under_file_and_overrides(tmp_path):
    stored = TrainConfig(learning_rate=0.01, skip_threshold=50, seed=7, adam_eps=1e-6)
    base = checkpoint_values(ModelConfig.toy(), stored)
    assert base["lr"] == 0.01 and base["kl_phase"] == "true_kl_phase"
    path = tmp_path / "x.cfg"
    path.write_text("lr = 0.1\n")
    rc = load_run_config(path, ["seed=3"], base=base)
    assert (rc.lr, rc.skip_threshold, rc.seed) == (0.1, 50.0, 3)
    assert rc.to_model_config() == ModelConfig.toy()
    assert rc.to_train_config(stored).adam_eps == 1e-6


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.cfg")


def test_synthetic_config_follows_run_config():
    synthetic = RunConfig(image_size=16, image_channels=1, synthetic_n=10, seed=4).to_synthetic_config()
    assert (synthetic.size, synthetic.channels, synthetic.n, synthetic.seed) == (16, 1, 10, 4)


# exit codes

def test_argument_errors_exit_with_usage():
    assert main([]) == EXIT_USAGE
    assert main(["teleport"]) == EXIT_USAGE
    assert main(["check", "dmol", "--trials", "many"]) == EXIT_USAGE


def test_help_exits_cleanly():
    assert main(["--help"]) == EXIT_OK


def test_train_without_data_path_is_usage_error(tmp_path, capsys):
    config = tmp_path / "cifar.cfg"
    config.write_text("dataset = cifar10\n")
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_USAGE
    assert "data_path" in capsys.readouterr().err


def test_train_with_bad_block_spec_is_usage_error(tmp_path):
    config = tmp_path / "bad.cfg"
    config.write_text(TINY_CONFIG + "dec_blocks_typo = 1\n")
    assert main(["train", "--config", str(config), "--out", str(tmp_path / "out")]) == EXIT_USAGE
    good = tmp_path / "good.cfg"
    good.write_text(TINY_CONFIG)
    code = main(["train", "--config", str(good), "--override", "dec_blocks=1x1,4xq", "--out", str(tmp_path / "out")])
    assert code == EXIT_USAGE


def test_missing_checkpoint_is_failure(tmp_path):
    assert main(["eval", "--ckpt", str(tmp_path / "none.vdvc"), "--dataset", "synthetic"]) == EXIT_FAILURE


def test_ablate_layers_needs_specs(tmp_path):
    assert main(["ablate", "layers", "--out", str(tmp_path)]) == EXIT_USAGE


# checks

def test_check_dmol(capsys):
    assert main(["check", "dmol", "--trials", "3", "--tolerance", "1e-5"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("[PASS]")


def test_check_props(capsys):
    assert main(["check", "props", "--n", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4


# end to end on a tiny synthetic run

def test_train_writes_checkpoint_and_metrics(run_dir):
    assert (run_dir / "final.vdvc").is_file()
    rows = (run_dir / "metrics.csv").read_text().splitlines()
    assert len(rows) == 3
    assert rows[0].endswith("kl_layer_3")


def test_resume_from_final_checkpoint(run_dir, tmp_path):
    config = tmp_path / "tiny.cfg"
    code = main(["train", "--config", str(config), "--override", "total_steps=3",
                 "--resume", str(run_dir / "final.vdvc"), "--out", str(run_dir)])
    assert code == EXIT_OK
    assert len((run_dir / "metrics.csv").read_text().splitlines()) == 4


RESUME_DATA = ["--override", "dataset=synthetic", "--override", "synthetic_n=16", "--override", "synthetic_val=4"]


def test_resume_keeps_checkpoint_settings_without_config(tmp_path):
    config = tmp_path / "tuned.cfg"
    config.write_text(TINY_CONFIG + "lr = 0.003\nskip_threshold = 250\nseed = 5\n")
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--out", str(out)]) == EXIT_OK
    code = main(["train", *RESUME_DATA, "--override", "total_steps=3",
                 "--resume", str(out / "final.vdvc"), "--out", str(out)])
    assert code == EXIT_OK
    state = load_checkpoint(out / "final.vdvc")
    assert state.step == 3
    assert state.train_config.learning_rate == 0.003
    assert state.train_config.skip_threshold == 250.0
    assert state.train_config.seed == 5
    assert state.train_config.batch_size == 4
    assert state.train_config.total_steps == 3
    assert state.model_config.width == 8


def test_resume_rejects_model_change(run_dir, capsys):
    code = main(["train", *RESUME_DATA, "--override", "total_steps=3", "--override", "width=16",
                 "--resume", str(run_dir / "final.vdvc"), "--out", str(run_dir)])
    assert code == EXIT_USAGE
    assert "model settings cannot change" in capsys.readouterr().err


def test_eval_reports_elbo(run_dir, capsys):
    capsys.readouterr()
    code = main(["eval", "--ckpt", str(run_dir / "final.vdvc"), "--dataset", "synthetic", "--n", "4",
                 "--use-ema"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "4 images, EMA weights" in out
    assert "ELBO:" in out and "bits/dim" in out
    assert "8x8: 2 layers" in out


def test_sample_writes_grid(run_dir, tmp_path):
    code = main(["sample", "--ckpt", str(run_dir / "final.vdvc"), "--n", "4", "--temperature", "0.4",
                 "--out", str(tmp_path / "samples")])
    assert code == EXIT_OK
    grid = read_ppm(tmp_path / "samples" / "samples-t0.4.ppm")
    assert grid.shape == (18, 18, 3)


def test_partial_reconstruction_grid(run_dir, tmp_path):
    code = main(["reconstruct", "--ckpt", str(run_dir / "final.vdvc"), "--dataset", "synthetic", "--n", "2",
                 "--up-to", "4", "--out", str(tmp_path / "recon")])
    assert code == EXIT_OK
    grid = read_ppm(tmp_path / "recon" / "reconstructions-upto4.ppm")
    assert grid.shape == (18, 18, 3)


def test_reconstruct_rejects_unknown_resolution(run_dir, tmp_path):
    code = main(["reconstruct", "--ckpt", str(run_dir / "final.vdvc"), "--dataset", "synthetic", "--n", "2",
                 "--up-to", "2", "--out", str(tmp_path / "recon")])
    assert code == EXIT_USAGE


def test_diag_kl_writes_rates(run_dir, tmp_path):
    code = main(["diag", "kl", "--ckpt", str(run_dir / "final.vdvc"), "--dataset", "synthetic", "--n", "4",
                 "--out", str(tmp_path / "diag")])
    assert code == EXIT_OK
    lines = (tmp_path / "diag" / "rates.csv").read_text().splitlines()
    assert len(lines) == 5
    cumulative = [float(line.split(",")[3]) for line in lines[1:]]
    assert np.all(np.diff(cumulative) >= -1e-6)
