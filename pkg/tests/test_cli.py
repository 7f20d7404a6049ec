import subprocess
import sys
import time

import numpy as np
import pytest
from PIL import Image as PILImage

from rsinpaint.cli import main
from rsinpaint.config import ConfigError, RunConfig, load_config, parse_override
from rsinpaint.evaluation import psnr
from rsinpaint.imaging import load_image
from rsinpaint.synthetic import write_synthetic_dataset

SMOKE = """\
image_size = 32
use_splits = false
gen_width = 8
n_res = 2
disc_width = 4
cbam_reduction = 4
batch_size = 2
mask_kind = "rectangular"
extractor = "tiny"
steps_edge = {steps}
steps_colour = {steps}
steps_global = {steps}
"""


def _write_config(tmp_path, steps=5, data=None, extra=""):
    data = data or tmp_path / "data"
    if not data.exists():
        write_synthetic_dataset(data, 2, 32, seed=1)
    path = tmp_path / "run.toml"
    path.write_text(SMOKE.format(steps=steps)
                    + f'data_dir = "{data.as_posix()}"\nrun_dir = "{(tmp_path / "runs" / "smoke").as_posix()}"\n'
                    + extra)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One smoke training run shared by the inference tests."""
    tmp = tmp_path_factory.mktemp("trained")
    cfg = _write_config(tmp, steps=1)
    assert main(["train", str(cfg)]) == 0
    return tmp / "runs" / "smoke" / "checkpoints" / "final.ckpt", tmp / "data", cfg


class TestConfig:
    def test_defaults_and_hash(self):
        a, b = RunConfig(), RunConfig()
        assert a.hash == b.hash
        assert RunConfig(seed=1).hash != a.hash
        assert a.train().lambdas == (1.0, 1.0, 1.0)

    def test_round_trip(self, tmp_path):
        cfg = RunConfig(seed=3, mask_min_frac=0.1, mask_max_frac=0.2, jigsaw=True)
        cfg.write(tmp_path / "c.toml")
        assert load_config(tmp_path / "c.toml") == cfg

    def test_unknown_key(self, tmp_path):
        (tmp_path / "c.toml").write_text("learning_rate = 0.1\n")
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config(tmp_path / "c.toml")

    def test_wrong_type(self, tmp_path):
        (tmp_path / "c.toml").write_text('batch_size = "eight"\n')
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.toml")

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["image_size=30"])
        with pytest.raises(ConfigError):
            load_config(overrides=["canny_low=0.5"])

    def test_overrides(self, tmp_path):
        (tmp_path / "c.toml").write_text("seed = 1\n")
        cfg = load_config(tmp_path / "c.toml", ["seed=7", "mask_kind=salt_pepper", "cbam=false", "lr_g=2e-3"])
        assert (cfg.seed, cfg.mask_kind, cfg.cbam, cfg.lr_g) == (7, "salt_pepper", False, 2e-3)
        assert parse_override("run_dir = out/x") == ("run_dir", "out/x")
        with pytest.raises(ConfigError):
            parse_override("seed")


class TestTrain:
    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "nope.toml"
        assert main(["train", str(missing)]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_missing_data(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(f'data_dir = "{(tmp_path / "absent").as_posix()}"\nextractor = "tiny"\n')
        assert main(["train", str(cfg)]) == 3

    def test_wrong_image_size(self, tmp_path):
        cfg = _write_config(tmp_path, steps=0, extra="")
        assert main(["train", str(cfg), "--set", "image_size=64"]) == 3

    def test_zero_steps_writes_checkpoint(self, tmp_path):
        cfg = _write_config(tmp_path, steps=0)
        assert main(["train", str(cfg)]) == 0
        run = tmp_path / "runs" / "smoke"
        assert (run / "checkpoints" / "final.ckpt").exists()
        assert load_config(run / "config.toml") == load_config(cfg)
        assert len((run / "manifest.tsv").read_text().splitlines()) == 2

    def test_rerun_gets_new_directory(self, tmp_path):
        cfg = _write_config(tmp_path, steps=0)
        assert main(["train", str(cfg)]) == 0
        assert main(["train", str(cfg)]) == 0
        assert (tmp_path / "runs" / "smoke-1" / "checkpoints" / "final.ckpt").exists()

    def test_smoke_run(self, tmp_path):
        cfg = _write_config(tmp_path, steps=5, extra="checkpoint_every = 5\nsample_every = 5\n")
        start = time.perf_counter()
        assert main(["train", str(cfg)]) == 0
        assert time.perf_counter() - start < 300
        run = tmp_path / "runs" / "smoke"
        lines = (run / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + 15
        assert len(list((run / "checkpoints").glob("stage-*.ckpt"))) == 3
        assert len(list((run / "samples").glob("*.png"))) == 3


class TestInfer:
    def test_empty_mask_is_identity(self, trained, tmp_path):
        ckpt, data, _ = trained
        image = sorted(data.glob("*.png"))[0]
        PILImage.fromarray(np.zeros((32, 32), dtype=np.uint8)).save(tmp_path / "m.png")
        out = tmp_path / "out.png"
        assert main(["infer", "--checkpoint", str(ckpt), "--image", str(image),
                     "--mask", str(tmp_path / "m.png"), "--out", str(out)]) == 0
        assert np.array_equal(np.asarray(PILImage.open(out)), np.asarray(PILImage.open(image)))

    def test_printed_psnr_matches(self, trained, tmp_path, capsys):
        ckpt, data, _ = trained
        image = sorted(data.glob("*.png"))[1]
        out = tmp_path / "out.png"
        assert main(["infer", "--checkpoint", str(ckpt), "--image", str(image), "--out", str(out),
                     "--mask-kind", "rectangular", "--gt", str(image)]) == 0
        printed = float(capsys.readouterr().out.split("PSNR:")[1].split()[0])
        assert printed == pytest.approx(psnr(load_image(out), load_image(image)), abs=1e-6)

    def test_missing_checkpoint(self, tmp_path, trained):
        _, data, _ = trained
        image = sorted(data.glob("*.png"))[0]
        assert main(["infer", "--checkpoint", str(tmp_path / "none.ckpt"), "--image", str(image),
                     "--out", str(tmp_path / "o.png")]) == 5

    def test_architecture_mismatch(self, trained, tmp_path):
        ckpt, data, cfg = trained
        other = tmp_path / "other.toml"
        other.write_text(cfg.read_text().replace("gen_width = 8", "gen_width = 16"))
        image = sorted(data.glob("*.png"))[0]
        assert main(["infer", "--checkpoint", str(ckpt), "--image", str(image), "--out", str(tmp_path / "o.png"),
                     "--config", str(other)]) == 5
        assert main(["infer", "--checkpoint", str(ckpt), "--image", str(image), "--out", str(tmp_path / "o.png"),
                     "--config", str(cfg)]) == 0


class TestEvalAndMaskgen:
    def test_maskgen(self, tmp_path):
        assert main(["maskgen", "--count", "10", "--out-dir", str(tmp_path / "m"),
                     "--height", "32", "--width", "48", "--seed", "3"]) == 0
        files = sorted((tmp_path / "m").glob("*.png"))
        assert len(files) == 10
        for f in files:
            arr = np.asarray(PILImage.open(f))
            assert arr.shape == (32, 48) and set(np.unique(arr)) <= {0, 255}

    def test_maskgen_bad_band(self, tmp_path):
        assert main(["maskgen", "--count", "1", "--out-dir", str(tmp_path / "m"),
                     "--min-frac", "0.5", "--max-frac", "0.1"]) == 2

    def test_ground_truth_stub(self, tmp_path, capsys):
        write_synthetic_dataset(tmp_path / "d", 3, 32)
        assert main(["eval", "--stub", "ground_truth", "--data", str(tmp_path / "d"),
                     "--out-dir", str(tmp_path / "e")]) == 0
        assert "mean PSNR 100.0000 dB" in capsys.readouterr().out

    def test_same_seed_byte_identical(self, tmp_path):
        write_synthetic_dataset(tmp_path / "d", 3, 32)
        args = ["eval", "--stub", "zero_fill", "--data", str(tmp_path / "d"), "--seed", "5",
                "--out-dir", str(tmp_path / "e")]
        assert main(args) == 0 and main(args) == 0
        assert (tmp_path / "e" / "metrics.csv").read_bytes() == (tmp_path / "e-1" / "metrics.csv").read_bytes()

    def test_checkpoint_eval_with_sweep(self, trained, tmp_path):
        ckpt, data, _ = trained
        assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data), "--out-dir", str(tmp_path / "e"),
                     "--mask-kind", "rectangular", "--sweep-coverages", "0.05,0.15,0.3"]) == 0
        assert (tmp_path / "e" / "sweep-mask_percentage.csv").exists()
        assert (tmp_path / "e" / "sweep-mask_percentage.png").exists()
        assert "config_hash: " in (tmp_path / "e" / "summary.txt").read_text()

    def test_manifest_split(self, trained, tmp_path):
        ckpt, data, _ = trained
        manifest = ckpt.parent.parent / "manifest.tsv"
        assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(manifest), "--split", "train",
                     "--out-dir", str(tmp_path / "e")]) == 0

    def test_empty_split(self, trained, tmp_path):
        ckpt, _, _ = trained
        manifest = ckpt.parent.parent / "manifest.tsv"
        assert main(["eval", "--checkpoint", str(ckpt), "--manifest", str(manifest), "--split", "test",
                     "--out-dir", str(tmp_path / "e")]) == 3


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "rsinpaint.cli", "maskgen", "--count", "2",
                          "--out-dir", str(tmp_path / "m"), "--height", "16", "--width", "16"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert len(list((tmp_path / "m").glob("*.png"))) == 2
