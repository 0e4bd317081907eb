import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import torch

from au2av.checkpoints import save_checkpoint
from au2av.cli import main
from au2av.config import PipelineConfig
from au2av.media import load_video, write_clip, write_wav
from au2av.metrics import MetricReport
from au2av.stage1.networks import Stage1Generator
from au2av.stage1.trainer import stage1_network_config
from au2av.stage2.networks import TranslationGenerator
from au2av.stage2.trainer import stage2_network_config

from conftest import TOY_STAGE1, TOY_STAGE2, make_clip, tone_audio

TOY_VALUES = {
    **TOY_STAGE1,
    **TOY_STAGE2,
    "stage1.epochs": 1,
    "stage1.sync_pretrain_steps": 2,
    "stage2.epochs": 1,
    "stage2.steps_per_epoch": 1,
    "adapt.epochs": 1,
}


def write_toy_config(tmp_path, **overrides) -> Path:
    values = {**TOY_VALUES, **{k.replace("__", "."): v for k, v in overrides.items()}}
    config = PipelineConfig(values=values)
    path = tmp_path / "config.txt"
    config.save(path)
    return path


def make_checkpoints(tmp_path, config_path):
    """Random-init stage-1/stage-2 checkpoints bearing the config hash."""
    from au2av.config import load_config

    config = load_config(config_path)
    torch.manual_seed(0)
    generator = Stage1Generator(stage1_network_config(config))
    translator = TranslationGenerator(stage2_network_config(config))
    s1 = save_checkpoint(tmp_path / "s1", 0, {"generator": generator}, {},
                         {"config_hash": config.hash(), "step": "0", "phase": "1", "epoch": "0"})
    s2 = save_checkpoint(tmp_path / "s2", 0, {"gen_s2t": translator}, {},
                         {"config_hash": config.hash(), "step": "0", "epoch": "0"})
    return s1, s2


class TestPrepare:
    def test_prepare_writes_manifest_and_identity(self, tmp_path, capsys):
        raw = tmp_path / "raw"
        for i in range(2):
            write_clip(make_clip(n_frames=5, seed=i, name=f"c{i}"), raw / f"c{i}")
        config = write_toy_config(tmp_path)
        code = main(["prepare", str(raw), "--config", str(config), "--out", str(tmp_path / "data")])
        assert code == 0
        manifest = (tmp_path / "data" / "manifest.txt").read_text().split()
        assert manifest == ["c0", "c1"]
        assert (tmp_path / "data" / "c0" / "identity.png").exists()

    def test_bad_clip_logged_and_skipped(self, tmp_path, capsys):
        raw = tmp_path / "raw"
        write_clip(make_clip(n_frames=5, name="good"), raw / "good")
        bad = raw / "bad"
        bad.mkdir()
        (bad / "frame_000001.png").write_bytes(b"not a png")
        config = write_toy_config(tmp_path)
        code = main(["prepare", str(raw), "--config", str(config), "--out", str(tmp_path / "data")])
        captured = capsys.readouterr()
        assert code == 0
        assert "AU2AV-WARN:" in captured.err
        assert (tmp_path / "data" / "manifest.txt").read_text().split() == ["good"]

    def test_empty_input_nonzero_exit(self, tmp_path, capsys):
        (tmp_path / "raw").mkdir()
        config = write_toy_config(tmp_path)
        code = main(["prepare", str(tmp_path / "raw"), "--config", str(config),
                     "--out", str(tmp_path / "data")])
        assert code != 0
        assert capsys.readouterr().err.startswith("AU2AV-ERROR:")


class TestTrainCommands:
    def test_stage1_two_epochs_and_resume(self, tmp_path):
        import time

        data = tmp_path / "data"
        for i in range(2):
            write_clip(make_clip(n_frames=6, seed=i, name=f"c{i}"), data / f"c{i}")
        config = write_toy_config(tmp_path, stage1__epochs=2)
        out = tmp_path / "run"
        start = time.time()
        assert main(["train-stage1", str(data), "--config", str(config), "--out", str(out)]) == 0
        assert time.time() - start < 600  # toy config completes well under 10 min
        epochs = sorted(p.name for p in (out / "checkpoints").glob("epoch_*"))
        assert epochs == ["epoch_0000", "epoch_0001"]

    def test_stage2_runs(self, tmp_path):
        domain_a = tmp_path / "a"
        domain_b = tmp_path / "b"
        write_clip(make_clip(n_frames=5, seed=0, with_audio=False, name="h"), domain_a / "h")
        write_clip(make_clip(n_frames=5, seed=1, with_audio=False, name="t"), domain_b / "t")
        config = write_toy_config(tmp_path)
        out = tmp_path / "run2"
        assert main(["train-stage2", str(domain_a), str(domain_b), "--config", str(config),
                     "--out", str(out)]) == 0
        assert (out / "checkpoints" / "epoch_0000" / "gen_s2t.bin").exists()

    def test_invalid_lambda_rejected_before_compute(self, tmp_path, capsys):
        config_path = tmp_path / "bad.txt"
        config_path.write_text("stage2.lambda_cam=-1\n")
        code = main(["train-stage2", "x", "y", "--config", str(config_path), "--out", str(tmp_path / "o")])
        assert code != 0
        assert "AU2AV-ERROR:" in capsys.readouterr().err


class TestGenerate:
    def setup_inputs(self, tmp_path):
        config = write_toy_config(tmp_path)
        audio_path = tmp_path / "speech.wav"
        write_wav(audio_path, tone_audio(1.0))
        image_path = tmp_path / "face.png"
        from PIL import Image

        frame = make_clip(n_frames=1, with_audio=False).frames[0]
        Image.fromarray((frame * 255).astype(np.uint8)).save(image_path)
        s1, s2 = make_checkpoints(tmp_path, config)
        return config, audio_path, image_path, s1, s2

    def test_one_second_gives_25_frames_both_domains(self, tmp_path):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        out = tmp_path / "out"
        code = main(["generate", str(audio), str(image), "--config", str(config),
                     "--out", str(out), "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2),
                     "--keep-intermediate"])
        assert code == 0
        animated = load_video(out / "animated")
        human = load_video(out / "human")
        assert len(animated.frames) == 25
        assert len(human.frames) == 25
        assert (out / "animated" / "audio.wav").exists()

    def test_human_only_without_stage2(self, tmp_path):
        config, audio, image, s1, _ = self.setup_inputs(tmp_path)
        out = tmp_path / "out"
        code = main(["generate", str(audio), str(image), "--config", str(config),
                     "--out", str(out), "--stage1-ckpt", str(s1), "--human-only"])
        assert code == 0
        assert len(load_video(out / "human").frames) == 25
        assert not (out / "animated").exists()

    def test_missing_stage2_without_flag_fails(self, tmp_path, capsys):
        config, audio, image, s1, _ = self.setup_inputs(tmp_path)
        code = main(["generate", str(audio), str(image), "--config", str(config),
                     "--out", str(tmp_path / "out"), "--stage1-ckpt", str(s1)])
        assert code != 0
        assert "AU2AV-ERROR:" in capsys.readouterr().err

    def test_config_hash_mismatch_rejected(self, tmp_path, capsys):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        other = write_toy_config(tmp_path, stage1__base_channels=4)
        code = main(["generate", str(audio), str(image), "--config", str(other),
                     "--out", str(tmp_path / "out"), "--stage1-ckpt", str(s1),
                     "--stage2-ckpt", str(s2)])
        assert code != 0
        assert "AU2AV-ERROR:" in capsys.readouterr().err

    def test_seed_override_keeps_checkpoint_compatibility(self, tmp_path):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        code = main(["generate", str(audio), str(image), "--config", str(config),
                     "--seed", "99", "--out", str(tmp_path / "out"),
                     "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2), "--skip-adapt"])
        assert code == 0

    def test_skip_adapt_reproduces_raw_generator(self, tmp_path):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out in (out_a, out_b):
            assert main(["generate", str(audio), str(image), "--config", str(config),
                         "--out", str(out), "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2),
                         "--skip-adapt"]) == 0
        frames_a = sorted((out_a / "animated").glob("frame_*.png"))
        frames_b = sorted((out_b / "animated").glob("frame_*.png"))
        for fa, fb in zip(frames_a, frames_b):
            assert fa.read_bytes() == fb.read_bytes()

    def test_skip_adapt_equals_zero_adapt_epochs(self, tmp_path):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        out_skip = tmp_path / "skip"
        out_zero = tmp_path / "zero"
        assert main(["generate", str(audio), str(image), "--config", str(config),
                     "--out", str(out_skip), "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2),
                     "--skip-adapt"]) == 0
        assert main(["generate", str(audio), str(image), "--config", str(config),
                     "--out", str(out_zero), "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2),
                     "--adapt-epochs", "0"]) == 0
        for fa, fb in zip(sorted((out_skip / "animated").glob("frame_*.png")),
                          sorted((out_zero / "animated").glob("frame_*.png"))):
            assert fa.read_bytes() == fb.read_bytes()

    def test_adapt_changes_output_and_is_deterministic(self, tmp_path):
        config, audio, image, s1, s2 = self.setup_inputs(tmp_path)
        outs = [tmp_path / name for name in ("x", "y")]
        for out in outs:
            assert main(["generate", str(audio), str(image), "--config", str(config),
                         "--out", str(out), "--stage1-ckpt", str(s1), "--stage2-ckpt", str(s2),
                         "--adapt-epochs", "1"]) == 0
        for fa, fb in zip(sorted((outs[0] / "animated").glob("frame_*.png")),
                          sorted((outs[1] / "animated").glob("frame_*.png"))):
            assert fa.read_bytes() == fb.read_bytes()


class TestEvaluate:
    def test_self_evaluation_report(self, tmp_path, capsys):
        clip = make_clip(n_frames=5, res=32, name="c", transcript=["bin", "blue"])
        gen_dir = tmp_path / "gen" / "c"
        ref_dir = tmp_path / "ref" / "c"
        write_clip(clip, gen_dir)
        write_clip(clip, ref_dir)
        config = write_toy_config(tmp_path)
        out = tmp_path / "reports"
        code = main(["evaluate", str(tmp_path / "gen"), str(tmp_path / "ref"),
                     "--config", str(config), "--out", str(out)])
        assert code == 0
        report = MetricReport.load(out / "report_c.json")
        assert report["psnr"].value == math.inf
        assert abs(report["ssim"].value - 1.0) < 1e-9
        assert report["wer"].value == 0.0
        assert "psnr" in capsys.readouterr().out

    def test_mismatched_sets_listed(self, tmp_path, capsys):
        write_clip(make_clip(n_frames=4, res=32, name="a"), tmp_path / "gen" / "a")
        write_clip(make_clip(n_frames=4, res=32, name="b"), tmp_path / "ref" / "b")
        config = write_toy_config(tmp_path)
        code = main(["evaluate", str(tmp_path / "gen"), str(tmp_path / "ref"),
                     "--config", str(config), "--out", str(tmp_path / "r")])
        captured = capsys.readouterr()
        assert code != 0
        assert "a" in captured.err and "b" in captured.err

    def test_report_deterministic(self, tmp_path):
        clip = make_clip(n_frames=5, res=32, name="c")
        write_clip(clip, tmp_path / "gen" / "c")
        write_clip(make_clip(n_frames=5, res=32, seed=1, name="c"), tmp_path / "ref" / "c")
        config = write_toy_config(tmp_path)
        for out in ("r1", "r2"):
            assert main(["evaluate", str(tmp_path / "gen"), str(tmp_path / "ref"),
                         "--config", str(config), "--out", str(tmp_path / out)]) == 0
        assert ((tmp_path / "r1" / "report_c.json").read_text()
                == (tmp_path / "r2" / "report_c.json").read_text())


class TestEntryPoint:
    def test_env_var_config_fallback(self, tmp_path, monkeypatch, capsys):
        clip = make_clip(n_frames=5, res=32, name="c")
        write_clip(clip, tmp_path / "gen" / "c")
        write_clip(clip, tmp_path / "ref" / "c")
        config = write_toy_config(tmp_path)
        monkeypatch.setenv("AU2AV_CONFIG", str(config))
        code = main(["evaluate", str(tmp_path / "gen"), str(tmp_path / "ref"),
                     "--out", str(tmp_path / "r")])
        assert code == 0

    def test_missing_config_is_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("AU2AV_CONFIG", raising=False)
        code = main(["evaluate", str(tmp_path), str(tmp_path), "--out", str(tmp_path / "r")])
        assert code != 0
        err = capsys.readouterr().err
        assert err.startswith("AU2AV-ERROR:")
        assert err.count("\n") == 1  # single-line machine-parsable failure

    def test_module_entry_point_subprocess(self, tmp_path):
        env = dict(os.environ)
        env["PYTHONPATH"] = str(Path(__file__).resolve().parents[1] / "src")
        result = subprocess.run(
            [sys.executable, "-m", "au2av.cli", "--help"],
            capture_output=True, text=True, env=env,
        )
        assert result.returncode == 0
        assert "generate" in result.stdout
