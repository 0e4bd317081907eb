"""Command-line entry point.

Subcommands: prepare | train-stage1 | train-stage2 | generate | evaluate.
Every command loads its configuration from --config (falling back to the
AU2AV_CONFIG environment variable), exits 0 on success and prints a single
"AU2AV-ERROR: ..." line on failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .checkpoints import latest_checkpoint, load_checkpoint
from .config import PipelineConfig, load_config
from .errors import CheckpointError, ConfigError, ValidationError
from .media import (
    TalkingClip,
    frame_audio_windows,
    list_clip_dirs,
    load_audio,
    load_video,
    make_unpaired_streams,
    select_aligned_identity_frame,
    write_clip,
)
from .metrics import evaluate_clip
from .providers import make_provider
from .stage1.networks import Stage1Generator
from .stage1.trainer import (
    Stage1Dataset,
    Stage1Trainer,
    one_shot_adapt,
    stage1_network_config,
)
from .stage2.networks import TranslationGenerator
from .stage2.trainer import Stage2Dataset, Stage2Trainer, stage2_network_config
from .torchutil import (
    image_to_tensor,
    resize_tensor,
    seed_all,
    tensor_to_image,
    use_deterministic_cpu,
)

ERROR_PREFIX = "AU2AV-ERROR:"
WARN_PREFIX = "AU2AV-WARN:"


def _fail(message: str) -> int:
    print(f"{ERROR_PREFIX} {message}", file=sys.stderr)
    return 1


def _load_config(args) -> PipelineConfig:
    path = args.config or os.environ.get("AU2AV_CONFIG")
    if not path:
        raise ConfigError("no config given: pass --config or set AU2AV_CONFIG")
    config = load_config(path)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def _resolve_checkpoint(path) -> Path:
    """Accept an epoch directory, a checkpoints/ directory or a run directory."""
    path = Path(path)
    if (path / "state.txt").exists():
        return path
    for candidate in (path, path / "checkpoints"):
        latest = latest_checkpoint(candidate)
        if latest is not None:
            return latest
    raise CheckpointError(f"no checkpoint found under {path}")


# --------------------------------------------------------------------- prepare
def cmd_prepare(args) -> int:
    config = _load_config(args)
    raw_dir = Path(args.raw_dir)
    out_dir = Path(args.out)
    pose = make_provider("pose", config["providers.pose"])
    clip_dirs = list_clip_dirs(raw_dir)
    if not clip_dirs:
        return _fail(f"no clips found under {raw_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared = []
    for clip_dir in clip_dirs:
        try:
            clip = load_video(clip_dir, fps=config["fps"])
            identity = select_aligned_identity_frame(clip, pose)
            dest = write_clip(clip, out_dir / clip_dir.name)
            Image.fromarray((np.clip(identity, 0, 1) * 255).round().astype(np.uint8)).save(
                dest / "identity.png"
            )
            prepared.append(clip_dir.name)
        except Exception as exc:
            print(f"{WARN_PREFIX} skipped clip {clip_dir.name!r}: {exc}", file=sys.stderr)
    if not prepared:
        return _fail("all clips failed to prepare")
    (out_dir / "manifest.txt").write_text("\n".join(prepared) + "\n")
    print(f"prepared {len(prepared)} of {len(clip_dirs)} clips into {out_dir}")
    return 0


# ---------------------------------------------------------------------- train
def _load_prepared_clips(data_dir) -> list[TalkingClip]:
    data_dir = Path(data_dir)
    manifest = data_dir / "manifest.txt"
    if manifest.exists():
        names = [line.strip() for line in manifest.read_text().splitlines() if line.strip()]
        dirs = [data_dir / name for name in names]
    else:
        dirs = list_clip_dirs(data_dir)
    if not dirs:
        raise ValidationError(f"no prepared clips under {data_dir}")
    return [load_video(d) for d in dirs]


def _identity_for(clip_dir: Path, clip: TalkingClip) -> np.ndarray:
    identity_path = clip_dir / "identity.png"
    if identity_path.exists():
        with Image.open(identity_path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return clip.frames[0]


def cmd_train_stage1(args) -> int:
    config = _load_config(args)
    use_deterministic_cpu()
    data_dir = Path(args.data_dir)
    clips = _load_prepared_clips(data_dir)
    identities = [_identity_for(data_dir / clip.name, clip) for clip in clips]
    net_config = stage1_network_config(config)
    clips, identities = _resized(clips, identities, net_config.resolution)
    landmarks = make_provider("landmarks", config["providers.landmarks"])
    perceptual = make_provider("perceptual", config["providers.perceptual"])
    dataset = Stage1Dataset(clips, net_config, landmark_provider=landmarks,
                            identity_frames=identities)
    trainer = Stage1Trainer(dataset, config, perceptual, out_dir=Path(args.out))
    paths = trainer.train(resume=args.resume)
    print(f"wrote {len(paths)} checkpoints under {Path(args.out) / 'checkpoints'}")
    return 0


def _resized(clips, identities, resolution):
    out_clips = []
    out_ids = []
    for clip, identity in zip(clips, identities):
        frames = [_resize_frame(f, resolution) for f in clip.frames]
        out_clips.append(TalkingClip(frames=frames, fps=clip.fps, audio=clip.audio,
                                     name=clip.name, transcript=clip.transcript))
        out_ids.append(_resize_frame(identity, resolution))
    return out_clips, out_ids


def _resize_frame(frame: np.ndarray, resolution: int) -> np.ndarray:
    if frame.shape[0] == resolution and frame.shape[1] == resolution:
        return frame
    tensor = image_to_tensor(frame)
    return tensor_to_image(resize_tensor(tensor, resolution))


def cmd_train_stage2(args) -> int:
    config = _load_config(args)
    use_deterministic_cpu()
    stream_a, stream_b = make_unpaired_streams(args.domain_a, args.domain_b)
    net_config = stage2_network_config(config)
    stream_a, _ = _resized(stream_a, [c.frames[0] for c in stream_a], net_config.resolution)
    stream_b, _ = _resized(stream_b, [c.frames[0] for c in stream_b], net_config.resolution)
    landmarks = make_provider("landmarks", config["providers.landmarks"])
    dataset = Stage2Dataset(stream_a, stream_b, net_config)
    trainer = Stage2Trainer(dataset, config, out_dir=Path(args.out),
                            landmark_provider=landmarks)
    paths = trainer.train(resume=args.resume)
    print(f"wrote {len(paths)} checkpoints under {Path(args.out) / 'checkpoints'}")
    return 0


# ------------------------------------------------------------------- generate
def cmd_generate(args) -> int:
    config = _load_config(args)
    use_deterministic_cpu()
    seed_all(config["seed"])
    out_dir = Path(args.out)
    if args.stage2_ckpt is None and not args.human_only:
        return _fail("missing --stage2-ckpt; pass --human-only for a human-domain video only")

    net1 = stage1_network_config(config)
    generator = Stage1Generator(net1)
    load_checkpoint(_resolve_checkpoint(args.stage1_ckpt), {"generator": generator},
                    expected_config_hash=config.hash())
    generator.eval()

    translator = None
    if not args.human_only:
        net2 = stage2_network_config(config)
        translator = TranslationGenerator(net2)
        load_checkpoint(_resolve_checkpoint(args.stage2_ckpt), {"gen_s2t": translator},
                        expected_config_hash=config.hash())
        translator.eval()

    audio = load_audio(args.audio, target_rate=config["sample_rate"])
    with Image.open(args.image) as img:
        identity = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    identity_tensor = resize_tensor(image_to_tensor(identity), net1.resolution)

    adapt_epochs = args.adapt_epochs if args.adapt_epochs is not None else config["adapt.epochs"]
    if not args.skip_adapt and adapt_epochs > 0:
        perceptual = make_provider("perceptual", config["providers.perceptual"])
        generator = one_shot_adapt(generator, identity_tensor, perceptual,
                                   epochs=adapt_epochs, lr=config["adapt.lr"],
                                   betas=(config["stage1.beta1"], config["stage1.beta2"]))
        generator.eval()

    windows = frame_audio_windows(audio, config["fps"], config["window_ms"])
    human_frames = []
    with torch.no_grad():
        for window in windows.windows:
            mfcc = torch.from_numpy(window.coefficients).unsqueeze(0)
            embedding = generator.encoder(mfcc)
            human_frames.append(tensor_to_image(generator(identity_tensor, embedding)))
    human_clip = TalkingClip(frames=human_frames, fps=config["fps"], audio=audio, name="human")

    if args.human_only:
        write_clip(human_clip, out_dir / "human")
        print(f"wrote {len(human_frames)} human-domain frames to {out_dir / 'human'}")
        return 0

    animated_frames = []
    with torch.no_grad():
        for frame in human_frames:
            translated, _, _ = translator(image_to_tensor(frame))
            animated_frames.append(tensor_to_image(translated))
    animated_clip = TalkingClip(frames=animated_frames, fps=config["fps"], audio=audio,
                                name="animated")
    write_clip(animated_clip, out_dir / "animated")
    if args.keep_intermediate:
        write_clip(human_clip, out_dir / "human")
    print(f"wrote {len(animated_frames)} animated frames to {out_dir / 'animated'}")
    return 0


# ------------------------------------------------------------------- evaluate
def _resolve_clip_set(path) -> dict[str, Path]:
    path = Path(path)
    if any(path.glob("frame_*.png")):
        return {path.name: path}
    return {d.name: d for d in list_clip_dirs(path)}


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    generated = _resolve_clip_set(args.generated_dir)
    reference = _resolve_clip_set(args.reference_dir)
    if set(generated) != set(reference):
        only_gen = sorted(set(generated) - set(reference))
        only_ref = sorted(set(reference) - set(generated))
        raise ValidationError(
            f"clip sets differ: only in generated {only_gen}, only in reference {only_ref}"
        )
    providers = {
        "embedding": make_provider("embedding", config["providers.embedding"]),
        "landmarks": make_provider("landmarks", config["providers.landmarks"]),
        "lip_reader": make_provider("lip_reader", config["providers.lip_reader"]),
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(generated):
        report = evaluate_clip(load_video(generated[name]), load_video(reference[name]),
                               providers, config_hash=config.hash(),
                               kid_seed=config["seed"])
        report.save(out_dir / f"report_{name}.json")
        print(f"== {name}")
        print(report.table())
    print(f"wrote {len(generated)} report(s) to {out_dir}")
    return 0


# ----------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="au2av",
        description="Audio + one face image -> talking-head video -> animated video.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="config file (or set AU2AV_CONFIG)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("prepare", help="normalize raw clips into the dataset layout")
    p.add_argument("raw_dir")
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-stage1", help="train the talking-head stage")
    p.add_argument("data_dir")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_stage1)

    p = sub.add_parser("train-stage2", help="train the animation-transfer stage")
    p.add_argument("domain_a", help="prepared human-domain clips")
    p.add_argument("domain_b", help="prepared animated-domain clips")
    common(p)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train_stage2)

    p = sub.add_parser("generate", help="audio + image -> video in both domains")
    p.add_argument("audio")
    p.add_argument("image")
    common(p)
    p.add_argument("--stage1-ckpt", required=True)
    p.add_argument("--stage2-ckpt", default=None)
    p.add_argument("--keep-intermediate", action="store_true")
    p.add_argument("--human-only", action="store_true")
    p.add_argument("--skip-adapt", action="store_true")
    p.add_argument("--adapt-epochs", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated clips against references")
    p.add_argument("generated_dir")
    p.add_argument("reference_dir")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, CheckpointError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
