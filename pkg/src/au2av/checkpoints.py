"""Checkpoint I/O: one directory per epoch holding a binary tensor archive
per network plus a key=value state header; writes are atomic (temp dir,
then rename)."""

from __future__ import annotations

import shutil
import tempfile
from pathlib import Path

import torch

from .errors import CheckpointError

STATE_NAME = "state.txt"


def save_checkpoint(out_dir, epoch: int, networks: dict, optimizers: dict,
                    state: dict) -> Path:
    """Write checkpoints/epoch_NNNN atomically; returns the final directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / f"epoch_{epoch:04d}"
    tmp = Path(tempfile.mkdtemp(prefix=f".epoch_{epoch:04d}_", dir=out_dir))
    try:
        for name, module in networks.items():
            payload = {"model": module.state_dict()}
            if name in optimizers and optimizers[name] is not None:
                payload["optim"] = optimizers[name].state_dict()
            torch.save(payload, tmp / f"{name}.bin")
        lines = [f"{key}={value}" for key, value in state.items()]
        (tmp / STATE_NAME).write_text("\n".join(lines) + "\n")
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def read_state(checkpoint_dir) -> dict[str, str]:
    path = Path(checkpoint_dir) / STATE_NAME
    if not path.exists():
        raise CheckpointError(f"missing state header: {path}")
    state = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        key, value = line.split("=", 1)
        state[key] = value
    return state


def load_checkpoint(checkpoint_dir, networks: dict, optimizers: dict | None = None,
                    expected_config_hash: str | None = None) -> dict[str, str]:
    """Restore network (and optionally optimizer) states in place; returns
    the parsed state header."""
    checkpoint_dir = Path(checkpoint_dir)
    state = read_state(checkpoint_dir)
    if expected_config_hash is not None and state.get("config_hash") not in (None, expected_config_hash):
        raise CheckpointError(
            f"checkpoint {checkpoint_dir} was written with config hash "
            f"{state.get('config_hash')}, expected {expected_config_hash}"
        )
    for name, module in networks.items():
        path = checkpoint_dir / f"{name}.bin"
        if not path.exists():
            raise CheckpointError(f"missing network archive: {path}")
        payload = torch.load(path, map_location="cpu", weights_only=True)
        module.load_state_dict(payload["model"])
        if optimizers and name in optimizers and optimizers[name] is not None:
            if "optim" in payload:
                optimizers[name].load_state_dict(payload["optim"])
    return state


def latest_checkpoint(out_dir) -> Path | None:
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        return None
    epochs = sorted(out_dir.glob("epoch_*"))
    return epochs[-1] if epochs else None
