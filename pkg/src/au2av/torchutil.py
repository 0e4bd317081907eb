"""Torch-side conveniences: seeding, image <-> tensor conversion at the
[0,1] / [-1,1] boundary, and frame resizing."""

from __future__ import annotations

import random

import numpy as np
import torch
import torch.nn.functional as F


def seed_all(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)


def use_deterministic_cpu() -> None:
    """Single-threaded CPU execution so repeated runs are bit-identical."""
    torch.set_num_threads(1)


def image_to_tensor(frame: np.ndarray) -> torch.Tensor:
    """(H, W, 3) in [0, 1] -> (1, 3, H, W) in [-1, 1]."""
    arr = np.asarray(frame, dtype=np.float32)
    tensor = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return tensor * 2.0 - 1.0


def tensor_to_image(tensor: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) in [-1, 1] -> (H, W, 3) in [0, 1]."""
    if tensor.ndim == 4:
        tensor = tensor[0]
    arr = tensor.detach().cpu().float().permute(1, 2, 0).numpy()
    return np.clip((arr + 1.0) / 2.0, 0.0, 1.0)


def resize_tensor(tensor: torch.Tensor, size: int) -> torch.Tensor:
    if tensor.shape[-1] == size and tensor.shape[-2] == size:
        return tensor
    return F.interpolate(tensor, size=(size, size), mode="bilinear", align_corners=False)
