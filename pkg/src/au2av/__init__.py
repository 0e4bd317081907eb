"""Audio-to-animated-video generation pipeline.

Stage 1 turns an audio clip plus one unseen face image into a talking-head
video; stage 2 translates it into the animated domain. The package also
ships the full training curriculum, one-shot adaptation and the evaluation
metric suite.
"""

__version__ = "0.1.0"

from .config import PipelineConfig, load_config, parse_config_text
from .errors import (
    CheckpointError,
    ConfigError,
    ProviderError,
    TrainingDivergedError,
    ValidationError,
)
from .landmarks import EyeLandmarkHead, EyeLandmarkSet, eye_aspect_ratio
