from .losses import (
    LOSS_NAMES,
    PHASE_ACTIVE_LOSSES,
    Stage1LossWeights,
    adversarial_loss,
    blink_loss,
    contrastive_loss,
    feature_matching_loss,
    perceptual_loss,
    reconstruction_loss_lower,
    stage1_objective,
    temporal_adversarial_loss,
    temporal_adversarial_objective,
)
from .networks import (
    DiscriminatorOutput,
    FrameDiscriminator,
    SpadeNorm,
    SpeechEmbedding,
    SpeechEncoder,
    Stage1Config,
    Stage1Generator,
    SyncEncoder,
    SyncPair,
    TemporalDiscriminator,
    encode_speech,
    frame_discriminate,
    generate_frame,
    spade_normalize,
    stack_frame_window,
    standardize_per_channel,
    sync_embed,
    temporal_discriminate,
)
from .trainer import (
    CurriculumState,
    LossBundle,
    OptimizerSettings,
    Stage1Batch,
    Stage1Dataset,
    Stage1Trainer,
    WINDOW_FRAMES,
    adaptation_loss,
    lr_schedule,
    one_shot_adapt,
    stabilization_check,
    stage1_network_config,
)
