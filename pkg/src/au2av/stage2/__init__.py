from .losses import (
    Stage2LossWeights,
    cam_loss,
    identity_loss,
    lip_sync_loss,
    lsgan_loss,
    predictor_loss,
    recycle_loss,
    stage2_blink_loss,
)
from .networks import (
    AdaLin,
    AdaLinParams,
    CamClassifier,
    CamOutput,
    PredictorConfig,
    Stage2Config,
    Stage2Discriminator,
    TemporalPredictor,
    TranslationGenerator,
    adalin,
    cam_attention,
    clip_rho,
    discriminate,
    instance_norm,
    layer_norm,
    predict_next,
    translate,
)
from .trainer import Stage2Batch, Stage2Dataset, Stage2Trainer, stage2_network_config
