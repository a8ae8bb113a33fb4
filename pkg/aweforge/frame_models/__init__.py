from .base import FrameModel, encode_archive, encode_frames, load_frame_model
from .cpc import (
    CpcBatch,
    CpcConfig,
    CpcModel,
    CpcSchedule,
    cpc_scores,
    info_nce_loss,
    train_cpc,
)
from .apc import ApcConfig, ApcLoss, ApcModel, ApcSchedule, AuxConfig, apc_loss, train_apc
from .cae import (
    FrameCaeConfig,
    FrameCaeModel,
    FrameCaeSchedule,
    frame_ae_loss,
    frame_cae_loss,
    train_frame_cae,
)

MODEL_KINDS = {"cpc": CpcModel, "apc": ApcModel, "fcae": FrameCaeModel}
