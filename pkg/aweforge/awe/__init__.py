from .model import (
    AE_PHASE,
    CAE_PHASE,
    AweBatch,
    AweConfig,
    AweModel,
    AweSchedule,
    ae_rnn_loss,
    awe_encode,
    cae_rnn_loss,
    epochs_from,
    fixed_schedule,
    load_awe_model,
    train_awe,
)
from .embeddings import (
    Embedding,
    downsample_embed,
    downsample_segments,
    embed_segments,
    embedding_matrix,
    read_embeddings,
    write_embeddings,
)
