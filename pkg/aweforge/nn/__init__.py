from .layers import GRU, LSTM, Affine, Dropout, Layer, LayerNorm, ReLU, parse_layers
from .stack import LayerStack, StackCache, backward, forward
from .losses import mae_loss, mse_loss
from .optim import Adam, AdamState, adam_step, clip_by_global_norm
from .gradcheck import GradCheckReport, check_gradients, grad_check, grad_check_model
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
