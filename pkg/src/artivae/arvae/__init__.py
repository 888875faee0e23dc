"""VAE and articulatory-regularized VAE."""
from .model import (
    HIDDEN,
    LatentPosterior,
    LossTerms,
    VaeParams,
    artic_reg,
    batch_loss,
    decode,
    encode,
    gaussian_loglik,
    init_params,
    kl_standard_normal,
    loss_and_grads,
    reconstruct,
    reparameterize,
)
from .optim import Adam, adam_step
from .train import (
    ParallelData,
    Standardizer,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    test_mse,
    train,
    write_curve_csv,
)
