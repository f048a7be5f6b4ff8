"""sigweave: attribute-disentangling signal synthesis for wireless sensing.

Encode spectrogram-like signals into a latent code partitioned by attribute,
swap segments between samples, and decode novel attribute combinations:
denoising, augmentation of seen scenarios, and synthesis of scenarios never
collected.
"""

from .data import (
    AttributeSchema,
    Dataset,
    Sample,
    Scenario,
    generate_toy_dataset,
    hold_out_unseen,
    load_dataset,
    save_dataset,
    split_dataset,
    toy_clean_pattern,
)
from .mci import (
    MciQuad,
    PairType,
    ReferencePlan,
    batch_scheduler,
    classify_pair,
    enumerate_quads,
    is_valid_quad,
    plan_unseen_references,
    quad_at,
    shared_attributes,
)
from .model import (
    LatentCode,
    ModelConfig,
    ModelState,
    decode,
    discriminate,
    encode,
    even_partition,
    exchange,
    init_model,
    load_model,
    save_model,
)
from .losses import LossReport, LossWeights, loss_discriminator, loss_exc, loss_gen, loss_recon, total_loss
from .training import TrainConfig, TrainState, adam_step, load_train_state, save_train_state, train
from .synthesis import SynthesisRequest, augment_seen, denoise, synthesize_unseen
from .evaluation import (
    MetricReport,
    ProbeReport,
    permutation_pvalue,
    probe_classify,
    psnr,
    ssim,
    swap_test,
    write_pgm,
)

__version__ = "0.1.0"
