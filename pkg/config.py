import os


class Config:
    PRECISION = os.environ.get("DOMIX_PRECISION", "f32")
    THREADS = os.environ.get("DOMIX_THREADS")
    SEED = 1
    DEFAULT_BEAM = 5
    LENGTH_PENALTY = 1.0
    HISTOGRAM_BINS = 20
    GRADCHECK_MAX_D = 8
    GRADCHECK_STEP = 1e-5
    GRADCHECK_TOLERANCE = 1e-5
    CHECKPOINT_NAME = "checkpoint.bin"
    METRICS_NAME = "metrics.jsonl"
    ALLOW_FIELDS_FOR_MODEL = {
        "d", "heads", "enc_layers", "dec_layers", "d_ff", "vocab_size", "max_len", "layer_norm", "dropout",
        "positional",
    }
    ALLOW_FIELDS_FOR_MIXING = {"scope", "k", "epsilon"}
    ALLOW_FIELDS_FOR_TRAIN = {
        "lr_peak", "warmup_steps", "warmup_init_lr", "beta1", "beta2", "adam_eps", "weight_decay",
        "router_weight_decay", "label_smoothing", "max_steps", "batch_size", "seed", "use_mix_loss", "wl_enabled",
        "baseline", "detach_mode", "mix_loss_reduction", "save_every", "eval_every", "log_every", "log_elapsed",
    }
    ALLOW_FIELDS_FOR_PATHS = {"train", "valid", "test", "vocab", "checkpoint", "output_dir"}
    ALLOW_FIELDS_FOR_SYNTHETIC = {
        "k", "shared_words", "exclusive_words", "ambiguous_words", "p_marker", "min_len", "max_len",
        "train_sentences", "valid_sentences", "test_sentences", "seed",
    }
