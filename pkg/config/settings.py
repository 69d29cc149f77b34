"""
Global settings for the DualMask-Core system.
"""

import os

from dotenv import load_dotenv

load_dotenv()

# Reserved token ids
NULL_TOKEN = 0  # Empty text condition (classifier-free guidance)
EOS_TOKEN = 1  # Terminal token closing every transcript
FIRST_CONTENT_TOKEN = 2

# Synthetic corpus settings
CORPUS_VOCAB_SIZE = 32
CORPUS_FRAMES_PER_TOKEN = 4
CORPUS_FRAME_DIM = 16
CORPUS_N_SPEAKERS = 8
CORPUS_NOISE_STD = 0.05
CORPUS_SEED = 0
CORPUS_MIN_TOKENS = 4
CORPUS_MAX_TOKENS = 16
CORPUS_N_TRAIN = 20000
CORPUS_N_TEST = 1000
SPEAKER_MAX_ABS_COSINE = 0.5  # Enforced for frame_dim >= 16
SPEAKER_RESEED_ATTEMPTS = 1000

# Model settings
MODEL_D_MODEL = 128
MODEL_N_HEADS = 4
MODEL_N_LAYERS = 6
MODEL_MAX_POSITIONS = 192
MODEL_ADAPTER_POOL = 4
MODEL_TIE_EMBEDDINGS = True
MODEL_INIT_STD = 0.02
MODEL_TIME_EMBEDDING_SCALE = 1000.0
TIME_EMBEDDING_BASE = 10000.0
LAYER_NORM_EPS = 1e-5
MLP_EXPANSION = 4
MASKED_SCORE = -1e9  # Additive surrogate for -inf in masked softmax

# Flow settings
TTS_MASK_RATIO_MIN = 0.7
TTS_MASK_RATIO_MAX = 1.0
CFG_DROP_TEXT = 0.2
CFG_DROP_CTX = 0.3

# Sampling settings
SAMPLER_NFE = 32
SAMPLER_CFG_WEIGHT = 2.0
SAMPLER_SCHEME = "euler"

# Training settings
TRAIN_LAMBDA_LM = 0.005
TRAIN_LR_PEAK = 3e-4  # 1.5e-3 diverges on models of this size
TRAIN_LR_FLOOR_RATIO = 0.01  # Cosine decays to lr_peak / 100
TRAIN_WARMUP_STEPS = 1000
TRAIN_TOTAL_STEPS = 20000
TRAIN_BATCH_ITEMS = 8
TRAIN_BETAS = (0.9, 0.95)
TRAIN_ADAM_EPS = 1e-8
TRAIN_WEIGHT_DECAY = 0.01
TRAIN_GRAD_CLIP = 1.0
TRAIN_SEED = 0
TRAIN_LOG_EVERY = 10
TRAIN_EVAL_EVERY = 1000
TRAIN_EVAL_ITEMS = 32
TRAIN_EVAL_NFE = 8
TRAIN_CHECKPOINT_EVERY = 500
TRAIN_LOSS_EMA = 0.98

# File formats
CHECKPOINT_MAGIC = b"UVCK"
CHECKPOINT_VERSION = 1
CORPUS_MAGIC = b"UVSC"
CORPUS_VERSION = 1
FRAMES_MAGIC = b"UVFM"

# Paths
CHECKPOINT_NAME = "checkpoint.uvck"
METRICS_LOG_NAME = "metrics.log"
MANIFEST_NAME = "manifest.json"
LOCK_NAME = "run.lock"
CORPUS_SPEC_NAME = "spec.txt"
CORPUS_RECORDS_NAME = "corpus.bin"
EXPERIMENT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "ExperimentConfig.json")

# Operational knobs (environment)
LOG_LEVEL = os.getenv("DUALMASK_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("DUALMASK_LOG_FILE") or None
