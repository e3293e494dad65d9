"""
Centralized configuration constants for condenserec.

This module defines default values for configuration constants used across
different parts of the condensation toolkit. Centralizing these values ensures
consistency and makes maintenance easier.
"""

# Text encoding
DEFAULT_EMBEDDING_DIM = 256
DEFAULT_HASH_KEY = b"condenserec-v1"  # blake2b key, changing it changes every embedding
DEFAULT_TOKEN_PATTERN = r"[^\W_]+"

# Recommender model
DEFAULT_CONTENT_DIM = 256
DEFAULT_USER_DIM = 64
DEFAULT_HASH_BUCKETS = 4096
DEFAULT_LEARNING_RATE = 5e-3
DEFAULT_NEGATIVE_RATIO = 4
DEFAULT_EPOCHS = 3
DEFAULT_BATCH_SIZE = 64
DEFAULT_INIT_SCALE = 0.1
PARAMS_MAGIC = b"CRPM"
PARAMS_FORMAT_VERSION = 1

# Condensation
DEFAULT_ALPHA = 0.2
DEFAULT_TOP_M = 5
DEFAULT_KMEANS_MAX_ITER = 100
DEFAULT_KMEANS_TOL = 1e-6
DEFAULT_KMEANS_RESTARTS = 4
DEFAULT_INTEREST_COUNT = 5
SYNTHETIC_USER_PREFIX = "syn-"

# Prompt evolution
DEFAULT_GENERATIONS = 2
DEFAULT_CHILDREN = 3

# LLM access
DEFAULT_LLM_MAX_ASYNC = 4
DEFAULT_TIMEOUT = 60
DEFAULT_MAX_RETRIES = 3
DEFAULT_PARSE_RETRIES = 3
DEFAULT_LLM_MODEL = "gpt-3.5-turbo"
DEFAULT_LLM_BASE_URL = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_SUMMARY_BUDGET = 16

# Evaluation
DEFAULT_K_LIST = (5, 10)
SHORT_K_LIST = (1, 5)
K_LIST_PRESETS = {"default": DEFAULT_K_LIST, "short": SHORT_K_LIST}
DEFAULT_SPLIT_RATIOS = (0.8, 0.1, 0.1)

# Logging configuration defaults
DEFAULT_LOG_MAX_BYTES = 10485760  # Default 10MB
DEFAULT_LOG_BACKUP_COUNT = 5  # Default 5 backups
DEFAULT_LOG_FILENAME = "condenserec.log"  # Default log filename
