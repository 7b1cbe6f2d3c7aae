"""
Django settings for the topic-signals project.

The project has no database and no HTTP surface: Django provides the
management-command CLI, settings and logging configuration, and DRF provides
the validation layer for every file the pipeline reads.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# Required by Django; nothing is signed or served.
SECRET_KEY = os.environ.get("SECRET_KEY", "topic-signals-offline-key")

DEBUG = os.environ.get("DEBUG", "False").lower() == "true"

ALLOWED_HOSTS: list[str] = []

# Application definition
INSTALLED_APPS = [
    # Third-party apps
    "rest_framework",
    # Local apps
    "app",
]

# Pipeline artifacts are files; there is no database.
DATABASES: dict = {}

# Internationalization
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Logging
LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "pipeline": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "pipeline",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
    "loggers": {
        "app": {
            "level": LOG_LEVEL,
        },
    },
}

# Label sources accepted in annotation files ("LS1", "LS2", ...)
LABEL_SOURCES = [
    int(s)
    for s in os.environ.get("LABEL_SOURCES", "1,2").split(",")
    if s.strip()
]

# Watermark labels removed from every vocabulary
DEFAULT_EXCLUSIONS = [
    "LS1: massachusetts department of transportation",
    "LS2: Massachusetts Department of Transportation",
    "LS2: MassDOT",
]

# Pipeline defaults. A config file and command-line flags override these;
# the merged result is validated by PipelineConfigSerializer.
TOPIC_SIGNALS = {
    # Paths
    "annotations": os.environ.get("TOPIC_SIGNALS_ANNOTATIONS", ""),
    "workdir": os.environ.get("TOPIC_SIGNALS_WORKDIR", "work"),
    # Vocabulary
    "cutoff": float(os.environ.get("TOPIC_SIGNALS_CUTOFF", 1e-4)),
    "exclusions": DEFAULT_EXCLUSIONS,
    "label_sources": LABEL_SOURCES,
    "idf_counts": os.environ.get("TOPIC_SIGNALS_IDF_COUNTS", "per_camera"),
    # Signals
    "resample_minutes": float(os.environ.get("TOPIC_SIGNALS_RESAMPLE_MINUTES", 5)),
    "align": os.environ.get("TOPIC_SIGNALS_ALIGN", "first"),
    "downsample": int(os.environ.get("TOPIC_SIGNALS_DOWNSAMPLE", 3)),
    "timezone": os.environ.get("TOPIC_SIGNALS_TIMEZONE", "UTC"),
    # LDA; alpha left empty means 50/K
    "topics": int(os.environ.get("TOPIC_SIGNALS_TOPICS", 20)),
    "alpha": os.environ.get("TOPIC_SIGNALS_ALPHA") or None,
    "beta": float(os.environ.get("TOPIC_SIGNALS_BETA", 0.1)),
    "kappa": 0.7,
    "tau0": 64.0,
    "batch_size": 256,
    "passes": 3,
    "max_iterations": 100,
    "tolerance": 1e-4,
    # Topic-count selection
    "k_grid": list(range(2, 41, 2)),
    "delta_k": 2,
    "resamples": 50,
    "split": 0.8,
    "perplexity_method": os.environ.get("TOPIC_SIGNALS_PERPLEXITY_METHOD", "plugin"),
    # Change points; penalty left empty means ||X||_2 / 20
    "penalty": os.environ.get("TOPIC_SIGNALS_PENALTY") or None,
    "merge_window_hours": 24.0,
    "top_n": 8,
    "tolerance_hours": 12.0,
    "storm_kinds": ["rain", "snow"],
    # Density-ratio anomaly scoring
    "gamma": float(os.environ.get("TOPIC_SIGNALS_GAMMA", 1e-3)),
    "k_list": [1, 2, 4, 8],
    "tau_grid_size": 200,
    "sigma_scales": [0.25, 0.5, 1.0, 2.0, 4.0],
    "lambda_grid": [1e-3, 1e-2, 1e-1, 1.0],
    "folds": 5,
    "n_centers": 100,
    "reference_start": None,
    "reference_days": 7,
    "anomaly_kinds": ["snow", "holiday", "parking_ban"],
    # Named seeds
    "fit_seed": int(os.environ.get("TOPIC_SIGNALS_FIT_SEED", 0)),
    "select_seed": int(os.environ.get("TOPIC_SIGNALS_SELECT_SEED", 0)),
    "ratio_seed": int(os.environ.get("TOPIC_SIGNALS_RATIO_SEED", 0)),
}
