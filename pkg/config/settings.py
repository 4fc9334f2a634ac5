"""
Django settings for the gfnlab flow-network laboratory
"""

from pathlib import Path
from dotenv import load_dotenv
import os

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Only used by Django internals; the lab serves no requests
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-gfnlab-local-key')

DEBUG = os.getenv('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',

    # Third party apps
    'rest_framework',

    # Local apps
    'graphs.apps.GraphsConfig',
    'flows.apps.FlowsConfig',
    'sensitivity.apps.SensitivityConfig',
    'training.apps.TrainingConfig',
    'streaming.apps.StreamingConfig',
    'diagnostics.apps.DiagnosticsConfig',
    'expressiveness.apps.ExpressivenessConfig',
    'experiments.apps.ExperimentsConfig',
]

LAB_APPS = [
    'graphs', 'flows', 'sensitivity', 'training', 'streaming',
    'diagnostics', 'expressiveness', 'experiments', 'utils', 'gfnlab',
]


# Database
# SQLite by default, PostgreSQL when GFNLAB_DB=postgres. Only run records use it.

if os.getenv('GFNLAB_DB', 'sqlite') == 'postgres':
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.getenv('DB_NAME', 'gfnlab'),
            'USER': os.getenv('DB_USER', 'gfnlab'),
            'PASSWORD': os.getenv('DB_PASSWORD', ''),
            'HOST': os.getenv('DB_HOST', 'localhost'),
            'PORT': os.getenv('DB_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / os.getenv('GFNLAB_SQLITE_NAME', 'gfnlab.sqlite3'),
        }
    }


# Internationalization
LANGUAGE_CODE = 'en-us'

TIME_ZONE = os.getenv('TIME_ZONE', 'UTC')

USE_I18N = False

USE_TZ = True


# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# REST Framework: serializers only validate config and graph documents
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}


# Enumeration guard for exact computations (terminals / states)
GFNLAB_CAPACITY = int(os.getenv('GFNLAB_CAPACITY', '1000000'))

# Worker threads when --threads is not given
GFNLAB_DEFAULT_THREADS = int(os.getenv('GFNLAB_DEFAULT_THREADS', '1'))

# Numeric defaults shared by the commands
GFNLAB_LAB_DEFAULTS = {
    'lr_logits': float(os.getenv('GFNLAB_LR_LOGITS', '1e-3')),
    'lr_log_z': float(os.getenv('GFNLAB_LR_LOG_Z', '1e-1')),
    'subtb_lambda': 0.9,
    'adam_betas': (0.9, 0.999),
    'adam_eps': 1e-8,
    'logit_clamp': 30.0,
    'importance_samples': 1000,
    'trace_fcs_subset': 2,
    'trace_fcs_samples': 50,
}


# Logging: summaries go to stdout, logs go to stderr
GFNLAB_LOG_LEVEL = os.getenv('GFNLAB_LOG_LEVEL', 'WARNING').upper()
GFNLAB_LOG_FILE = os.getenv('GFNLAB_LOG_FILE', '')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
            'propagate': False,
        },
    },
}

_lab_handlers = ['console']
if GFNLAB_LOG_FILE:
    LOGGING['handlers']['file'] = {
        'class': 'logging.FileHandler',
        'filename': GFNLAB_LOG_FILE,
        'formatter': 'verbose',
    }
    _lab_handlers.append('file')

for _app in LAB_APPS:
    LOGGING['loggers'][_app] = {
        'handlers': _lab_handlers,
        'level': GFNLAB_LOG_LEVEL,
        'propagate': False,
    }
