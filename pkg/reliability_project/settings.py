"""
Django settings for reliability_project project.
Configured for batch reliability studies; the database only holds the run ledger.
"""

from pathlib import Path
import os

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='django-insecure-topic-reliability-batch-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = ['127.0.0.1', 'localhost']


# Application definition

INSTALLED_APPS = [
    'topic_reliability',
]


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

# A shared ledger can live in PostgreSQL; otherwise runs are recorded locally
DATABASE_URL = os.environ.get('DATABASE_URL')

if DATABASE_URL:
    import dj_database_url
    DATABASES = {
        'default': dj_database_url.config(
            default=DATABASE_URL,
            conn_max_age=600,
            conn_health_checks=True,
        )
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': BASE_DIR / 'db.sqlite3',
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Reliability study defaults (overridden by the run config file and CLI flags)
RELIABILITY_OUTPUT_DIR = config('RELIABILITY_OUTPUT_DIR', default=str(BASE_DIR / 'runs'))
RELIABILITY_JOBS = config('RELIABILITY_JOBS', default=1, cast=int)
RELIABILITY_MASTER_SEED = config('RELIABILITY_MASTER_SEED', default=20240601, cast=int)
RELIABILITY_TOP_N = config('RELIABILITY_TOP_N', default=50, cast=int)
RELIABILITY_CUTOFF = config('RELIABILITY_CUTOFF', default=0.7, cast=float)
RELIABILITY_BOOTSTRAP_B = config('RELIABILITY_BOOTSTRAP_B', default=200, cast=int)
RELIABILITY_LEDGER_ENABLED = config('RELIABILITY_LEDGER_ENABLED', default=True, cast=bool)
RELIABILITY_LOG_LEVEL = config('RELIABILITY_LOG_LEVEL', default='INFO')


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'topic_reliability': {
            'handlers': ['console'],
            'level': RELIABILITY_LOG_LEVEL,
            'propagate': False,
        },
    },
}
