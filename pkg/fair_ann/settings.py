"""
Django settings for the fair_ann project.

The project hosts a single app, ``sampling``, which contains the fair
near-neighbor sampling library and the management commands that drive the
fairness and benchmark harness.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

import os
from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-fann-7k#1q0v^x8r2m!c9t5e@4w3z&l6p0b2d$h8j1s9n')

DEBUG = config('DEBUG', default=True, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=lambda v: [s.strip() for s in v.split(',')])


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    # My apps
    'sampling.apps.SamplingConfig',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases
# Experiment runs are stored here when a command is invoked with --save.

DB_ENGINE = config('DB_ENGINE', default='django.db.backends.sqlite3')

if DB_ENGINE == 'django.db.backends.sqlite3':
    DATABASES = {
        'default': {
            'ENGINE': DB_ENGINE,
            'NAME': config('DB_NAME', default=str(BASE_DIR / 'fair_ann.sqlite3')),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': DB_ENGINE,
            'NAME': config('DB_NAME', default='fair_ann_db'),
            'USER': config('DB_USER', default='fair_ann_user'),
            'PASSWORD': config('DB_PASSWORD', default='fair_ann_password'),
            'HOST': config('DB_HOST', default='db'),
            'PORT': config('DB_PORT', default='5432'),
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Sampling library defaults
# Every key can be overridden with an FANN_<KEY> environment variable; the
# management commands overlay their own flags and --const pairs on top.

FAIR_ANN = {
    'SEED': config('FANN_SEED', default=0, cast=int),
    'C_L': config('FANN_C_L', default=3.0, cast=float),
    'C_LAMBDA': config('FANN_C_LAMBDA', default=4.0, cast=float),
    'C_SIGMA': config('FANN_C_SIGMA', default=4.0, cast=float),
    'C_DELTA': config('FANN_C_DELTA', default=8.0, cast=float),
    'C_T': config('FANN_C_T', default=4.0, cast=float),
    'C_F': config('FANN_C_F', default=3.0, cast=float),
    'EPS': config('FANN_EPS', default=0.5, cast=float),
    # Empty means 1/n^3 inside the independent-sampling structure.
    'DELTA': config('FANN_DELTA', default='', cast=lambda v: float(v) if v else None),
    'EPS_FILTER': config('FANN_EPS_FILTER', default=0.1, cast=float),
    'FILTER_DELTA': config('FANN_FILTER_DELTA', default=0.05, cast=float),
    'SIGNIFICANCE': config('FANN_SIGNIFICANCE', default=0.001, cast=float),
    'TVD_TOLERANCE': config('FANN_TVD_TOLERANCE', default=0.05, cast=float),
    'TRIALS': config('FANN_TRIALS', default=1000, cast=int),
    'QUERIES': config('FANN_QUERIES', default=1, cast=int),
    'WORKERS': config('FANN_WORKERS', default=1, cast=int),
}


# Logging: plain lines on the console, JSON lines in logs/activity.log so the
# structured ``extra`` fields survive as keys.

LOGS_DIR = os.path.join(BASE_DIR, 'logs')
os.makedirs(LOGS_DIR, exist_ok=True)

LOG_LEVEL = config('FANN_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
        'json': {
            '()': 'pythonjsonlogger.jsonlogger.JsonFormatter',
            'format': '%(asctime)s %(levelname)s %(module)s %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
            'level': 'WARNING',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': os.path.join(LOGS_DIR, 'activity.log'),
            'formatter': 'json',
        },
    },
    'loggers': {
        'sampling': {
            'handlers': ['console', 'file'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
