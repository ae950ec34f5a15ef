"""
Django settings for remote_estimation project.

The project has no web surface: Django provides the settings layer, the
management-command entry points and the test runner for the estimation app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-remote-estimation-local-only')

DEBUG = os.environ.get('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'estimation',
]


# Database
# Nothing is persisted; sqlite keeps `manage.py test` happy.

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


# Solver, simulator and artifact defaults. Every value can be overridden by the
# run config document or by command-line flags.

ESTIMATION = {
    'GRID_POINTS': int(os.environ.get('ESTIMATION_GRID_POINTS', 2001)),
    # Cap on the error-grid half width, in units of sigma.
    'GRID_CAP': float(os.environ.get('ESTIMATION_GRID_CAP', 64.0)),
    'VALUE_CAP': float(os.environ.get('ESTIMATION_VALUE_CAP', 1e12)),
    'SEARCH_POINTS': int(os.environ.get('ESTIMATION_SEARCH_POINTS', 121)),
    'TRIALS': int(os.environ.get('ESTIMATION_TRIALS', 100000)),
    'SEED': int(os.environ.get('ESTIMATION_SEED', 0)),
    'OUTPUT_DIR': os.environ.get('ESTIMATION_OUTPUT_DIR', str(BASE_DIR / 'artifacts')),
}


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'estimation': {
            'handlers': ['console'],
            'level': os.environ.get('ESTIMATION_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
