from pathlib import Path
import os
import environ

env = environ.Env(
    # set casting, default value
    DEBUG=(bool, False),
    UNLEARN_WORKERS=(int, 1),
    UNLEARN_LOG_LEVEL=(str, 'INFO'),
    UNLEARN_DIVERGENCE_LIMIT=(float, 1e12),
    UNLEARN_MIN_REPLICAS=(int, 100),
)

BASE_DIR = Path(__file__).resolve().parent.parent

# reading .env file
environ.Env.read_env(os.path.join(BASE_DIR, '.env'))

SECRET_KEY = env('SECRET_KEY', default='django-insecure-unlearnlab-key')

DEBUG = env('DEBUG')

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'unlearning_app',
]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': env('UNLEARN_DB_PATH', default=str(BASE_DIR / 'db.sqlite3')),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

USE_TZ = True
TIME_ZONE = 'UTC'

# Experiment runtime
UNLEARN_WORKERS = env('UNLEARN_WORKERS')
UNLEARN_OUTPUT_DIR = Path(env('UNLEARN_OUTPUT_DIR', default=str(BASE_DIR / 'artifacts')))
UNLEARN_DIVERGENCE_LIMIT = env('UNLEARN_DIVERGENCE_LIMIT')
UNLEARN_MIN_REPLICAS = env('UNLEARN_MIN_REPLICAS')
UNLEARN_REFERENCE_CONFIG_DIR = Path(env('UNLEARN_REFERENCE_CONFIG_DIR', default=str(BASE_DIR / 'configs')))

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
            'stream': 'ext://sys.stderr',
            'formatter': 'plain',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': env('UNLEARN_LOG_LEVEL'),
    },
}
