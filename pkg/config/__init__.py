from .settings import settings
from .celery import app as celery_app

__all__ = ('settings', 'celery_app')
