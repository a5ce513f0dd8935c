from celery import Celery

from .settings import settings

app = Celery(
    "gmv_estimator",
    broker=settings.CELERY_BROKER_URL,
    backend=settings.CELERY_RESULT_BACKEND,
)

app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    timezone='Asia/Seoul',
    enable_utc=True,
    task_always_eager=settings.CELERY_TASK_ALWAYS_EAGER,
    task_eager_propagates=True,
)

# 태스크 모듈 등록
app.conf.imports = ('training.tasks', 'backtest.tasks', 'broker.tasks')
