from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """애플리케이션 설정"""

    # 기본 설정
    APP_NAME: str = "GMV 신경망 공분산 추정기"
    DEBUG: bool = False

    # 로깅
    LOG_DIR: str = "logs"
    LOG_LEVEL: str = "INFO"
    LOG_TO_FILE: bool = True

    # 실행 산출물
    OUTPUT_DIR: str = "out"
    DEFAULT_SEED: int = 20250101
    THREADS: int = 1

    # Celery (기본은 eager 모드: 브로커 없이 프로세스 내 실행)
    CELERY_BROKER_URL: str = "redis://localhost:6379/0"
    CELERY_RESULT_BACKEND: str = "redis://localhost:6379/0"
    CELERY_TASK_ALWAYS_EAGER: bool = True

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
