"""전역 예외 계층 및 오류 응답"""
from typing import Any, Optional
import logging

from pydantic import ValidationError

logger = logging.getLogger(__name__)


class GmvError(Exception):
    """라이브러리 공통 예외"""
    error_code = "INTERNAL_ERROR"

    def __init__(self, message: str, error_code: Optional[str] = None, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        if error_code:
            self.error_code = error_code
        self.details = details


class ConfigError(GmvError):
    """설정 키/값 검증 실패"""
    error_code = "CONFIG_ERROR"


class DataValidationError(GmvError):
    """입력 데이터 계약 위반 (CSV 행 번호 등 포함)"""
    error_code = "DATA_ERROR"


class ShapeError(GmvError):
    """텐서/행렬 차원 불일치"""
    error_code = "SHAPE_ERROR"


class NumericalError(GmvError):
    """수치 계산 실패 (고유값 분해 미수렴, 비유한 값 등)"""
    error_code = "NUMERICAL_ERROR"


class SolverError(GmvError):
    """QP 솔버 미수렴"""
    error_code = "SOLVER_ERROR"


class CheckpointError(GmvError):
    """체크포인트 형식/버전 오류"""
    error_code = "CHECKPOINT_ERROR"


class LeakageError(GmvError):
    """결정 시점 이후 데이터 사용"""
    error_code = "LEAKAGE_ERROR"


class SimulationError(GmvError):
    """브로커 시뮬레이션 중단"""
    error_code = "SIMULATION_ERROR"


# 검증 오류 → 종료 코드 1, 런타임 오류 → 종료 코드 2
VALIDATION_ERRORS = (ConfigError, DataValidationError, ShapeError, CheckpointError)


def error_response(
    message: str,
    error_code: Optional[str] = None,
    details: Optional[Any] = None
) -> dict:
    """에러 응답 생성"""
    return {
        "success": False,
        "message": message,
        "error_code": error_code,
        "details": details
    }


def exit_code_for(exc: BaseException) -> int:
    """예외 유형별 프로세스 종료 코드"""
    if isinstance(exc, VALIDATION_ERRORS) or isinstance(exc, ValidationError):
        return 1
    return 2


def handle_exception(exc: BaseException) -> dict:
    """예외를 오류 응답 딕셔너리로 변환하고 로그를 남김"""
    if isinstance(exc, ValidationError):
        logger.warning(f"입력 검증 실패: {exc.errors()}")
        return error_response(
            message="설정 값이 올바르지 않습니다",
            error_code="VALIDATION_ERROR",
            details=[
                {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
                for err in exc.errors()
            ],
        )
    if isinstance(exc, VALIDATION_ERRORS):
        logger.warning(f"검증 오류 ({exc.error_code}): {exc.message}")
        return error_response(exc.message, exc.error_code, exc.details)
    if isinstance(exc, GmvError):
        logger.error(f"실행 오류 ({exc.error_code}): {exc.message}", exc_info=True)
        return error_response(exc.message, exc.error_code, exc.details)

    logger.error(f"처리되지 않은 예외: {str(exc)}", exc_info=True)
    return error_response(
        message="내부 오류가 발생했습니다",
        error_code="INTERNAL_ERROR",
        details=str(exc),
    )
