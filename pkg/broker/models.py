"""
브로커 시뮬레이터 데이터 모델

- 현금은 정수 마이크로 단위(10⁻⁶ 통화)로 보관
- FeeSchedule: 단계별 주당 수수료, 거래대금 수수료, SEC 수수료, 차입 스프레드
- AccountState: 주식 수, 현금, 월간 누적 체결 주식 수, 항목별 누적 비용
"""
from dataclasses import dataclass, field
from datetime import date
from typing import Dict, List, Optional
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from backtest.models import STRATEGIES
from portfolio.assembly import WeightConstraint

MICRO = 1_000_000
CASH_STRATEGY = "CASH"

# 누적 비용 항목
COST_CATEGORIES = ('commission', 'notional', 'sec', 'interest', 'dividends', 'trades')


def to_micro(amount: float) -> int:
    """통화 금액 → 마이크로 단위 (0에서 먼 쪽으로 반올림)"""
    scaled = abs(float(amount)) * MICRO
    return int(math.copysign(math.floor(scaled + 0.5), amount))


def from_micro(units: int) -> float:
    return units / MICRO


def round_half_away(values) -> np.ndarray:
    """0에서 먼 쪽으로 반올림한 정수 배열"""
    values = np.asarray(values, dtype=float)
    return (np.sign(values) * np.floor(np.abs(values) + 0.5)).astype(np.int64)


class FeeSchedule(BaseModel):
    """수수료·이자 일정"""
    model_config = ConfigDict(extra='forbid')

    commission_low: float = Field(0.0035, ge=0, description="월간 체결량 기준 이하 주당 수수료 (통화/주)",
                                  json_schema_extra={"provenance": "design"})
    commission_high: float = Field(0.0020, ge=0, description="월간 체결량 기준 초과 주당 수수료 (통화/주)",
                                   json_schema_extra={"provenance": "design"})
    tier_shares: int = Field(300_000, ge=0, description="수수료 단계 기준 월간 체결 주식 수",
                             json_schema_extra={"provenance": "paper"})
    ticket_floor: float = Field(0.35, ge=0, description="주문당 최소 수수료", json_schema_extra={"provenance": "paper"})
    notional_rate: float = Field(0.000845, ge=0, description="거래대금 수수료율 (FINRA + 거래소 + 청산)",
                                 json_schema_extra={"provenance": "paper"})
    sec_rate: float = Field(0.0001157, ge=0, description="매도 거래대금 SEC 수수료율",
                            json_schema_extra={"provenance": "paper"})
    debit_spread: float = Field(0.015, ge=0, description="차입 이자 스프레드 δ_v (연율)",
                                json_schema_extra={"provenance": "design"})
    day_count: int = Field(360, ge=1, description="이자 일수 기준", json_schema_extra={"provenance": "paper"})

    def commission(self, shares: int, month_volume: int) -> float:
        """
        주문 하나의 수수료

        체결량이 단계 경계를 넘으면 경계 전후 주식 수로 나눠 계산합니다.
        """
        shares = abs(int(shares))
        if shares == 0:
            return 0.0
        low = min(shares, max(self.tier_shares - month_volume, 0))
        high = shares - low
        return max(self.ticket_floor, low * self.commission_low + high * self.commission_high)

    def notional_fee(self, notional: float) -> float:
        return abs(notional) * self.notional_rate

    def sec_fee(self, notional: float, shares: int) -> float:
        """매도(주식 수 음수)에만 부과"""
        return abs(notional) * self.sec_rate if shares < 0 else 0.0

    def daily_interest(self, cash: float, reference_rate: float, days: int = 1) -> float:
        """음수 현금에 대한 days일치 이자 (양수 현금은 0)"""
        if cash >= 0 or days <= 0:
            return 0.0
        return -cash * (reference_rate + self.debit_spread) * days / self.day_count


class SimulationConfig(BaseModel):
    """현실적 계좌 시뮬레이션 설정"""
    model_config = ConfigDict(extra='forbid')

    strategy: str = Field("NN", description=f"전략 ({' | '.join(STRATEGIES + (CASH_STRATEGY,))})",
                          json_schema_extra={"provenance": "paper"})
    checkpoints: List[str] = Field(default_factory=list, description="NN 체크포인트 경로 목록",
                                   json_schema_extra={"provenance": "design"})
    constraint: WeightConstraint = Field(WeightConstraint.UNCONSTRAINED, description="가중치 제약",
                                         json_schema_extra={"provenance": "paper"})
    n: int = Field(1000, ge=1, description="시가총액 상위 자산 수", json_schema_extra={"provenance": "paper"})
    interval: int = Field(5, ge=1, description="리밸런싱 간격 (거래일)", json_schema_extra={"provenance": "paper"})
    dt_in: int = Field(1200, ge=2, description="추정 윈도우 Δt_in", json_schema_extra={"provenance": "paper"})
    initial_cash: float = Field(1_000_000.0, gt=0, description="시작 현금", json_schema_extra={"provenance": "paper"})
    start: Optional[date] = Field(None, description="시뮬레이션 시작일 (없으면 Δt_in 이력 직후)",
                                  json_schema_extra={"provenance": "design"})
    end: Optional[date] = Field(None, description="시뮬레이션 종료일", json_schema_extra={"provenance": "design"})
    reference_rate: float = Field(0.0, ge=0, description="rate_csv가 없을 때 쓰는 상수 기준금리 φ (연율)",
                                  json_schema_extra={"provenance": "design"})
    rate_csv: Optional[str] = Field(None, description="기준금리 CSV (date,rate)", json_schema_extra={"provenance": "design"})
    use_universe_filter: bool = Field(True, description="리밸런싱마다 유니버스 필터 적용",
                                      json_schema_extra={"provenance": "paper"})
    rolling_days: int = Field(252, ge=2, description="롤링 변동성 윈도우", json_schema_extra={"provenance": "design"})

    @field_validator('strategy')
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        value = value.upper()
        if value not in STRATEGIES + (CASH_STRATEGY,):
            raise ValueError(f"알 수 없는 전략 '{value}'")
        return value


@dataclass
class Trade:
    """체결 기록 (금액은 마이크로 단위)"""
    date: date
    asset_id: str
    shares: int
    price: float
    notional: int
    commission: int
    notional_fee: int
    sec_fee: int
    reason: str = 'rebalance'

    @property
    def fees(self) -> int:
        return self.commission + self.notional_fee + self.sec_fee


@dataclass
class DayFlows:
    """하루 현금 흐름 (마이크로 단위, 부호는 현금 기준)"""
    commission: int = 0
    notional: int = 0
    sec: int = 0
    interest: int = 0
    dividends: int = 0
    trades: int = 0

    def add_trade(self, trade: Trade) -> None:
        self.trades -= int(np.sign(trade.shares)) * trade.notional
        self.commission += trade.commission
        self.notional += trade.notional_fee
        self.sec += trade.sec_fee

    @property
    def cash_change(self) -> int:
        return self.trades - self.commission - self.notional - self.sec - self.interest + self.dividends


@dataclass
class AccountState:
    """계좌 상태"""
    date: date
    cash: int
    positions: Dict[str, int] = field(default_factory=dict)
    month_volume: int = 0
    totals: Dict[str, int] = field(default_factory=lambda: {k: 0 for k in COST_CATEGORIES})

    @classmethod
    def opening(cls, when: date, cash: float) -> 'AccountState':
        return cls(date=when, cash=to_micro(cash))

    def book(self, flows: DayFlows) -> None:
        """하루 흐름을 현금과 누적 항목에 반영"""
        self.cash += flows.cash_change
        for key in COST_CATEGORIES:
            self.totals[key] += getattr(flows, key)

    def held(self) -> List[str]:
        return sorted(a for a, s in self.positions.items() if s != 0)

    def positions_value(self, prices: Dict[str, float]) -> int:
        return sum(to_micro(s * prices[a]) for a, s in self.positions.items() if s != 0)

    def short_value(self, prices: Dict[str, float]) -> int:
        return sum(to_micro(-s * prices[a]) for a, s in self.positions.items() if s < 0)

    def nlv(self, prices: Dict[str, float]) -> int:
        """NLV = c + Σ s·p"""
        return self.cash + self.positions_value(prices)
