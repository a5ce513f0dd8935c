"""
계좌 일간 처리

하루 순서: 이자·월 경계·분할·배당 반영 → (리밸런싱일) 가격 추정과 종가 체결
→ 상장폐지 청산 → 종가 평가.
"""
from datetime import date
from typing import Dict, List, Mapping, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError, SimulationError
from panel.models import PanelStore
from .models import AccountState, DayFlows, FeeSchedule, Trade, from_micro, round_half_away, to_micro
from .rates import ReferenceRates

logger = logging.getLogger(__name__)


def _as_date(when) -> date:
    return pd.Timestamp(when).date()


def estimate_prices(when, store: PanelStore, assets: Sequence[str]) -> Dict[str, float]:
    """
    체결 전 가격 추정 p̂

    당일 시가가 있으면 시가, 없으면 당일까지의 분할을 모두 반영한 전일 종가.

    Raises:
        DataValidationError: 이전 종가가 전혀 없는 자산
    """
    pos = store.date_position(when)
    opens = store.open.iloc[pos]
    prices: Dict[str, float] = {}
    for asset in assets:
        p_open = opens.get(asset, np.nan)
        if pd.notna(p_open) and p_open > 0:
            prices[asset] = float(p_open)
        else:
            prices[asset] = split_adjusted_close(store, asset, pos)
    return prices


def execute(state: AccountState, asset: str, shares: int, price: float, when,
            fees: FeeSchedule, reason: str = 'rebalance') -> Trade:
    """종가 체결 한 건 (수수료 즉시 차감은 DayFlows로)"""
    notional = abs(shares) * price
    trade = Trade(
        date=_as_date(when),
        asset_id=asset,
        shares=int(shares),
        price=float(price),
        notional=to_micro(notional),
        commission=to_micro(fees.commission(shares, state.month_volume)),
        notional_fee=to_micro(fees.notional_fee(notional)),
        sec_fee=to_micro(fees.sec_fee(notional, shares)),
        reason=reason,
    )
    state.month_volume += abs(int(shares))
    state.positions[asset] = state.positions.get(asset, 0) + int(shares)
    if state.positions[asset] == 0:
        del state.positions[asset]
    return trade


def accrue_daily(state: AccountState, when, store: PanelStore, fees: FeeSchedule,
                 rates: Optional[ReferenceRates] = None) -> DayFlows:
    """
    거래일 시작 처리

    - 직전 거래일 이후 경과한 역일 수만큼 차입 이자 (현금이 음수일 때만)
    - 월이 바뀌면 월간 체결량 초기화
    - 분할: 주식 수에 비율을 곱하고 소수 주식은 분할 조정 전일 종가로 현금 정산
    - 배당: 보유 주식 × 주당 배당 입금
    """
    today = _as_date(when)
    flows = DayFlows()
    days = (today - state.date).days
    if days < 0:
        raise SimulationError(f"날짜가 역행합니다: {state.date} → {today}")
    rate = (rates or ReferenceRates()).rate_at(state.date)
    flows.interest = to_micro(fees.daily_interest(from_micro(state.cash), rate, days))

    if (today.year, today.month) != (state.date.year, state.date.month):
        state.month_volume = 0

    held = state.held()
    if held:
        pos = store.date_position(today)
        split_row = store.wide('split_ratio').iloc[pos]
        dividend_row = store.wide('dividend_cash').iloc[pos]
        for asset in held:
            ratio = split_row.get(asset, np.nan)
            if pd.notna(ratio) and ratio != 1.0:
                scaled = state.positions[asset] * float(ratio)
                whole = int(np.trunc(scaled))
                fraction = scaled - whole
                if fraction != 0.0:
                    flows.trades += to_micro(fraction * split_adjusted_close(store, asset, pos))
                logger.info(f"{today} {asset}: 분할 {ratio:g}:1, {state.positions[asset]} → {whole}주")
                state.positions[asset] = whole
                if whole == 0:
                    del state.positions[asset]
            dividend = dividend_row.get(asset, np.nan)
            if pd.notna(dividend) and dividend > 0 and asset in state.positions:
                flows.dividends += to_micro(state.positions[asset] * float(dividend))

    state.date = today
    state.book(flows)
    return flows


def split_adjusted_close(store: PanelStore, asset: str, pos: int) -> float:
    """위치 pos 이전 마지막 종가를 pos까지의 분할로 나눈 값"""
    history = store.close[asset].iloc[:pos].dropna()
    if history.empty:
        raise DataValidationError(f"{store.dates[pos].date()} {asset}: 이전 가격이 없어 추정할 수 없습니다")
    last = store.close.index.get_loc(history.index[-1])
    splits = store.wide('split_ratio')[asset].iloc[last + 1:pos + 1].fillna(1.0).to_numpy()
    return float(history.iloc[-1]) / float(np.prod(splits))


def target_shares(state: AccountState, weights: Mapping[str, float], prices: Mapping[str, float]) -> Dict[str, int]:
    """
    목표 주식 수 s_t = round(w · NLV̂ / p̂)

    NLV̂ = c + Σ s_{t−1} p̂ (s_{t−1}은 분할 반영 후)
    """
    missing = [a for a in list(weights) + state.held() if a not in prices]
    if missing:
        raise SimulationError(f"가격 추정이 없는 자산: {missing[:5]}")
    nlv_hat = from_micro(state.cash) + sum(s * prices[a] for a, s in state.positions.items())
    assets = sorted(weights)
    w = np.array([weights[a] for a in assets], dtype=float)
    p = np.array([prices[a] for a in assets], dtype=float)
    shares = round_half_away(w * nlv_hat / p)
    return dict(zip(assets, shares.tolist()))


def rebalance(state: AccountState, weights: Mapping[str, float], when, store: PanelStore,
              fees: FeeSchedule, prices: Optional[Mapping[str, float]] = None) -> Tuple[DayFlows, List[Trade]]:
    """
    목표 가중치로 리밸런싱 (종가 체결, 시장 충격 없음)

    목표에 없는 보유 자산은 0주로 청산합니다.

    Raises:
        SimulationError: 체결할 자산의 당일 종가 없음
    """
    today = _as_date(when)
    if prices is None:
        prices = estimate_prices(today, store, sorted(set(weights) | set(state.held())))
    targets = target_shares(state, weights, prices)
    for asset in state.held():
        targets.setdefault(asset, 0)

    closes = store.close.iloc[store.date_position(today)]
    flows = DayFlows()
    trades: List[Trade] = []
    for asset in sorted(targets):
        delta = targets[asset] - state.positions.get(asset, 0)
        if delta == 0:
            continue
        close = closes.get(asset, np.nan)
        if pd.isna(close):
            raise SimulationError(f"{today} {asset}: 종가가 없어 체결할 수 없습니다")
        trade = execute(state, asset, delta, float(close), today, fees)
        flows.add_trade(trade)
        trades.append(trade)
    state.book(flows)
    return flows, trades


def liquidate_delisted(state: AccountState, when, store: PanelStore, fees: FeeSchedule) -> Tuple[DayFlows, List[Trade]]:
    """상장폐지일 종가로 보유분 전량 청산"""
    today = _as_date(when)
    pos = store.date_position(today)
    delist = store.wide('delist_flag').iloc[pos]
    closes = store.close.iloc[pos]
    flows = DayFlows()
    trades: List[Trade] = []
    for asset in state.held():
        flag = delist.get(asset, np.nan)
        if pd.notna(flag) and bool(flag) and pd.notna(closes.get(asset, np.nan)):
            trade = execute(state, asset, -state.positions[asset], float(closes[asset]), today, fees, reason='delist')
            flows.add_trade(trade)
            trades.append(trade)
            logger.info(f"{today} {asset}: 상장폐지 청산 {trade.shares}주 @ {trade.price:.4f}")
    state.book(flows)
    return flows, trades
