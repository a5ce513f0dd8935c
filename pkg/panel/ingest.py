"""
long 포맷 CSV 수집

헤더: date,asset_id,open,close,adj_factor,volume,shares_outstanding,
      dividend_cash,split_ratio,auction_flag,delist_flag[,issuer_id]
"""
from pathlib import Path
from typing import Tuple, Union
import logging

import numpy as np
import pandas as pd

from config.exceptions import DataValidationError
from .models import OPTIONAL_COLUMNS, RECORD_COLUMNS, RETURN_SANITY_BOUND, PanelStore, ReturnPanel

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ['date', 'asset_id', 'close']

# 빈 칸일 때 채울 기본값
FIELD_DEFAULTS = {
    'adj_factor': 1.0,
    'volume': 0.0,
    'shares_outstanding': 0.0,
    'dividend_cash': 0.0,
    'split_ratio': 1.0,
    'auction_flag': 1.0,
    'delist_flag': 0.0,
}

POSITIVE_FIELDS = ['open', 'close', 'adj_factor', 'split_ratio']
NON_NEGATIVE_FIELDS = ['volume', 'shares_outstanding', 'dividend_cash']
FLAG_FIELDS = ['auction_flag', 'delist_flag']


def _line(index: int) -> int:
    """DataFrame 행 인덱스 → 파일 줄 번호 (헤더가 1번 줄)"""
    return int(index) + 2


def _fail(message: str, index: int, column: str = None):
    line = _line(index)
    raise DataValidationError(
        f"{line}번 줄: {message}",
        details={'line': line, 'column': column},
    )


def read_records(path: Union[str, Path]) -> pd.DataFrame:
    """
    CSV를 읽어 타입 변환·검증된 long 포맷 레코드로 반환

    Raises:
        DataValidationError: 헤더 누락, 형식 오류 행, 날짜 역행, 중복 키
    """
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"파일이 없습니다: {path}")

    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    raw.columns = [c.strip() for c in raw.columns]

    missing = [c for c in RECORD_COLUMNS if c not in raw.columns]
    if missing:
        raise DataValidationError(f"헤더에 필요한 열이 없습니다: {missing}", details={'line': 1})

    frame = pd.DataFrame(index=raw.index)
    for column in REQUIRED_FIELDS:
        blank = raw[column].str.strip() == ''
        if blank.any():
            _fail(f"필수 필드 '{column}'가 비어 있습니다", raw.index[blank.to_numpy()][0], column)

    dates = pd.to_datetime(raw['date'].str.strip(), format='%Y-%m-%d', errors='coerce')
    if dates.isna().any():
        _fail("날짜 형식 오류 (YYYY-MM-DD)", raw.index[dates.isna().to_numpy()][0], 'date')
    frame['date'] = dates
    frame['asset_id'] = raw['asset_id'].str.strip()

    for column in RECORD_COLUMNS[2:]:
        text = raw[column].str.strip()
        blank = text == ''
        values = pd.to_numeric(text.where(~blank, None), errors='coerce')
        bad = values.isna() & ~blank
        if bad.any():
            _fail(f"숫자가 아닌 값 '{column}'", raw.index[bad.to_numpy()][0], column)
        if column in FIELD_DEFAULTS:
            values = values.fillna(FIELD_DEFAULTS[column])
        frame[column] = values.astype(float)

    for column in POSITIVE_FIELDS:
        bad = frame[column].notna() & (frame[column] <= 0)
        if bad.any():
            _fail(f"'{column}'는 0보다 커야 합니다", frame.index[bad.to_numpy()][0], column)
    for column in NON_NEGATIVE_FIELDS:
        bad = frame[column] < 0
        if bad.any():
            _fail(f"'{column}'는 음수일 수 없습니다", frame.index[bad.to_numpy()][0], column)
    for column in FLAG_FIELDS:
        bad = ~frame[column].isin([0.0, 1.0])
        if bad.any():
            _fail(f"'{column}'는 0 또는 1이어야 합니다", frame.index[bad.to_numpy()][0], column)

    for column in OPTIONAL_COLUMNS:
        if column in raw.columns:
            issuer = raw[column].str.strip()
            frame[column] = issuer.where(issuer != '', frame['asset_id'])

    # 파일 내 날짜는 비감소여야 함
    backwards = frame['date'].diff() < pd.Timedelta(0)
    if backwards.any():
        _fail("날짜가 역행합니다 (비단조 날짜)", frame.index[backwards.to_numpy()][0], 'date')

    duplicated = frame.duplicated(subset=['date', 'asset_id'], keep='first')
    if duplicated.any():
        idx = frame.index[duplicated.to_numpy()][0]
        _fail(f"중복 (date, asset) 키: ({frame.at[idx, 'date'].date()}, {frame.at[idx, 'asset_id']})", idx, 'asset_id')

    return frame


def _check_return_bound(frame: pd.DataFrame, store: PanelStore) -> None:
    """조정 종가 수익률 |r| < 1 검사 (위반 행 줄 번호 보고)"""
    returns = store.adjusted_close.pct_change(fill_method=None)
    violation = np.abs(returns.to_numpy()) >= RETURN_SANITY_BOUND
    if not violation.any():
        return
    row, col = np.argwhere(violation)[0]
    when, asset = store.dates[row], store.assets[col]
    hit = frame.index[((frame['date'] == when) & (frame['asset_id'] == asset)).to_numpy()][0]
    _fail(f"일간 수익률 절대값이 1 이상입니다 ({asset}, {when.date()})", hit, 'close')


def ingest_csv(path: Union[str, Path]) -> Tuple[ReturnPanel, PanelStore]:
    """
    CSV 수집

    Returns:
        (수익률 패널, 자산-일 레코드 저장소)
    """
    frame = read_records(path)
    store = PanelStore(frame)
    _check_return_bound(frame, store)
    panel = store.return_panel()
    logger.info(f"CSV 수집 완료: {path} ({len(store.dates)}일 × {len(store.assets)}자산, 레코드 {len(frame)}건)")
    return panel, store
