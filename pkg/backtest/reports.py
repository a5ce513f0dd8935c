"""
리포트 출력 (CSV / xlsx)

xlsx는 표 하나당 시트 하나로 만들고 헤더를 강조합니다.
"""
from pathlib import Path
from typing import Dict, List, Union
import logging

import numpy as np
import pandas as pd

from .models import BacktestReport

logger = logging.getLogger(__name__)

HEADER_COLOR = '2563EB'
MAX_COLUMN_WIDTH = 40


def _cell_value(val):
    """openpyxl이 받는 형태로 변환"""
    if isinstance(val, (np.integer,)):
        return int(val)
    if isinstance(val, (np.floating,)):
        return None if np.isnan(val) else float(val)
    if isinstance(val, float) and np.isnan(val):
        return None
    if isinstance(val, pd.Timestamp):
        return val.to_pydatetime()
    return val


def write_workbook(path: Union[str, Path], sheets: Dict[str, pd.DataFrame]) -> Path:
    """
    DataFrame 묶음 → xlsx

    Args:
        path: 저장 경로
        sheets: 시트 이름 → 표 (인덱스는 첫 열로 들어감)
    """
    import openpyxl
    from openpyxl.styles import Alignment, Font, PatternFill

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wb = openpyxl.Workbook()
    wb.remove(wb.active)

    header_fill = PatternFill(start_color=HEADER_COLOR, end_color=HEADER_COLOR, fill_type='solid')
    header_font = Font(bold=True, color='FFFFFF', size=11)

    for title, frame in sheets.items():
        ws = wb.create_sheet(title[:31])
        table = frame.reset_index() if frame.index.name else frame
        headers = [str(c) for c in table.columns]

        for col_idx, h in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col_idx, value=h)
            cell.fill = header_fill
            cell.font = header_font
            cell.alignment = Alignment(horizontal='center')

        for row_idx, row in enumerate(table.itertuples(index=False), 2):
            for col_idx, val in enumerate(row, 1):
                cell = ws.cell(row=row_idx, column=col_idx, value=_cell_value(val))
                if isinstance(cell.value, float):
                    cell.number_format = '0.000000'

        # 열 너비 자동 조정
        for col_idx, h in enumerate(headers, 1):
            max_len = len(h)
            for row_idx in range(2, min(len(table) + 2, 100)):
                val = ws.cell(row=row_idx, column=col_idx).value
                if val is not None:
                    max_len = max(max_len, len(str(val)))
            ws.column_dimensions[openpyxl.utils.get_column_letter(col_idx)].width = min(max_len + 4, MAX_COLUMN_WIDTH)

    wb.save(path)
    logger.info(f"xlsx 리포트 저장: {path} ({len(sheets)}개 시트)")
    return path


def write_backtest_report(report: BacktestReport, output_dir: Union[str, Path], xlsx: bool = False) -> List[Path]:
    """
    백테스트 리포트 저장

    - backtest_<전략>_<제약>.csv: 복제별 지표 + mean 행
    - backtest_<전략>_<제약>_drawdown.csv: 복제 × 연도 최대 낙폭
    - backtest_<전략>_<제약>.xlsx (선택)
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    stem = f"backtest_{report.strategy.lower()}_{report.constraint.value}"
    summary = report.summary_frame()

    paths = [output_dir / f"{stem}.csv", output_dir / f"{stem}_drawdown.csv"]
    summary.to_csv(paths[0], index=False)
    report.drawdown_by_year.to_csv(paths[1], index=False)
    if xlsx:
        paths.append(write_workbook(output_dir / f"{stem}.xlsx", {
            '복제별 지표': summary,
            '연도별 낙폭': report.drawdown_by_year,
        }))
    logger.info(f"백테스트 리포트 저장: {output_dir} ({len(paths)}개 파일)")
    return paths
