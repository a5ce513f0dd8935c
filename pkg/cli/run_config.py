"""
실행 설정 (섹션.키=값 텍스트 파일 + --set 덮어쓰기)

파일 형식:
    # 주석
    train.epochs=100
    backtest.strategy=QIS

값은 문자열로 읽고 각 섹션의 pydantic 모델이 형 변환과 범위 검증을 맡습니다.
목록 필드는 쉼표로 구분합니다 (backtest.checkpoints=a.ckpt,b.ckpt).
"""
from datetime import date
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Type, Union, get_origin
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_core import PydanticUndefined

from backtest.models import BacktestConfig
from broker.models import FeeSchedule, SimulationConfig
from config.exceptions import ConfigError
from config.settings import settings
from estimators.models import CleanConfig, CleanerTag
from panel.models import FilterConfig, SyntheticMarketSpec
from training.schemas import TrainConfig, TrainProfile

logger = logging.getLogger(__name__)


class RunSection(BaseModel):
    """실행 공통 설정"""
    model_config = ConfigDict(extra='forbid')

    seed: Optional[int] = Field(None, description="공통 시드 (각 섹션 seed를 명시하지 않았을 때 적용)",
                                json_schema_extra={"provenance": "design"})
    threads: Optional[int] = Field(None, ge=1, description="스레드 수 (1 = 결정적 기준 모드)",
                                   json_schema_extra={"provenance": "design"})
    output_dir: str = Field(settings.OUTPUT_DIR, description="산출물 디렉토리",
                            json_schema_extra={"provenance": "design"})
    profile: TrainProfile = Field(TrainProfile.PAPER, description="학습 규모 프로필 (paper | desk)",
                                  json_schema_extra={"provenance": "design"})


class DataConfig(BaseModel):
    """입력 데이터와 단일 윈도우 선택"""
    model_config = ConfigDict(extra='forbid')

    path: Optional[str] = Field(None, description="수집 CSV 경로 (없으면 synth 섹션으로 합성 시장 생성)",
                                json_schema_extra={"provenance": "design"})
    window_end: Optional[date] = Field(None, description="clean 윈도우 마지막 날 (없으면 패널 끝)",
                                       json_schema_extra={"provenance": "design"})
    window_days: int = Field(1200, ge=2, description="clean 윈도우 길이 (거래일)", json_schema_extra={"provenance": "paper"})
    window_assets: int = Field(100, ge=1, description="clean/ingest 자산 수 (시가총액 상위)",
                               json_schema_extra={"provenance": "design"})


class GradcheckConfig(BaseModel):
    """전체 파이프라인 유한 차분 검사"""
    model_config = ConfigDict(extra='forbid')

    n: int = Field(20, ge=2, description="자산 수", json_schema_extra={"provenance": "design"})
    dt_in: int = Field(60, ge=3, description="입력 윈도우 Δt_in", json_schema_extra={"provenance": "design"})
    dt_out: int = Field(5, ge=1, description="OOS 윈도우 Δt_out", json_schema_extra={"provenance": "paper"})
    width: int = Field(64, ge=1, description="LSTM 은닉 폭 ω", json_schema_extra={"provenance": "paper"})
    h: float = Field(1e-6, gt=0, description="중앙 차분 간격", json_schema_extra={"provenance": "design"})
    max_entries: Optional[int] = Field(16, ge=1, description="파라미터 그룹당 검사 원소 수 (없으면 전체)",
                                       json_schema_extra={"provenance": "design"})
    tolerance: float = Field(1e-4, gt=0, description="허용 최대 상대 오차", json_schema_extra={"provenance": "design"})
    seed: int = Field(0, description="난수 시드", json_schema_extra={"provenance": "design"})


class DiagnoseConfig(BaseModel):
    """해석 진단 (지연 프로필, 스펙트럼 안정성, 변동성 전달 곡선)"""
    model_config = ConfigDict(extra='forbid')

    checkpoints: List[str] = Field(default_factory=list, description="진단할 체크포인트 경로 목록",
                                   json_schema_extra={"provenance": "design"})
    samples: int = Field(100, ge=2, description="스펙트럼 표본 윈도우 수", json_schema_extra={"provenance": "design"})
    n: int = Field(50, ge=2, description="표본 자산 수", json_schema_extra={"provenance": "design"})
    dt_in: int = Field(1200, ge=3, description="체크포인트가 없을 때 윈도우 길이", json_schema_extra={"provenance": "paper"})
    benchmarks: List[CleanerTag] = Field([CleanerTag.QIS], description="비교 정제기 (스펙트럼 함수가 있는 태그)",
                                         json_schema_extra={"provenance": "paper"})
    grid_min: float = Field(0.05, gt=0, description="변동성 전달 곡선 입력 하한", json_schema_extra={"provenance": "design"})
    grid_max: float = Field(1.0, gt=0, description="변동성 전달 곡선 입력 상한", json_schema_extra={"provenance": "design"})
    grid_points: int = Field(96, ge=2, description="변동성 격자 점 수", json_schema_extra={"provenance": "design"})
    seed: int = Field(0, description="난수 시드", json_schema_extra={"provenance": "design"})


SECTIONS: Dict[str, Type[BaseModel]] = {
    'run': RunSection,
    'synth': SyntheticMarketSpec,
    'data': DataConfig,
    'filter': FilterConfig,
    'train': TrainConfig,
    'backtest': BacktestConfig,
    'fees': FeeSchedule,
    'sim': SimulationConfig,
    'clean': CleanConfig,
    'gradcheck': GradcheckConfig,
    'diagnose': DiagnoseConfig,
}

# run.seed / run.threads를 물려받는 섹션
SEEDED_SECTIONS = ('synth', 'train', 'backtest', 'gradcheck', 'diagnose')
THREADED_SECTIONS = ('train', 'backtest')


class Setting(NamedTuple):
    """값과 출처 (file:line, --set, --seed 등)"""
    value: str
    source: str


def parse_assignment(text: str, source: str) -> Dict[str, Dict[str, Setting]]:
    """'section.key=value' 한 줄"""
    key, sep, value = text.partition('=')
    key = key.strip()
    if not sep or '.' not in key:
        raise ConfigError(f"{source}: 'section.key=value' 형식이 아닙니다: {text.strip()!r}",
                          details={'provenance': source})
    section, _, name = key.partition('.')
    if section not in SECTIONS:
        raise ConfigError(f"{source}: 알 수 없는 섹션 '{section}'",
                          details={'provenance': source, 'sections': sorted(SECTIONS)})
    return {section: {name: Setting(value.strip(), source)}}


def read_config_file(path: Union[str, Path]) -> List[Dict[str, Dict[str, Setting]]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"설정 파일이 없습니다: {path}", details={'provenance': str(path)})
    entries = []
    for number, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        entries.append(parse_assignment(stripped, f"{path}:{number}"))
    return entries


def _coerce(model: Type[BaseModel], key: str, raw: str):
    """문자열 → 모델 입력값 (목록은 쉼표 분리, 빈 값/none은 None)"""
    field = model.model_fields.get(key)
    if field is None:
        return raw
    if get_origin(field.annotation) is list:
        return [item.strip() for item in raw.split(',') if item.strip()]
    if raw.lower() in ('', 'none', 'null') and not field.is_required():
        return None
    return raw


class RunConfig:
    """
    섹션별 검증된 설정과 키별 출처

    같은 키가 여러 번 나오면 나중 값이 이깁니다 (파일 → --set → 전용 플래그 순).
    """

    def __init__(self, settings_by_section: Dict[str, Dict[str, Setting]]):
        self.raw = settings_by_section
        self.sections: Dict[str, BaseModel] = {}
        for name in SECTIONS:
            self.sections[name] = self._build(name)
        self._inherit()

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = (),
             flags: Optional[Dict[str, Optional[str]]] = None) -> 'RunConfig':
        """
        Args:
            path: 설정 파일 (없으면 기본값만)
            overrides: --set 'section.key=value' 목록
            flags: 전용 플래그 → 값 (예: {'run.seed': '7'}), None 값은 무시
        """
        merged: Dict[str, Dict[str, Setting]] = {}
        entries = read_config_file(path) if path else []
        entries += [parse_assignment(text, '--set') for text in overrides]
        for key, value in (flags or {}).items():
            if value is not None:
                flag = '--' + key.split('.', 1)[1].replace('_', '-')
                entries.append(parse_assignment(f"{key}={value}", flag))
        for entry in entries:
            for section, values in entry.items():
                merged.setdefault(section, {}).update(values)
        config = cls(merged)
        logger.info(f"실행 설정 로드: {path or '(기본값)'}, 지정 키 {sum(len(v) for v in merged.values())}개")
        return config

    def _build(self, name: str) -> BaseModel:
        model = SECTIONS[name]
        values = {key: _coerce(model, key, s.value) for key, s in self.raw.get(name, {}).items()}
        try:
            if name == 'train':
                profile = self.sections['run'].profile
                return TrainConfig.for_profile(profile, **values)
            return model(**values)
        except ValidationError as e:
            problems = []
            for err in e.errors():
                key = str(err['loc'][0]) if err['loc'] else ''
                problems.append({
                    'key': f"{name}.{key}" if key else name,
                    'provenance': self.provenance(name, key),
                    'msg': err['msg'],
                })
            first = problems[0]
            raise ConfigError(
                f"{first['provenance']}: {first['key']} 값이 올바르지 않습니다 ({first['msg']})",
                details=problems,
            )

    def _inherit(self) -> None:
        run = self.sections['run']
        for attr, names in (('seed', SEEDED_SECTIONS), ('threads', THREADED_SECTIONS)):
            value = getattr(run, attr)
            if value is None:
                continue
            for name in names:
                if attr not in self.raw.get(name, {}):
                    self.sections[name] = self.sections[name].model_copy(update={attr: value})

    def __getattr__(self, name: str) -> BaseModel:
        sections = self.__dict__.get('sections', {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    def provenance(self, section: str, key: str) -> str:
        """키의 출처 (지정되지 않았으면 'default')"""
        setting = self.raw.get(section, {}).get(key)
        return setting.source if setting else 'default'


def _default_text(field) -> str:
    if field.default_factory is not None:
        value = field.default_factory()
    elif field.default is PydanticUndefined:
        return '(필수)'
    else:
        value = field.default
    if isinstance(value, list):
        return ','.join(getattr(v, 'value', str(v)) for v in value)
    if value is None:
        return 'none'
    return str(getattr(value, 'value', value))


def config_help() -> str:
    """--help 에필로그: 모든 키의 기본값, 출처 태그, 설명"""
    lines = ['설정 키 (section.key=기본값 [paper|design] 설명):']
    for section, model in SECTIONS.items():
        lines.append('')
        lines.append(f"[{section}] {(model.__doc__ or section).strip().splitlines()[0]}")
        for key, field in model.model_fields.items():
            extra = field.json_schema_extra if isinstance(field.json_schema_extra, dict) else {}
            tag = extra.get('provenance', 'design')
            lines.append(f"  {section}.{key}={_default_text(field)}  [{tag}]  {field.description or ''}")
    return '\n'.join(lines)
