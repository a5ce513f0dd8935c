"""
명령행 진입점

    python manage.py <command> [--config run.cfg] [--set section.key=value ...]

성공하면 요약 JSON을 표준 출력에 쓰고 0을 돌려줍니다. 검증 오류는 1,
실행 오류는 2로 끝나며 오류 응답 dict를 JSON으로 표준 오류에 씁니다.
"""
from typing import List, Optional
import argparse
import json
import logging
import sys

from pydantic import ValidationError

from config.exceptions import ConfigError, GmvError, exit_code_for, handle_exception
from config.logging_config import setup_logging
from .commands import COMMANDS
from .run_config import config_help, RunConfig

logger = logging.getLogger(__name__)

DESCRIPTIONS = {
    'synth': '합성 팩터 시장 생성 (수집 CSV 형식으로 저장)',
    'ingest': '자산-일 CSV 수집·검증',
    'train': 'GMV 네트워크 학습 (체크포인트 저장)',
    'clean': '윈도우 하나에 추정기 적용 (고유값·가중치 출력)',
    'backtest': '무마찰 부트스트랩 백테스트',
    'simulate': '수수료·이자·기업행위를 반영한 계좌 시뮬레이션',
    'gradcheck': '전체 파이프라인 유한 차분 그래디언트 검사',
    'diagnose': '지연 프로필·스펙트럼 안정성·변동성 전달 곡선',
}


class ArgumentParser(argparse.ArgumentParser):
    """사용법 오류를 ConfigError로 (종료 코드 1)"""

    def error(self, message):
        raise ConfigError(f"명령행 인자 오류: {message}")


def _years(text: str) -> List[int]:
    try:
        return [int(y) for y in text.split(',') if y.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"연도 목록이 아닙니다: {text}")


def build_parser() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='설정 파일 (section.key=value 줄 목록)')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='설정 덮어쓰기 (여러 번 지정 가능, 파일보다 우선)')
    common.add_argument('--output', '-o', help='산출물 디렉토리 (run.output_dir)')
    common.add_argument('--seed', help='공통 시드 (run.seed)')
    common.add_argument('--threads', help='스레드 수, 1 = 결정적 기준 모드 (run.threads)')

    parser = ArgumentParser(
        prog='manage.py',
        description='신경망 GMV 공분산 추정기와 벤치마크 백테스트 도구',
        epilog=config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    sub.required = True
    commands = {}
    for name, description in DESCRIPTIONS.items():
        commands[name] = sub.add_parser(
            name, parents=[common], help=description, description=description,
            epilog=config_help(), formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    commands['ingest'].add_argument('--universe', action='store_true', help='마지막 거래일 유니버스 필터 결과 저장')
    commands['train'].add_argument('--years', type=_years, help='연도별 재보정 (예: 2010,2011)')
    commands['clean'].add_argument('--estimator', '-e', help='추정기 태그 (MLE, LS, QIS, PM, AO, CLIP, ORACLE, NN, ERB, MCW)')
    for name in ('backtest', 'simulate'):
        commands[name].add_argument('--xlsx', action='store_true', help='엑셀 리포트도 저장')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        setup_logging()
        config = RunConfig.load(args.config, args.overrides, flags={
            'run.output_dir': args.output, 'run.seed': args.seed, 'run.threads': args.threads,
        })
        logger.info(f"명령 시작: {args.command}")
        summary = COMMANDS[args.command](config, args)
    except (GmvError, ValidationError) as e:
        print(json.dumps(handle_exception(e), ensure_ascii=False, default=str), file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        print(json.dumps(handle_exception(e), ensure_ascii=False, default=str), file=sys.stderr)
        return 2
    print(json.dumps(summary, ensure_ascii=False, indent=2, default=str))
    return 0
