"""
난수 스트림 분할

하나의 64비트 시드에서 카운터 기반(Philox) 생성기를 스트림 ID별로 분리합니다.
같은 (seed, stream, index) 조합은 항상 같은 난수열을 냅니다.
"""

import numpy as np

# 서브시스템별 스트림 ID
STREAM_SYNTH = 1
STREAM_INIT = 2
STREAM_TRAIN = 3
STREAM_VALIDATION = 4
STREAM_BACKTEST = 5
STREAM_CALIBRATION = 6
STREAM_GRADCHECK = 7
STREAM_DIAGNOSE = 8
STREAM_EXPERIMENT = 9


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """(seed, keys...)로 독립 스트림 생성"""
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))
