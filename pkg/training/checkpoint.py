"""
체크포인트 컨테이너

형식 (리틀 엔디언):
    매직 8바이트 | 버전 uint32 | 메타데이터 길이 uint32 | UTF-8 JSON 메타데이터 |
    정규 순서 배열 반복: 이름 길이 uint32, 이름, 차원 수 uint32, 차원 uint64 × rank, float64 원시 값
"""
from pathlib import Path
from typing import Dict, List, Union
import json
import logging
import struct

import numpy as np
from pydantic import ValidationError

from config.exceptions import CheckpointError
from network.model import GmvNetwork
from network.vol_mlp import LAYER_SIZES
from .schemas import Checkpoint, CheckpointMeta

logger = logging.getLogger(__name__)

MAGIC = b"GMVNNCK\x00"
VERSION = 1


def _ordered_names(meta: CheckpointMeta) -> List[str]:
    return GmvNetwork.param_names(meta.width)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """체크포인트 → 바이트열"""
    meta = ckpt.meta
    names = _ordered_names(meta)
    missing = [name for name in names if name not in ckpt.arrays]
    if missing:
        raise CheckpointError(f"파라미터 누락: {missing}")
    header = json.dumps(meta.model_dump(mode='json'), sort_keys=True, ensure_ascii=False).encode('utf-8')

    chunks = [MAGIC, struct.pack('<I', VERSION), struct.pack('<I', len(header)), header]
    for name in names:
        array = np.ascontiguousarray(ckpt.arrays[name], dtype='<f8')
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<I', array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}Q', *array.shape))
        chunks.append(array.tobytes())
    return b''.join(chunks)


class _Reader:
    """잘림을 검사하는 순차 바이트 읽기"""

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError(f"체크포인트가 잘렸습니다 (오프셋 {self.offset}, 필요 {size}바이트)")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(payload: bytes) -> Checkpoint:
    """바이트열 → 체크포인트 (형식·버전·파라미터 수 검증)"""
    reader = _Reader(payload)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("체크포인트 형식이 아닙니다 (매직 바이트 불일치)")
    (version,) = reader.unpack('<I')
    if version != VERSION:
        raise CheckpointError(f"지원하지 않는 체크포인트 버전 {version} (현재 {VERSION})")
    (header_len,) = reader.unpack('<I')
    try:
        meta = CheckpointMeta(**json.loads(reader.take(header_len).decode('utf-8')))
    except (UnicodeDecodeError, json.JSONDecodeError, ValidationError) as e:
        raise CheckpointError(f"체크포인트 메타데이터 오류: {e}")
    if list(meta.layer_sizes) != list(LAYER_SIZES):
        raise CheckpointError(f"MLP 층 구성 {meta.layer_sizes}가 현재 빌드 {list(LAYER_SIZES)}와 다릅니다")

    arrays: Dict[str, np.ndarray] = {}
    for expected in _ordered_names(meta):
        (name_len,) = reader.unpack('<I')
        name = reader.take(name_len).decode('utf-8')
        if name != expected:
            raise CheckpointError(f"배열 순서 오류: '{expected}' 자리에 '{name}'")
        (rank,) = reader.unpack('<I')
        shape = reader.unpack(f'<{rank}Q') if rank else ()
        count = int(np.prod(shape)) if rank else 1
        raw = reader.take(8 * count)
        arrays[name] = np.frombuffer(raw, dtype='<f8').astype(np.float64).reshape(shape)
    if reader.offset != len(payload):
        raise CheckpointError(f"체크포인트 끝에 {len(payload) - reader.offset}바이트가 남았습니다")

    total = sum(a.size for a in arrays.values())
    expected_total = GmvNetwork.expected_param_count(meta.dt_in, meta.width)
    if total != expected_total or (meta.param_count and meta.param_count != expected_total):
        raise CheckpointError(
            f"파라미터 수 불일치: 배열 {total}, 메타데이터 {meta.param_count}, 기대값 {expected_total}"
        )
    return Checkpoint(meta=meta, arrays=arrays)


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    """체크포인트 저장 (임시 파일 후 교체)"""
    path = Path(path)
    payload = encode_checkpoint(ckpt)
    tmp = path.with_name(path.name + '.tmp')
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(payload)
        tmp.replace(path)
    except OSError as e:
        raise CheckpointError(f"체크포인트 저장 실패: {path} ({e})")
    logger.info(f"체크포인트 저장: {path} ({len(payload)}바이트, 파라미터 {ckpt.meta.param_count}개)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"체크포인트 읽기 실패: {path} ({e})")
    ckpt = decode_checkpoint(payload)
    logger.debug(f"체크포인트 로드: {path} (Δt_in={ckpt.meta.dt_in}, ω={ckpt.meta.width})")
    return ckpt
