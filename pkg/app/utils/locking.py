# -*- coding: utf-8 -*-
"""
结果文件原子写工具

目标:
1. 多个进程同时写同一个结果文件时互斥 (FileLock)
2. 读者永远看不到写了一半的 CSV/JSON (tempfile + fsync + os.replace)
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import threading
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
from filelock import FileLock, Timeout as FileLockTimeout

from app.core.config import output_config
from app.core.exceptions import HistopolationError

logger = logging.getLogger(__name__)


def json_safe(value: Any) -> Any:
    """非有限浮点数 -> None, numpy 标量/数组 -> Python 原生类型。"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_cell(value: Any, float_format: str) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return float_format % value if math.isfinite(value) else ""
    return str(value)


class AtomicFileWriter:
    """
    结果文件原子写入器。

    特性:
    - 跨进程: FileLock
    - 同进程线程安全: RLock
    - 原子落盘: tempfile + fsync + os.replace
    """

    def __init__(
        self,
        file_path: str,
        lock_path: Optional[str] = None,
        timeout_seconds: Optional[float] = None,
    ) -> None:
        self.file_path = str(file_path)
        self.lock_path = lock_path or f"{self.file_path}.lock"
        self.timeout_seconds = output_config.lock_timeout if timeout_seconds is None else timeout_seconds
        self._thread_lock = threading.RLock()

    def write_text(self, text: str) -> None:
        lock = FileLock(self.lock_path, timeout=self.timeout_seconds)
        try:
            with self._thread_lock:
                with lock:
                    self._write_atomic(text)
        except FileLockTimeout:
            logger.error("写入失败: 获取文件锁超时 (%s)", self.file_path)
            raise HistopolationError(f"获取文件锁超时: {self.lock_path}")
        logger.debug("wrote %s (%d bytes)", self.file_path, len(text))

    def write_json(self, payload: Any) -> None:
        text = json.dumps(json_safe(payload), ensure_ascii=False, indent=2, allow_nan=False)
        self.write_text(text + "\n")

    def write_csv(
        self,
        header: Sequence[str],
        rows: Iterable[Sequence[Any]],
        float_format: Optional[str] = None,
    ) -> None:
        fmt = float_format or output_config.float_format
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(format_cell(v, fmt) for v in row))
        self.write_text("\n".join(lines) + "\n")

    def _write_atomic(self, text: str) -> None:
        target_dir = os.path.dirname(self.file_path) or "."
        os.makedirs(target_dir, exist_ok=True)
        prefix = f"{Path(self.file_path).name}."
        fd, tmp_path = tempfile.mkstemp(dir=target_dir, prefix=prefix, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_path, self.file_path)
        except Exception:
            if os.path.exists(tmp_path):
                try:
                    os.remove(tmp_path)
                except OSError:
                    pass
            raise
