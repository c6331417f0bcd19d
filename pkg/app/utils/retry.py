# 文件路径: app/utils/retry.py
"""
重采样重试机制

使用 tenacity 库实现有界重试:
- 仅对可重试异常 (如随机扰动导致的单元反转) 重试
- 最大尝试次数限制
- 不等待 (纯计算, 重试之间没有外部资源需要恢复)
- 重试前记录 WARNING 日志
"""

import logging
from typing import Tuple, Type

from tenacity import (
    after_log,
    before_sleep_log,
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_none,
)

from app.core.exceptions import MeshInversionError

logger = logging.getLogger(__name__)


# ============================================================================
# 可重试的异常类型定义
# ============================================================================

RETRYABLE_EXCEPTIONS: Tuple[Type[Exception], ...] = (
    MeshInversionError,
)


# ============================================================================
# 重试配置
# ============================================================================

class RetryConfig:
    """重试配置"""
    MAX_ATTEMPTS: int = 10                   # 同一参数下最大采样次数


# ============================================================================
# 重试装饰器
# ============================================================================

def create_retry_decorator(
    max_attempts: int = RetryConfig.MAX_ATTEMPTS,
    retry_on: Tuple[Type[Exception], ...] = RETRYABLE_EXCEPTIONS,
):
    """
    创建重采样重试装饰器

    Args:
        max_attempts: 最大尝试次数 (含第一次)
        retry_on: 触发重试的异常类型

    Returns:
        tenacity retry 装饰器; 次数用尽后重新抛出最后一个异常
    """
    return retry(
        retry=retry_if_exception_type(retry_on),
        stop=stop_after_attempt(max_attempts),
        wait=wait_none(),
        before_sleep=before_sleep_log(logger, logging.WARNING),
        after=after_log(logger, logging.DEBUG),
        reraise=True,
    )


def is_retryable_error(error: Exception) -> bool:
    """判断异常是否可重试"""
    return isinstance(error, RETRYABLE_EXCEPTIONS)
