"""
Logging Utility
로깅 시스템
"""
import logging
import os
import sys
from typing import Optional


def setup_logger(
    name: str = "cate",
    level: Optional[str] = None,
    log_file: Optional[str] = None
) -> logging.Logger:
    """
    로거 설정

    src.* 모듈은 logging.getLogger(__name__) 를 사용하므로
    이름이 "src" 인 로거에도 같은 핸들러를 연결한다.

    Args:
        name: 로거 이름
        level: 로그 레벨 (DEBUG, INFO, WARNING, ERROR), 없으면 CATE_LOG_LEVEL 또는 INFO
        log_file: 로그 파일 경로 (선택적)

    Returns:
        설정된 로거 객체
    """
    level = (level or os.getenv("CATE_LOG_LEVEL") or "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "INFO"

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(formatter)

    logger = logging.getLogger(name)
    for target in (logger, logging.getLogger("src")):
        target.setLevel(getattr(logging, level))
        # 기존 핸들러 제거
        target.handlers.clear()
        for handler in handlers:
            target.addHandler(handler)
        target.propagate = False

    return logger
