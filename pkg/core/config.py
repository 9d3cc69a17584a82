"""
配置管理模块
Application settings (logging, execution, output). The numerical run and study
configuration lives in models/schemas.py.
"""

import os
import json
import logging
import logging.handlers
from typing import Dict, Any, Optional
from dataclasses import dataclass, asdict, field
from pathlib import Path

from dotenv import load_dotenv

from core.exceptions import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_FILE = "smagorinsky.json"


@dataclass
class LoggingConfig:
    """日志配置"""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file_path: Optional[str] = None
    max_file_size: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5


@dataclass
class ExecutionConfig:
    """执行配置"""
    threads: int = 1


@dataclass
class OutputConfig:
    """输出配置"""
    directory: str = "results"
    figures: bool = False


@dataclass
class AppConfig:
    """应用程序主配置"""
    environment: str = "development"  # development, production, testing
    version: str = "0.1.0"

    logging: LoggingConfig = field(default_factory=LoggingConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


class ConfigManager:
    """配置管理器: defaults, then the JSON settings file, then SMAG_* environment variables."""

    def __init__(self, config_file: Optional[str] = None, env_file: Optional[str] = None):
        load_dotenv(env_file, override=False)
        self.config_file = config_file or os.getenv("SMAG_SETTINGS_FILE", DEFAULT_SETTINGS_FILE)
        self._config: Optional[AppConfig] = None
        self._load_config()

    def _load_config(self):
        """加载配置"""
        self._config = AppConfig()
        if os.path.exists(self.config_file):
            try:
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    config_data = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                logger.error(f"配置加载失败: {e}")
                config_data = {}
            self._merge_config(config_data)
        self._load_from_env()
        logger.debug(f"配置加载完成，环境: {self._config.environment}")

    def _merge_config(self, config_data: Dict[str, Any]):
        """合并配置数据"""
        for key, value in config_data.items():
            if not hasattr(self._config, key):
                logger.warning(f"忽略未知配置项: {key}")
                continue
            if isinstance(value, dict):
                sub_config = getattr(self._config, key)
                for sub_key, sub_value in value.items():
                    if hasattr(sub_config, sub_key):
                        setattr(sub_config, sub_key, sub_value)
                    else:
                        logger.warning(f"忽略未知配置项: {key}.{sub_key}")
            else:
                setattr(self._config, key, value)

    def _load_from_env(self):
        """从环境变量加载配置"""
        if os.getenv("SMAG_ENVIRONMENT"):
            self._config.environment = os.getenv("SMAG_ENVIRONMENT")
        if os.getenv("SMAG_LOG_LEVEL"):
            self._config.logging.level = os.getenv("SMAG_LOG_LEVEL").upper()
        if "SMAG_LOG_FILE" in os.environ:
            self._config.logging.file_path = os.environ["SMAG_LOG_FILE"] or None
        if os.getenv("SMAG_OUTPUT_DIR"):
            self._config.output.directory = os.getenv("SMAG_OUTPUT_DIR")
        threads = os.getenv("SMAG_THREADS")
        if threads:
            try:
                value = int(threads)
            except ValueError:
                raise ConfigError(f"expected an integer, got '{threads}'", "SMAG_THREADS", "integer >= 1")
            if value < 1:
                raise ConfigError(f"expected at least 1 worker, got {value}", "SMAG_THREADS", "integer >= 1")
            self._config.execution.threads = value

    def reload(self):
        self._load_config()

    def save_config(self):
        """保存配置到文件"""
        with open(self.config_file, 'w', encoding='utf-8') as f:
            json.dump(asdict(self._config), f, indent=2, ensure_ascii=False)
        logger.info(f"配置已保存到 {self.config_file}")

    def get_config(self) -> AppConfig:
        """获取配置"""
        return self._config


# 全局配置管理器实例
config_manager = ConfigManager()


def get_config() -> AppConfig:
    """获取全局配置"""
    return config_manager.get_config()


def get_logging_config() -> LoggingConfig:
    """获取日志配置"""
    return config_manager.get_config().logging


def get_execution_config() -> ExecutionConfig:
    return config_manager.get_config().execution


def get_output_config() -> OutputConfig:
    return config_manager.get_config().output


def setup_logging(level: Optional[str] = None):
    """根据配置设置日志"""
    log_config = get_logging_config()
    handlers = [logging.StreamHandler()]
    if log_config.file_path:
        Path(log_config.file_path).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.handlers.RotatingFileHandler(
            log_config.file_path, maxBytes=log_config.max_file_size, backupCount=log_config.backup_count))

    logging.basicConfig(
        level=getattr(logging, (level or log_config.level).upper(), logging.INFO),
        format=log_config.format,
        handlers=handlers,
        force=True,
    )
    logger.debug("日志系统初始化完成")
