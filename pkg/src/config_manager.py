#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置文件管理器
加载 JSON 配置并与内置默认值合并，按 命令行参数 > 配置文件 > 默认值 解析每个配置项，
同时记录每一项的来源，供运行清单使用。
"""

import copy
import json
import os
from datetime import datetime
from typing import Any, Dict, Optional, Tuple

from errors import ConfigError


SOURCE_FLAG = "flag"
SOURCE_FILE = "file"
SOURCE_DEFAULT = "default"


class ConfigManager:
    """配置文件管理器类"""

    def __init__(self, config_file: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_file: 配置文件路径；为空时只使用默认配置
        """
        self.config_file = config_file
        self.file_config: Dict[str, Any] = {}
        self._load_config()

    def _load_config(self):
        """加载配置文件"""
        default_config = self._get_default_config()
        if self.config_file is None:
            self.config = default_config
            return
        if not os.path.exists(self.config_file):
            raise ConfigError(f"配置文件不存在: {self.config_file}")
        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                loaded_config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {self.config_file}: {e}") from e
        if not isinstance(loaded_config, dict):
            raise ConfigError("配置文件顶层必须是对象")

        self._check_unknown(default_config, loaded_config, "")
        self.file_config = copy.deepcopy(loaded_config)
        self.config = self._merge_config(default_config, loaded_config)
        print(f"✅ 配置文件加载成功: {self.config_file}")

    def _get_default_config(self) -> Dict[str, Any]:
        """获取默认配置"""
        return {
            "version": "1.0",
            "last_updated": "",
            "nerd": {
                "batch_size": 512,
                "steps": 5000,
                "learning_rate": 1e-4,
                "eps": 1e-10,
                "m_z": 16,
                "hidden": [256, 256],
                "seed": 0,
                "optimizer": "adam",
                "beta_estimator": "full_matrix",
                "eval_batches": 8,
                "tol": 1e-6,
                "log_every": 500,
                "warm_start": True,
                "activation": "leaky_relu",
                "output_activation": "identity",
            },
            "rcc": {
                "scheme": "orc",
                "num_candidates": 4096,
                "chunk_size": 1024,
                "seed": 0,
            },
            "ba": {
                "tol": 1e-9,
                "max_iter": 10000,
                "memory_budget": 256 * 2 ** 20,
            },
            "eval": {
                "max_eval_rows": 2048,
            },
            "io": {
                "write_xlsx": False,
            },
        }

    def _check_unknown(self, default_config: Dict[str, Any], current_config: Dict[str, Any],
                       prefix: str):
        """拒绝默认配置中不存在的键"""
        for key, value in current_config.items():
            path = f"{prefix}{key}"
            if key not in default_config:
                raise ConfigError(f"未知配置项: {path}")
            if isinstance(default_config[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"配置项 {path} 必须是对象")
                self._check_unknown(default_config[key], value, f"{path}.")

    def _merge_config(self, default_config: Dict[str, Any],
                      current_config: Dict[str, Any]) -> Dict[str, Any]:
        """合并配置，确保默认字段存在"""
        for key, value in default_config.items():
            if key not in current_config:
                current_config[key] = value
            elif isinstance(value, dict) and isinstance(current_config[key], dict):
                self._merge_config(value, current_config[key])
        return current_config

    def get_section(self, section: str) -> Dict[str, Any]:
        if section not in self.config or not isinstance(self.config[section], dict):
            raise ConfigError(f"未知配置节: {section}")
        return copy.deepcopy(self.config[section])

    def resolve(self, section: str,
                overrides: Optional[Dict[str, Any]] = None) -> Tuple[Dict[str, Any], Dict[str, str]]:
        """
        解析某一配置节

        Args:
            section: 配置节名称（nerd / rcc / ba / eval / io）
            overrides: 命令行给出的值；None 表示未指定

        Returns:
            Tuple[Dict, Dict]: (解析后的配置, 每一项的来源)
        """
        values = self.get_section(section)
        file_section = self.file_config.get(section, {})
        sources = {key: SOURCE_FILE if key in file_section else SOURCE_DEFAULT for key in values}
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in values:
                raise ConfigError(f"未知配置项: {section}.{key}")
            values[key] = value
            sources[key] = SOURCE_FLAG
        return values, sources

    def save_config(self, path: Optional[str] = None) -> bool:
        """保存当前配置（例如导出一份默认配置作为模板）"""
        target = path or self.config_file
        if target is None:
            raise ConfigError("未指定配置文件路径")
        payload = copy.deepcopy(self.config)
        payload["last_updated"] = datetime.now().isoformat()
        try:
            with open(target, 'w', encoding='utf-8') as f:
                json.dump(payload, f, ensure_ascii=False, indent=2)
            return True
        except OSError as e:
            print(f"❌ 保存配置文件失败: {e}")
            return False
