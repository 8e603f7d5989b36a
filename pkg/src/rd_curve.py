#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
率失真曲线数据结构
oracle / NERD / BA 三种来源共用的 (D, R) 点列
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd


CSV_COLUMNS = ["distortion", "rate_bits", "provenance", "n", "params_digest"]


@dataclass
class RdPoint:
    """曲线上的一个点；失败的点 rate_bits 为 NaN"""

    distortion: float
    rate_bits: float
    provenance: str
    n: int = 0
    params_digest: str = ""
    beta: Optional[float] = None
    failed: bool = False


@dataclass
class RdCurve:
    """按失真排序的 (D, R) 点列"""

    provenance: str
    points: List[RdPoint] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def add(self, distortion: float, rate_bits: float, n: int = 0, params_digest: str = "",
            beta: Optional[float] = None, failed: bool = False) -> RdPoint:
        point = RdPoint(float(distortion), float(rate_bits), self.provenance, int(n),
                        params_digest, beta, failed)
        self.points.append(point)
        return point

    def sorted(self) -> "RdCurve":
        ordered = sorted(self.points, key=lambda p: p.distortion)
        return RdCurve(self.provenance, ordered, dict(self.metadata))

    @property
    def distortions(self) -> List[float]:
        return [p.distortion for p in self.points]

    @property
    def rates(self) -> List[float]:
        return [p.rate_bits for p in self.points]

    def monotone_violations(self, slack: float = 0.0) -> List[int]:
        """排序后码率随失真上升超过 slack 的位置"""
        ordered = [p for p in self.sorted().points if not math.isnan(p.rate_bits)]
        return [i for i in range(1, len(ordered))
                if ordered[i].rate_bits > ordered[i - 1].rate_bits + slack]

    def to_frame(self) -> pd.DataFrame:
        rows = [{
            "distortion": p.distortion,
            "rate_bits": p.rate_bits,
            "provenance": p.provenance,
            "n": p.n,
            "params_digest": p.params_digest,
        } for p in self.sorted().points]
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, provenance: Optional[str] = None) -> "RdCurve":
        if provenance is None:
            provenance = str(frame["provenance"].iloc[0]) if len(frame) else "unknown"
        curve = cls(provenance)
        for row in frame.itertuples(index=False):
            rate = float(row.rate_bits)
            digest = "" if pd.isna(row.params_digest) else str(row.params_digest)
            point = RdPoint(float(row.distortion), rate, str(row.provenance), int(row.n),
                            digest, None, math.isnan(rate))
            curve.points.append(point)
        return curve


def params_digest(params: Dict[str, Any]) -> str:
    """配置字典的短摘要（16 位十六进制）"""
    payload = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
