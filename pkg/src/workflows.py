#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
工作流集成接口模块
为命令行提供统一的调用入口：每个工作流读取输入、调用算法模块、原子写出结果，
并返回 {'success', 'message', 'exit_code', 'outputs', ...} 形式的结果字典。
"""

import os
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

import blahut_arimoto
import data_io
import gaussian_oracle
import nerd
import rcc_codec
from errors import ConfigError, SaturationError, ToolkitError
from gaussian_oracle import GaussianSourceSpec


class RdWorkflows:
    """率失真工具包工作流集成接口类"""

    def __init__(self, verbose: bool = True, write_xlsx: bool = False):
        self.verbose = verbose
        self.write_xlsx = write_xlsx

    # ------------------------------------------------------------------
    # 公共工具
    # ------------------------------------------------------------------

    def _run(self, title: str, body: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
        """执行工作流并把异常转换为结果字典"""
        if self.verbose:
            print("=" * 60)
            print(f"🔄 {title}  ({datetime.now().strftime('%Y-%m-%d %H:%M:%S')})")
            print("=" * 60)
        try:
            result = body()
        except ToolkitError as e:
            print(f"❌ {title}失败: {e}")
            return {'success': False, 'message': str(e), 'exit_code': e.exit_code,
                    'error_type': type(e).__name__, 'outputs': []}
        except OSError as e:
            print(f"❌ {title}失败（文件读写）: {e}")
            return {'success': False, 'message': str(e), 'exit_code': 4,
                    'error_type': type(e).__name__, 'outputs': []}
        result.setdefault('success', True)
        result.setdefault('exit_code', 0)
        result.setdefault('message', f'{title}完成')
        if self.verbose:
            print(f"✅ {result['message']}")
        return result

    @staticmethod
    def load_spec(spec_path: Optional[str] = None, preset: Optional[str] = None,
                  dim: Optional[int] = None, mixing_seed: Optional[int] = None) -> GaussianSourceSpec:
        """从 JSON 文件或谱预设得到高斯源"""
        if spec_path:
            with open(spec_path, 'r', encoding='utf-8') as f:
                return GaussianSourceSpec.from_json(f.read())
        if preset:
            if not dim:
                raise ConfigError("使用 --preset 时必须给出 --dim")
            return gaussian_oracle.preset_spec(preset, int(dim), mixing_seed)
        raise ConfigError("需要 --spec 或 --preset 指定高斯源")

    def _export_xlsx(self, curves, out_path: str, outputs: List[str]):
        if self.write_xlsx:
            xlsx_path = os.path.splitext(out_path)[0] + ".xlsx"
            data_io.export_curves_xlsx(curves, xlsx_path)
            outputs.append(xlsx_path)

    @staticmethod
    def _marginal(checkpoint: Optional[str], spec: Optional[GaussianSourceSpec],
                  D: Optional[float], channel: str):
        """解析候选来源；返回 (marginal, 默认 beta, 默认 C, 缩放元数据)"""
        if checkpoint:
            model, metadata = data_io.load_checkpoint(checkpoint)
            return (rcc_codec.GeneratorMarginal(model), metadata.get("beta"),
                    metadata.get("rate_bits"), metadata.get("scale", {}))
        if spec is None or D is None:
            raise ConfigError("需要 --checkpoint，或 --spec/--preset 加 --d 指定候选来源")
        marginal = rcc_codec.GaussianMarginal(spec, D, channel)
        test_channel = marginal.channel
        return marginal, test_channel.slope, test_channel.mutual_information_bits(), {}

    @staticmethod
    def _rcc_config(rcc_settings: Dict[str, Any], beta: Optional[float], C: Optional[float]) -> rcc_codec.RccConfig:
        if beta is None or C is None:
            raise ConfigError("缺少 beta 或码率参数 C（检查点元数据中也未找到）")
        if not beta < 0:
            raise ConfigError(f"beta={beta} 不小于 0：该失真处码率为 0，无需 RCC 编码")
        return rcc_codec.RccConfig(beta=float(beta), C=max(0.0, float(C)),
                                   scheme=rcc_settings["scheme"],
                                   num_candidates=int(rcc_settings["num_candidates"]),
                                   seed=int(rcc_settings["seed"]),
                                   chunk_size=int(rcc_settings["chunk_size"]))

    # ------------------------------------------------------------------
    # 工作流
    # ------------------------------------------------------------------

    def run_oracle(self, spec: GaussianSourceSpec, D_list: Sequence[float], out: str) -> Dict[str, Any]:
        def body():
            curve = gaussian_oracle.oracle_curve(spec, D_list)
            data_io.write_curve(curve, out)
            outputs = [out]
            self._export_xlsx([curve], out, outputs)
            return {'message': f'真值曲线生成完成（{len(curve.points)} 个点）',
                    'outputs': outputs, 'points': len(curve.points)}
        return self._run("高斯真值曲线", body)

    def run_ba(self, data_path: str, out: str, ba_settings: Dict[str, Any],
               betas: Optional[Sequence[float]] = None,
               D_list: Optional[Sequence[float]] = None) -> Dict[str, Any]:
        def body():
            if not betas and not D_list:
                raise ConfigError("ba 需要 --betas 或 --d-targets")
            samples = data_io.load_samples(data_path)
            kwargs = dict(memory_budget=int(ba_settings["memory_budget"]), tol=float(ba_settings["tol"]),
                          max_iter=int(ba_settings["max_iter"]), verbose=self.verbose)
            if betas:
                curve = blahut_arimoto.ba_plugin_sweep(samples.values, betas, **kwargs)
            else:
                curve = blahut_arimoto.ba_plugin_targets(samples.values, D_list, **kwargs)
            data_io.write_curve(curve, out)
            outputs = [out]
            self._export_xlsx([curve], out, outputs)
            return {'message': f'plug-in BA 完成（n={samples.n}）', 'outputs': outputs,
                    'inputs': {data_path: samples.digest()}}
        return self._run("plug-in Blahut-Arimoto", body)

    def run_nerd_train(self, data_path: str, cfg: nerd.NerdConfig, out: str,
                       checkpoint: str) -> Dict[str, Any]:
        def body():
            samples = data_io.load_samples(data_path)
            result = nerd.train(samples, cfg, verbose=self.verbose)
            if result.eval_saturated:
                raise SaturationError(f"D={cfg.D_target:.6g} 处评估阶段 β 搜索饱和，报告值不可信；"
                                      "请增大 D 或训练步数")
            summary = result.to_dict(cfg)
            summary["distortion_original_units"] = samples.distortion_to_original(cfg.D_target)
            metadata = dict(summary, train_seed=cfg.seed, data_digest=samples.digest(),
                            scale={"offset": samples.offset, "factor": samples.factor})
            data_io.save_checkpoint(result.model, checkpoint, metadata)
            data_io.write_json(out, summary)
            return {'message': f"NERD 训练完成: R̂={summary['rate_bits']:.4f} bits",
                    'outputs': [checkpoint, out], 'result': summary,
                    'inputs': {data_path: samples.digest()}}
        return self._run("NERD 训练", body)

    def run_nerd_sweep(self, data_path: str, D_list: Sequence[float], cfg: nerd.NerdConfig,
                       out: str, jobs: int = 1) -> Dict[str, Any]:
        def body():
            samples = data_io.load_samples(data_path)
            curve = nerd.sweep(samples, D_list, cfg, jobs=jobs, verbose=self.verbose)
            data_io.write_curve(curve, out)
            points_path = os.path.splitext(out)[0] + ".points.json"
            data_io.write_json(points_path, {"points": curve.metadata["points"],
                                             "monotone_violations": curve.metadata["monotone_violations"]})
            outputs = [out, points_path]
            self._export_xlsx([curve], out, outputs)
            failed = sum(1 for p in curve.points if p.failed)
            message = f'NERD 扫描完成（{len(curve.points)} 个点，失败 {failed} 个）'
            return {'message': message, 'outputs': outputs, 'failed_points': failed,
                    'inputs': {data_path: samples.digest()}}
        return self._run("NERD 扫描", body)

    def run_rcc_encode(self, input_path: str, out: str, rcc_settings: Dict[str, Any],
                       checkpoint: Optional[str] = None, spec: Optional[GaussianSourceSpec] = None,
                       D: Optional[float] = None, channel: str = "optimal", row: int = 0,
                       beta: Optional[float] = None, C: Optional[float] = None) -> Dict[str, Any]:
        def body():
            samples = data_io.load_samples(input_path)
            if not 0 <= row < samples.n:
                raise ConfigError(f"--row {row} 超出样本范围 [0, {samples.n})")
            marginal, default_beta, default_C, _ = self._marginal(checkpoint, spec, D, channel)
            cfg = self._rcc_config(rcc_settings, default_beta if beta is None else beta,
                                   default_C if C is None else C)
            msg = rcc_codec.encode(samples.values[row], cfg, marginal)
            data_io.write_bytes_atomic(out, msg.to_bytes())
            return {'message': f'RCC 编码完成: {msg.bit_count} bits', 'outputs': [out],
                    'bit_count': msg.bit_count, 'inputs': {input_path: samples.digest()}}
        return self._run("RCC 编码", body)

    def run_rcc_decode(self, input_path: str, out: str, checkpoint: Optional[str] = None,
                       spec: Optional[GaussianSourceSpec] = None, D: Optional[float] = None,
                       channel: str = "optimal", chunk_size: int = rcc_codec.DEFAULT_CHUNK) -> Dict[str, Any]:
        def body():
            with open(input_path, 'rb') as f:
                msg = rcc_codec.CompressedMessage.from_bytes(f.read())
            marginal, _, _, scale = self._marginal(checkpoint, spec, D, channel)
            y = rcc_codec.decode(msg, marginal, chunk_size)
            samples = data_io.SampleMatrix(y.reshape(1, -1), offset=scale.get("offset", 0.0),
                                           factor=scale.get("factor", 1.0))
            data_io.save_vectors(out, samples)
            return {'message': 'RCC 解码完成', 'outputs': [out]}
        return self._run("RCC 解码", body)

    def run_rcc_eval(self, input_path: str, out: str, rcc_settings: Dict[str, Any],
                     checkpoint: Optional[str] = None, spec: Optional[GaussianSourceSpec] = None,
                     D: Optional[float] = None, channel: str = "optimal", limit: Optional[int] = None,
                     beta: Optional[float] = None, C: Optional[float] = None) -> Dict[str, Any]:
        def body():
            samples = data_io.load_samples(input_path)
            marginal, default_beta, default_C, _ = self._marginal(checkpoint, spec, D, channel)
            cfg = self._rcc_config(rcc_settings, default_beta if beta is None else beta,
                                   default_C if C is None else C)
            test_x = samples.values if limit is None else samples.values[:limit]
            evaluation = rcc_codec.rate_distortion_eval(test_x, cfg, marginal, verbose=self.verbose)
            payload = evaluation.to_dict()
            payload.update({"scheme": cfg.scheme, "num_candidates": cfg.num_candidates,
                            "beta": cfg.beta, "C": cfg.C,
                            "mean_distortion_original_units":
                                samples.distortion_to_original(evaluation.mean_distortion)})
            data_io.write_json(out, payload)
            return {'message': f"RCC 评估完成: R={payload['mean_rate_bits']:.4f} bits, "
                               f"D={payload['mean_distortion']:.6g}",
                    'outputs': [out], 'result': payload, 'inputs': {input_path: samples.digest()}}
        return self._run("RCC 码率-失真评估", body)

    def run_gen_gaussian(self, spec: GaussianSourceSpec, n: int, seed: int, out: str) -> Dict[str, Any]:
        def body():
            samples = data_io.gen_gaussian(spec, n, seed)
            data_io.save_vectors(out, samples)
            return {'message': f'已生成 {n} 个 {spec.dim} 维高斯样本', 'outputs': [out],
                    'sample_mean_norm': float(np.linalg.norm(samples.values.mean(axis=0))) if n else 0.0}
        return self._run("生成高斯样本", body)
