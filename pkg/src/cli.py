#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行入口
子命令: oracle / ba / nerd train|sweep / rcc encode|decode|eval / gen-gaussian
每次成功运行都会在输出旁写出 <out>.manifest.json 运行清单。
退出码: 0 成功，2 配置错误，3 数值失败，4 文件读写错误。
"""

import argparse
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import data_io
from config_manager import ConfigManager
from errors import ToolkitError
from nerd import NerdConfig
from workflows import RdWorkflows


TOOLKIT_VERSION = "1.0.0"
ESTIMATOR_FLAGS = {"full": "full_matrix", "paper": "paper_diagonal"}


@dataclass
class RunManifest:
    """复现一次运行所需的全部信息"""

    subcommand: str
    argv: List[str]
    config: Dict[str, Any]
    config_sources: Dict[str, Dict[str, str]]
    seeds: Dict[str, Any]
    inputs: Dict[str, str]
    outputs: List[str]
    started_at: str
    wall_clock_seconds: float
    toolkit_version: str = TOOLKIT_VERSION
    result: Dict[str, Any] = field(default_factory=dict)

    def save(self, out: str) -> str:
        path = f"{out}.manifest.json"
        data_io.write_json(path, asdict(self))
        return path


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--out", required=True, help="输出文件路径")
    parser.add_argument("--config", help="JSON 配置文件（命令行参数优先）")
    parser.add_argument("--quiet", action="store_true", help="只打印警告与错误")


def _add_source(parser: argparse.ArgumentParser):
    parser.add_argument("--spec", help="高斯源 JSON（variances, mixing）")
    parser.add_argument("--preset", choices=["nerd", "rcc"], help="谱预设: nerd σ²=4e^{-k/16}, rcc σ²=4e^{-k²/16}")
    parser.add_argument("--dim", type=int, help="预设的维度 m")
    parser.add_argument("--mixing-seed", type=int, help="随机正交混合矩阵的种子（缺省不混合）")


def _add_nerd_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--data", required=True, help="样本文件（NVEC 或 IDX）")
    parser.add_argument("--seed", type=int, help="训练种子")
    parser.add_argument("--eps", type=float, help="稳定项 ε")
    parser.add_argument("--beta-estimator", choices=sorted(ESTIMATOR_FLAGS), help="训练时 β 的驻点估计方式")
    parser.add_argument("--steps", type=int, help="训练步数 T")
    parser.add_argument("--batch-size", type=int, help="批大小 B")
    parser.add_argument("--learning-rate", type=float, help="学习率 η")


def _add_rcc_flags(parser: argparse.ArgumentParser, encoding: bool = True):
    parser.add_argument("--input", required=True, help="输入文件")
    parser.add_argument("--checkpoint", help="NERD 检查点（生成器边缘分布）")
    _add_source(parser)
    parser.add_argument("--d", type=float, help="高斯边缘分布的设计失真 D")
    parser.add_argument("--channel", choices=["optimal", "additive"], default="optimal", help="闭式高斯信道形式")
    if encoding:
        parser.add_argument("--scheme", choices=["pfr", "orc"], help="候选权重方案")
        parser.add_argument("--num-candidates", type=int, help="候选数 N")
        parser.add_argument("--seed", type=int, help="共享随机性种子")
        parser.add_argument("--beta", type=float, help="覆盖斜率 β̃ (< 0)")
        parser.add_argument("--rate-param", type=float, help="覆盖 Zipf 码率参数 C（bits）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nerd-rcc", description="神经率失真估计与反向信道编码工具包")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="高斯源 R(D) 真值曲线")
    _add_common(p)
    _add_source(p)
    p.add_argument("--d-targets", type=float, nargs="+", required=True, help="失真网格")

    p = sub.add_parser("ba", help="plug-in Blahut-Arimoto 基线")
    _add_common(p)
    p.add_argument("--data", required=True, help="样本文件（NVEC 或 IDX）")
    p.add_argument("--betas", type=float, nargs="+", help="BA 斜率列表（β ≥ 0）")
    p.add_argument("--d-targets", type=float, nargs="+", help="失真目标（与 --betas 二选一）")
    p.add_argument("--memory-budget", type=int, help="失真矩阵内存上限（字节）")

    p = sub.add_parser("nerd", help="NERD 估计")
    nerd_sub = p.add_subparsers(dest="action", required=True)
    t = nerd_sub.add_parser("train", help="在单个失真目标上训练")
    _add_common(t)
    _add_nerd_flags(t)
    t.add_argument("--d-targets", type=float, nargs=1, required=True, help="失真目标 D")
    t.add_argument("--checkpoint", help="检查点输出路径（缺省为 <out>.ckpt）")
    s = nerd_sub.add_parser("sweep", help="多个失真目标扫描")
    _add_common(s)
    _add_nerd_flags(s)
    s.add_argument("--d-targets", type=float, nargs="+", required=True, help="失真目标列表")
    s.add_argument("--jobs", type=int, default=1, help="并行进程数")

    p = sub.add_parser("rcc", help="反向信道编码")
    rcc_sub = p.add_subparsers(dest="action", required=True)
    e = rcc_sub.add_parser("encode", help="编码单个样本为 .nrcc")
    _add_common(e)
    _add_rcc_flags(e)
    e.add_argument("--row", type=int, default=0, help="要编码的样本行号")
    d = rcc_sub.add_parser("decode", help="解码 .nrcc 为重建向量文件")
    _add_common(d)
    _add_rcc_flags(d, encoding=False)
    v = rcc_sub.add_parser("eval", help="测试集上的平均码率与失真")
    _add_common(v)
    _add_rcc_flags(v)
    v.add_argument("--limit", type=int, help="最多评估的样本数")

    p = sub.add_parser("gen-gaussian", help="生成高斯样本文件")
    _add_common(p)
    _add_source(p)
    p.add_argument("--num-samples", type=int, required=True, help="样本数 n")
    p.add_argument("--seed", type=int, default=0, help="随机种子")
    return parser


def _nerd_config(args, manager: ConfigManager, D_target: float, record: Dict[str, Any]) -> NerdConfig:
    overrides = {
        "seed": args.seed,
        "eps": args.eps,
        "beta_estimator": ESTIMATOR_FLAGS.get(args.beta_estimator) if args.beta_estimator else None,
        "steps": args.steps,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
    }
    values, sources = manager.resolve("nerd", overrides)
    eval_values, eval_sources = manager.resolve("eval")
    record["config"].update({"nerd": values, "eval": eval_values})
    record["config_sources"].update({"nerd": sources, "eval": eval_sources})
    record["seeds"]["nerd"] = values["seed"]
    return NerdConfig(D_target=float(D_target), max_eval_rows=int(eval_values["max_eval_rows"]), **values)


def _rcc_settings(args, manager: ConfigManager, record: Dict[str, Any]) -> Dict[str, Any]:
    values, sources = manager.resolve("rcc", {
        "scheme": getattr(args, "scheme", None),
        "num_candidates": getattr(args, "num_candidates", None),
        "seed": getattr(args, "seed", None),
    })
    record["config"]["rcc"] = values
    record["config_sources"]["rcc"] = sources
    record["seeds"]["rcc"] = values["seed"]
    return values


def _spec_or_none(args, workflows: RdWorkflows):
    if args.spec or args.preset:
        return workflows.load_spec(args.spec, args.preset, args.dim, args.mixing_seed)
    return None


def _dispatch(args, manager: ConfigManager, workflows: RdWorkflows, record: Dict[str, Any]) -> Dict[str, Any]:
    command = args.command
    if command == "oracle":
        spec = workflows.load_spec(args.spec, args.preset, args.dim, args.mixing_seed)
        record["config"]["spec"] = spec.to_dict()
        return workflows.run_oracle(spec, args.d_targets, args.out)

    if command == "ba":
        values, sources = manager.resolve("ba", {"memory_budget": args.memory_budget})
        record["config"]["ba"] = values
        record["config_sources"]["ba"] = sources
        return workflows.run_ba(args.data, args.out, values, betas=args.betas, D_list=args.d_targets)

    if command == "nerd":
        if args.action == "train":
            cfg = _nerd_config(args, manager, args.d_targets[0], record)
            checkpoint = args.checkpoint or f"{args.out}.ckpt"
            return workflows.run_nerd_train(args.data, cfg, args.out, checkpoint)
        cfg = _nerd_config(args, manager, max(args.d_targets), record)
        record["config"]["jobs"] = args.jobs
        return workflows.run_nerd_sweep(args.data, args.d_targets, cfg, args.out, jobs=args.jobs)

    if command == "rcc":
        spec = _spec_or_none(args, workflows)
        if spec is not None:
            record["config"]["spec"] = spec.to_dict()
        source = dict(checkpoint=args.checkpoint, spec=spec, D=args.d, channel=args.channel)
        if args.action == "decode":
            values, _ = manager.resolve("rcc")
            return workflows.run_rcc_decode(args.input, args.out, chunk_size=int(values["chunk_size"]), **source)
        settings = _rcc_settings(args, manager, record)
        if args.action == "encode":
            return workflows.run_rcc_encode(args.input, args.out, settings, row=args.row,
                                            beta=args.beta, C=args.rate_param, **source)
        return workflows.run_rcc_eval(args.input, args.out, settings, limit=args.limit,
                                      beta=args.beta, C=args.rate_param, **source)

    spec = workflows.load_spec(args.spec, args.preset, args.dim, args.mixing_seed)
    record["config"]["spec"] = spec.to_dict()
    record["seeds"]["gen_gaussian"] = args.seed
    return workflows.run_gen_gaussian(spec, args.num_samples, args.seed, args.out)


def main(argv: Optional[List[str]] = None) -> int:
    """命令行主函数，返回退出码"""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    started = time.time()
    started_at = datetime.now().isoformat()
    record: Dict[str, Any] = {"config": {}, "config_sources": {}, "seeds": {}}
    subcommand = args.command + (f" {args.action}" if getattr(args, "action", None) else "")

    try:
        manager = ConfigManager(args.config)
        io_values, io_sources = manager.resolve("io")
        record["config"]["io"] = io_values
        record["config_sources"]["io"] = io_sources
        workflows = RdWorkflows(verbose=not args.quiet, write_xlsx=bool(io_values["write_xlsx"]))
        result = _dispatch(args, manager, workflows, record)
    except ToolkitError as e:
        print(f"❌ {e}")
        return e.exit_code
    except OSError as e:
        print(f"❌ 文件读写失败: {e}")
        return 4

    if not result['success']:
        return int(result['exit_code'])

    manifest = RunManifest(
        subcommand=subcommand,
        argv=argv,
        config=record["config"],
        config_sources=record["config_sources"],
        seeds=record["seeds"],
        inputs=result.get('inputs', {}),
        outputs=list(result.get('outputs', [])),
        started_at=started_at,
        wall_clock_seconds=round(time.time() - started, 3),
        result=result.get('result', {}),
    )
    manifest.save(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
