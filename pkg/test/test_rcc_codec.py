#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
反向信道编码测试
"""

import math
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

import rcc_codec
from errors import DataFormatError, DigestMismatchError, ShapeError
from gaussian_oracle import GaussianSourceSpec, preset_spec
from rcc_codec import CompressedMessage, GaussianMarginal, RccConfig


def _marginal(D=1.0, dim=3, channel="optimal"):
    return GaussianMarginal(preset_spec("nerd", dim), D, channel)


def _config(marginal, **kwargs):
    channel = marginal.channel
    params = dict(beta=channel.slope, C=channel.mutual_information_bits(), num_candidates=256)
    params.update(kwargs)
    return RccConfig(**params)


def test_cumulative_weights_examples():
    x = np.array([0.5, 1.0, 0.2])
    assert np.allclose(rcc_codec.cumulative_weights("pfr", 3, exponentials=x), [0.5, 1.5, 1.7])
    assert np.allclose(rcc_codec.cumulative_weights("orc", 3, exponentials=x), [0.5, 2.0, 2.6])


def test_single_candidate_weights():
    for scheme in rcc_codec.SCHEMES:
        W = rcc_codec.cumulative_weights(scheme, 1, exponentials=np.array([0.7]))
        assert np.allclose(W, [0.7])


def test_weights_strictly_increasing():
    rng = np.random.default_rng(0)
    for scheme in rcc_codec.SCHEMES:
        W = rcc_codec.cumulative_weights(scheme, 1000, rng)
        assert np.all(np.diff(W) > 0)
        assert W[0] > 0


def test_pfr_weight_growth():
    rng = np.random.default_rng(1)
    N = 4000
    W = rcc_codec.cumulative_weights("pfr", N, rng)
    assert abs(W[-1] / N - 1.0) < 0.1


def test_weight_argument_errors():
    for kwargs in ({"scheme": "xyz", "N": 3, "exponentials": np.ones(3)},
                   {"scheme": "pfr", "N": 0, "exponentials": np.ones(0)},
                   {"scheme": "pfr", "N": 3},
                   {"scheme": "orc", "N": 3, "exponentials": np.ones(2)}):
        try:
            rcc_codec.cumulative_weights(**kwargs)
            assert False, kwargs
        except ShapeError:
            pass


def test_select_nearest_when_beta_very_negative():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(4)
    candidates = rng.standard_normal((50, 4))
    W = rcc_codec.cumulative_weights("pfr", 50, rng)
    nearest = int(np.argmin(np.sum((candidates - x) ** 2, axis=1))) + 1
    assert rcc_codec.select_index(x, candidates, W, -1e12) == nearest


def test_identical_candidates_pick_first():
    x = np.array([1.0, -1.0])
    candidates = np.tile([0.3, 0.2], (10, 1))
    W = rcc_codec.cumulative_weights("orc", 10, np.random.default_rng(3))
    assert rcc_codec.select_index(x, candidates, W, -2.0) == 1


def test_selection_invariant_to_weight_scaling():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.standard_normal(3)
        candidates = rng.standard_normal((64, 3))
        W = rcc_codec.cumulative_weights("pfr", 64, rng)
        beta = -rng.uniform(0.1, 5.0)
        assert rcc_codec.select_index(x, candidates, W, beta) == \
            rcc_codec.select_index(x, candidates, 7.5 * W, beta)


def test_selection_matches_density_ratio_rule():
    # 最优高斯信道上 log 密度比关于 d 线性，斜率为 β*
    marginal = _marginal(D=1.0, dim=3)
    channel = marginal.channel
    rng = np.random.default_rng(5)
    for _ in range(200):
        x = rng.standard_normal(3) * 2.0
        candidates = channel.sample_marginal(rng, 64)
        W = rcc_codec.cumulative_weights("pfr", 64, rng)
        by_ratio = int(np.argmax(channel.log_density_ratio(x, candidates) - np.log(W))) + 1
        assert rcc_codec.select_index(x, candidates, W, channel.slope) == by_ratio


def test_config_validation():
    for kwargs in ({"beta": 0.0, "C": 1.0}, {"beta": -1.0, "C": -0.5},
                   {"beta": -1.0, "C": 1.0, "scheme": "abc"},
                   {"beta": -1.0, "C": 1.0, "num_candidates": 0},
                   {"beta": -1.0, "C": 1.0, "chunk_size": 0},
                   {"beta": -1.0, "C": 1.0, "seed": -1}):
        try:
            RccConfig(**kwargs)
            assert False, kwargs
        except ShapeError:
            pass


def test_encode_decode_round_trip():
    marginal = _marginal()
    rng = np.random.default_rng(6)
    for scheme in rcc_codec.SCHEMES:
        for seed in range(5):
            cfg = _config(marginal, scheme=scheme, seed=seed, chunk_size=100)
            x = rng.standard_normal(3) * 2.0
            msg, K, y_K = rcc_codec._encode(x, cfg, marginal)
            restored = CompressedMessage.from_bytes(msg.to_bytes())
            assert rcc_codec.decode_index(restored) == K
            # 块大小不影响候选序列
            assert np.array_equal(rcc_codec.decode(restored, marginal, chunk_size=7), y_K)


def test_single_candidate_message():
    marginal = _marginal()
    cfg = _config(marginal, num_candidates=1)
    msg = rcc_codec.encode(np.zeros(3), cfg, marginal)
    assert msg.bit_count == 1
    assert rcc_codec.decode_index(msg) == 1


def test_message_layout():
    marginal = _marginal()
    cfg = _config(marginal, seed=12345)
    raw = rcc_codec.encode(np.ones(3), cfg, marginal).to_bytes()
    assert rcc_codec.MESSAGE_HEADER.size == 70
    assert raw[:4] == b"NRCC"
    assert raw[4] == 1
    assert raw[5] == rcc_codec.SCHEMES.index("orc")
    msg = CompressedMessage.from_bytes(raw)
    assert msg.seed == 12345
    assert msg.num_candidates == 256
    assert msg.digest == marginal.digest()
    assert len(raw) == 70 + (msg.bit_count + 7) // 8


def test_corrupted_messages_rejected():
    marginal = _marginal()
    raw = rcc_codec.encode(np.ones(3), _config(marginal), marginal).to_bytes()
    bad_magic = b"XRCC" + raw[4:]
    bad_version = raw[:4] + bytes([9]) + raw[5:]
    bad_scheme = raw[:5] + bytes([7]) + raw[6:]
    for corrupted in (raw[:40], bad_magic, bad_version, bad_scheme, raw + b"\x00"):
        try:
            CompressedMessage.from_bytes(corrupted)
            assert False
        except DataFormatError:
            pass


def test_decode_rejects_other_marginal():
    marginal = _marginal(D=1.0)
    msg = rcc_codec.encode(np.ones(3), _config(marginal), marginal)
    try:
        rcc_codec.decode(msg, _marginal(D=1.5))
        assert False
    except DigestMismatchError:
        pass


def test_derived_seeds_distinct():
    seeds = {rcc_codec.derive_seed(0, i) for i in range(100)}
    assert len(seeds) == 100
    assert rcc_codec.derive_seed(3, 5) == rcc_codec.derive_seed(3, 5)


def test_rate_distortion_eval_summary():
    marginal = _marginal(D=1.0)
    cfg = _config(marginal, num_candidates=512)
    rng = np.random.default_rng(7)
    test_x = rng.standard_normal((40, 3)) * 2.0
    evaluation = rcc_codec.rate_distortion_eval(test_x, cfg, marginal, head=4)
    assert evaluation.n == 40
    assert sum(evaluation.index_head) <= 40
    assert math.isclose(evaluation.p_first, evaluation.index_head[0] / 40)
    assert evaluation.rate_bound_bits == rcc_codec.one_shot_rate_bound(cfg.C)
    assert evaluation.mean_rate_bits >= 1.0
    assert evaluation.mean_distortion > 0
    assert set(evaluation.to_dict()) == {"mean_rate_bits", "mean_distortion", "rate_bound_bits",
                                         "p_first", "index_head", "n"}


def test_first_index_most_frequent_for_both_schemes():
    spec = GaussianSourceSpec(np.array([1.0]))
    marginal = GaussianMarginal(spec, 0.25)
    test_x = np.random.default_rng(8).standard_normal((400, 1))
    rates = {}
    for scheme in rcc_codec.SCHEMES:
        cfg = _config(marginal, scheme=scheme, num_candidates=512, seed=21)
        evaluation = rcc_codec.rate_distortion_eval(test_x, cfg, marginal, head=8)
        assert evaluation.p_first == max(evaluation.index_head) / 400, evaluation.index_head
        assert evaluation.index_head[0] > evaluation.index_head[1]
        rates[scheme] = evaluation.mean_rate_bits
    # 同一组种子下两种方案码率相当
    assert abs(rates["orc"] - rates["pfr"]) <= 0.5, rates


def test_orc_weights_dominate_pfr_on_average():
    N, trials = 16, 2000
    rng = np.random.default_rng(9)
    pfr = np.mean([rcc_codec.cumulative_weights("pfr", N, rng=rng) for _ in range(trials)], axis=0)
    orc = np.mean([rcc_codec.cumulative_weights("orc", N, rng=rng) for _ in range(trials)], axis=0)
    assert np.all(orc[N // 2:N - 1] > pfr[N // 2:N - 1])
    shared = rng.standard_exponential(N)
    same_pfr = rcc_codec.cumulative_weights("pfr", N, exponentials=shared)
    same_orc = rcc_codec.cumulative_weights("orc", N, exponentials=shared)
    assert same_orc[0] == same_pfr[0]
    assert np.all(same_orc[1:] > same_pfr[1:])


def test_one_shot_rate_bound_values():
    assert rcc_codec.one_shot_rate_bound(0.0) == 5.0
    assert math.isclose(rcc_codec.one_shot_rate_bound(3.0), 10.0)


if __name__ == "__main__":
    for name, func in list(globals().items()):
        if name.startswith("test_") and callable(func):
            func()
            print(f"✅ {name}")
