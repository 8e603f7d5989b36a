#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
对偶目标数值模块测试
"""

import math
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from errors import ShapeError
from rd_dual import (HAMMING, SQUARED_ERROR, DualSolution, distortion_matrix, dual_rate,
                     inner_objective, optimize_dual, solve_beta, stationary_distortion)


SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def _h2(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_distortion_matrix_examples():
    np.testing.assert_array_equal(distortion_matrix([[1.0, 2.0]], [[1.0, 2.0]]), [[0.0]])
    np.testing.assert_array_equal(distortion_matrix([[0.0, 0.0]], [[3.0, 4.0]]), [[25.0]])

    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    expected = np.zeros((4, 5))
    for i in range(4):
        for j in range(5):
            expected[i, j] = sum((x[i, c] - y[j, c]) ** 2 for c in range(3))
    np.testing.assert_allclose(distortion_matrix(x, y, SQUARED_ERROR), expected, rtol=1e-14)


def test_distortion_matrix_dimension_mismatch():
    try:
        distortion_matrix(np.zeros((2, 3)), np.zeros((2, 4)))
        assert False
    except ShapeError:
        pass


def test_hamming_kernel():
    assert HAMMING([0, 1, 1], [0, 0, 1]) == 1.0
    assert HAMMING([1, 1], [1, 1]) == 0.0


def test_inner_objective_examples():
    rng = np.random.default_rng(1)
    dist = rng.uniform(0, 3, size=(5, 6))
    assert inner_objective(0.7, 0.0, dist, 0.0) == 0.0
    c = 1.7
    assert math.isclose(inner_objective(0.4, -2.0, np.full((3, 4), c)), -2.0 * (0.4 - c), rel_tol=1e-12)
    expected = -0.25 - math.log((1 + math.exp(-1)) / 2)
    assert math.isclose(inner_objective(0.25, -1.0, SWAP), expected, rel_tol=1e-12)
    assert math.isclose(expected, 0.129885, abs_tol=1e-6)


def test_inner_objective_stays_finite_at_extreme_beta():
    value = inner_objective(0.01, -1e4, np.full((2, 2), 1.0))
    assert math.isfinite(value)
    assert math.isclose(value, -1e4 * (0.01 - 1.0), rel_tol=1e-12)


def test_stationary_distortion_examples():
    rng = np.random.default_rng(2)
    dist = rng.uniform(0, 3, size=(4, 7))
    assert math.isclose(stationary_distortion(0.0, dist), dist.mean(), rel_tol=1e-12)
    assert stationary_distortion(-1e6, np.array([[0.0, 1.0]])) < 1e-12
    expected = math.exp(-1) / (1 + math.exp(-1))
    assert math.isclose(stationary_distortion(-1.0, SWAP), expected, rel_tol=1e-12)


def test_stationary_distortion_monotone_in_beta():
    rng = np.random.default_rng(3)
    for _ in range(20):
        dist = rng.uniform(0, 5, size=(6, 9))
        values = [stationary_distortion(b, dist) for b in np.linspace(-20, 0, 81)]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_paper_diagonal_estimator():
    rng = np.random.default_rng(4)
    dist = rng.uniform(0, 2, size=(5, 5))
    assert math.isclose(stationary_distortion(0.0, dist, "paper_diagonal"), np.diag(dist).mean(),
                        rel_tol=1e-12)
    try:
        stationary_distortion(-1.0, np.zeros((2, 3)), "paper_diagonal")
        assert False
    except ShapeError:
        pass


def test_solve_beta_examples():
    rng = np.random.default_rng(5)
    dist = rng.uniform(0, 2, size=(4, 4))
    zero = solve_beta(dist.mean() + 0.1, dist)
    assert zero.beta == 0.0 and not zero.saturated

    target = math.exp(-1) / (1 + math.exp(-1))
    solved = solve_beta(target, SWAP, tol=1e-9)
    assert abs(solved.beta + 1.0) < 1e-6

    solved = solve_beta(0.1, SWAP, tol=1e-9, beta_min=-50.0)
    grid = np.linspace(-50.0, 0.0, 5001)
    best = grid[np.argmin([abs(stationary_distortion(b, SWAP) - 0.1) for b in grid])]
    assert abs(solved.beta - best) <= grid[1] - grid[0]
    assert math.isclose(solved.beta, math.log(1 / 9), abs_tol=1e-6)


def test_solve_beta_reports_saturation():
    dist = np.array([[1.0, 1.0], [1.0, 1.0]])
    solved = solve_beta(0.5, dist, beta_min=-10.0, warn=False)
    assert solved.saturated
    assert solved.beta == -10.0


def test_solve_beta_rejects_bad_arguments():
    for kwargs in ({"D_target": 0.0, "dist": SWAP}, {"D_target": 0.1, "dist": SWAP, "tol": 0.0}):
        try:
            solve_beta(**kwargs)
            assert False
        except ShapeError:
            pass


def test_dual_rate_examples():
    assert dual_rate(0.0, 0.3, SWAP) == 0.0
    target = math.exp(-1) / (1 + math.exp(-1))
    expected = inner_objective(target, -1.0, SWAP) / math.log(2)
    assert math.isclose(dual_rate(-1.0, target, SWAP), expected, rel_tol=1e-12)

    solution = optimize_dual(0.1, SWAP, eps=0.0, tol=1e-10)
    assert abs(solution.rate_bits - (1 - _h2(0.1))) < 1e-6


def test_binary_hamming_matches_closed_form():
    dist = distortion_matrix([[0.0], [1.0]], [[0.0], [1.0]], HAMMING)
    for D in (0.05, 0.1, 0.2, 0.3):
        solution = optimize_dual(D, dist, eps=0.0, tol=1e-11)
        assert abs(solution.rate_bits - (1 - _h2(D))) < 1e-5


def test_solved_beta_maximizes_objective():
    rng = np.random.default_rng(6)
    dist = rng.uniform(0, 4, size=(8, 8))
    D = 0.5 * dist.mean()
    best = solve_beta(D, dist, tol=1e-12)
    rate = dual_rate(best.beta, D, dist)
    for beta in np.linspace(-20, 0, 201):
        assert dual_rate(beta, D, dist) <= rate + 1e-9


def test_objective_concave_in_beta():
    rng = np.random.default_rng(7)
    for _ in range(50):
        dist = rng.uniform(0, 3, size=(5, 6))
        D = rng.uniform(0, 3)
        a, b = -rng.uniform(0, 10), -rng.uniform(0, 10)
        mid = inner_objective(D, 0.5 * (a + b), dist)
        assert mid >= 0.5 * (inner_objective(D, a, dist) + inner_objective(D, b, dist)) - 1e-12


def test_rate_zero_above_max_entry_and_eps_never_increases():
    rng = np.random.default_rng(8)
    dist = rng.uniform(0, 2, size=(6, 6))
    assert optimize_dual(dist.max(), dist).rate_bits == 0.0
    D = 0.3 * dist.mean()
    beta = solve_beta(D, dist).beta
    assert dual_rate(beta, D, dist, 1e-3) <= dual_rate(beta, D, dist, 0.0)


def test_dual_solution_invariants():
    DualSolution(-1.0, 0.5, 0.2)
    for args in ((0.5, 0.0, 0.1), (-1.0, -0.1, 0.1), (0.0, 0.2, 0.1)):
        try:
            DualSolution(*args)
            assert False
        except ShapeError:
            pass


if __name__ == "__main__":
    for name, func in list(globals().items()):
        if name.startswith("test_") and callable(func):
            func()
            print(f"✅ {name}")
