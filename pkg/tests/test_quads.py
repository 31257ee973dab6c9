"""Quadrilateral constructions, feature extraction, Beta-Bernoulli kernels,
oddball trials, rasterization."""

import itertools
import math

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from genscl import quads
from genscl.errors import ConstructionFailureError
from genscl.quads import (
    CATEGORY_NAMES,
    EDGE_PAIRS,
    BetaBernoulliParams,
    ExtractionTolerances,
    Quadrilateral,
    apply_transform,
    canonicalize,
    category,
    extract_features,
    expected_feature_bits,
    feature_sq_distance,
    generate_exemplar,
    make_oddball_trial,
    rasterize_quad,
    shape_log_gen_sim_general,
    shape_log_gen_sim_limit,
)

# The 55 regularity integers, most regular to least.
TABLE = {
    "square": (4, 2, 4, 4, 4),
    "rectangle": (4, 2, 2, 2, 4),
    "losange": (0, 0, 2, 4, 2),
    "parallelogram": (0, 2, 1, 2, 2),
    "rightKite": (2, 0, 1, 2, 2),
    "kite": (0, 0, 1, 2, 2),
    "isoTrapezoid": (0, 1, 1, 1, 2),
    "hinge": (1, 0, 0, 1, 0),
    "rustedHinge": (0, 0, 0, 1, 0),
    "trapezoid": (0, 1, 0, 0, 0),
    "random": (0, 0, 0, 0, 0),
}


class TestCategories:
    def test_regularity_table_verbatim(self):
        assert tuple(TABLE) == CATEGORY_NAMES
        for name, row in TABLE.items():
            assert category(name).regularity_row == row

    def test_totals_order_nonincreasing(self):
        totals = [quads.regularity_total(n) for n in CATEGORY_NAMES]
        assert totals == sorted(totals, reverse=True)

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError):
            category("pentagon")


class TestQuadrilateral:
    def test_rejects_clockwise(self):
        with pytest.raises(ValueError):
            Quadrilateral(((0, 0), (0, 1), (1, 1), (1, 0)))

    def test_rejects_self_intersection(self):
        with pytest.raises(ValueError):
            Quadrilateral(((0, 0), (1, 1), (1, 0), (0, 1)))

    def test_rejects_collinear(self):
        with pytest.raises(ValueError):
            Quadrilateral(((0, 0), (1, 0), (2, 0), (0, 1)))

    def test_canonicalize_starts_lowest_leftmost(self):
        q = Quadrilateral(((1, 1), (0, 1), (0, 0), (1, 0)))
        c = canonicalize(q)
        assert c.vertices[0] == (0.0, 0.0)


class TestGenerateExemplar:
    @pytest.mark.parametrize("name", CATEGORY_NAMES)
    def test_hundred_seeded_draws_hit_pattern(self, name):
        expected = expected_feature_bits(name)
        for i in range(100):
            q = generate_exemplar(name, np.random.default_rng(10_000 + i))
            assert extract_features(q) == expected, f"{name} draw {i}"

    def test_square_pattern_counts(self):
        f = extract_features(generate_exemplar("square", np.random.default_rng(0)))
        assert sum(f.side_equalities) == 6
        assert sum(f.angle_equalities) == 6
        assert sum(f.parallelisms) == 2
        assert sum(f.right_angles) == 4

    def test_random_all_false(self):
        f = extract_features(generate_exemplar("random", np.random.default_rng(1)))
        assert not any(f.bits)

    def test_trapezoid_pattern(self):
        f = extract_features(generate_exemplar("trapezoid", np.random.default_rng(2)))
        assert sum(f.parallelisms) == 1
        assert sum(f.right_angles) == 0
        assert sum(f.side_equalities) == 0
        assert sum(f.angle_equalities) == 0


class TestApplyTransform:
    def test_identity(self):
        q = generate_exemplar("kite", np.random.default_rng(3))
        t = apply_transform(q, 1.0, 0.0)
        assert np.allclose(q.as_array(), t.as_array())

    def test_features_invariant_under_any_transform(self):
        rng = np.random.default_rng(4)
        for name in CATEGORY_NAMES:
            q = generate_exemplar(name, rng)
            f = extract_features(q)
            for _ in range(5):
                t = apply_transform(q, rng.uniform(0.2, 3.0), rng.uniform(0, 2 * math.pi))
                assert extract_features(t) == f

    def test_half_turn_square_same_vertex_set(self):
        q = generate_exemplar("square", np.random.default_rng(5))
        t = apply_transform(q, 1.0, math.pi)
        orig = sorted(map(tuple, np.round(q.as_array(), 9)))
        moved = sorted(map(tuple, np.round(t.as_array(), 9)))
        assert np.allclose(orig, moved, atol=1e-9)

    def test_nonpositive_scale_rejected(self):
        q = generate_exemplar("square", np.random.default_rng(6))
        with pytest.raises(ValueError):
            apply_transform(q, 0.0, 0.1)


class TestExtractFeatures:
    def test_unit_square(self):
        f = extract_features(Quadrilateral(((0, 0), (1, 0), (1, 1), (0, 1))))
        assert f == expected_feature_bits("square")

    def test_two_by_one_rectangle_against_predicate_oracle(self):
        q = Quadrilateral(((0, 0), (2, 0), (2, 1), (0, 1)))
        f = extract_features(q)
        # Exhaustive predicate oracle from raw geometry.
        arr = q.as_array()
        edges = np.roll(arr, -1, axis=0) - arr
        lengths = np.linalg.norm(edges, axis=1)
        for bit, (i, j) in zip(f.side_equalities, EDGE_PAIRS):
            assert bit == (abs(lengths[i] - lengths[j]) < 1e-9)
        assert sum(f.side_equalities) == 2
        assert all(f.angle_equalities)
        assert sum(f.parallelisms) == 2
        assert all(f.right_angles)

    def test_cyclic_relabel_permutes_then_canonical_restores(self):
        q = generate_exemplar("hinge", np.random.default_rng(7))
        rolled = Quadrilateral(q.vertices[1:] + q.vertices[:1])
        assert extract_features(rolled) != extract_features(q)
        assert extract_features(canonicalize(rolled)) == extract_features(q)

    def test_loose_tolerances_accept_jitter(self):
        q = generate_exemplar("square", np.random.default_rng(8))
        arr = q.as_array() + 1e-5 * np.random.default_rng(9).standard_normal((4, 2))
        jittered = Quadrilateral(tuple(map(tuple, arr)))
        strict = extract_features(jittered)
        loose = extract_features(jittered, ExtractionTolerances(1e-2, 1e-2))
        assert loose == expected_feature_bits("square")
        assert strict != loose


def quadrature_log_gen_sim(f1, f2, alpha, beta, n_nodes=2000):
    """Independent oracle: Gauss-Legendre quadrature of the per-feature
    Bernoulli-Beta integrals, no Beta-function identities used."""
    x, w = leggauss(n_nodes)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w

    def integral(ones, zeros):
        return float(np.sum(w * t ** (ones + alpha - 1) * (1 - t) ** (zeros + beta - 1)))

    norm = integral(0, 0)  # Beta(alpha, beta) by quadrature
    total = 0.0
    for a, b in zip(np.asarray(f1, dtype=int), np.asarray(f2, dtype=int)):
        joint = integral(a + b, (1 - a) + (1 - b))
        total += math.log(norm * joint / (integral(a, 1 - a) * integral(b, 1 - b)))
    return total


class TestBetaBernoulliKernels:
    def test_single_feature_closed_value(self):
        v = shape_log_gen_sim_general([1], [1], BetaBernoulliParams(1.0, 1.0))
        assert v == pytest.approx(math.log(4.0 / 3.0), rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(10)
        params = BetaBernoulliParams(0.7, 2.3)
        for _ in range(100):
            f1 = rng.integers(0, 2, 22)
            f2 = rng.integers(0, 2, 22)
            assert shape_log_gen_sim_general(f1, f2, params) == pytest.approx(
                shape_log_gen_sim_general(f2, f1, params), rel=1e-12
            )

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 8))
            f1 = rng.integers(0, 2, n)
            f2 = rng.integers(0, 2, n)
            alpha = float(rng.uniform(1.0, 4.0))
            beta = float(rng.uniform(1.0, 4.0))
            got = shape_log_gen_sim_general(f1, f2, BetaBernoulliParams(alpha, beta))
            want = quadrature_log_gen_sim(f1, f2, alpha, beta)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-9)

    def test_limit_form_values(self):
        f = np.ones(22)
        assert shape_log_gen_sim_limit(f, f, beta=0.37) == pytest.approx(22 * math.log(2.0))
        g = f.copy()
        g[:5] = 0  # 5 differing bits at beta=1: (22-5) log 2
        assert shape_log_gen_sim_limit(f, g, beta=1.0) == pytest.approx(17 * math.log(2.0))

    def test_limit_matches_general_at_small_beta(self):
        rng = np.random.default_rng(12)
        eps = 1e-6
        for _ in range(20):
            f1 = rng.integers(0, 2, 22)
            f2 = rng.integers(0, 2, 22)
            general = shape_log_gen_sim_general(f1, f2, BetaBernoulliParams(eps, eps))
            limit = shape_log_gen_sim_limit(f1, f2, beta=eps)
            assert abs(general - limit) / abs(limit) <= 1e-3

    def test_limit_affine_in_hamming(self):
        beta = 0.2
        slope = -math.log((beta + 1) / beta)
        base = np.zeros(22)
        prev = shape_log_gen_sim_limit(base, base, beta)
        for k in range(1, 23):
            f2 = base.copy()
            f2[:k] = 1
            val = shape_log_gen_sim_limit(base, f2, beta)
            assert val - prev == pytest.approx(slope, rel=1e-9)
            prev = val

    def test_rejects_nonbinary(self):
        with pytest.raises(ValueError):
            shape_log_gen_sim_general([0.5], [1], BetaBernoulliParams(1, 1))
        with pytest.raises(ValueError):
            shape_log_gen_sim_limit([2], [1], beta=0.5)

    def test_params_validated(self):
        with pytest.raises(ValueError):
            BetaBernoulliParams(0.0, 1.0)


class TestFeatureSqDistance:
    def test_identical_zero(self):
        f = expected_feature_bits("kite")
        assert feature_sq_distance(f, f) == 0

    def test_complement_full(self):
        f = np.zeros(22)
        assert feature_sq_distance(f, 1 - f) == 22

    def test_square_vs_rectangle_is_four(self):
        sq = extract_features(generate_exemplar("square", np.random.default_rng(13)))
        re = extract_features(generate_exemplar("rectangle", np.random.default_rng(14)))
        assert feature_sq_distance(sq, re) == 4


class TestOddballTrial:
    @pytest.mark.parametrize("name", CATEGORY_NAMES)
    def test_shape_and_flags(self, name):
        trial = make_oddball_trial(name, np.random.default_rng(15))
        assert len(trial.items) == 6
        assert 0 <= trial.oddball_index < 6
        assert trial.category.name == name

    def test_square_oddball_loses_right_angles(self):
        for seed in range(10):
            trial = make_oddball_trial("square", np.random.default_rng(100 + seed))
            odd = extract_features(trial.items[trial.oddball_index])
            assert sum(odd.right_angles) < 4

    def test_oddball_feature_difference(self):
        rng = np.random.default_rng(16)
        for name in CATEGORY_NAMES:
            if name == "random":
                continue
            trial = make_oddball_trial(name, rng)
            copy_idx = 0 if trial.oddball_index != 0 else 1
            ref = extract_features(trial.items[copy_idx])
            odd = extract_features(trial.items[trial.oddball_index])
            assert feature_sq_distance(ref, odd) >= 1

    def test_random_category_oddball_still_simple(self):
        for seed in range(10):
            trial = make_oddball_trial("random", np.random.default_rng(200 + seed))
            assert len(trial.items) == 6  # construction validated each item

    def test_slot_uniformity(self):
        rng = np.random.default_rng(17)
        slots = [make_oddball_trial("square", rng).oddball_index for _ in range(300)]
        counts = np.bincount(slots, minlength=6)
        assert counts.min() > 20


class TestRasterizeQuad:
    def test_minimum_ink(self):
        rng = np.random.default_rng(18)
        for name in ("square", "random", "trapezoid"):
            q = generate_exemplar(name, rng)
            img = rasterize_quad(q, 64)
            assert int((img > 0).sum()) >= 4 * int(0.1 * 64)

    def test_determinism(self):
        q = generate_exemplar("square", np.random.default_rng(19))
        a = rasterize_quad(q, 48)
        b = rasterize_quad(q, 48)
        assert np.array_equal(a, b)

    def test_values_clamped(self):
        q = generate_exemplar("losange", np.random.default_rng(20))
        img = rasterize_quad(q, 32)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_size_floor(self):
        q = generate_exemplar("square", np.random.default_rng(21))
        with pytest.raises(ValueError):
            rasterize_quad(q, 15)
