import json
import math

import numpy as np
import pytest

from classdiag.core import ClassCatalog
from classdiag.dissimilarity import FeatureSchema, FeatureTable
from classdiag.errors import DegenerateDataError, ValidationError
from classdiag.farness import (
    EmbeddingTable,
    estimate_lambda,
    farness_scores,
    fit_class_stats,
    fit_distance_transform,
    fit_farness_knn,
    fit_farness_mahalanobis,
    flag_outliers,
    knn_class_distance,
    knn_distance_matrix,
    load_model,
    mahalanobis_distance,
    mahalanobis_distance_matrix,
    model_from_dict,
    model_to_dict,
    norm_quantile,
    save_model,
    score_new_cases,
    yeo_johnson,
)
from oracles import PROBIT_TABLE, knn_median_oracle, ks_distance_from_uniform

CAT2 = ClassCatalog(["p", "q"])
CAT4 = ClassCatalog(["east", "north", "south", "west"])


def gaussian_embeddings(rng, per_class=125, catalog=CAT4, spread=3.0):
    sigmas = [1.0, 1.2, 0.9, 1.1]
    blocks, labels = [], []
    for g in range(catalog.size):
        mean = np.zeros(catalog.size)
        mean[g] = spread
        blocks.append(rng.normal(0.0, sigmas[g % 4], (per_class, catalog.size)) + mean)
        labels += [g] * per_class
    return EmbeddingTable(values=np.vstack(blocks), labels=np.array(labels), catalog=catalog)


class TestClassStats:
    def test_two_point_mean(self):
        emb = EmbeddingTable(values=[[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [7.0, 5.0]],
                             labels=[0, 0, 1, 1], catalog=CAT2)
        stats = fit_class_stats(emb)
        assert np.array_equal(stats.means[0], [1.0, 1.0])

    def test_hand_covariance(self):
        vals = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0], [9.0, 9.0], [11.0, 9.0]]
        emb = EmbeddingTable(values=vals, labels=[0, 0, 0, 0, 1, 1], catalog=CAT2)
        stats = fit_class_stats(emb)
        np.testing.assert_allclose(stats.covariances[0],
                                   [[4.0 / 3.0, 0.0], [0.0, 4.0 / 3.0]], atol=1e-15)

    def test_constant_class_gets_ridge(self):
        emb = EmbeddingTable(values=[[1.0, 1.0]] * 3 + [[0.0, 0.0], [2.0, 1.0], [1.0, 3.0]],
                             labels=[0, 0, 0, 1, 1, 1], catalog=CAT2)
        stats = fit_class_stats(emb)
        assert stats.ridges[0] > 0.0
        d = mahalanobis_distance([1.0, 1.0], stats.means[0], stats.covariances[0],
                                 stats.ridges[0])
        assert d == 0.0

    def test_small_class_error_names_class(self):
        emb = EmbeddingTable(values=[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                             labels=[0, 0, 1], catalog=CAT2)
        with pytest.raises(ValidationError, match="'q'"):
            fit_class_stats(emb)


class TestMahalanobis:
    def test_zero_at_center(self):
        assert mahalanobis_distance([1.0, 2.0], [1.0, 2.0], np.eye(2)) == 0.0

    def test_euclidean_special_case(self):
        d = mahalanobis_distance([3.0, 4.0], [0.0, 0.0], np.eye(2))
        assert d == pytest.approx(5.0, abs=1e-12)

    def test_diagonal_closed_form(self):
        d = mahalanobis_distance([2.0, 3.0], [0.0, 0.0], np.diag([4.0, 1.0]))
        assert d == pytest.approx(math.sqrt(10.0), abs=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            mahalanobis_distance([math.nan, 0.0], [0.0, 0.0], np.eye(2))

    def test_affine_invariance(self):
        rng = np.random.default_rng(123)
        emb = gaussian_embeddings(rng, per_class=60)
        stats = fit_class_stats(emb)
        assert np.all(stats.ridges == 0.0)
        base = mahalanobis_distance_matrix(emb.values, stats)
        # well-conditioned random affine map: orthogonal basis with
        # singular values in [0.5, 2]
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        a = q @ np.diag(rng.uniform(0.5, 2.0, 4)) @ q.T
        shifted = EmbeddingTable(values=emb.values @ a.T + rng.normal(size=4),
                                 labels=emb.labels, catalog=emb.catalog)
        stats2 = fit_class_stats(shifted)
        assert np.all(stats2.ridges == 0.0)
        mapped = mahalanobis_distance_matrix(shifted.values, stats2)
        assert np.max(np.abs(mapped - base)) < 1e-8


class TestKnnDistance:
    def test_median_of_k_smallest(self):
        d = knn_class_distance([0.1, 0.2, 0.3, 0.4, 0.5, 0.9], k=5)
        assert d == 0.3

    def test_singleton_class(self):
        assert knn_class_distance([0.42], k=5) == 0.42

    def test_all_equal(self):
        assert knn_class_distance([0.7, 0.7, 0.7], k=2) == 0.7

    def test_k1_is_minimum(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = rng.uniform(0, 1, rng.integers(1, 20))
            assert knn_class_distance(d, k=1) == d.min()

    def test_matches_sort_median_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            d = rng.uniform(0, 1, int(rng.integers(1, 30)))
            k = int(rng.integers(1, 9))
            assert knn_class_distance(d, k) == knn_median_oracle(d, k)

    def test_empty_class_rejected(self):
        with pytest.raises(ValidationError):
            knn_class_distance([], k=5)

    def test_matrix_with_and_without_self(self):
        dis = np.array([
            [0.0, 0.2, 0.8, 0.9],
            [0.2, 0.0, 0.7, 0.8],
            [0.8, 0.7, 0.0, 0.1],
            [0.9, 0.8, 0.1, 0.0],
        ])
        labels = np.array([0, 0, 1, 1])
        with_self = knn_distance_matrix(dis, labels, CAT2, k=5)
        assert with_self[0, 0] == knn_median_oracle([0.0, 0.2], 5)
        no_self = knn_distance_matrix(dis, labels, CAT2, k=5, exclude_self=True)
        assert no_self[0, 0] == 0.2

    def test_exclude_self_requires_square(self):
        with pytest.raises(ValidationError, match="square"):
            knn_distance_matrix(np.zeros((2, 4)), [0, 0, 1, 1], CAT2, exclude_self=True)


class TestYeoJohnson:
    def test_identity_branch(self):
        assert yeo_johnson(2.5, 1.0) == 2.5

    def test_log_branch(self):
        assert yeo_johnson(math.e - 1.0, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_negative_log_branch(self):
        assert yeo_johnson(-(math.e - 1.0), 2.0) == pytest.approx(-1.0, abs=1e-15)

    def test_continuity_at_zero(self):
        eps = 1e-9
        for lam in np.linspace(-4.0, 4.0, 33):
            left = yeo_johnson(-eps, lam)
            right = yeo_johnson(eps, lam)
            assert abs(left - right) < 1e-8
            assert yeo_johnson(0.0, lam) == 0.0

    def test_strictly_increasing(self):
        xs = np.linspace(-5.0, 5.0, 201)
        for lam in (-4.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0):
            t = yeo_johnson(xs, lam)
            assert np.all(np.diff(t) > 0.0)

    def test_non_finite_lambda_rejected(self):
        with pytest.raises(ValidationError):
            yeo_johnson(1.0, math.inf)


class TestLambdaEstimate:
    def test_normal_data_gives_lambda_near_one(self):
        rng = np.random.default_rng(12345)
        lam = estimate_lambda(rng.standard_normal(1000))
        assert 0.7 <= lam <= 1.3

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        x = rng.normal(0, 1, 300)
        assert estimate_lambda(x) == estimate_lambda(x.copy())


class TestDistanceTransform:
    def test_per_class_median_normalization(self):
        # two classes with own-distance medians 2 and 4
        own = np.array([1.0, 2.0, 3.0, 2.0, 4.0, 8.0])
        labels = np.array([0, 0, 0, 1, 1, 1])
        model = fit_distance_transform(own, labels, CAT2)
        assert np.array_equal(model.class_medians, [2.0, 4.0])
        normalized = own / model.class_medians[labels]
        assert np.median(normalized[labels == 0]) == 1.0
        assert np.median(normalized[labels == 1]) == 1.0

    def test_all_equal_distances_degenerate(self):
        with pytest.raises(DegenerateDataError, match="Mad"):
            fit_distance_transform([3.0, 3.0, 3.0, 3.0], [0, 0, 1, 1], CAT2)

    def test_zero_median_degenerate(self):
        with pytest.raises(DegenerateDataError, match="median"):
            fit_distance_transform([0.0, 0.0, 1.0, 2.0], [0, 0, 1, 1], CAT2)

    def test_pooled_median_maps_to_half(self):
        rng = np.random.default_rng(14)
        own = rng.chisquare(4, 101)  # odd count: the median is a data point
        labels = rng.integers(0, 2, 101)
        model = fit_distance_transform(own, labels, CAT2)
        dm = np.full((1, 2), model.center) * model.class_medians[None, :]
        far = farness_scores(dm, model)
        assert np.all(far == 0.5)

    def test_monotone_in_distance(self):
        rng = np.random.default_rng(15)
        own = rng.chisquare(4, 200) + 0.1
        labels = rng.integers(0, 2, 200)
        model = fit_distance_transform(own, labels, CAT2)
        grid = np.linspace(0.05, 20.0, 100)
        far = farness_scores(np.column_stack([grid, grid]), model)
        assert np.all(np.diff(far[:, 0]) > 0.0)

    def test_fit_time_class_scale_invariance(self):
        rng = np.random.default_rng(16)
        n = 300
        labels = rng.integers(0, 4, n)
        dm = rng.chisquare(4, (n, 4)) + 0.05
        own = dm[np.arange(n), labels]
        m1 = fit_distance_transform(own, labels, CAT4)
        f1 = farness_scores(dm, m1)
        dm2 = dm.copy()
        dm2[:, 2] *= 37.5  # rescale one class's distances before fitting
        own2 = dm2[np.arange(n), labels]
        m2 = fit_distance_transform(own2, labels, CAT4)
        f2 = farness_scores(dm2, m2)
        assert np.max(np.abs(f1 - f2)) < 1e-10

    def test_training_farness_near_uniform(self):
        rng = np.random.default_rng(99)
        emb = gaussian_embeddings(rng)
        _, far, _ = fit_farness_mahalanobis(emb)
        own = far[np.arange(far.shape[0]), emb.labels]
        assert ks_distance_from_uniform(own) < 0.10


class TestFlagOutliers:
    def test_all_above_cutoff_flagged(self):
        far = np.array([[0.995, 0.999, 0.992]])
        assert flag_outliers(far, 0.99)[0]

    def test_one_class_close_not_flagged(self):
        far = np.array([[0.995, 0.5]])
        assert not flag_outliers(far, 0.99)[0]

    def test_count_non_increasing_in_cutoff(self):
        rng = np.random.default_rng(20)
        far = rng.uniform(0, 1, (500, 3))
        counts = [flag_outliers(far, c).sum() for c in (0.5, 0.75, 0.9, 0.99, 0.999)]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_cutoff_range_validated(self):
        with pytest.raises(ValidationError):
            flag_outliers(np.array([[0.5, 0.5]]), 1.0)


MIXED_SCHEMA = FeatureSchema.from_dict({
    "x1": {"kind": "numeric", "weight": 0.5},
    "cat": {"kind": "nominal", "weight": 0.3},
    "grade": {"kind": "ordinal", "levels": ["low", "mid", "high"], "weight": 0.2},
})


def mixed_training(rng, n_per=30):
    rows, labels = [], []
    grades = ["low", "mid", "high"]
    for g, (mu, pref) in enumerate([(0.0, "a"), (3.0, "b")]):
        for _ in range(n_per):
            rows.append({
                "x1": float(rng.normal(mu, 1.0)),
                "cat": pref if rng.uniform() < 0.7 else "c",
                "grade": grades[rng.integers(0, 3)] if rng.uniform() > 0.05 else None,
            })
            labels.append(g)
    return FeatureTable.from_rows(MIXED_SCHEMA, rows), np.array(labels), rows


class TestFarnessModels:
    def test_training_case_rescored_reproduces_farness(self):
        rng = np.random.default_rng(31)
        table, labels, _ = mixed_training(rng)
        model, far, _ = fit_farness_knn(table, labels, CAT2, k=5)
        rescored, _ = score_new_cases(model, table=table)
        assert np.max(np.abs(rescored - far)) < 1e-12

    def test_batch_equals_single(self):
        rng = np.random.default_rng(32)
        table, labels, rows = mixed_training(rng)
        model, _, _ = fit_farness_knn(table, labels, CAT2, k=5)
        batch = FeatureTable.from_rows(MIXED_SCHEMA, rows[:10])
        far_batch, _ = score_new_cases(model, table=batch)
        for i in range(10):
            single = FeatureTable.from_rows(MIXED_SCHEMA, rows[i:i + 1])
            far_one, _ = score_new_cases(model, table=single)
            assert np.array_equal(far_one[0], far_batch[i])

    def test_cluster_center_scores_low(self):
        rng = np.random.default_rng(33)
        emb = gaussian_embeddings(rng, per_class=80)
        model, far, _ = fit_farness_mahalanobis(emb)
        center = np.zeros((1, 4))
        center[0, 1] = 3.0  # mean of class "north"
        far_center, _ = score_new_cases(model, embeddings=center)
        north_members = emb.labels == 1
        assert far_center[0, 1] < np.median(far[north_members, 1])

    def test_default_cutoff_and_k(self):
        rng = np.random.default_rng(34)
        table, labels, _ = mixed_training(rng)
        model, _, _ = fit_farness_knn(table, labels, CAT2)
        assert model.cutoff == 0.99
        assert model.k == 5

    def test_json_round_trip_bit_stable(self, tmp_path):
        rng = np.random.default_rng(35)
        table, labels, rows = mixed_training(rng)
        model, far, flags = fit_farness_knn(table, labels, CAT2, k=3, cutoff=0.95)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.k == 3 and loaded.cutoff == 0.95
        far2, flags2 = score_new_cases(loaded, table=table)
        assert np.array_equal(far2, far) and np.array_equal(flags2, flags)
        # serialize again: identical document
        assert json.dumps(model_to_dict(model)) == json.dumps(model_to_dict(loaded))

    def test_mahalanobis_round_trip(self, tmp_path):
        rng = np.random.default_rng(36)
        emb = gaussian_embeddings(rng, per_class=40)
        model, far, _ = fit_farness_mahalanobis(emb)
        path = tmp_path / "model.json"
        save_model(model, path)
        far2, _ = score_new_cases(load_model(path), embeddings=emb.values)
        assert np.array_equal(far2, far)

    def test_unsupported_version_rejected(self):
        with pytest.raises(ValidationError, match="format_version"):
            model_from_dict({"format_version": 99})

    def test_missing_version_rejected(self):
        with pytest.raises(ValidationError, match="format_version"):
            model_from_dict({"variant": "knn"})

    def test_wrong_payload_rejected(self):
        rng = np.random.default_rng(37)
        table, labels, _ = mixed_training(rng)
        model, _, _ = fit_farness_knn(table, labels, CAT2)
        with pytest.raises(ValidationError):
            score_new_cases(model, embeddings=np.zeros((1, 2)))

    def test_embedding_width_mismatch_rejected(self):
        rng = np.random.default_rng(38)
        emb = gaussian_embeddings(rng, per_class=40)
        model, _, _ = fit_farness_mahalanobis(emb)
        with pytest.raises(ValidationError, match="columns"):
            score_new_cases(model, embeddings=np.zeros((1, 3)))


class TestProbit:
    def test_quantiles_match_oracle_table(self):
        for p, expect in PROBIT_TABLE.items():
            assert abs(norm_quantile(p) - expect) < 1e-12
