"""Tests for episode sampling, the prototype classifier, and the harness."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from protoshot.datasets import EmbeddingDataset
from protoshot.errors import (
    DimensionMismatchError,
    InsufficientClassesError,
    InsufficientSamplesPerClassError,
)
from protoshot.protonet import (
    Episode,
    EvalConfig,
    decision_margin,
    evaluate,
    predict,
    prototypes,
    sample_episode,
)
from protoshot.transforms import fit_pca
from protoshot.world import GaussianWorld


def spherical_world(dim, signal=1.0, noise=1.0):
    return GaussianWorld(
        dim=dim,
        mean_center=np.zeros(dim),
        mean_cov=signal * np.eye(dim),
        class_cov=noise * np.eye(dim),
    )


def toy_dataset(class_sizes, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    labels, blocks = [], []
    for c, size in enumerate(class_sizes):
        labels += [f"c{c}"] * size
        blocks.append(rng.standard_normal((size, dim)) + 3.0 * c)
    return EmbeddingDataset(labels=labels, vectors=np.vstack(blocks))


class TestSampleEpisode:
    def test_world_episode_shapes(self):
        episode = sample_episode(spherical_world(3), ways=2, shots=1, queries=1, rng=5)
        assert episode.supports.shape == (2, 1, 3)
        assert episode.queries.shape == (2, 3)
        assert episode.query_labels.tolist() == [0, 1]
        assert episode.query_count == 2

    def test_dataset_insufficient_samples(self):
        ds = toy_dataset([5, 5])
        with pytest.raises(InsufficientSamplesPerClassError):
            sample_episode(ds, ways=2, shots=5, queries=1, rng=0)

    def test_dataset_insufficient_classes(self):
        ds = toy_dataset([10, 10])
        with pytest.raises(InsufficientClassesError):
            sample_episode(ds, ways=3, shots=1, queries=1, rng=0)

    def test_same_seed_identical(self):
        world = spherical_world(4)
        ds = toy_dataset([20, 20, 20])
        for source in (world, ds):
            a = sample_episode(source, ways=2, shots=3, queries=4, rng=11)
            b = sample_episode(source, ways=2, shots=3, queries=4, rng=11)
            np.testing.assert_array_equal(a.supports, b.supports)
            np.testing.assert_array_equal(a.queries, b.queries)
            np.testing.assert_array_equal(a.query_labels, b.query_labels)

    def test_dataset_supports_and_queries_disjoint(self):
        ds = toy_dataset([12, 12])
        episode = sample_episode(ds, ways=2, shots=4, queries=8, rng=3)
        rows = {tuple(v) for v in ds.vectors}
        used = [tuple(v) for block in episode.supports for v in block]
        used += [tuple(v) for v in episode.queries]
        assert len(used) == len(set(used))  # no vector reused
        assert set(used) <= rows

    def test_total_query_mode(self):
        episode = sample_episode(
            spherical_world(2), ways=3, shots=2, queries=7, rng=9, query_mode="total"
        )
        assert episode.query_count == 7
        assert episode.query_labels.min() >= 0
        assert episode.query_labels.max() < 3


class TestPrototypes:
    def test_single_shot_passthrough(self):
        episode = sample_episode(spherical_world(3), ways=2, shots=1, queries=1, rng=2)
        np.testing.assert_array_equal(prototypes(episode), episode.supports[:, 0, :])

    def test_mean_of_two(self):
        episode = Episode(
            ways=1,
            shots=2,
            supports=np.array([[[0.0, 0.0], [2.0, 0.0]]]),
            queries=np.zeros((1, 2)),
            query_labels=np.zeros(1, dtype=int),
        )
        np.testing.assert_array_equal(prototypes(episode), [[1.0, 0.0]])

    def test_idempotent_on_identical_supports(self):
        v = np.array([1.5, -2.0, 0.25])
        episode = Episode(
            ways=1,
            shots=3,
            supports=np.broadcast_to(v, (1, 3, 3)).copy(),
            queries=np.zeros((1, 3)),
            query_labels=np.zeros(1, dtype=int),
        )
        np.testing.assert_array_equal(prototypes(episode), [v])


class TestPredict:
    def test_equidistant_tie_goes_low(self):
        probs, pick = predict(np.array([5.0, 0.0]), np.array([[0.0, 0.0], [10.0, 0.0]]))
        np.testing.assert_allclose(probs, [0.5, 0.5])
        assert pick == 0

    def test_dominant_gap(self):
        probs, pick = predict(np.array([0.0, 0.0]), np.array([[0.0, 0.0], [10.0, 0.0]]))
        assert pick == 0
        assert probs[0] > 1.0 - 1e-12

    def test_sigmoid_value(self):
        """p0 = sigmoid(2) for prototypes (0,), (2,) and query (0.5,).

        Cross-checked against an independently computed plain softmax.
        """
        query, protos = np.array([0.5]), np.array([[0.0], [2.0]])
        probs, pick = predict(query, protos)
        assert abs(probs[0] - 0.8807970779778823) <= 1e-12

        d_sq = ((query - protos) ** 2).sum(axis=1)
        brute = np.exp(-d_sq) / np.exp(-d_sq).sum()
        np.testing.assert_allclose(probs, brute, atol=1e-12)

    def test_huge_distances_do_not_overflow(self):
        probs, pick = predict(np.full(8, 1e3), np.vstack([np.zeros(8), np.full(8, 1e3)]))
        assert np.all(np.isfinite(probs))
        assert pick == 1

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            predict(np.zeros(3), np.zeros((2, 4)))

    @given(
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_probabilities_form_a_distribution(self, ways, dim, seed):
        rng = np.random.default_rng(seed)
        scale = 10.0 ** rng.integers(-3, 4)
        probs, pick = predict(
            rng.standard_normal(dim) * scale, rng.standard_normal((ways, dim)) * scale
        )
        assert abs(probs.sum() - 1.0) <= 1e-12
        assert np.all((probs >= 0.0) & (probs <= 1.0))
        assert 0 <= pick < ways


class TestDecisionMargin:
    def test_query_at_proto_a(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 2.0])
        margin = decision_margin(a, a, b)
        assert margin == pytest.approx(((a - b) ** 2).sum())
        assert margin >= 0

    def test_coincident_prototypes(self):
        v = np.array([0.3, -0.7])
        assert decision_margin(np.array([9.0, 9.0]), v, v) == 0.0

    def test_forms_agree(self):
        """Distance and linear forms agree; checked against direct expansion."""
        rng = np.random.default_rng(29)
        for _ in range(500):
            q, a, b = rng.standard_normal((3, 5))
            dist = decision_margin(q, a, b, form="distance")
            lin = decision_margin(q, a, b, form="linear")
            expanded = 2.0 * float((a - b) @ q) + float(b @ b) - float(a @ a)
            assert abs(dist - lin) <= 1e-9
            assert abs(lin - expanded) <= 1e-12

    def test_positive_margin_means_predict_a(self):
        rng = np.random.default_rng(59)
        for _ in range(100):
            q, a, b = rng.standard_normal((3, 4))
            margin = decision_margin(q, a, b)
            _, pick = predict(q, np.vstack([a, b]))
            if margin > 0:
                assert pick == 0
            elif margin < 0:
                assert pick == 1


class TestEvaluate:
    def test_noiseless_world_is_perfect(self):
        world = GaussianWorld(
            dim=3, mean_center=np.zeros(3), mean_cov=np.eye(3), class_cov=np.zeros((3, 3))
        )
        config = EvalConfig(ways=3, shots=(1, 5), queries=4, episodes=100, seed=7)
        report = evaluate(config, world)
        assert all(r.accuracy == 1.0 for r in report.results)

    def test_indistinguishable_classes_hit_chance(self):
        world = GaussianWorld(
            dim=3, mean_center=np.zeros(3), mean_cov=np.zeros((3, 3)), class_cov=np.eye(3)
        )
        config = EvalConfig(ways=2, shots=(1,), queries=15, episodes=600, seed=19)
        result = evaluate(config, world).results[0]
        assert abs(result.accuracy - 0.5) <= result.ci95_halfwidth

    def test_more_shots_help(self):
        """5-shot beats 1-shot on a spherical world, 5000 episodes each."""
        config = EvalConfig(ways=2, shots=(1, 5), queries=15, episodes=5000, seed=23)
        report = evaluate(config, spherical_world(4))
        one, five = report.results
        assert five.accuracy > one.accuracy
        assert five.accuracy - one.accuracy > one.ci95_halfwidth + five.ci95_halfwidth

    def test_worker_count_does_not_change_results(self):
        world = spherical_world(3)
        config = EvalConfig(ways=3, shots=(1, 2), queries=5, episodes=60, seed=29)
        serial = evaluate(config, world, workers=1)
        threaded = evaluate(config, world, workers=4)
        for a, b in zip(serial.results, threaded.results):
            np.testing.assert_array_equal(a.per_episode, b.per_episode)

    def test_worker_count_irrelevant_for_dataset_sources(self):
        ds = toy_dataset([30, 30, 30], seed=5)
        config = EvalConfig(ways=3, shots=(2,), queries=4, episodes=40, seed=61)
        serial = evaluate(config, ds, workers=1)
        threaded = evaluate(config, ds, workers=8)
        np.testing.assert_array_equal(
            serial.results[0].per_episode, threaded.results[0].per_episode
        )

    def test_shot_results_do_not_depend_on_sweep(self):
        """A shot value reproduces the same episodes alone or inside a sweep."""
        world = spherical_world(3)
        sweep = EvalConfig(ways=2, shots=(1, 5), queries=4, episodes=40, seed=31)
        alone = EvalConfig(ways=2, shots=(5,), queries=4, episodes=40, seed=31)
        np.testing.assert_array_equal(
            evaluate(sweep, world).results[1].per_episode,
            evaluate(alone, world).results[0].per_episode,
        )

    def test_transform_is_applied(self):
        # Project onto the informative axis: accuracy survives projection.
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2),
            mean_cov=np.diag([4.0, 0.0]), class_cov=np.diag([0.0, 1.0]),
        )
        transform = fit_pca(np.diag([1.0, 0.0]), d=1)
        config = EvalConfig(ways=2, shots=(1,), queries=10, episodes=200, seed=31)
        plain = evaluate(config, world).results[0]
        projected = evaluate(config, world, transform=transform).results[0]
        assert projected.accuracy == 1.0
        assert plain.accuracy < 1.0

    def test_scalar_shot_config(self):
        config = EvalConfig(ways=2, shots=4, queries=2, episodes=10, seed=41)
        assert config.shots == (4,)
        report = evaluate(config, spherical_world(2))
        assert report.results[0].shots == 4

    def test_report_formats(self):
        config = EvalConfig(ways=2, shots=(1, 3), queries=2, episodes=20, seed=37)
        report = evaluate(config, spherical_world(2))
        payload = report.to_json_dict()
        assert payload["config"]["query_mode"] == "per-class"
        assert [row["k"] for row in payload["per_k"]] == [1, 3]
        assert set(payload["average"]) == {"accuracy", "ci95", "episodes"}
        lines = report.to_csv().strip().split("\n")
        assert lines[0] == "k,accuracy,ci95,episodes"
        assert len(lines) == 4  # header, two shot rows, average
        assert lines[-1].startswith("average,")


class TestClassifierInvariances:
    def _episode(self, seed=41):
        return sample_episode(spherical_world(4), ways=3, shots=2, queries=5, rng=seed)

    def test_label_permutation_symmetry(self):
        episode = self._episode()
        perm = np.array([2, 0, 1])
        inverse = np.argsort(perm)
        permuted = Episode(
            ways=3,
            shots=2,
            supports=episode.supports[perm],
            queries=episode.queries,
            query_labels=inverse[episode.query_labels],
        )
        protos, protos_p = prototypes(episode), prototypes(permuted)
        for q, label, plabel in zip(
            episode.queries, episode.query_labels, permuted.query_labels
        ):
            probs, pick = predict(q, protos)
            probs_p, pick_p = predict(q, protos_p)
            # Permutation changes the softmax summation order, so entries
            # agree to rounding, not bitwise.
            np.testing.assert_allclose(probs_p, probs[perm], atol=1e-12)
            assert abs(probs[label] - probs_p[plabel]) <= 1e-12
            assert (pick == label) == (pick_p == plabel)

    def test_translation_invariance(self):
        episode = self._episode(43)
        shift = np.array([10.0, -5.0, 2.5, 100.0])
        protos = prototypes(episode)
        for q in episode.queries:
            before, _ = predict(q, protos)
            after, _ = predict(q + shift, protos + shift)
            np.testing.assert_allclose(after, before, atol=1e-9)

    def test_transform_commutes_with_prototype_mean(self):
        episode = self._episode(47)
        rng = np.random.default_rng(53)
        m = rng.standard_normal((4, 4))
        transform = fit_pca(m @ m.T, d=2)
        transformed_then_mean = transform.apply(episode.supports).mean(axis=1)
        mean_then_transformed = transform.apply(prototypes(episode))
        assert np.abs(transformed_then_mean - mean_then_transformed).max() <= 1e-10
