import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_image
from disco.metrics import (
    EmptyDataset,
    MetricsConfig,
    count_accuracy,
    evaluate_dataset,
    global_identity_spread,
    has_duplicates,
    identity_clusters,
    unique_face_accuracy,
)
from oracles import random_unit_vectors, union_find_clusters

CFG = MetricsConfig()


def orthogonal_basis_images(n_images, faces_per_image, target_count=None):
    """Images whose faces are distinct standard basis vectors (all sims 0)."""
    d = n_images * faces_per_image
    images, k = [], 0
    for i in range(n_images):
        vecs = []
        for _ in range(faces_per_image):
            v = np.zeros(d)
            v[k] = 1.0
            vecs.append(v)
            k += 1
        images.append(
            make_image(vecs, image_id=f"img-{i}", target_count=target_count or faces_per_image)
        )
    return images


class TestCountAccuracy:
    def test_two_of_three(self):
        images = orthogonal_basis_images(3, 2)
        images[0].target_count = 3
        assert count_accuracy(images) == pytest.approx(200.0 / 3.0, abs=1e-9)

    def test_all_match(self):
        assert count_accuracy(orthogonal_basis_images(3, 2)) == 100.0

    def test_none_match(self):
        images = orthogonal_basis_images(3, 2, target_count=4)
        assert count_accuracy(images) == 0.0

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            count_accuracy([])


def image_with_pair_sims(sims):
    """One image whose consecutive chain of faces realizes the given sims to face 0."""
    faces = [np.array([1.0, 0.0])]
    for s in sims:
        faces.append(np.array([s, math.sqrt(1.0 - s * s)]))
    return make_image(faces)


class TestUniqueFaceAccuracy:
    def test_sims_below_threshold_are_clean(self):
        img = make_image(
            [
                np.array([1.0, 0.0, 0.0]),
                np.array([0.49, math.sqrt(1 - 0.49**2), 0.0]),
            ]
        )
        assert not has_duplicates(img, CFG)

    def test_threshold_is_inclusive(self):
        img = make_image([np.array([1.0, 0.0]), np.array([0.5, math.sqrt(0.75)])])
        assert has_duplicates(img, CFG)

    def test_single_face_is_clean(self):
        assert not has_duplicates(make_image([np.array([1.0, 0.0])]), CFG)

    def test_zero_faces_is_clean(self):
        assert not has_duplicates(make_image([], target_count=2), CFG)

    def test_percentage(self):
        clean = orthogonal_basis_images(2, 2)
        v = np.array([1.0, 0.0])
        dirty = make_image([v, v], image_id="dup")
        assert unique_face_accuracy(clean + [dirty], CFG) == pytest.approx(
            200.0 / 3.0, abs=1e-9
        )

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            unique_face_accuracy([], CFG)

    @given(seed=st.integers(0, 2**16))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_threshold(self, seed):
        r = np.random.default_rng(seed)
        images = [
            make_image(random_unit_vectors(r, int(r.integers(0, 5)), 6))
            for _ in range(8)
        ]
        values = [
            unique_face_accuracy(images, MetricsConfig(dup_threshold=thr))
            for thr in np.linspace(0.05, 0.95, 10)
        ]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


class TestGlobalIdentitySpread:
    def test_all_distinct(self):
        images = orthogonal_basis_images(3, 2)
        gis, n_clusters = global_identity_spread(images, CFG)
        assert (gis, n_clusters) == (100.0, 6)

    def test_all_identical(self):
        v = np.array([1.0, 0.0])
        images = [
            make_image([v, v], image_id=f"i{i}", target_count=2) for i in range(3)
        ]
        gis, n_clusters = global_identity_spread(images, CFG)
        assert n_clusters == 1
        assert gis == pytest.approx(100.0 / 6.0, abs=1e-9)

    def test_single_linkage_chain_transitivity(self):
        # a~b and b~c above threshold, a~c below: one cluster via the chain
        theta = math.acos(0.6)
        a = np.array([1.0, 0.0])
        b = np.array([math.cos(theta), math.sin(theta)])
        c = np.array([math.cos(2 * theta), math.sin(2 * theta)])
        assert float(a @ c) < 0.5
        images = [make_image([a, b, c], target_count=3)]
        _, n_clusters = global_identity_spread(images, CFG)
        assert n_clusters == 1
        oracle = union_find_clusters([a, b, c], CFG.dup_threshold)
        assert len(oracle) == 1

    def test_no_faces_yields_zero(self):
        images = [make_image([], target_count=2) for _ in range(3)]
        assert global_identity_spread(images, CFG) == (0.0, 0)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            global_identity_spread([], CFG)

    @given(seed=st.integers(0, 2**16), thr=st.floats(0.1, 0.9))
    @settings(max_examples=25, deadline=None)
    def test_partition_matches_union_find(self, seed, thr):
        r = np.random.default_rng(seed)
        faces = random_unit_vectors(r, 30, 4)
        images = [make_image(faces[i : i + 3]) for i in range(0, 30, 3)]
        cfg = MetricsConfig(dup_threshold=thr)
        labels = identity_clusters(images, cfg)
        ours = {}
        for idx, lab in enumerate(labels):
            ours.setdefault(lab, set()).add(idx)
        ours_partition = sorted((frozenset(g) for g in ours.values()), key=min)
        assert ours_partition == union_find_clusters(faces, thr)


class TestEvaluateDataset:
    def test_report_consistency(self):
        images = orthogonal_basis_images(4, 2)
        report = evaluate_dataset(images, CFG)
        assert report.count_accuracy_pct == 100.0
        assert report.ufa_pct == 100.0
        assert report.gis_pct == pytest.approx(
            100.0 * report.n_clusters / report.total_requested, abs=1e-9
        )

    def test_order_invariance(self, rng):
        faces = random_unit_vectors(rng, 12, 5)
        images = [
            make_image(faces[i : i + 2], image_id=f"i{i}", target_count=2)
            for i in range(0, 12, 2)
        ]
        fwd = evaluate_dataset(images, CFG)
        rev = evaluate_dataset(list(reversed(images)), CFG)
        shuffled_faces = [
            make_image(list(reversed([f.embedding for f in img.faces])),
                       image_id=img.image_id, target_count=img.target_count)
            for img in images
        ]
        sh = evaluate_dataset(shuffled_faces, CFG)
        for other in (rev, sh):
            assert other.count_accuracy_pct == fwd.count_accuracy_pct
            assert other.ufa_pct == fwd.ufa_pct
            assert other.gis_pct == fwd.gis_pct

    def test_per_count_recombines_to_aggregate(self, rng):
        images = []
        for i in range(12):
            m = int(rng.integers(0, 4))
            images.append(
                make_image(
                    random_unit_vectors(rng, m, 6),
                    image_id=f"i{i}",
                    target_count=int(rng.integers(1, 4)),
                )
            )
        report = evaluate_dataset(images, CFG)
        total = sum(s.n_images for s in report.per_count.values())
        assert total == report.n_images
        recombined_count = (
            sum(s.count_accuracy_pct * s.n_images for s in report.per_count.values())
            / total
        )
        recombined_ufa = (
            sum(s.ufa_pct * s.n_images for s in report.per_count.values()) / total
        )
        assert recombined_count == pytest.approx(report.count_accuracy_pct, abs=1e-9)
        assert recombined_ufa == pytest.approx(report.ufa_pct, abs=1e-9)
        # clustering a slice in isolation can only split clusters, never merge
        assert sum(s.n_clusters for s in report.per_count.values()) >= report.n_clusters

    def test_per_count_gis_exact_when_slices_disjoint(self):
        basis = np.eye(10)
        images = [
            make_image([basis[0], basis[1]], image_id="a", target_count=2),
            make_image([basis[2], basis[3]], image_id="b", target_count=2),
            make_image([basis[4], basis[5], basis[6]], image_id="c", target_count=3),
        ]
        report = evaluate_dataset(images, CFG)
        assert sum(s.n_clusters for s in report.per_count.values()) == report.n_clusters

    def test_per_tag_breakdown(self):
        images = orthogonal_basis_images(4, 2)
        images[0].tag = "plain"
        images[1].tag = "plain"
        images[2].tag = "varied"
        report = evaluate_dataset(images, CFG)
        assert set(report.per_tag) == {"plain", "varied", "untagged"}
        assert report.per_tag["plain"].n_images == 2
        assert report.per_tag["untagged"].n_images == 1

    def test_no_tags_means_no_tag_breakdown(self):
        report = evaluate_dataset(orthogonal_basis_images(2, 2), CFG)
        assert report.per_tag is None


def test_metrics_config_validation():
    with pytest.raises(ValueError):
        MetricsConfig(dup_threshold=0.0)
    with pytest.raises(ValueError):
        MetricsConfig(dup_threshold=1.0)
