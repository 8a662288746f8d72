import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from namegrounder.grammar import Vocabulary
from namegrounder.grounder import NoiseConfig, observe_scene
from namegrounder.matcher import (
    DEFAULT_TAU,
    EmbeddingSpace,
    MatchDecision,
    centroid,
    distance,
    embed,
    match_named,
)
from namegrounder.memory import MemoryStore, recall, store_name
from namegrounder.scene import ObjectInstance, Scene


@pytest.fixture(scope="module")
def space(library):
    return EmbeddingSpace.from_vocabulary(Vocabulary.from_library(library))


def scene_of(library, object_ids, scene_id="s"):
    instances = tuple(
        ObjectInstance(instance_id=f"obj{i}_{oid}", object_id=oid,
                       x=-350.0 + 190.0 * i, y=0.0, yaw=0.0)
        for i, oid in enumerate(object_ids)
    )
    return Scene(scene_id=scene_id, seed=0, camera_view="front",
                 instances=instances)


def record_for(library, space, object_id, sigma=0.0, seeds=(1, 2, 3, 4)):
    spec = library.get(object_id)
    vecs = tuple(
        embed(space, spec.category, tuple(sorted(spec.colors)),
              spec.size_class, spec.shape, sigma, s)
        for s in seeds
    )
    return recall(store_name(MemoryStore(), object_id, vecs), object_id)


class TestEmbeddingSpace:
    def test_dim_is_vocab_sized(self, library, space):
        vocab = Vocabulary.from_library(library)
        assert space.dim == (len(vocab.categories) + len(vocab.colors)
                             + 3 + len(vocab.shapes))

    def test_clean_encoding_is_one_hot_blocks(self, library, space):
        vec = embed(space, "bottle", ("brown",), "medium", "cylindrical",
                    sigma=0.0, seed=0)
        assert len(vec) == space.dim
        assert set(vec) == {0.0, 1.0}
        assert sum(vec) == 4.0
        assert vec[space.categories.index("bottle")] == 1.0

    def test_multicolor_sets_two_bits(self, space):
        vec = embed(space, "dog", ("brown", "white"), "medium", "sculpted",
                    sigma=0.0, seed=0)
        assert sum(vec) == 5.0

    def test_unknown_values_leave_zero_blocks(self, space):
        vec = embed(space, "unicorn", ("octarine",), "gigantic", "fractal",
                    sigma=0.0, seed=0)
        assert set(vec) == {0.0}

    def test_same_seed_same_vector(self, space):
        a = embed(space, "can", ("red",), "small", "cylindrical", 0.3, 17)
        b = embed(space, "can", ("red",), "small", "cylindrical", 0.3, 17)
        c = embed(space, "can", ("red",), "small", "cylindrical", 0.3, 18)
        assert a == b and a != c

    def test_noise_perturbs_every_dim(self, space):
        clean = embed(space, "can", ("red",), "small", "cylindrical", 0.0, 5)
        noisy = embed(space, "can", ("red",), "small", "cylindrical", 0.2, 5)
        assert all(a != b for a, b in zip(clean, noisy))


class TestDistance:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance((0.0, 1.0), (0.0,))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5),
                              st.floats(-5, 5)),
                    min_size=2, max_size=3))
    def test_metric_properties(self, pts):
        a, b = pts[0], pts[1]
        assert distance(a, a) == 0.0
        assert distance(a, b) == pytest.approx(distance(b, a))
        assert distance(a, b) >= 0.0
        if len(pts) == 3:
            c = pts[2]
            assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9

    def test_one_differing_block_costs_sqrt_two(self, space):
        a = embed(space, "bottle", ("brown",), "medium", "cylindrical", 0.0, 0)
        b = embed(space, "bottle", ("green",), "medium", "cylindrical", 0.0, 0)
        assert distance(a, b) == pytest.approx(math.sqrt(2))
        assert distance(a, b) > DEFAULT_TAU


class TestCentroid:
    def test_mean_per_column(self):
        assert centroid([(0.0, 2.0), (2.0, 4.0)]) == (1.0, 3.0)

    def test_single_observation_is_itself(self):
        assert centroid([(0.5, 0.25, 1.0)]) == (0.5, 0.25, 1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            centroid([])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)),
                    min_size=1, max_size=6))
    def test_centroid_minimizes_sum_of_squares(self, obs):
        c = centroid(obs)
        def cost(p):
            return sum(distance(p, o) ** 2 for o in obs)
        base = cost(c)
        for eps in ((0.01, 0.0), (0.0, 0.01), (-0.01, 0.01)):
            shifted = (c[0] + eps[0], c[1] + eps[1])
            assert base <= cost(shifted) + 1e-9


class TestMatchDecision:
    def test_inconsistent_accept_flag_rejected(self):
        with pytest.raises(ValueError):
            MatchDecision(best=("a", None, 2.0), tau=0.9, accepted=True)
        with pytest.raises(ValueError):
            MatchDecision(best=None, tau=0.9, accepted=True)


class TestMatchNamed:
    def test_clean_match_is_exact(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, ["bottle_brown", "can_red", "box_yellow"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        assert dec.accepted
        assert dec.best[0] == "obj0_bottle_brown"
        assert dec.best[2] == pytest.approx(0.0)
        assert not dec.duplicate_risk

    def test_absent_object_rejected(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, ["can_red", "box_yellow"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        assert not dec.accepted
        assert dec.best[2] > DEFAULT_TAU

    def test_empty_scene_rejected_without_best(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, [])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        assert not dec.accepted and dec.best is None

    def test_duplicate_instances_flagged(self, library, space):
        rec = record_for(library, space, "cup_white")
        scene = scene_of(library, ["cup_white", "cup_white", "can_red"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        assert dec.accepted and dec.duplicate_risk
        assert dec.best[0] == "obj0_cup_white"

    def test_flipped_readout_does_not_move_match(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, ["bottle_brown", "can_red"])
        obs = observe_scene(scene, library, NoiseConfig(p_flip=1.0, j=0.0),
                            seed=4)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        assert dec.accepted and dec.best[0] == "obj0_bottle_brown"
        assert dec.best[2] == pytest.approx(0.0)

    def test_ranked_is_sorted_and_complete(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, ["bottle_brown", "can_red", "box_yellow"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        ds = [d for _, d in dec.ranked]
        assert len(dec.ranked) == 3 and ds == sorted(ds)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_sigma_zero_accepts_iff_attributes_shared(self, library, space,
                                                      seed):
        r = random.Random(seed)
        ids = sorted(library.by_id)
        target = r.choice(ids)
        scene = scene_of(library, r.sample(ids, r.randint(2, 6)),
                         scene_id=f"prop{seed}")
        rec = record_for(library, space, target)
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=seed)
        dec = match_named(rec, obs, sigma=0.0, space=space)
        tspec = library.get(target)
        key = (tspec.category, tuple(sorted(tspec.colors)),
               tspec.size_class, tspec.shape)
        shares = [
            i.instance_id for i in scene.instances
            if (lambda s: (s.category, tuple(sorted(s.colors)), s.size_class,
                           s.shape))(library.get(i.object_id)) == key
        ]
        assert dec.accepted == bool(shares)
        if shares:
            assert dec.best[0] == min(shares)
            assert dec.duplicate_risk == (len(shares) > 1)

    def test_shrinking_tau_only_removes_acceptance(self, library, space):
        rec = record_for(library, space, "bottle_brown", sigma=0.1)
        scene = scene_of(library, ["bottle_brown", "can_red"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        accepted = [match_named(rec, obs, tau=t, sigma=0.2, seed=11,
                                space=space).accepted
                    for t in (2.5, 0.9, 0.3, 0.05)]
        for earlier, later in zip(accepted, accepted[1:]):
            assert earlier or not later

    def test_growing_sigma_degrades_acceptance(self, library, space):
        rec = record_for(library, space, "bottle_brown")
        scene = scene_of(library, ["bottle_brown", "can_red"])
        obs = observe_scene(scene, library, NoiseConfig.zero(), seed=0)
        def rate(sigma):
            hits = sum(
                match_named(rec, obs, sigma=sigma, seed=s, space=space).accepted
                for s in range(200)
            )
            return hits / 200
        assert rate(0.02) == 1.0
        assert rate(0.02) >= rate(0.2) >= rate(0.6)
        assert rate(0.6) < 1.0
