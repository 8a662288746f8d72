"""Few-shot instance matcher: one-hot attribute embeddings and a
nearest-centroid decision with an acceptance threshold.

Stands in for the ArcFace+SVM template matcher: the 'image template' of a
named object becomes a concatenated one-hot vector over the attribute
vocabulary, and acceptance means the nearest scene embedding is within tau
of the stored centroid. With clean attributes a single differing attribute
block costs sqrt(2) in distance, so the default tau separates exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .grammar import Vocabulary
from .grounder import SceneObservation
from .scene import BBox
from .seeding import rng, stable_int

DEFAULT_TAU = 0.9

FeatureVec = tuple[float, ...]

_SIZES = ("small", "medium", "large")


@dataclass(frozen=True)
class EmbeddingSpace:
    """Fixed embedding layout: category, color, size, shape one-hot blocks."""

    categories: tuple[str, ...]
    colors: tuple[str, ...]
    shapes: tuple[str, ...]

    @classmethod
    def from_vocabulary(cls, vocab: Vocabulary) -> "EmbeddingSpace":
        return cls(categories=vocab.categories, colors=vocab.colors,
                   shapes=vocab.shapes)

    @property
    def dim(self) -> int:
        return len(self.categories) + len(self.colors) + len(_SIZES) + len(self.shapes)

    def encode(self, category: str, colors, size_class: str, shape: str) -> list[float]:
        vec = [0.0] * self.dim
        off = 0
        if category in self.categories:
            vec[off + self.categories.index(category)] = 1.0
        off += len(self.categories)
        for c in colors:
            if c in self.colors:
                vec[off + self.colors.index(c)] = 1.0
        off += len(self.colors)
        if size_class in _SIZES:
            vec[off + _SIZES.index(size_class)] = 1.0
        off += len(_SIZES)
        if shape in self.shapes:
            vec[off + self.shapes.index(shape)] = 1.0
        return vec


def embed(space: EmbeddingSpace, category: str, colors, size_class: str,
          shape: str, sigma: float, seed: int) -> FeatureVec:
    """One-hot encoding plus i.i.d. Gaussian noise of scale sigma per dim."""
    vec = space.encode(category, colors, size_class, shape)
    if sigma > 0:
        r = rng("embed", seed)
        vec = [v + r.gauss(0.0, sigma) for v in vec]
    return tuple(vec)


def distance(a: FeatureVec, b: FeatureVec) -> float:
    if len(a) != len(b):
        raise ValueError("feature vectors differ in dimension")
    return math.dist(a, b)


def centroid(observations) -> FeatureVec:
    obs = list(observations)
    if not obs:
        raise ValueError("empty observation list")
    k = len(obs)
    return tuple(sum(col) / k for col in zip(*obs))


@dataclass(frozen=True)
class MatchDecision:
    best: tuple[str, BBox, float] | None  # (instance_id, box, distance)
    tau: float
    accepted: bool
    duplicate_risk: bool = False
    ranked: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.accepted != (self.best is not None and self.best[2] <= self.tau):
            raise ValueError("accepted flag inconsistent with best distance")


def match_named(record, obs: SceneObservation, tau: float = DEFAULT_TAU,
                sigma: float = 0.0, seed: int | None = None,
                space: EmbeddingSpace | None = None) -> MatchDecision:
    """Nearest scene instance to the record's observation centroid.

    `record` needs only an `observations` attribute (the memory module's
    NamingRecord fits). Ties resolve by instance_id; acceptance is
    min-distance <= tau. Rejection is a decision, not an error.
    """
    if space is None:
        from .grounder import default_assets
        space = EmbeddingSpace.from_vocabulary(default_assets().vocab)
    c = centroid(record.observations)
    base_seed = obs.seed if seed is None else seed
    scored: list[tuple[float, str, BBox]] = []
    for oi in sorted(obs.instances, key=lambda o: o.instance_id):
        # appearance features come from what the object actually looks
        # like, not from the symbolic readout the descriptor path scores
        vec = embed(space, oi.true_category, oi.true_colors,
                    oi.true_size_class, oi.true_shape, sigma,
                    stable_int("match-embed", obs.scene_id, base_seed,
                               oi.instance_id))
        scored.append((distance(vec, c), oi.instance_id, oi.box))
    if not scored:
        return MatchDecision(best=None, tau=tau, accepted=False)
    scored.sort(key=lambda t: (t[0], t[1]))
    d0, iid, box = scored[0]
    accepted = d0 <= tau
    dup = accepted and len(scored) > 1 and scored[1][0] <= tau
    return MatchDecision(
        best=(iid, box, d0), tau=tau, accepted=accepted, duplicate_risk=dup,
        ranked=tuple((i, d) for d, i, _ in scored),
    )
