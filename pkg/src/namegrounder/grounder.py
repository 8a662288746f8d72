"""Instruction understanding: classification, entity extraction, noisy scene
observation, candidate ranking, and the exact ambiguity oracle.

This is a symbolic stand-in for a learned vision-language model: templates
replace the text encoder, attribute matching over (optionally corrupted)
observations replaces box grounding. Information flow is preserved -- name
entities carry no candidates here; a separate matcher resolves them from
memory downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .data import data_path, default_library_path
from .errors import ConfigError, ExtractionError
from .grammar import (
    POSITIVE_CLASSES,
    Descriptor,
    ReferringBank,
    TemplateBank,
    Vocabulary,
    load_confusions,
    load_names,
    normalize,
    parse_descriptor_phrase,
    tokenize,
)
from .scene import BBox, ObjectLibrary, Scene, clamp_box, load_object_library, project_bbox
from .seeding import rng

DETECTION_THRESHOLD = 0.5
_UNMATCHED_PENALTY = 0.45  # per unknown content token; keeps score below threshold

SIZE_CLASSES = ("small", "medium", "large")


@dataclass(frozen=True)
class NoiseConfig:
    """Perception-noise knobs, one channel per pipeline path.

    p_flip corrupts the symbolic attribute readout the descriptor path
    scores against; sigma perturbs the appearance embeddings the matcher
    compares, which are built from the instance's actual attributes; j
    jitters box edges in pixels. tau is the matcher's acceptance radius
    (a clean single-attribute mismatch costs sqrt(2)).
    """

    p_flip: float = 0.12
    j: float = 5.0
    sigma: float = 0.05
    tau: float = 0.9
    tie_break: str = "uniform"  # "uniform" or "deterministic"

    def __post_init__(self):
        if not (0.0 <= self.p_flip <= 1.0):
            raise ConfigError("p_flip must be in [0, 1]")
        if self.j < 0:
            raise ConfigError("j must be >= 0")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.tie_break not in ("uniform", "deterministic"):
            raise ConfigError("tie_break must be 'uniform' or 'deterministic'")

    @classmethod
    def zero(cls, tie_break: str = "deterministic") -> "NoiseConfig":
        return cls(p_flip=0.0, j=0.0, sigma=0.0, tie_break=tie_break)


@dataclass(frozen=True)
class ObservedInstance:
    """One instance as perceived: possibly-flipped attributes and a jittered
    box, alongside the ground-truth payload (true_*) that evaluation and the
    appearance-embedding path read."""

    instance_id: str
    object_id: str
    category: str
    colors: tuple[str, ...]
    size_class: str
    shape: str
    box: BBox
    true_box: BBox
    true_category: str = ""
    true_colors: tuple[str, ...] = ()
    true_size_class: str = ""
    true_shape: str = ""


@dataclass(frozen=True)
class SceneObservation:
    scene_id: str
    view: str
    seed: int
    instances: tuple[ObservedInstance, ...]

    def get(self, instance_id: str) -> ObservedInstance:
        for oi in self.instances:
            if oi.instance_id == instance_id:
                return oi
        raise KeyError(instance_id)


@dataclass(frozen=True)
class ExtractedEntity:
    phrase: str
    start: int
    end: int
    entity_type: str
    confidence: float


@dataclass(frozen=True)
class GroundingResult:
    instruction_class: str
    class_confidence: float
    entities: tuple[ExtractedEntity, ...]
    candidates: tuple[tuple[tuple[str, BBox, float], ...], ...]  # per entity


@dataclass(frozen=True)
class GrammarAssets:
    library: ObjectLibrary
    vocab: Vocabulary
    templates: TemplateBank
    referring: ReferringBank
    names: tuple[str, ...]
    confusions: dict[str, tuple[str, ...]] = field(hash=False)


def build_assets(library: ObjectLibrary) -> GrammarAssets:
    vocab = Vocabulary.from_library(library)
    return GrammarAssets(
        library=library,
        vocab=vocab,
        templates=TemplateBank.load(data_path("instruction_templates.tsv"), vocab),
        referring=ReferringBank.load(data_path("referring_templates.tsv")),
        names=load_names(data_path("names.txt")),
        confusions=load_confusions(data_path("confusions.tsv")),
    )


@lru_cache(maxsize=1)
def default_assets() -> GrammarAssets:
    return build_assets(load_object_library(default_library_path()))


def classify_instruction(text: str, assets: GrammarAssets | None = None) -> tuple[str, float]:
    """Instruction class plus match-coverage confidence; unmatched text is
    instruction-not-supported at confidence 0."""
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    assets = assets or default_assets()
    m = assets.templates.match(text)
    if m is None:
        return ("instruction-not-supported", 0.0)
    return (m.template.instruction_class, m.coverage)


def extract_entities(text: str, assets: GrammarAssets | None = None) -> tuple[ExtractedEntity, ...]:
    """Slot captures of the winning template, typed by role and content.

    A SRC/DST capture with no vocabulary token at all is a name reference.
    """
    assets = assets or default_assets()
    m = assets.templates.match(text)
    if m is None or m.template.instruction_class not in POSITIVE_CLASSES:
        raise ExtractionError("text does not match a supported instruction template")
    desc_tokens = assets.vocab.descriptor_tokens()
    out = []
    for role, start, end in m.slots:
        phrase = text[start:end]
        toks = tokenize(normalize(phrase))
        if not toks:
            raise ExtractionError(f"slot {role} captured an empty phrase")
        if role == "NAME":
            etype = "name"
        elif role == "OBJ_TO_NAME":
            etype = "object_to_be_named"
        elif all(t not in desc_tokens for t in toks):
            etype = "name"
        else:
            etype = "src" if role == "SRC" else "dst"
        if etype == "name":
            confidence = 1.0
        else:
            confidence = sum(t in desc_tokens for t in toks) / len(toks)
        out.append(ExtractedEntity(phrase=phrase, start=start, end=end,
                                   entity_type=etype, confidence=confidence))
    return tuple(out)


def parse_descriptor(phrase: str, assets: GrammarAssets | None = None) -> Descriptor:
    assets = assets or default_assets()
    return parse_descriptor_phrase(phrase, assets.vocab)


def _wrong_value(r, pool, exclude) -> str | None:
    options = sorted(set(pool) - set(exclude))
    if not options:
        return None
    return r.choice(options)


def observe_scene(scene: Scene, library: ObjectLibrary, noise: NoiseConfig,
                  seed: int, vocab: Vocabulary | None = None) -> SceneObservation:
    """Per-instance attribute readout with independent flips, plus box jitter.

    Deterministic in (scene, noise, seed). At zero noise the observation
    equals ground truth exactly.
    """
    vocab = vocab or Vocabulary.from_library(library)
    observed = []
    for inst in scene.instances:
        spec = library.get(inst.object_id)
        r = rng("observe", scene.scene_id, seed, inst.instance_id)
        category = spec.category
        colors = tuple(sorted(spec.colors))
        size_class = spec.size_class
        shape = spec.shape
        if r.random() < noise.p_flip:
            w = _wrong_value(r, vocab.categories, {category})
            category = w if w is not None else category
        if r.random() < noise.p_flip:
            w = _wrong_value(r, vocab.colors, set(colors))
            colors = (w,) if w is not None else colors
        if r.random() < noise.p_flip:
            w = _wrong_value(r, SIZE_CLASSES, {size_class})
            size_class = w if w is not None else size_class
        if r.random() < noise.p_flip:
            w = _wrong_value(r, vocab.shapes, {shape})
            shape = w if w is not None else shape
        true_box = project_bbox(inst, spec, scene.camera_view)
        rb = rng("observe-box", scene.scene_id, seed, inst.instance_id)
        box = clamp_box(
            true_box.x_min + rb.uniform(-noise.j, noise.j),
            true_box.y_min + rb.uniform(-noise.j, noise.j),
            true_box.x_max + rb.uniform(-noise.j, noise.j),
            true_box.y_max + rb.uniform(-noise.j, noise.j),
        )
        observed.append(ObservedInstance(
            instance_id=inst.instance_id, object_id=inst.object_id,
            category=category, colors=colors, size_class=size_class,
            shape=shape, box=box, true_box=true_box,
            true_category=spec.category, true_colors=tuple(sorted(spec.colors)),
            true_size_class=spec.size_class, true_shape=spec.shape,
        ))
    return SceneObservation(scene_id=scene.scene_id, view=scene.camera_view,
                            seed=seed, instances=tuple(observed))


def _satisfaction(d: Descriptor, category: str, colors, size_class: str,
                  shape: str) -> tuple[int, int]:
    satisfied = 0
    total = d.field_count()
    if d.category is not None:
        satisfied += category == d.category
    if d.colors:
        satisfied += set(d.colors) <= set(colors)
    if d.size_class is not None:
        satisfied += size_class == d.size_class
    if d.shape is not None:
        satisfied += shape == d.shape
    return satisfied, total


def candidates(obs: SceneObservation, d: Descriptor) -> list[tuple[str, BBox, float]]:
    """Ranked (instance_id, observed box, score); score is the satisfied
    fraction of descriptor fields, penalized per unknown content token."""
    n = len(obs.instances)
    out = []
    for oi in sorted(obs.instances, key=lambda o: o.instance_id):
        if d.pronoun:
            score = 1.0 if n == 1 else 1.0 / n
        else:
            satisfied, total = _satisfaction(d, oi.category, oi.colors,
                                             oi.size_class, oi.shape)
            if satisfied == 0:
                continue
            score = satisfied / total
            if d.unmatched:
                score *= _UNMATCHED_PENALTY ** len(d.unmatched)
        out.append((oi.instance_id, oi.box, score))
    out.sort(key=lambda t: (-t[2], t[0]))
    return out


def exact_candidates(scene: Scene, library: ObjectLibrary, d: Descriptor) -> tuple[str, ...]:
    """Noise-free candidate set over true attributes; sorted instance ids.

    Unknown content tokens admit no candidate. The pronoun form denotes
    every instance (a single object uniquely, several ambiguously).
    """
    if d.unmatched:
        return ()
    if d.pronoun:
        return tuple(sorted(i.instance_id for i in scene.instances))
    out = []
    for inst in scene.instances:
        spec = library.get(inst.object_id)
        satisfied, total = _satisfaction(d, spec.category, spec.colors,
                                         spec.size_class, spec.shape)
        if total > 0 and satisfied == total:
            out.append(inst.instance_id)
    return tuple(sorted(out))


def ambiguity_oracle(scene: Scene, library: ObjectLibrary, d: Descriptor) -> str:
    n = len(exact_candidates(scene, library, d))
    if n == 1:
        return "unambiguous"
    if n >= 2:
        return "multiple-candidates"
    return "incorrect-reference"


def ground_instruction(text: str, obs: SceneObservation,
                       assets: GrammarAssets | None = None) -> GroundingResult:
    """Full grounding pass: class, entities, per-entity ranked candidates.

    Name entities get empty candidate lists here; resolving names against
    memory is the matcher's job.
    """
    assets = assets or default_assets()
    icls, conf = classify_instruction(text, assets)
    if icls not in POSITIVE_CLASSES:
        return GroundingResult(icls, conf, (), ())
    entities = extract_entities(text, assets)
    ranked = []
    for ent in entities:
        if ent.entity_type == "name":
            ranked.append(())
        else:
            d = parse_descriptor_phrase(ent.phrase, assets.vocab)
            ranked.append(tuple(candidates(obs, d)))
    return GroundingResult(icls, conf, entities, tuple(ranked))
