"""Episode execution: referent resolution, grasp planning, and the simulated
pick-and-place / naming flows.

An episode never raises for in-scene failures; it reports the first pipeline
stage that went wrong. Stage order is classify, extract, ground/match (src
then dst), grasp, place. Success (sr_ok) means the whole chain held up:
correct class, correct phrases, the gold objects chosen, detection IoU above
half, and both arm actions feasible, so sr_ok always implies br_ok.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .errors import ExtractionError
from .grounder import (
    DETECTION_THRESHOLD,
    GrammarAssets,
    NoiseConfig,
    SceneObservation,
    candidates,
    classify_instruction,
    default_assets,
    extract_entities,
    observe_scene,
    parse_descriptor,
)
from .langgen import AnnotatedInstruction
from .matcher import EmbeddingSpace, embed, match_named
from .memory import MemoryStore, recall, store_name
from .scene import (
    IMAGE_H,
    IMAGE_W,
    BBox,
    ObjectLibrary,
    Scene,
    _view_axes,
    _yaw_snapped,
    in_table_bounds,
    iou,
    project_point,
    table_point_at_depth,
)
from .seeding import rng, stable_int

STAGES = ("classify", "extract", "ground", "match", "grasp", "place", "none")

MIN_DETECTION_IOU = 0.5


@dataclass(frozen=True)
class ResolvedTarget:
    ok: bool
    instance_id: str | None = None
    box: BBox | None = None
    route: str = "none"            # "name" or "descriptor"
    stage: str | None = None       # failure stage when not ok
    phrase: str = ""


@dataclass(frozen=True)
class GraspPlan:
    target_instance_id: str
    candidates: tuple[tuple[float, float], ...]
    feasible: tuple[tuple[float, float], ...]
    ok: bool
    reason: str = ""


@dataclass(frozen=True)
class EpisodeResult:
    instruction_id: str
    scene_id: str
    text: str
    episode_kind: str              # "manipulation" or "naming"
    gold_class: str
    predicted_class: str
    ambiguity_label: str
    icr_ok: bool
    pr_ok: bool
    br_ok: bool
    sr_ok: bool
    failure_stage: str
    chosen_src: str | None = None
    chosen_src_box: BBox | None = None
    chosen_dst: str | None = None
    chosen_dst_box: BBox | None = None
    stored_name: str | None = None

    def __post_init__(self):
        if self.failure_stage not in STAGES:
            raise ValueError(f"unknown failure stage {self.failure_stage!r}")
        if self.sr_ok != (self.failure_stage == "none"):
            raise ValueError("sr_ok must coincide with failure_stage 'none'")
        if self.sr_ok and not self.br_ok:
            raise ValueError("success requires detection (sr_ok implies br_ok)")

    def to_dict(self) -> dict:
        def box(b: BBox | None):
            return None if b is None else list(b.as_tuple())
        return {
            "instruction_id": self.instruction_id,
            "scene_id": self.scene_id,
            "text": self.text,
            "episode_kind": self.episode_kind,
            "gold_class": self.gold_class,
            "predicted_class": self.predicted_class,
            "ambiguity_label": self.ambiguity_label,
            "icr_ok": self.icr_ok,
            "pr_ok": self.pr_ok,
            "br_ok": self.br_ok,
            "sr_ok": self.sr_ok,
            "failure_stage": self.failure_stage,
            "chosen_src": self.chosen_src,
            "chosen_src_box": box(self.chosen_src_box),
            "chosen_dst": self.chosen_dst,
            "chosen_dst_box": box(self.chosen_dst_box),
            "stored_name": self.stored_name,
        }


def place_point(box: BBox) -> tuple[float, float]:
    """Average of the four box corner positions in image space."""
    corners = ((box.x_min, box.y_min), (box.x_min, box.y_max),
               (box.x_max, box.y_min), (box.x_max, box.y_max))
    return (sum(c[0] for c in corners) / 4.0, sum(c[1] for c in corners) / 4.0)


def plan_grasp(scene: Scene, library: ObjectLibrary, obs: SceneObservation,
               instance_id: str) -> GraspPlan:
    """Project the object's grasp points and keep those inside its observed
    box and the image frame. Non-graspable objects never yield a plan."""
    inst = next(i for i in scene.instances if i.instance_id == instance_id)
    spec = library.get(inst.object_id)
    depth = _view_axes(scene.camera_view, inst.x, inst.y)[1]
    z = spec.height / 2.0
    pts = []
    for ox, oy in spec.grasp_offsets():
        rx, ry = (ox, oy) if _yaw_snapped(inst.yaw) == 0.0 else (-oy, ox)
        pts.append(project_point(inst.x + rx, inst.y + ry, z,
                                 scene.camera_view, instance_depth=depth))
    pts = tuple(pts)
    if not spec.graspable:
        return GraspPlan(instance_id, pts, (), ok=False, reason="not-graspable")
    box = obs.get(instance_id).box
    feasible = tuple(
        (u, v) for u, v in pts
        if box.contains(u, v) and 0 <= u <= IMAGE_W and 0 <= v <= IMAGE_H
    )
    if not feasible:
        return GraspPlan(instance_id, pts, (), ok=False, reason="no-feasible-point")
    return GraspPlan(instance_id, pts, feasible, ok=True)


def resolve_target(entities, store: MemoryStore, obs: SceneObservation,
                   noise: NoiseConfig, seed: int,
                   assets: GrammarAssets | None = None) -> ResolvedTarget:
    """Resolve one role's entities to a scene instance.

    The highest-confidence entity wins the role. Names go through memory
    recall plus the instance matcher; everything else is parsed as a
    descriptor and ranked against the observation. Failure is a value (with
    its stage), not an exception.
    """
    assets = assets or default_assets()
    ents = list(entities)
    if not ents:
        return ResolvedTarget(ok=False, stage="extract")
    ent = max(ents, key=lambda e: e.confidence)
    if ent.entity_type == "name":
        rec = recall(store, ent.phrase)
        if rec is None:
            return ResolvedTarget(ok=False, route="name", stage="match",
                                  phrase=ent.phrase)
        decision = match_named(
            rec, obs, tau=noise.tau, sigma=noise.sigma,
            seed=stable_int(seed, "resolve", ent.start),
            space=EmbeddingSpace.from_vocabulary(assets.vocab),
        )
        if not decision.accepted:
            return ResolvedTarget(ok=False, route="name", stage="match",
                                  phrase=ent.phrase)
        iid, box, _ = decision.best
        return ResolvedTarget(ok=True, instance_id=iid, box=box, route="name",
                              phrase=ent.phrase)
    d = parse_descriptor(ent.phrase, assets)
    ranked = candidates(obs, d)
    if not ranked or ranked[0][2] < DETECTION_THRESHOLD:
        return ResolvedTarget(ok=False, route="descriptor", stage="ground",
                              phrase=ent.phrase)
    top = ranked[0][2]
    ties = [c for c in ranked if math.isclose(c[2], top, abs_tol=1e-12)]
    if noise.tie_break == "uniform" and len(ties) > 1:
        pick = rng("tiebreak", obs.scene_id, seed, ent.start).choice(ties)
    else:
        pick = ties[0]
    return ResolvedTarget(ok=True, instance_id=pick[0], box=pick[1],
                          route="descriptor", phrase=ent.phrase)


def _gold_pairs(instr: AnnotatedInstruction) -> tuple[str | None, str | None]:
    """Gold (src, dst) instance ids from the annotation, when present."""
    golds = [e.gold_instance_id for e in instr.entities
             if e.entity_type in ("src", "dst", "name")]
    src = golds[0] if golds else None
    dst = golds[1] if len(golds) > 1 else None
    return src, dst


def _capture_instance_views(scene: Scene, library: ObjectLibrary,
                            noise: NoiseConfig, seed: int, instance_id: str,
                            assets: GrammarAssets, k: int = 4):
    """Per-view feature vectors of one instance within an arbitrary scene."""
    from .scene import VIEWS
    space = EmbeddingSpace.from_vocabulary(assets.vocab)
    start = VIEWS.index(scene.camera_view)
    vecs = []
    for i in range(k):
        view = VIEWS[(start + i) % len(VIEWS)]
        staged = dataclasses.replace(scene, camera_view=view)
        o = observe_scene(staged, library, noise,
                          stable_int(seed, "capture", i), vocab=assets.vocab)
        oi = o.get(instance_id)
        vecs.append(embed(space, oi.true_category, oi.true_colors,
                          oi.true_size_class, oi.true_shape, noise.sigma,
                          stable_int(seed, "capture-embed", i)))
    return tuple(vecs)


def run_naming_episode(instr: AnnotatedInstruction, scene: Scene,
                       library: ObjectLibrary, store: MemoryStore,
                       noise: NoiseConfig, seed: int,
                       assets: GrammarAssets | None = None,
                       ) -> tuple[MemoryStore, EpisodeResult]:
    """Teach-by-name flow: classify, extract the name and object phrases,
    detect the object, capture four views, store.

    Any failure leaves the store untouched. Works on single-object naming
    scenes and on full scenes where the object phrase must disambiguate.
    """
    assets = assets or default_assets()

    def fail(stage, predicted="", icr=False, pr=False, br=False,
             chosen=None, chosen_box=None):
        return store, EpisodeResult(
            instruction_id=instr.instruction_id, scene_id=scene.scene_id,
            text=instr.text, episode_kind="naming",
            gold_class=instr.instruction_class, predicted_class=predicted,
            ambiguity_label=instr.ambiguity_label,
            icr_ok=icr, pr_ok=pr, br_ok=br, sr_ok=False, failure_stage=stage,
            chosen_src=chosen, chosen_src_box=chosen_box,
        )

    predicted, _ = classify_instruction(instr.text, assets)
    icr_ok = predicted == instr.instruction_class
    if predicted != "naming-object":
        return fail("classify", predicted, icr=icr_ok)

    try:
        extracted = extract_entities(instr.text, assets)
    except ExtractionError:
        return fail("extract", predicted, icr=icr_ok)
    names = [e for e in extracted if e.entity_type == "name"]
    objects = [e for e in extracted if e.entity_type == "object_to_be_named"]
    pr_ok = _phrases_match(extracted, instr.entities)
    if not names or not objects:
        return fail("extract", predicted, icr=icr_ok)
    if not pr_ok:
        return fail("extract", predicted, icr=icr_ok)

    if not scene.instances:
        return fail("ground", predicted, icr=icr_ok, pr=pr_ok)
    obs = observe_scene(scene, library, noise, stable_int(seed, "obs"),
                        vocab=assets.vocab)
    res = resolve_target(objects, store, obs, noise,
                         stable_int(seed, "obj"), assets)
    if not res.ok:
        return fail(res.stage or "ground", predicted, icr=icr_ok, pr=pr_ok)

    gold = None
    for e in instr.entities:
        if e.entity_type == "object_to_be_named" and e.gold_instance_id:
            gold = e.gold_instance_id
    oi = obs.get(res.instance_id)
    br_ok = iou(oi.box, oi.true_box) > MIN_DETECTION_IOU
    if not br_ok:
        return fail("ground", predicted, icr=icr_ok, pr=pr_ok,
                    chosen=res.instance_id, chosen_box=res.box)
    if gold is not None and res.instance_id != gold:
        return fail("ground", predicted, icr=icr_ok, pr=pr_ok, br=br_ok,
                    chosen=res.instance_id, chosen_box=res.box)

    vecs = _capture_instance_views(scene, library, noise, seed,
                                   res.instance_id, assets)
    name_phrase = names[0].phrase
    updated = store_name(store, name_phrase, vecs,
                         source_scene_id=scene.scene_id)
    result = EpisodeResult(
        instruction_id=instr.instruction_id, scene_id=scene.scene_id,
        text=instr.text, episode_kind="naming",
        gold_class=instr.instruction_class, predicted_class=predicted,
        ambiguity_label=instr.ambiguity_label,
        icr_ok=icr_ok, pr_ok=pr_ok, br_ok=br_ok, sr_ok=True,
        failure_stage="none", chosen_src=res.instance_id,
        chosen_src_box=res.box, stored_name=name_phrase,
    )
    return updated, result


def _phrases_match(extracted, gold_entities) -> bool:
    """PR check: extracted phrases equal the annotated ones (span and type)."""
    if not gold_entities:
        return True
    ext = [(e.phrase, e.start, e.end, e.entity_type) for e in extracted]
    gold = [(e.phrase, e.start, e.end, e.entity_type) for e in gold_entities]
    return ext == gold


def run_manipulation_episode(instr: AnnotatedInstruction, scene: Scene,
                             library: ObjectLibrary, store: MemoryStore,
                             noise: NoiseConfig, seed: int,
                             assets: GrammarAssets | None = None,
                             ) -> tuple[EpisodeResult, Scene]:
    """Pick-and-place (or reject-unsupported) episode against one scene.

    Returns the result and the post-action scene; the scene only changes on
    a completed place. Naming sentences belong to run_naming_episode.
    """
    if instr.instruction_class not in ("pick-and-place",
                                       "instruction-not-supported"):
        raise ValueError(
            f"manipulation episode got class {instr.instruction_class!r}")
    assets = assets or default_assets()
    predicted, _ = classify_instruction(instr.text, assets)
    icr_ok = predicted == instr.instruction_class

    def result(stage, pr=False, br=False, sr=False, src=None, src_box=None,
               dst=None, dst_box=None):
        return EpisodeResult(
            instruction_id=instr.instruction_id, scene_id=scene.scene_id,
            text=instr.text, episode_kind="manipulation",
            gold_class=instr.instruction_class, predicted_class=predicted,
            ambiguity_label=instr.ambiguity_label,
            icr_ok=icr_ok, pr_ok=pr, br_ok=br, sr_ok=sr, failure_stage=stage,
            chosen_src=src, chosen_src_box=src_box,
            chosen_dst=dst, chosen_dst_box=dst_box,
        )

    if instr.instruction_class == "instruction-not-supported":
        # correct handling is to do nothing; acting on it is the failure
        rejected = predicted == "instruction-not-supported"
        if rejected:
            return result("none", pr=True, br=True, sr=True), scene
        return result("classify"), scene

    if predicted != "pick-and-place":
        return result("classify"), scene

    try:
        extracted = extract_entities(instr.text, assets)
    except ExtractionError:
        return result("extract"), scene
    pr_ok = _phrases_match(extracted, instr.entities)
    if not extracted:
        return result("extract", pr=pr_ok), scene

    obs = observe_scene(scene, library, noise, stable_int(seed, "obs"),
                        vocab=assets.vocab)
    gold_src, gold_dst = _gold_pairs(instr)

    src_res = resolve_target([extracted[0]], store, obs, noise,
                             stable_int(seed, "src"), assets)
    if not src_res.ok:
        return result(src_res.stage or "ground", pr=pr_ok), scene

    dst_res = None
    if len(extracted) > 1:
        dst_res = resolve_target([extracted[1]], store, obs, noise,
                                 stable_int(seed, "dst"), assets)
        if not dst_res.ok:
            return result(dst_res.stage or "ground", pr=pr_ok,
                          src=src_res.instance_id, src_box=src_res.box), scene

    chosen = dict(src=src_res.instance_id, src_box=src_res.box,
                  dst=dst_res.instance_id if dst_res else None,
                  dst_box=dst_res.box if dst_res else None)

    # detection quality is judged against the gold object's true region
    br_ref = gold_src if gold_src is not None else src_res.instance_id
    br_ok = iou(src_res.box, obs.get(br_ref).true_box) > MIN_DETECTION_IOU

    if gold_src is not None and src_res.instance_id != gold_src:
        stage = "match" if src_res.route == "name" else "ground"
        return result(stage, pr=pr_ok, br=br_ok, **chosen), scene
    if dst_res is not None and gold_dst is not None \
            and dst_res.instance_id != gold_dst:
        stage = "match" if dst_res.route == "name" else "ground"
        return result(stage, pr=pr_ok, br=br_ok, **chosen), scene
    if not br_ok:
        stage = "match" if src_res.route == "name" else "ground"
        return result(stage, pr=pr_ok, **chosen), scene

    grasp = plan_grasp(scene, library, obs, src_res.instance_id)
    if not grasp.ok:
        return result("grasp", pr=pr_ok, br=br_ok, **chosen), scene

    post = scene
    if dst_res is not None:
        u, v = place_point(dst_res.box)
        dst_inst = next(i for i in scene.instances
                        if i.instance_id == dst_res.instance_id)
        depth = _view_axes(scene.camera_view, dst_inst.x, dst_inst.y)[1]
        lx, ly = table_point_at_depth(u, depth, scene.camera_view)
        dst_spec = library.get(dst_inst.object_id)
        ex, ey = dst_inst.extents(dst_spec)
        on_target = (abs(lx - dst_inst.x) <= ex / 2.0
                     and abs(ly - dst_inst.y) <= ey / 2.0)
        if not (in_table_bounds(lx, ly, scene.table_bounds) and on_target):
            return result("place", pr=pr_ok, br=br_ok, **chosen), scene
        moved = tuple(
            dataclasses.replace(i, x=round(lx, 1), y=round(ly, 1))
            if i.instance_id == src_res.instance_id else i
            for i in scene.instances
        )
        post = dataclasses.replace(scene, instances=moved)

    if not pr_ok:
        # the arm did act, so the scene still changes
        return result("extract", pr=pr_ok, br=br_ok, **chosen), post
    return result("none", pr=pr_ok, br=br_ok, sr=True, **chosen), post
