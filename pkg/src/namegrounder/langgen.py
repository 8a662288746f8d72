"""Dataset generation: referring expressions under a uniqueness constraint,
templated instructions per class, ambiguous and negative instructions, name
substitution, and whole-dataset assembly with a class/ambiguity mix."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

from .errors import (
    ConfigError,
    FormatError,
    GenerationInfeasibleError,
    NonUniqueDescriptorError,
)
from .grammar import (
    LEVEL_COMBOS,
    Descriptor,
    Template,
    combo_key,
)
from .grounder import GrammarAssets, default_assets, exact_candidates
from .scene import ObjectLibrary, Scene, generate_scene
from .seeding import rng, stable_int

AMBIGUITY_LABELS = ("unambiguous", "multiple-candidates", "incorrect-reference")

_POLITENESS_RATE = 0.15


@dataclass(frozen=True)
class Entity:
    phrase: str
    start: int
    end: int
    entity_type: str
    gold_instance_id: str | None = None


@dataclass(frozen=True)
class AnnotatedInstruction:
    instruction_id: str
    scene_id: str
    text: str
    instruction_class: str
    entities: tuple[Entity, ...]
    ambiguity_label: str

    def __post_init__(self):
        spans = sorted((e.start, e.end) for e in self.entities)
        for (s1, e1), (s2, _) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError("entity spans overlap")
        for e in self.entities:
            if not (0 <= e.start < e.end <= len(self.text)):
                raise ValueError("entity span outside text")
            if self.text[e.start:e.end] != e.phrase:
                raise ValueError("entity phrase does not match its span")


@dataclass(frozen=True)
class MixConfig:
    """Per-class proportions of a generated dataset; must sum to 1.

    Naming sentences default to zero here because evaluation generates its
    own naming episode per manipulation instruction; a nonzero share simply
    mixes naming sentences into the dataset as ordinary rows.
    """

    pick: float = 0.76
    naming: float = 0.00
    not_supported: float = 0.07
    multiple_candidates: float = 0.10
    incorrect_reference: float = 0.07

    def __post_init__(self):
        vals = (self.pick, self.naming, self.not_supported,
                self.multiple_candidates, self.incorrect_reference)
        if any(v < 0 for v in vals):
            raise ConfigError("mix proportions must be non-negative")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ConfigError(f"mix proportions must sum to 1, got {sum(vals)}")

    @property
    def ambiguous_fraction(self) -> float:
        return self.multiple_candidates + self.incorrect_reference

    def as_dict(self) -> dict[str, float]:
        return {
            "pick": self.pick,
            "naming": self.naming,
            "not_supported": self.not_supported,
            "multiple_candidates": self.multiple_candidates,
            "incorrect_reference": self.incorrect_reference,
        }


@dataclass(frozen=True)
class Dataset:
    scenes: tuple[Scene, ...]
    instructions: tuple[AnnotatedInstruction, ...]
    manifest: dict

    def scene(self, scene_id: str) -> Scene:
        for s in self.scenes:
            if s.scene_id == scene_id:
                return s
        raise KeyError(scene_id)


def gen_referring_expression(scene: Scene, library: ObjectLibrary, target: str,
                             level: int, seed: int,
                             assets: GrammarAssets | None = None) -> tuple[Descriptor, str]:
    """Least-detailed unique descriptor at or above the requested level.

    Level 0 is the pronoun form, valid only in single-object scenes; above
    that, detail escalates (category, +1 attribute, full) until the exact
    candidate set is {target}.
    """
    assets = assets or default_assets()
    inst = scene.get(target)
    spec = library.get(inst.object_id)
    r = rng("refexpr", scene.scene_id, target, level, seed)

    if level == 0 and len(scene.instances) == 1:
        return Descriptor(pronoun=True), assets.referring.realize("PRON", r)

    for lvl in range(max(level, 1), 4):
        combos = list(LEVEL_COMBOS[lvl])
        r.shuffle(combos)
        for combo in combos:
            color_options = list(spec.colors) if "color" in combo else [None]
            r.shuffle(color_options)
            for color in color_options:
                d = Descriptor(
                    category=spec.category,
                    colors=(color,) if color is not None else (),
                    size_class=spec.size_class if "size" in combo else None,
                    shape=spec.shape if "shape" in combo else None,
                )
                if exact_candidates(scene, library, d) == (target,):
                    text = assets.referring.realize(
                        combo_key(combo), r, category=spec.category,
                        aliases=spec.aliases, color=color,
                        size_class=spec.size_class, shape=spec.shape)
                    return d, text
    full = Descriptor(category=spec.category, colors=tuple(sorted(spec.colors)),
                      size_class=spec.size_class, shape=spec.shape)
    raise NonUniqueDescriptorError(target, exact_candidates(scene, library, full))


def _assemble(template: Template, fills: dict[int, str], polite: bool,
              roles_gold: dict[int, str | None]) -> tuple[str, tuple[Entity, ...]]:
    """Join literal tokens and slot fills, tracking entity character spans."""
    text = "please" if polite else ""
    entities = []
    slot_idx = 0
    for i, item in enumerate(template.items):
        seg = fills[i] if i in fills else ("I" if item == "i" else item)
        if text:
            text += " "
        start = len(text)
        text += seg
        if i in fills:
            role = template.slot_roles[slot_idx]
            etype = {"SRC": "src", "DST": "dst", "NAME": "name",
                     "OBJ_TO_NAME": "object_to_be_named"}[role]
            entities.append(Entity(phrase=seg, start=start, end=start + len(seg),
                                   entity_type=etype,
                                   gold_instance_id=roles_gold.get(slot_idx)))
            slot_idx += 1
    text = text[0].upper() + text[1:] + "."
    # capitalization may touch the first entity's phrase
    fixed = tuple(replace(e, phrase=text[e.start:e.end]) for e in entities)
    return text, fixed


def _slot_positions(template: Template) -> list[int]:
    return [i for i, item in enumerate(template.items) if item.startswith("{")]


def gen_instruction(scene: Scene, library: ObjectLibrary, instruction_class: str,
                    seed: int, assets: GrammarAssets | None = None,
                    instruction_id: str = "") -> AnnotatedInstruction:
    """One unambiguous instruction of the given class, deterministic per seed."""
    assets = assets or default_assets()
    r = rng("instr", scene.scene_id, instruction_class, seed)
    polite = r.random() < _POLITENESS_RATE

    if instruction_class == "instruction-not-supported":
        template = r.choice(assets.templates.by_class(instruction_class))
        text, _ = _assemble(template, {}, polite, {})
        return AnnotatedInstruction(instruction_id, scene.scene_id, text,
                                    instruction_class, (), "unambiguous")

    graspable = sorted(i.instance_id for i in scene.instances
                       if library.get(i.object_id).graspable)
    if not graspable:
        raise GenerationInfeasibleError("scene has no graspable object")

    if instruction_class == "naming-object":
        template = r.choice(assets.templates.by_class(instruction_class))
        target = r.choice(graspable)
        level = 0 if len(scene.instances) == 1 else r.choice((1, 2, 3))
        _, expr = gen_referring_expression(scene, library, target, level,
                                           r.randrange(1 << 30), assets)
        name = r.choice(assets.names)
        pos = _slot_positions(template)
        fills, gold = {}, {}
        for k, i in enumerate(pos):
            role = template.slot_roles[k]
            fills[i] = expr if role == "OBJ_TO_NAME" else name
            gold[k] = target
        text, entities = _assemble(template, fills, polite, gold)
        return AnnotatedInstruction(instruction_id, scene.scene_id, text,
                                    instruction_class, entities, "unambiguous")

    if instruction_class != "pick-and-place":
        raise ValueError(f"unknown instruction class {instruction_class!r}")

    templates = assets.templates.by_class("pick-and-place")
    if len(scene.instances) < 2:
        templates = tuple(t for t in templates if not t.has_slot("DST"))
    template = r.choice(templates)
    src = r.choice(graspable)
    level = 0 if len(scene.instances) == 1 else r.choice((1, 2, 3))
    _, src_expr = gen_referring_expression(scene, library, src, level,
                                           r.randrange(1 << 30), assets)
    fills, gold = {}, {}
    pos = _slot_positions(template)
    for k, i in enumerate(pos):
        role = template.slot_roles[k]
        if role == "SRC":
            fills[i] = src_expr
            gold[k] = src
        else:
            others = sorted(x.instance_id for x in scene.instances
                            if x.instance_id != src)
            dst = r.choice(others)
            _, dst_expr = gen_referring_expression(
                scene, library, dst, r.choice((1, 2, 3)),
                r.randrange(1 << 30), assets)
            fills[i] = dst_expr
            gold[k] = dst
    text, entities = _assemble(template, fills, polite, gold)
    return AnnotatedInstruction(instruction_id, scene.scene_id, text,
                                "pick-and-place", entities, "unambiguous")


def multi_candidates_feasible(scene: Scene, library: ObjectLibrary) -> bool:
    return bool(_shared_categories(scene, library))


def incorrect_reference_feasible(scene: Scene, library: ObjectLibrary,
                                 confusions: dict[str, tuple[str, ...]]) -> bool:
    return bool(_confusable_pairs(scene, library, confusions))


def _shared_categories(scene: Scene, library: ObjectLibrary) -> list[str]:
    by_cat: dict[str, list] = {}
    for inst in scene.instances:
        by_cat.setdefault(library.get(inst.object_id).category, []).append(inst)
    out = []
    for cat, members in by_cat.items():
        if len(members) >= 2 and any(library.get(m.object_id).graspable
                                     for m in members):
            out.append(cat)
    return sorted(out)


def _confusable_pairs(scene: Scene, library: ObjectLibrary,
                      confusions: dict[str, tuple[str, ...]]) -> list[tuple[str, str]]:
    present = {library.get(i.object_id).category for i in scene.instances}
    pairs = []
    for inst in sorted(scene.instances, key=lambda i: i.instance_id):
        spec = library.get(inst.object_id)
        if not spec.graspable:
            continue
        for wrong in confusions.get(spec.category, ()):
            if wrong not in present:
                pairs.append((inst.instance_id, wrong))
    return pairs


def gen_ambiguous_instruction(scene: Scene, library: ObjectLibrary, kind: str,
                              seed: int, assets: GrammarAssets | None = None,
                              instruction_id: str = "") -> AnnotatedInstruction:
    """A pick-and-place instruction whose src reference is ambiguous.

    multiple-candidates drops attributes down to a shared category;
    incorrect-reference swaps the category for a confusable absent one.
    The gold id records the intended object in both cases.
    """
    assets = assets or default_assets()
    r = rng("ambig", scene.scene_id, kind, seed)
    polite = r.random() < _POLITENESS_RATE

    if kind == "multiple-candidates":
        shared = _shared_categories(scene, library)
        if not shared:
            raise GenerationInfeasibleError(
                "no category shared by two or more scene objects")
        pairs = [c for c in shared
                 if sum(library.get(i.object_id).category == c
                        for i in scene.instances) == 2]
        cat = r.choice(pairs if pairs else shared)
        members = sorted(i.instance_id for i in scene.instances
                         if library.get(i.object_id).category == cat)
        gold = r.choice(sorted(
            m for m in members
            if library.get(scene.get(m).object_id).graspable))
        src_expr = assets.referring.realize(
            "C", r, category=cat,
            aliases=_category_aliases(library, cat))
        excluded = set(members)
    elif kind == "incorrect-reference":
        pairs = _confusable_pairs(scene, library, assets.confusions)
        if not pairs:
            raise GenerationInfeasibleError(
                "no scene object has an absent confusable category")
        gold, wrong = r.choice(pairs)
        d = Descriptor(category=wrong)
        assert exact_candidates(scene, library, d) == ()
        src_expr = assets.referring.realize("C", r, category=wrong, aliases=())
        excluded = {gold}
    else:
        raise ValueError(f"unknown ambiguity kind {kind!r}")

    templates = assets.templates.by_class("pick-and-place")
    dst_pool = sorted(i.instance_id for i in scene.instances
                      if i.instance_id not in excluded)
    if not dst_pool:
        templates = tuple(t for t in templates if not t.has_slot("DST"))
    template = r.choice(templates)
    fills, gold_map = {}, {}
    pos = _slot_positions(template)
    for k, i in enumerate(pos):
        role = template.slot_roles[k]
        if role == "SRC":
            fills[i] = src_expr
            gold_map[k] = gold
        else:
            dst = r.choice(dst_pool)
            _, dst_expr = gen_referring_expression(
                scene, library, dst, r.choice((1, 2, 3)),
                r.randrange(1 << 30), assets)
            fills[i] = dst_expr
            gold_map[k] = dst
    text, entities = _assemble(template, fills, polite, gold_map)
    return AnnotatedInstruction(instruction_id, scene.scene_id, text,
                                "pick-and-place", entities, kind)


def _category_aliases(library: ObjectLibrary, category: str) -> tuple[str, ...]:
    out: set[str] = set()
    for s in library:
        if s.category == category:
            out.update(s.aliases)
    return tuple(sorted(out))


def substitute_name(instr: AnnotatedInstruction, entity_index: int,
                    name: str) -> AnnotatedInstruction:
    """Replace a src/dst referring expression with a name, shifting spans."""
    if not (0 <= entity_index < len(instr.entities)):
        raise IndexError(f"entity index {entity_index} out of range")
    ent = instr.entities[entity_index]
    if ent.entity_type == "name":
        raise ValueError("entity is already a name")
    if ent.entity_type not in ("src", "dst"):
        raise ValueError(f"cannot substitute into entity type {ent.entity_type}")
    delta = len(name) - (ent.end - ent.start)
    text = instr.text[:ent.start] + name + instr.text[ent.end:]
    entities = []
    for i, e in enumerate(instr.entities):
        if i == entity_index:
            entities.append(Entity(name, ent.start, ent.start + len(name),
                                   "name", e.gold_instance_id))
        elif e.start >= ent.end:
            entities.append(replace(e, start=e.start + delta, end=e.end + delta))
        else:
            entities.append(e)
    return replace(instr, text=text, entities=tuple(entities))


def gen_naming_instruction(name: str, seed: int,
                           assets: GrammarAssets | None = None,
                           instruction_id: str = "",
                           gold_instance_id: str | None = None) -> AnnotatedInstruction:
    """A naming sentence with pronoun object reference, for naming episodes."""
    if not name or not name.strip():
        raise ValueError("name must be non-empty")
    assets = assets or default_assets()
    r = rng("naming", name, seed)
    template = r.choice(assets.templates.by_class("naming-object"))
    obj_expr = assets.referring.realize("PRON", r)
    fills, gold = {}, {}
    pos = _slot_positions(template)
    for k, i in enumerate(pos):
        role = template.slot_roles[k]
        fills[i] = obj_expr if role == "OBJ_TO_NAME" else name
        gold[k] = gold_instance_id
    text, entities = _assemble(template, fills, r.random() < _POLITENESS_RATE, gold)
    return AnnotatedInstruction(instruction_id, "", text, "naming-object",
                                entities, "unambiguous")


def _largest_remainder(proportions: list[tuple[str, float]], total: int) -> dict[str, int]:
    floors = {k: math.floor(p * total) for k, p in proportions}
    leftover = total - sum(floors.values())
    fracs = sorted(((p * total - floors[k], -i, k)
                    for i, (k, p) in enumerate(proportions)), reverse=True)
    for _, _, k in fracs[:leftover]:
        floors[k] += 1
    return floors


def gen_dataset(library: ObjectLibrary, n_scenes: int, instructions_per_scene: int,
                mix: MixConfig, seed: int, n_objects: tuple[int, int] = (6, 8),
                assets: GrammarAssets | None = None) -> Dataset:
    """Scenes plus annotated instructions matching the requested class mix.

    Ambiguous quotas are placed scene-aware; anything infeasible is converted
    to plain pick instructions and recorded in the manifest shortfall, never
    dropped silently.
    """
    assets = assets or default_assets()
    scenes = tuple(
        generate_scene(library, n_objects, seed=stable_int(seed, "scene", i),
                       scene_id=f"scene-{i:03d}")
        for i in range(n_scenes)
    )
    total = n_scenes * instructions_per_scene
    quotas = _largest_remainder([
        ("pick", mix.pick), ("naming", mix.naming),
        ("not_supported", mix.not_supported),
        ("multiple_candidates", mix.multiple_candidates),
        ("incorrect_reference", mix.incorrect_reference),
    ], total)

    free = {s.scene_id: instructions_per_scene for s in scenes}
    labels: dict[str, list[str]] = {s.scene_id: [] for s in scenes}
    shortfall: dict[str, int] = {}
    for key, kind, feasible in (
        ("multiple_candidates", "multiple-candidates",
         lambda s: multi_candidates_feasible(s, library)),
        ("incorrect_reference", "incorrect-reference",
         lambda s: incorrect_reference_feasible(s, library, assets.confusions)),
    ):
        remaining = quotas[key]
        hosts = [s.scene_id for s in scenes if feasible(s)]
        progress = True
        while remaining > 0 and progress:
            progress = False
            for sid in hosts:
                if remaining == 0:
                    break
                if free[sid] > 0:
                    labels[sid].append(kind)
                    free[sid] -= 1
                    remaining -= 1
                    progress = True
        if remaining:
            shortfall[kind] = remaining
            quotas["pick"] += remaining

    rest = (["pick-and-place"] * quotas["pick"]
            + ["naming-object"] * quotas["naming"]
            + ["instruction-not-supported"] * quotas["not_supported"])
    r = rng(seed, "mix")
    r.shuffle(rest)
    cursor = 0
    for s in scenes:
        take = free[s.scene_id]
        labels[s.scene_id].extend(rest[cursor:cursor + take])
        cursor += take
        r2 = rng(seed, "mix", s.scene_id)
        r2.shuffle(labels[s.scene_id])

    instructions = []
    realized = {"pick-and-place": 0, "naming-object": 0,
                "instruction-not-supported": 0, "multiple-candidates": 0,
                "incorrect-reference": 0}
    fallbacks = 0
    for s in scenes:
        for row, label in enumerate(labels[s.scene_id]):
            iid = f"{s.scene_id}-i{row:02d}"
            row_seed = stable_int(seed, "row", s.scene_id, row)
            try:
                if label in ("multiple-candidates", "incorrect-reference"):
                    instr = gen_ambiguous_instruction(s, library, label, row_seed,
                                                      assets, instruction_id=iid)
                    realized[label] += 1
                else:
                    instr = gen_instruction(s, library, label, row_seed, assets,
                                            instruction_id=iid)
                    realized[label] += 1
            except (GenerationInfeasibleError, NonUniqueDescriptorError):
                instr = gen_instruction(s, library, "pick-and-place", row_seed,
                                        assets, instruction_id=iid)
                realized["pick-and-place"] += 1
                fallbacks += 1
            instructions.append(instr)

    n_ambiguous = realized["multiple-candidates"] + realized["incorrect-reference"]
    manifest = {
        "seed": seed,
        "n_scenes": n_scenes,
        "instructions_per_scene": instructions_per_scene,
        "n_objects": list(n_objects),
        "mix": mix.as_dict(),
        "realized": dict(sorted(realized.items())),
        "ambiguous_fraction": round(n_ambiguous / total, 6) if total else 0.0,
        "shortfall": dict(sorted(shortfall.items())),
        "fallbacks": fallbacks,
        "library_sha256": _library_fingerprint(library),
    }
    return Dataset(scenes=scenes, instructions=tuple(instructions),
                   manifest=manifest)


def _library_fingerprint(library: ObjectLibrary) -> str:
    payload = json.dumps(
        [{
            "object_id": s.object_id, "category": s.category,
            "colors": list(s.colors), "size_class": s.size_class,
            "shape": s.shape, "aliases": list(s.aliases),
            "graspable": s.graspable, "footprint": list(s.footprint),
            "height": s.height,
        } for s in library],
        sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _instruction_record(instr: AnnotatedInstruction) -> dict:
    return {
        "type": "instruction",
        "instruction_id": instr.instruction_id,
        "scene_id": instr.scene_id,
        "text": instr.text,
        "instruction_class": instr.instruction_class,
        "ambiguity_label": instr.ambiguity_label,
        "entities": [
            {"phrase": e.phrase, "start": e.start, "end": e.end,
             "entity_type": e.entity_type,
             "gold_instance_id": e.gold_instance_id}
            for e in instr.entities
        ],
    }


def dataset_to_jsonl(dataset: Dataset) -> str:
    lines = [json.dumps({"type": "manifest", **dataset.manifest},
                        sort_keys=True, separators=(",", ":"))]
    for s in dataset.scenes:
        lines.append(json.dumps({"type": "scene", "scene": json.loads(s.to_json())},
                                sort_keys=True, separators=(",", ":")))
    for instr in dataset.instructions:
        lines.append(json.dumps(_instruction_record(instr), sort_keys=True,
                                separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path) -> None:
    from pathlib import Path
    Path(path).write_text(dataset_to_jsonl(dataset), encoding="utf-8")


def load_dataset(path) -> Dataset:
    from pathlib import Path
    manifest: dict | None = None
    scenes: list[Scene] = []
    instructions: list[AnnotatedInstruction] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError("dataset line is not valid JSON",
                              line=lineno, offset=exc.pos) from exc
        kind = rec.get("type")
        if kind == "manifest":
            manifest = {k: v for k, v in rec.items() if k != "type"}
        elif kind == "scene":
            scenes.append(Scene.from_json(json.dumps(rec["scene"])))
        elif kind == "instruction":
            try:
                instructions.append(AnnotatedInstruction(
                    instruction_id=rec["instruction_id"],
                    scene_id=rec["scene_id"],
                    text=rec["text"],
                    instruction_class=rec["instruction_class"],
                    ambiguity_label=rec["ambiguity_label"],
                    entities=tuple(Entity(
                        phrase=e["phrase"], start=e["start"], end=e["end"],
                        entity_type=e["entity_type"],
                        gold_instance_id=e["gold_instance_id"],
                    ) for e in rec["entities"]),
                ))
            except KeyError as exc:
                raise FormatError("instruction record missing field",
                                  line=lineno, field=str(exc.args[0])) from exc
        else:
            raise FormatError(f"unknown record type {kind!r}", line=lineno,
                              field="type")
    if manifest is None:
        raise FormatError("dataset has no manifest record")
    return Dataset(scenes=tuple(scenes), instructions=tuple(instructions),
                   manifest=manifest)
