"""Two-condition evaluation: the same instruction set run without naming
(referring expressions only) and with naming (teach a name per instruction,
then instruct by that name).

The with-naming condition reproduces the teach-then-command protocol: for
every pick instruction the gold object is staged alone, a naming sentence is
executed against it (four capture views into the scene's store), and the
manipulation instruction is re-issued with the source phrase replaced by the
taught name. A failed naming episode forces the linked manipulation SR to
false even if execution stumbles into the right object.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .data import default_library_path
from .errors import ConfigError
from .executor import EpisodeResult, run_manipulation_episode, run_naming_episode
from .grounder import GrammarAssets, NoiseConfig, build_assets
from .langgen import (
    AnnotatedInstruction,
    Dataset,
    MixConfig,
    gen_dataset,
    gen_naming_instruction,
    substitute_name,
)
from .scene import ObjectLibrary, load_object_library, single_object_scene
from .seeding import rng, stable_int

CONDITION_WITHOUT = "without-naming"
CONDITION_WITH = "with-naming"
SLICES = ("all", "unambiguous", "ambiguous")
METRICS = ("icr", "pr", "br", "sr")

_AMBIGUOUS_LABELS = ("multiple-candidates", "incorrect-reference")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_scenes: int = 20
    instructions_per_scene: int = 15
    n_objects: tuple[int, int] = (6, 8)
    mix: MixConfig = field(default_factory=MixConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    library_path: str | None = None

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ConfigError("n_scenes must be >= 1")
        if self.instructions_per_scene < 1:
            raise ConfigError("instructions_per_scene must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_scenes": self.n_scenes,
            "instructions_per_scene": self.instructions_per_scene,
            "n_objects": list(self.n_objects),
            "mix": self.mix.as_dict(),
            "noise": {
                "p_flip": self.noise.p_flip, "j": self.noise.j,
                "sigma": self.noise.sigma, "tau": self.noise.tau,
                "tie_break": self.noise.tie_break,
            },
            "library_path": self.library_path,
        }


@dataclass(frozen=True)
class MetricCell:
    successes: int
    total: int

    def __post_init__(self):
        if not (0 <= self.successes <= self.total):
            raise ValueError("successes must lie within [0, total]")

    @property
    def percent(self) -> float | None:
        if self.total == 0:
            return None
        return round(100.0 * self.successes / self.total, 1)

    def as_list(self) -> list[int]:
        return [self.successes, self.total]


@dataclass(frozen=True)
class MetricsReport:
    condition: str
    cells: dict[str, dict[str, MetricCell]]
    naming: MetricCell | None = None

    def cell(self, slice_name: str, metric: str) -> MetricCell:
        return self.cells[slice_name][metric]

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "cells": {s: {m: c.as_list() for m, c in row.items()}
                      for s, row in self.cells.items()},
            "naming": self.naming.as_list() if self.naming else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            condition=d["condition"],
            cells={s: {m: MetricCell(*v) for m, v in row.items()}
                   for s, row in d["cells"].items()},
            naming=MetricCell(*d["naming"]) if d.get("naming") else None,
        )


@dataclass(frozen=True)
class EpisodeRecord:
    condition: str
    result: EpisodeResult
    naming_ok: bool | None = None
    naming_episode: EpisodeResult | None = None

    @property
    def sr_effective(self) -> bool:
        if self.naming_ok is False:
            return False
        return self.result.sr_ok

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "naming_ok": self.naming_ok,
            "sr_effective": self.sr_effective,
            "result": self.result.to_dict(),
            "naming_episode": (self.naming_episode.to_dict()
                               if self.naming_episode else None),
        }


def _slice_of(label: str) -> str:
    return "ambiguous" if label in _AMBIGUOUS_LABELS else "unambiguous"


def compute_metrics(records, condition: str) -> MetricsReport:
    """Aggregate ICR/PR/BR/SR per ambiguity slice plus the naming SR column.

    Dataset rows land in the table; protocol naming episodes only feed the
    naming column. SR uses the naming-gated value.
    """
    rows = [r for r in records if r.condition == condition]
    counts = {s: {m: [0, 0] for m in METRICS} for s in SLICES}
    naming = [0, 0]
    for rec in rows:
        if rec.naming_episode is not None:
            naming[0] += rec.naming_episode.sr_ok
            naming[1] += 1
        if rec.result.episode_kind == "naming" and rec.naming_episode is None:
            naming[0] += rec.result.sr_ok
            naming[1] += 1
        flags = {"icr": rec.result.icr_ok, "pr": rec.result.pr_ok,
                 "br": rec.result.br_ok, "sr": rec.sr_effective}
        for s in ("all", _slice_of(rec.result.ambiguity_label)):
            for m in METRICS:
                counts[s][m][0] += flags[m]
                counts[s][m][1] += 1
    cells = {s: {m: MetricCell(*counts[s][m]) for m in METRICS} for s in SLICES}
    return MetricsReport(
        condition=condition, cells=cells,
        naming=MetricCell(*naming) if naming[1] else None,
    )


def compare_reports(a: MetricsReport, b: MetricsReport) -> dict:
    """Percentage-point deltas (b minus a) per slice and metric."""
    if set(a.cells) != set(b.cells):
        raise ValueError("reports cover different slices")
    deltas: dict = {"slices": {}, "naming": None}
    for s in a.cells:
        if set(a.cells[s]) != set(b.cells[s]):
            raise ValueError(f"reports cover different metrics in slice {s!r}")
        deltas["slices"][s] = {}
        for m in a.cells[s]:
            pa, pb = a.cells[s][m].percent, b.cells[s][m].percent
            deltas["slices"][s][m] = (None if pa is None or pb is None
                                      else round(pb - pa, 1))
    if a.naming and b.naming:
        deltas["naming"] = round(b.naming.percent - a.naming.percent, 1)
    return deltas


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    manifest: dict
    records: tuple[EpisodeRecord, ...]
    without_report: MetricsReport
    with_report: MetricsReport

    def reports_json(self) -> str:
        payload = {
            "config": self.config.to_dict(),
            "dataset_manifest": self.manifest,
            "reports": {
                CONDITION_WITHOUT: self.without_report.to_dict(),
                CONDITION_WITH: self.with_report.to_dict(),
            },
            "deltas": compare_reports(self.without_report, self.with_report),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"

    def records_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True,
                                  separators=(",", ":")) + "\n"
                       for r in self.records)

    def table_text(self) -> str:
        return render_table(self.without_report, self.with_report)


def _fmt(cell: MetricCell | None) -> str:
    if cell is None or cell.percent is None:
        return "-"
    return f"{cell.percent:.1f} ({cell.successes}/{cell.total})"


def render_table(without: MetricsReport, with_: MetricsReport) -> str:
    """Fixed-width summary: one block per condition, one row per slice."""
    header = ["condition", "slice", "naming SR [%]", "ICR [%]", "PR [%]",
              "BR [%]", "SR [%]"]
    rows = []
    for rep, label in ((without, "w/o naming"), (with_, "w/ naming")):
        for s in SLICES:
            rows.append([
                label if s == "all" else "",
                s,
                _fmt(rep.naming) if s == "all" else "",
                *[_fmt(rep.cell(s, m)) for m in METRICS],
            ])
    widths = [max(len(h), *(len(r[i]) for r in rows))
              for i, h in enumerate(header)]
    def line(cols):
        return " | ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep, *[line(r) for r in rows]]) + "\n"


def _load_library(config: ExperimentConfig) -> ObjectLibrary:
    path = config.library_path or default_library_path()
    return load_object_library(path)


def _scene_name_plan(assets: GrammarAssets, dataset: Dataset, seed: int) -> dict:
    """Deterministic name per pick row, unique within each scene."""
    plan: dict[str, str] = {}
    by_scene: dict[str, list[AnnotatedInstruction]] = {}
    for instr in dataset.instructions:
        by_scene.setdefault(instr.scene_id, []).append(instr)
    for scene_id, rows in by_scene.items():
        r = rng(seed, "names", scene_id)
        pool = r.sample(list(assets.names), len(assets.names))
        idx = 0
        for instr in rows:
            if instr.instruction_class == "pick-and-place":
                plan[instr.instruction_id] = pool[idx % len(pool)]
                idx += 1
    return plan


def run_experiment(config: ExperimentConfig,
                   assets: GrammarAssets | None = None) -> ExperimentResult:
    """Generate one dataset and run both conditions over it.

    Episodes are independent: every instruction is evaluated against its
    scene's initial layout. Memory stores live per (condition, scene) and
    start empty; the with-naming condition fills them through the per-row
    naming episodes before each manipulation.
    """
    library = _load_library(config)
    assets = assets or build_assets(library)
    dataset = gen_dataset(library, config.n_scenes,
                          config.instructions_per_scene, config.mix,
                          config.seed, n_objects=config.n_objects,
                          assets=assets)
    name_plan = _scene_name_plan(assets, dataset, config.seed)
    records: list[EpisodeRecord] = []

    for condition in (CONDITION_WITHOUT, CONDITION_WITH):
        from .memory import MemoryStore
        stores: dict[str, MemoryStore] = {}
        for instr in dataset.instructions:
            scene = dataset.scene(instr.scene_id)
            store = stores.setdefault(instr.scene_id, MemoryStore())
            ep_seed = stable_int(config.seed, condition, instr.instruction_id)

            if instr.instruction_class == "naming-object":
                store, result = run_naming_episode(
                    instr, scene, library, store, config.noise, ep_seed, assets)
                stores[instr.scene_id] = store
                records.append(EpisodeRecord(condition=condition, result=result))
                continue

            naming_ok = None
            naming_result = None
            text_instr = instr
            if condition == CONDITION_WITH \
                    and instr.instruction_class == "pick-and-place":
                name = name_plan[instr.instruction_id]
                gold_src = instr.entities[0].gold_instance_id
                gold_obj = next(i.object_id for i in scene.instances
                                if i.instance_id == gold_src)
                staging = single_object_scene(
                    library, gold_obj,
                    seed=stable_int(config.seed, "staging", instr.instruction_id),
                    scene_id=f"{instr.instruction_id}-naming")
                nm = gen_naming_instruction(
                    name, seed=stable_int(config.seed, "nm", instr.instruction_id),
                    assets=assets,
                    instruction_id=f"{instr.instruction_id}-naming",
                    gold_instance_id=staging.instances[0].instance_id)
                store, naming_result = run_naming_episode(
                    nm, staging, library, store, config.noise,
                    stable_int(config.seed, "nmep", instr.instruction_id),
                    assets)
                stores[instr.scene_id] = store
                naming_ok = naming_result.sr_ok
                if instr.entities and instr.entities[0].entity_type == "src":
                    text_instr = substitute_name(instr, 0, name)

            result, _ = run_manipulation_episode(
                text_instr, scene, library, store, config.noise, ep_seed,
                assets)
            records.append(EpisodeRecord(
                condition=condition, result=result,
                naming_ok=naming_ok, naming_episode=naming_result))

    recs = tuple(records)
    return ExperimentResult(
        config=config,
        manifest=dataset.manifest,
        records=recs,
        without_report=compute_metrics(recs, CONDITION_WITHOUT),
        with_report=compute_metrics(recs, CONDITION_WITH),
    )


def load_config(path) -> ExperimentConfig:
    """Experiment settings from a TOML file; unknown keys are errors."""
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"could not parse config: {exc}") from exc

    known_top = {"experiment", "mix", "noise"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    def section(name, allowed):
        sec = raw.get(name, {})
        extra = set(sec) - set(allowed)
        if extra:
            raise ConfigError(
                f"unknown keys in [{name}]: {sorted(extra)}")
        return sec

    exp = section("experiment", {"seed", "n_scenes", "instructions_per_scene",
                                 "n_objects", "library"})
    mix_sec = section("mix", {"pick", "naming", "not_supported",
                              "multiple_candidates", "incorrect_reference"})
    noise_sec = section("noise", {"p_flip", "j", "sigma", "tau", "tie_break"})
    try:
        n_objects = exp.get("n_objects", [6, 8])
        return ExperimentConfig(
            seed=int(exp.get("seed", 0)),
            n_scenes=int(exp.get("n_scenes", 20)),
            instructions_per_scene=int(exp.get("instructions_per_scene", 15)),
            n_objects=(int(n_objects[0]), int(n_objects[1])),
            mix=MixConfig(**mix_sec),
            noise=NoiseConfig(**noise_sec),
            library_path=exp.get("library"),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
