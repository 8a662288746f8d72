"""Name memory: multi-view feature capture, a persistent name -> record
store, and recall.

Records keep the feature vectors of every capture view so the matcher can
average them into a centroid later; averaging over views shrinks the
appearance noise baked into each stored vector. Stores are value objects:
store_name returns an updated copy. Timestamps are a logical clock so
persisted stores are byte-identical across runs.
"""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .errors import NamingSceneError, StoreError, StoreFormatError, StoreVersionError
from .grammar import Vocabulary
from .grounder import NoiseConfig, ObservedInstance, observe_scene
from .matcher import EmbeddingSpace, FeatureVec, embed
from .scene import VIEWS, ObjectLibrary, Scene
from .seeding import stable_int

STORE_VERSION = "namegrounder-store-v1"


def normalize_name(name: str) -> str:
    return " ".join(name.casefold().split())


@dataclass(frozen=True)
class NamingRecord:
    name: str                                   # case-folded key
    display_name: str
    observations: tuple[FeatureVec, ...]
    created_at: int                             # logical clock tick
    source_scene_id: str = ""

    def __post_init__(self):
        if not self.observations:
            raise StoreError("a naming record needs at least one observation")
        dims = {len(o) for o in self.observations}
        if len(dims) != 1:
            raise StoreError("observations differ in dimension")


@dataclass(frozen=True)
class MemoryStore:
    records: dict[str, NamingRecord] = field(default_factory=dict)
    clock: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self.records))


def store_name(store: MemoryStore, name: str, observations,
               source_scene_id: str = "", display_name: str | None = None) -> MemoryStore:
    """Returns a store with `name` bound to these observations; latest wins."""
    key = normalize_name(name)
    if not key:
        raise StoreError("name must contain at least one character")
    obs = tuple(tuple(float(x) for x in o) for o in observations)
    record = NamingRecord(
        name=key,
        display_name=display_name if display_name is not None else name.strip(),
        observations=obs,
        created_at=store.clock,
        source_scene_id=source_scene_id,
    )
    records = dict(store.records)
    records[key] = record
    return MemoryStore(records=records, clock=store.clock + 1)


def recall(store: MemoryStore, name: str) -> NamingRecord | None:
    """Absent names are a None, not an error."""
    return store.records.get(normalize_name(name))


def capture_views(scene: Scene, library: ObjectLibrary, noise: NoiseConfig,
                  seed: int, k: int = 4) -> tuple[FeatureVec, ...]:
    """One feature vector per camera view, each independently noised."""
    return tuple(vec for _, vec, _ in
                 capture_views_detailed(scene, library, noise, seed, k))


def capture_views_detailed(
    scene: Scene, library: ObjectLibrary, noise: NoiseConfig, seed: int,
    k: int = 4,
) -> tuple[tuple[str, FeatureVec, ObservedInstance], ...]:
    """(view, feature vector, per-view observation) for the lone instance.

    Views cycle through the four predefined directions starting from the
    scene's own camera view.
    """
    if len(scene.instances) != 1:
        raise NamingSceneError(
            f"naming capture needs a single-object scene, got "
            f"{len(scene.instances)} instances"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    vocab = Vocabulary.from_library(library)
    space = EmbeddingSpace.from_vocabulary(vocab)
    start = VIEWS.index(scene.camera_view)
    out = []
    for i in range(k):
        view = VIEWS[(start + i) % len(VIEWS)]
        staged = dataclasses.replace(scene, camera_view=view)
        obs = observe_scene(staged, library, noise,
                            stable_int(seed, "capture", i), vocab=vocab)
        oi = obs.instances[0]
        vec = embed(space, oi.true_category, oi.true_colors,
                    oi.true_size_class, oi.true_shape,
                    noise.sigma, stable_int(seed, "capture-embed", i))
        out.append((view, vec, oi))
    return tuple(out)


def persist(store: MemoryStore, path) -> None:
    """Writes the store as versioned JSON; the write is atomic."""
    payload = {
        "version": STORE_VERSION,
        "clock": store.clock,
        "records": {
            key: {
                "name": rec.name,
                "display_name": rec.display_name,
                "observations": [list(o) for o in rec.observations],
                "created_at": rec.created_at,
                "source_scene_id": rec.source_scene_id,
            }
            for key, rec in store.records.items()
        },
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def load(path) -> MemoryStore:
    """Parses a persisted store; corrupt input never yields a partial store."""
    with open(path, "r", encoding="utf-8") as f:
        raw = f.read()
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"store is not valid JSON: {exc.msg}",
                               line=exc.lineno, offset=exc.pos) from exc
    if not isinstance(payload, dict):
        raise StoreFormatError("store root must be a JSON object")
    version = payload.get("version")
    if version != STORE_VERSION:
        raise StoreVersionError(
            f"unsupported store version {version!r}, expected {STORE_VERSION!r}"
        )
    records: dict[str, NamingRecord] = {}
    raw_records = payload.get("records")
    if not isinstance(raw_records, dict):
        raise StoreFormatError("store is missing its record table", field="records")
    for key, entry in raw_records.items():
        try:
            rec = NamingRecord(
                name=entry["name"],
                display_name=entry["display_name"],
                observations=tuple(tuple(float(x) for x in o)
                                   for o in entry["observations"]),
                created_at=int(entry["created_at"]),
                source_scene_id=entry.get("source_scene_id", ""),
            )
        except StoreError as exc:
            raise StoreFormatError(f"invalid record: {exc}", field=key) from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise StoreFormatError(f"invalid record: {exc!r}", field=key) from exc
        if rec.name != key:
            raise StoreFormatError("record key does not match its name", field=key)
        records[key] = rec
    clock = payload.get("clock")
    if not isinstance(clock, int) or clock < 0:
        raise StoreFormatError("clock must be a non-negative integer", field="clock")
    return MemoryStore(records=records, clock=clock)
