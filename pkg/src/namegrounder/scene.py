"""World model: object library, table scenes, camera projection, box geometry.

Coordinates
-----------
Table coordinates are millimeters with the origin at the table center,
x to the right when standing at the front edge, y pointing away from the
front edge, z up from the table surface.

Four fixed camera views (front/back/left/right) project object cuboids
into a 640x480 pixel frame with a per-instance weak-perspective pinhole:
all corners of one instance are scaled by the depth of its center. The
intrinsics below are artifact conventions; any fixed deterministic
projection supports the IoU-based metrics.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, LibraryValidationError, PlacementError
from .seeding import rng

# Table and camera conventions (millimeters / pixels).
TABLE_BOUNDS = (-500.0, -300.0, 500.0, 300.0)  # x_min, y_min, x_max, y_max
IMAGE_W = 640
IMAGE_H = 480
FOCAL = 380.0
CAM_DIST = 900.0    # camera plane distance from table center along the view axis
CAM_HEIGHT = 350.0  # camera height above the table surface
CX = IMAGE_W / 2.0
CY = IMAGE_H / 2.0

VIEWS = ("front", "back", "left", "right")

SIZE_CLASSES = ("small", "medium", "large")

_PLACEMENT_MARGIN = 10.0  # mm of clearance enforced between footprints
_MAX_PLACE_TRIES = 400
_MAX_SCENE_RESTARTS = 40


@dataclass(frozen=True)
class ObjectSpec:
    """Catalog entry for one household object with ground-truth attributes."""

    object_id: str
    category: str
    colors: tuple[str, ...]
    size_class: str
    shape: str
    aliases: tuple[str, ...]
    graspable: bool
    footprint: tuple[float, float]  # width (x), depth (y) in mm at yaw 0
    height: float                   # mm

    def validate(self) -> None:
        if not self.object_id:
            raise LibraryValidationError("object_id must be non-empty")
        if not self.colors:
            raise LibraryValidationError(f"{self.object_id}: colors must be non-empty")
        if self.size_class not in SIZE_CLASSES:
            raise LibraryValidationError(
                f"{self.object_id}: size_class {self.size_class!r} not one of {SIZE_CLASSES}"
            )
        w, d = self.footprint
        if w <= 0 or d <= 0 or self.height <= 0:
            raise LibraryValidationError(
                f"{self.object_id}: footprint and height must be strictly positive"
            )

    def grasp_offsets(self) -> tuple[tuple[float, float], ...]:
        """Grasp candidates in object-local mm: center plus four interior points."""
        w, d = self.footprint
        return ((0.0, 0.0), (w / 4, 0.0), (-w / 4, 0.0), (0.0, d / 4), (0.0, -d / 4))


@dataclass(frozen=True)
class ObjectLibrary:
    specs: tuple[ObjectSpec, ...]
    by_id: dict[str, ObjectSpec] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "by_id", {s.object_id: s for s in self.specs})

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    def get(self, object_id: str) -> ObjectSpec:
        return self.by_id[object_id]

    def categories(self) -> tuple[str, ...]:
        return tuple(sorted({s.category for s in self.specs}))

    def color_lists(self) -> tuple[tuple[str, ...], ...]:
        return tuple(sorted({tuple(sorted(s.colors)) for s in self.specs}))

    def shapes(self) -> tuple[str, ...]:
        return tuple(sorted({s.shape for s in self.specs}))


@dataclass(frozen=True)
class ObjectInstance:
    instance_id: str
    object_id: str
    x: float
    y: float
    yaw: float  # radians, one of {0, pi/2}

    def extents(self, spec: ObjectSpec) -> tuple[float, float]:
        """Axis-aligned footprint extents (x, y) after yaw snapping."""
        w, d = spec.footprint
        return (w, d) if _yaw_snapped(self.yaw) == 0.0 else (d, w)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    seed: int
    camera_view: str
    instances: tuple[ObjectInstance, ...]
    table_bounds: tuple[float, float, float, float] = TABLE_BOUNDS

    def __post_init__(self):
        if self.camera_view not in VIEWS:
            raise ValueError(f"camera_view must be one of {VIEWS}")

    def get(self, instance_id: str) -> ObjectInstance:
        for inst in self.instances:
            if inst.instance_id == instance_id:
                return inst
        raise KeyError(instance_id)

    def to_json(self) -> str:
        payload = {
            "scene_id": self.scene_id,
            "seed": self.seed,
            "camera_view": self.camera_view,
            "table_bounds": list(self.table_bounds),
            "instances": [
                {
                    "instance_id": i.instance_id,
                    "object_id": i.object_id,
                    "x": i.x,
                    "y": i.y,
                    "yaw": i.yaw,
                }
                for i in self.instances
            ],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "Scene":
        raw = json.loads(text)
        return Scene(
            scene_id=raw["scene_id"],
            seed=raw["seed"],
            camera_view=raw["camera_view"],
            table_bounds=tuple(raw["table_bounds"]),
            instances=tuple(
                ObjectInstance(
                    instance_id=r["instance_id"],
                    object_id=r["object_id"],
                    x=r["x"],
                    y=r["y"],
                    yaw=r["yaw"],
                )
                for r in raw["instances"]
            ),
        )


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in image pixels; corners are floats within the frame."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def area(self) -> float:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, u: float, v: float) -> bool:
        return self.x_min <= u <= self.x_max and self.y_min <= v <= self.y_max

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def _yaw_snapped(yaw: float) -> float:
    """Snap yaw to {0, pi/2}; the library footprints are axis-aligned boxes."""
    half_pi = math.pi / 2.0
    k = round(yaw / half_pi) % 2
    return 0.0 if k == 0 else half_pi


def load_object_library(path: str | Path) -> ObjectLibrary:
    """Load and validate the object catalog (JSON array, see docs/formats.md)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError("object library is not valid JSON",
                          line=exc.lineno, offset=exc.pos) from exc
    if not isinstance(raw, list):
        raise FormatError("object library must be a JSON array of entries")

    specs = []
    seen: set[str] = set()
    for idx, entry in enumerate(raw):
        try:
            spec = ObjectSpec(
                object_id=entry["object_id"],
                category=entry["category"],
                colors=tuple(entry["colors"]),
                size_class=entry["size_class"],
                shape=entry["shape"],
                aliases=tuple(entry.get("aliases", [])),
                graspable=bool(entry.get("graspable", True)),
                footprint=(float(entry["footprint"][0]), float(entry["footprint"][1])),
                height=float(entry["height"]),
            )
        except KeyError as exc:
            raise FormatError(f"library entry {idx} missing field",
                              field=str(exc.args[0])) from exc
        spec.validate()
        if spec.object_id in seen:
            raise LibraryValidationError(f"duplicate object_id {spec.object_id!r}")
        seen.add(spec.object_id)
        specs.append(spec)
    return ObjectLibrary(specs=tuple(specs))


def footprints_overlap(a: ObjectInstance, b: ObjectInstance,
                       spec_a: ObjectSpec, spec_b: ObjectSpec,
                       margin: float = 0.0) -> bool:
    """Axis-aligned footprint intersection test (yaw is snapped to {0, pi/2})."""
    ax, ay = a.extents(spec_a)
    bx, by = b.extents(spec_b)
    return (abs(a.x - b.x) < (ax + bx) / 2 + margin
            and abs(a.y - b.y) < (ay + by) / 2 + margin)


def generate_scene(library: ObjectLibrary, n_objects: tuple[int, int], seed: int,
                   scene_id: str | None = None,
                   camera_view: str | None = None) -> Scene:
    """Sample a non-overlapping table layout; a pure function of its arguments.

    Objects are drawn without replacement; poses by rejection sampling until
    footprints are disjoint and every object is fully visible from all four
    camera positions, so any instance is a workable target regardless of the
    view drawn for the scene. Raises PlacementError if the count cannot be
    placed within the attempt budget.
    """
    lo, hi = n_objects
    if not (1 <= lo <= hi <= 10):
        raise ValueError("n_objects range must lie within [1, 10]")
    if len(library) == 0:
        raise ValueError("library is empty")
    hi = min(hi, len(library))
    lo = min(lo, hi)

    r = rng(seed, "scene")
    n = r.randint(lo, hi)
    ordered_ids = sorted(library.by_id)
    chosen = r.sample(ordered_ids, n)

    x_min, y_min, x_max, y_max = TABLE_BOUNDS
    placed: list[ObjectInstance] = []
    for restart in range(_MAX_SCENE_RESTARTS):
        placed = []
        for k, object_id in enumerate(chosen):
            spec = library.get(object_id)
            inst = None
            for _ in range(_MAX_PLACE_TRIES):
                yaw = r.choice((0.0, math.pi / 2.0))
                ex, ey = (spec.footprint if yaw == 0.0
                          else (spec.footprint[1], spec.footprint[0]))
                x = round(r.uniform(x_min + ex / 2, x_max - ex / 2), 1)
                y = round(r.uniform(y_min + ey / 2, y_max - ey / 2), 1)
                candidate = ObjectInstance(
                    instance_id=f"obj{k}_{object_id}", object_id=object_id,
                    x=x, y=y, yaw=yaw,
                )
                if not all(fully_visible(candidate, spec, v) for v in VIEWS):
                    continue
                if all(not footprints_overlap(candidate, other, spec,
                                              library.get(other.object_id),
                                              margin=_PLACEMENT_MARGIN)
                       for other in placed):
                    inst = candidate
                    break
            if inst is None:
                break  # wedged; redraw the whole layout
            placed.append(inst)
        if len(placed) == n:
            break
    else:
        raise PlacementError(
            f"could not place {n} objects within {_MAX_SCENE_RESTARTS} layouts"
        )

    view = camera_view if camera_view is not None else r.choice(VIEWS)
    return Scene(
        scene_id=scene_id if scene_id is not None else f"scene-{seed}",
        seed=seed,
        camera_view=view,
        instances=tuple(placed),
    )


def single_object_scene(library: ObjectLibrary, object_id: str, seed: int,
                        scene_id: str | None = None,
                        camera_view: str = "front") -> Scene:
    """The naming-episode scene shape: one object near the table center."""
    spec = library.get(object_id)
    r = rng(seed, "naming-scene", object_id)
    x = round(r.uniform(-60.0, 60.0), 1)
    y = round(r.uniform(-60.0, 60.0), 1)
    inst = ObjectInstance(instance_id=f"obj0_{object_id}", object_id=object_id,
                          x=x, y=y, yaw=0.0)
    return Scene(
        scene_id=scene_id if scene_id is not None else f"naming-{object_id}-{seed}",
        seed=seed,
        camera_view=camera_view,
        instances=(inst,),
    )


def _view_axes(view: str, x: float, y: float) -> tuple[float, float]:
    """(lateral, depth) of a table point for a view; depth is distance from
    the camera plane to the point along the view axis."""
    if view == "front":
        return x, CAM_DIST + y
    if view == "back":
        return -x, CAM_DIST - y
    if view == "left":
        return -y, CAM_DIST + x
    if view == "right":
        return y, CAM_DIST - x
    raise ValueError(f"unknown view {view!r}")


def project_bbox(instance: ObjectInstance, spec: ObjectSpec, view: str) -> BBox:
    """Project the instance's bounding cuboid into the view's image frame.

    All corners share the scale of the instance center (weak perspective),
    so a centered object projects symmetrically and boxes of instances on
    the view axis mirror exactly between opposed cameras.
    """
    ex, ey = instance.extents(spec)
    lateral, depth = _view_axes(view, instance.x, instance.y)
    half_lat = (ex if view in ("front", "back") else ey) / 2.0
    scale = FOCAL / depth
    u_min = CX + scale * (lateral - half_lat)
    u_max = CX + scale * (lateral + half_lat)
    v_min = CY + scale * (CAM_HEIGHT - spec.height)
    v_max = CY + scale * CAM_HEIGHT
    return clamp_box(u_min, v_min, u_max, v_max)


def fully_visible(instance: ObjectInstance, spec: ObjectSpec, view: str) -> bool:
    """Whether the instance's projected cuboid fits in the frame unclamped."""
    ex, ey = instance.extents(spec)
    lateral, depth = _view_axes(view, instance.x, instance.y)
    half_lat = (ex if view in ("front", "back") else ey) / 2.0
    scale = FOCAL / depth
    return (CX + scale * (lateral - half_lat) >= 0.0
            and CX + scale * (lateral + half_lat) <= IMAGE_W
            and CY + scale * (CAM_HEIGHT - spec.height) >= 0.0
            and CY + scale * CAM_HEIGHT <= IMAGE_H)


def project_point(x: float, y: float, z: float, view: str,
                  instance_depth: float | None = None) -> tuple[float, float]:
    """Project a table point; optionally reuse an instance's depth for scale."""
    lateral, depth = _view_axes(view, x, y)
    scale = FOCAL / (depth if instance_depth is None else instance_depth)
    return (CX + scale * lateral, CY + scale * (CAM_HEIGHT - z))


def table_point_from_image(u: float, v: float, view: str) -> tuple[float, float] | None:
    """Invert the projection on the z=0 table plane; None above the horizon."""
    if v <= CY:
        return None
    depth = FOCAL * CAM_HEIGHT / (v - CY)
    return _invert_axes(u, depth, view)


def table_point_at_depth(u: float, depth: float, view: str) -> tuple[float, float]:
    """Table point under image column u when the depth along the view axis is
    already known (e.g. taken from a detected instance)."""
    if depth <= 0:
        raise ValueError("depth must be positive")
    return _invert_axes(u, depth, view)


def _invert_axes(u: float, depth: float, view: str) -> tuple[float, float]:
    lateral = (u - CX) * depth / FOCAL
    if view == "front":
        return lateral, depth - CAM_DIST
    if view == "back":
        return -lateral, CAM_DIST - depth
    if view == "left":
        return depth - CAM_DIST, -lateral
    if view == "right":
        return CAM_DIST - depth, lateral
    raise ValueError(f"unknown view {view!r}")


def clamp_box(u_min: float, v_min: float, u_max: float, v_max: float) -> BBox:
    """Clamp corners into the frame, preserving a non-degenerate box."""
    u_min = min(max(u_min, 0.0), IMAGE_W - 1.0)
    u_max = min(max(u_max, u_min + 1.0), float(IMAGE_W))
    v_min = min(max(v_min, 0.0), IMAGE_H - 1.0)
    v_max = min(max(v_max, v_min + 1.0), float(IMAGE_H))
    return BBox(u_min, v_min, u_max, v_max)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union if union > 0 else 0.0


def in_table_bounds(x: float, y: float,
                    bounds: tuple[float, float, float, float] = TABLE_BOUNDS) -> bool:
    x_min, y_min, x_max, y_max = bounds
    return x_min <= x <= x_max and y_min <= y <= y_max
