"""Interactive sessions over HTTP: create a tabletop, name objects, command
the arm, inspect memory.

The REPL and the HTTP endpoints share submit_instruction, so a line typed
into either produces the identical response structure. Sessions hold their
own scene, memory store and noise settings; the object library and grammar
assets are shared and immutable. A session's scene advances only through the
episodes it runs, and its memory store only through successful namings.
"""
import itertools
import os
import threading
from dataclasses import dataclass, field

from .data import default_library_path
from .errors import ConfigError
from .executor import run_manipulation_episode, run_naming_episode
from .grounder import (
    GrammarAssets,
    NoiseConfig,
    build_assets,
    ambiguity_oracle,
    ground_instruction,
    observe_scene,
    parse_descriptor,
)
from .langgen import AnnotatedInstruction
from .memory import MemoryStore, load, persist
from .scene import (
    IMAGE_H,
    IMAGE_W,
    ObjectLibrary,
    Scene,
    generate_scene,
    load_object_library,
    project_bbox,
)
from .seeding import stable_int

SCHEMA_VERSION = "namegrounder-wire-v1"

MEMORY_ENV_VAR = "NAMEGROUNDER_MEMORY"

DEFAULT_N_OBJECTS = (6, 8)


@dataclass
class Session:
    """One interactive episode stream; mutated only under its own lock."""

    session_id: str
    scene: Scene
    store: MemoryStore
    noise: NoiseConfig
    library: ObjectLibrary
    assets: GrammarAssets
    memory_path: str | None = None
    events: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def scene_payload(session: Session) -> dict:
    """Drawable scene state: top-down footprints plus pixel boxes."""
    scene = session.scene
    instances = []
    for inst in scene.instances:
        spec = session.library.get(inst.object_id)
        ex, ey = inst.extents(spec)
        box = project_bbox(inst, spec, scene.camera_view)
        instances.append({
            "instance_id": inst.instance_id,
            "object_id": inst.object_id,
            "category": spec.category,
            "colors": list(spec.colors),
            "size_class": spec.size_class,
            "shape": spec.shape,
            "x": inst.x, "y": inst.y, "yaw": inst.yaw,
            "extents": [ex, ey],
            "height": spec.height,
            "graspable": spec.graspable,
            "box": list(box.as_tuple()),
        })
    return {
        "version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "seed": scene.seed,
        "camera_view": scene.camera_view,
        "image": {"width": IMAGE_W, "height": IMAGE_H},
        "table_bounds": list(scene.table_bounds),
        "instances": instances,
    }


def memory_payload(store: MemoryStore) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "names": [
            {
                "name": rec.name,
                "display_name": rec.display_name,
                "created_at": rec.created_at,
                "source_scene_id": rec.source_scene_id,
                "observations": len(rec.observations),
            }
            for rec in (store.records[k] for k in store.names())
        ],
    }


def _ambiguity_label(session: Session, entities) -> str:
    """Oracle label for the instruction's object phrase, when there is one."""
    for ent in entities:
        if ent.entity_type in ("src", "object_to_be_named"):
            d = parse_descriptor(ent.phrase, session.assets)
            return ambiguity_oracle(session.scene, session.library, d)
    return "unambiguous"


def _box_json(box) -> list | None:
    return None if box is None else list(box.as_tuple())


def submit_instruction(session: Session, text: str) -> dict:
    """Run one instruction against the session and report everything the
    console overlays need. Unsupported text is a response, not an error."""
    if not text or not text.strip():
        raise ValueError("instruction text must be non-empty")
    step = len(session.events)
    ep_seed = stable_int(session.scene.seed, session.scene.scene_id,
                         "episode", step)
    obs = observe_scene(session.scene, session.library, session.noise,
                        stable_int(ep_seed, "obs"), vocab=session.assets.vocab)
    grounding = ground_instruction(text, obs, session.assets)
    label = _ambiguity_label(session, grounding.entities)

    instr = AnnotatedInstruction(
        instruction_id=f"{session.session_id}-{step}",
        scene_id=session.scene.scene_id,
        text=text,
        instruction_class=grounding.instruction_class,
        entities=(),
        ambiguity_label=label,
    )
    if grounding.instruction_class == "naming-object":
        store, result = run_naming_episode(
            instr, session.scene, session.library, session.store,
            session.noise, ep_seed, session.assets)
        if result.sr_ok:
            session.store = store
            if session.memory_path:
                persist(session.store, session.memory_path)
        post = session.scene
    else:
        result, post = run_manipulation_episode(
            instr, session.scene, session.library, session.store,
            session.noise, ep_seed, session.assets)
        session.scene = post

    response = {
        "version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "step": step,
        "instruction": {
            "text": text,
            "class": grounding.instruction_class,
            "confidence": grounding.class_confidence,
            "ambiguity_label": label,
        },
        "entities": [
            {
                "phrase": e.phrase, "start": e.start, "end": e.end,
                "entity_type": e.entity_type, "confidence": e.confidence,
            }
            for e in grounding.entities
        ],
        "candidates": [
            [
                {"instance_id": iid, "box": list(box.as_tuple()),
                 "score": score}
                for iid, box, score in ranked
            ]
            for ranked in grounding.candidates
        ],
        "chosen": {
            "src": None if result.chosen_src is None else {
                "instance_id": result.chosen_src,
                "box": _box_json(result.chosen_src_box),
            },
            "dst": None if result.chosen_dst is None else {
                "instance_id": result.chosen_dst,
                "box": _box_json(result.chosen_dst_box),
            },
        },
        "result": result.to_dict(),
        "stored_name": result.stored_name,
        "scene": scene_payload(session),
        "memory": memory_payload(session.store),
    }
    session.events.append({"step": step, "text": text, "response": response})
    return response


def new_scene(session: Session, seed: int,
              n_objects: tuple[int, int] | None = None) -> dict:
    """Regenerate the tabletop; names survive, the event log keeps growing."""
    spread = n_objects or DEFAULT_N_OBJECTS
    session.scene = generate_scene(session.library, spread, seed,
                                   scene_id=f"{session.session_id}-scene{seed}")
    payload = {
        "version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "scene": scene_payload(session),
        "memory": memory_payload(session.store),
    }
    session.events.append({"step": len(session.events),
                           "text": f":newscene {seed}", "response": payload})
    return payload


@dataclass
class ServiceState:
    library: ObjectLibrary
    assets: GrammarAssets
    noise: NoiseConfig
    memory_path: str | None
    sessions: dict[str, Session] = field(default_factory=dict)
    counter: itertools.count = field(default_factory=lambda: itertools.count(1))
    lock: threading.Lock = field(default_factory=threading.Lock)

    def initial_store(self) -> MemoryStore:
        if self.memory_path and os.path.exists(self.memory_path):
            return load(self.memory_path)
        return MemoryStore()

    def create_session(self, seed: int,
                       n_objects: tuple[int, int] = DEFAULT_N_OBJECTS,
                       noise: NoiseConfig | None = None) -> Session:
        with self.lock:
            sid = f"s{next(self.counter)}"
        scene = generate_scene(self.library, n_objects, seed,
                               scene_id=f"{sid}-scene{seed}")
        session = Session(
            session_id=sid, scene=scene, store=self.initial_store(),
            noise=noise if noise is not None else self.noise,
            library=self.library, assets=self.assets,
            memory_path=self.memory_path,
        )
        with self.lock:
            self.sessions[sid] = session
        return session


def build_state(library_path: str | None = None,
                memory_path: str | None = None,
                noise: NoiseConfig | None = None) -> ServiceState:
    library = load_object_library(library_path or default_library_path())
    return ServiceState(
        library=library,
        assets=build_assets(library),
        noise=noise if noise is not None else NoiseConfig.zero(),
        memory_path=memory_path,
    )


def _parse_n_objects(raw) -> tuple[int, int]:
    if raw is None:
        return DEFAULT_N_OBJECTS
    if (not isinstance(raw, (list, tuple)) or len(raw) != 2
            or not all(isinstance(v, int) for v in raw) or raw[0] > raw[1]
            or raw[0] < 1):
        raise ValueError("n_objects must be [min, max] with 1 <= min <= max")
    return (raw[0], raw[1])


def _parse_noise(raw) -> NoiseConfig | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ValueError("noise must be an object of noise settings")
    allowed = {"p_flip", "j", "sigma", "tau", "tie_break"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown noise keys: {sorted(unknown)}")
    return NoiseConfig(**raw)


def create_app(library_path: str | None = None,
               memory_path: str | None = None,
               noise: NoiseConfig | None = None):
    from fastapi import FastAPI, HTTPException, Request
    from fastapi.exceptions import RequestValidationError
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse
    from pydantic import BaseModel

    state = build_state(library_path, memory_path, noise)
    app = FastAPI(title="namegrounder", version=SCHEMA_VERSION)
    app.state.service = state
    # the browser console is served as static files on another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    class CreateSessionBody(BaseModel):
        seed: int = 0
        n_objects: list[int] | None = None
        noise: dict | None = None

    class InstructionBody(BaseModel):
        text: str

    class NewSceneBody(BaseModel):
        seed: int
        n_objects: list[int] | None = None

    @app.exception_handler(RequestValidationError)
    async def bad_body(request: Request, exc: RequestValidationError):
        # clients get 400 with per-field diagnostics, not FastAPI's 422
        return JSONResponse(
            status_code=400,
            content={"detail": [
                {"field": ".".join(str(p) for p in err["loc"]),
                 "message": err["msg"]}
                for err in exc.errors()
            ]},
        )

    def get_session(session_id: str) -> Session:
        session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404,
                                detail=f"no such session: {session_id}")
        return session

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        try:
            n_objects = _parse_n_objects(body.n_objects)
            noise_cfg = _parse_noise(body.noise)
        except (ValueError, ConfigError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session = state.create_session(body.seed, n_objects, noise_cfg)
        return {
            "version": SCHEMA_VERSION,
            "session_id": session.session_id,
            "scene": scene_payload(session),
            "memory": memory_payload(session.store),
        }

    @app.get("/sessions/{session_id}/scene")
    def get_scene(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return scene_payload(session)

    @app.post("/sessions/{session_id}/instruction")
    def post_instruction(session_id: str, body: InstructionBody):
        session = get_session(session_id)
        with session.lock:
            try:
                return submit_instruction(session, body.text)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/sessions/{session_id}/memory")
    def get_memory(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return memory_payload(session.store)

    @app.post("/sessions/{session_id}/newscene")
    def post_newscene(session_id: str, body: NewSceneBody):
        session = get_session(session_id)
        try:
            n_objects = None if body.n_objects is None \
                else _parse_n_objects(body.n_objects)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with session.lock:
            return new_scene(session, body.seed, n_objects)

    return app
