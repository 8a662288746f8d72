"""Command line front door: dataset generation, batch evaluation, an
interactive line session, and the HTTP service."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import FormatError, ConfigError
from .evalharness import ExperimentConfig, load_config, run_experiment
from .grounder import NoiseConfig
from .langgen import MixConfig, gen_dataset, write_dataset
from .scene import load_object_library
from .data import default_library_path
from .service import (
    MEMORY_ENV_VAR,
    build_state,
    create_app,
    memory_payload,
    new_scene,
    scene_payload,
    submit_instruction,
)


def _memory_path(flag_value: str | None) -> str | None:
    """--memory wins over NAMEGROUNDER_MEMORY; neither means no persistence."""
    if flag_value:
        return flag_value
    return os.environ.get(MEMORY_ENV_VAR) or None


def _noise_from_args(args) -> NoiseConfig:
    return NoiseConfig(p_flip=args.p_flip, j=args.jitter, sigma=args.sigma,
                       tau=args.tau, tie_break=args.tie_break)


def _add_noise_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p-flip", type=float, default=0.0,
                        help="per-attribute readout flip probability")
    parser.add_argument("--jitter", type=float, default=0.0,
                        help="box edge jitter in pixels")
    parser.add_argument("--sigma", type=float, default=0.0,
                        help="appearance feature noise scale")
    parser.add_argument("--tau", type=float, default=0.9,
                        help="name match acceptance distance")
    parser.add_argument("--tie-break", choices=("deterministic", "uniform"),
                        default="deterministic")


def cmd_gen(args) -> int:
    library = load_object_library(args.library or default_library_path())
    mix = MixConfig()
    dataset = gen_dataset(library, args.scenes, args.per_scene, mix,
                          args.seed, n_objects=(args.min_objects,
                                                args.max_objects))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset, out / "dataset.jsonl")
    (out / "manifest.json").write_text(
        json.dumps(dataset.manifest, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")
    print(f"wrote {len(dataset.instructions)} instructions over "
          f"{len(dataset.scenes)} scenes to {out}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    result = run_experiment(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports.json").write_text(result.reports_json(), encoding="utf-8")
    (out / "records.jsonl").write_text(result.records_jsonl(),
                                       encoding="utf-8")
    table = result.table_text()
    (out / "table.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def cmd_repl(args) -> int:
    state = build_state(args.library, _memory_path(args.memory),
                        _noise_from_args(args))
    session = state.create_session(args.scene_seed,
                                   (args.min_objects, args.max_objects))
    out = sys.stdout
    if not args.json:
        print(f"session {session.session_id}; scene "
              f"{session.scene.scene_id} with "
              f"{len(session.scene.instances)} objects", file=out)
        print("type an instruction, ':scene', ':memory', ':new <seed>', "
              "or ':quit'", file=out)
    for line in sys.stdin:
        text = line.strip()
        if not text:
            continue
        if text in (":quit", ":exit", "quit", "exit"):
            break
        if text == ":scene":
            print(json.dumps(scene_payload(session), sort_keys=True),
                  file=out)
            continue
        if text == ":memory":
            print(json.dumps(memory_payload(session.store), sort_keys=True),
                  file=out)
            continue
        if text.startswith(":new"):
            parts = text.split()
            seed = int(parts[1]) if len(parts) > 1 else 0
            payload = new_scene(session, seed)
            if args.json:
                print(json.dumps(payload, sort_keys=True), file=out)
            else:
                print(f"new scene {payload['scene']['scene_id']} with "
                      f"{len(payload['scene']['instances'])} objects",
                      file=out)
            continue
        try:
            response = submit_instruction(session, text)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            continue
        if args.json:
            print(json.dumps(response, sort_keys=True), file=out)
        else:
            result = response["result"]
            bits = [f"class={response['instruction']['class']}"]
            if response["chosen"]["src"]:
                bits.append(f"src={response['chosen']['src']['instance_id']}")
            if response["chosen"]["dst"]:
                bits.append(f"dst={response['chosen']['dst']['instance_id']}")
            if response["stored_name"]:
                bits.append(f"stored={response['stored_name']!r}")
            bits.append("ok" if result["sr_ok"]
                        else f"failed at {result['failure_stage']}")
            print("  ".join(bits), file=out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    app = create_app(args.library, _memory_path(args.memory),
                     _noise_from_args(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="namegrounder",
        description="Tabletop name-grounding simulator and evaluation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset")
    gen.add_argument("--scenes", type=int, default=20)
    gen.add_argument("--per-scene", type=int, default=15)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--min-objects", type=int, default=6)
    gen.add_argument("--max-objects", type=int, default=8)
    gen.add_argument("--library", help="object library JSON path")
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_gen)

    ev = sub.add_parser("eval", help="run the two-condition experiment")
    ev.add_argument("--config", help="experiment TOML; defaults when omitted")
    ev.add_argument("--out", required=True, help="output directory")
    ev.set_defaults(func=cmd_eval)

    repl = sub.add_parser("repl", help="interactive line session")
    repl.add_argument("--scene-seed", type=int, default=0)
    repl.add_argument("--min-objects", type=int, default=6)
    repl.add_argument("--max-objects", type=int, default=8)
    repl.add_argument("--library", help="object library JSON path")
    repl.add_argument("--memory", help="memory store file "
                      f"(or ${MEMORY_ENV_VAR})")
    repl.add_argument("--json", action="store_true",
                      help="print full wire responses instead of summaries")
    _add_noise_flags(repl)
    repl.set_defaults(func=cmd_repl)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8023)
    serve.add_argument("--library", help="object library JSON path")
    serve.add_argument("--memory", help="memory store file "
                       f"(or ${MEMORY_ENV_VAR})")
    _add_noise_flags(serve)
    serve.set_defaults(func=cmd_serve)

    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except (FormatError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
