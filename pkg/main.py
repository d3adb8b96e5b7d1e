import argparse
import hashlib
import json
import logging
import os
import sys
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from core import __version__
from core.base import SlowLightError
from core.commands.artifacts import round_significant, write_json
from core.data_manager import DataConfigurator
from core.physics.lattice import StructureParams, check_geometry
from core.settings import ToolkitSettings, load_settings, load_structure
from core.toolkit import RunContext, SlowLightToolkit
from repository.db import Run, database_url, get_db

logger = logging.getLogger("slowlight")

OUTPUT_DIR = Path("output")
COMMANDS = ["slab-neff", "bands", "mode-field", "optimize", "purcell", "trap", "trap-scan", "zeeman",
            "double-well-scan", "c3"]


def _default_threads() -> int:
    return int(os.getenv("SLF_THREADS", 1))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="structure config JSON")
    common.add_argument("--out", type=Path, default=OUTPUT_DIR, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default SLF_THREADS or 1)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--settings", type=Path, help="run settings JSON merged over the defaults")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="slowlight", description="Slow-light half-W1 waveguide toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name, parents=[common])
        if name == "mode-field":
            sub.add_argument("--band", type=int, default=None)
            sub.add_argument("--k", type=float, default=None, help="k in units of pi/a")
        if name == "optimize":
            sub.add_argument("--spec", type=Path, help="optimization spec JSON")
            sub.add_argument("--strict", action="store_true", help="fail with exit 4 if not converged")
    return parser


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(command: str, structure: Optional[StructureParams], settings: ToolkitSettings, seed: int,
                options: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON of everything that determines the outputs."""
    payload = {
        "command": command,
        "structure": structure.to_config() if structure is not None else None,
        "settings": settings.model_dump(mode="json"),
        "seed": seed,
        "options": options,
        "tool_version": __version__,
    }
    canonical = json.dumps(round_significant(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def input_digests(args: argparse.Namespace, data: DataConfigurator) -> Dict[str, str]:
    digests = data.digests()
    for key in ("config", "settings", "spec"):
        path = getattr(args, key, None)
        if path is not None:
            digests[f"--{key}"] = sha256_file(path)
    return digests


def prepare_context(args: argparse.Namespace, data: DataConfigurator) -> RunContext:
    """Validate every input before anything is computed."""
    structure = None
    if args.config is not None:
        structure = load_structure(args.config)
        check_geometry(structure)
    settings = load_settings(data.default_settings(), args.settings, getattr(args, "spec", None))
    options = {}
    if args.command == "mode-field":
        options = {"band": args.band, "k": args.k}
    elif args.command == "optimize":
        options = {"strict": args.strict}
    return RunContext(
        settings=settings,
        out_dir=args.out,
        structure=structure,
        config_path=args.config,
        threads=args.threads if args.threads is not None else _default_threads(),
        seed=args.seed,
        data=data,
        options=options,
    )


def write_manifest(context: RunContext, command: str, digest: str, inputs: Dict[str, str],
                   outputs: List[Path]) -> Path:
    manifest = {
        "command": command,
        "config_hash": digest,
        "tool_version": __version__,
        "inputs": inputs,
        "outputs": sorted(path.name for path in outputs),
    }
    return write_json(manifest, context.output("manifest.json"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    data = DataConfigurator()
    db_gen = get_db(database_url(args.out))
    db = next(db_gen)
    run = Run(id=str(uuid.uuid4()), command=args.command, status="pending", tool_version=__version__)
    db.add(run)
    db.commit()

    try:
        context = prepare_context(args, data)
        inputs = input_digests(args, data)
        digest = config_hash(args.command, context.structure, context.settings, context.seed, context.options)
        run.status = "processing"
        run.config_hash = digest
        run.input_digests = inputs
        db.commit()

        result = SlowLightToolkit().run(args.command, context)
        manifest = write_manifest(context, args.command, digest, inputs, result.outputs)

        run.status = "completed"
        run.outputs = sorted(str(path) for path in result.outputs + [manifest])
        db.commit()
        print(json.dumps(round_significant(result.summary), indent=2, sort_keys=True))
        return 0

    except SlowLightError as e:
        run.status = "failed"
        run.error = f"{type(e).__name__}: {str(e)}"
        db.commit()
        logger.error(run.error)
        print(f"error: {run.error}", file=sys.stderr)
        return e.exit_code

    except Exception as e:
        run.status = "failed"
        run.error = f"{type(e).__name__}: {str(e)}"
        db.commit()
        logger.exception("%s failed", args.command)
        return 1

    finally:
        db_gen.close()


if __name__ == "__main__":
    sys.exit(main())
