"""Command-line entry point: ``wavebench run|validate|recipes``.

Exit codes: 0 success, 1 manifest or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError
from .scenario import (ManifestError, load_manifest, parse_manifest, recipe_names, recipe_text, run_manifest,
                       validate_jobs, with_overrides)

log = logging.getLogger("wavebench")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load(source: str):
    """Manifest from a file path, or from a shipped recipe given by name."""
    path = Path(source)
    if not path.exists() and source in recipe_names():
        return parse_manifest(recipe_text(source), f"recipe:{source}")
    return load_manifest(path)


def _report(manifest, stream) -> bool:
    ok = True
    for name, checks in validate_jobs(manifest).items():
        print(f"[{name}]", file=stream)
        for c in checks:
            status = "ok  " if c.ok else "FAIL"
            print(f"  {status} {c.name}" + (f"  ({c.detail})" if c.detail else ""), file=stream)
            ok &= c.ok
    return ok


def cmd_validate(args) -> int:
    manifest = _load(args.manifest)
    if not manifest.jobs:
        log.warning("manifest %s has no scenarios", args.manifest)
        return EXIT_OK
    ok = _report(manifest, sys.stdout)
    print("all constraints satisfied" if ok else "constraint violations found")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_run(args) -> int:
    manifest = with_overrides(_load(args.manifest), args.seed, args.n_channels, args.n_symbols)
    if not manifest.jobs:
        log.warning("manifest %s has no scenarios; nothing to do", args.manifest)
        return EXIT_OK
    bad = {n: [c for c in cs if not c.ok] for n, cs in validate_jobs(manifest).items()}
    bad = {n: cs for n, cs in bad.items() if cs}
    if bad:
        for name, checks in bad.items():
            for c in checks:
                log.error("%s: %s violated%s", name, c.name, f" ({c.detail})" if c.detail else "")
        return EXIT_INVALID
    run_manifest(manifest, args.out, jobs=args.jobs, log=log.info)
    return EXIT_OK


def cmd_recipes(args) -> int:
    if args.name is None:
        for name in recipe_names():
            print(name)
        return EXIT_OK
    sys.stdout.write(recipe_text(args.name))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="debug logging")
    p = argparse.ArgumentParser(prog="wavebench", description="Waveform ASE experiment runner", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run every scenario of a manifest and write CSVs")
    r.add_argument("manifest", help="manifest path or shipped recipe name")
    r.add_argument("--seed", type=int, help="override the seed of every scenario")
    r.add_argument("--jobs", type=int, default=1, help="worker processes per scenario")
    r.add_argument("--out", default="results", help="output directory (default: results)")
    r.add_argument("--n-channels", type=int, help="override channel realizations per scenario")
    r.add_argument("--n-symbols", type=int, help="override symbols per realization")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", parents=[common], help="check every constraint of a manifest")
    v.add_argument("manifest", help="manifest path or shipped recipe name")
    v.set_defaults(func=cmd_validate)

    rc = sub.add_parser("recipes", parents=[common], help="list shipped recipes or print one")
    rc.add_argument("name", nargs="?", help="recipe to print")
    rc.set_defaults(func=cmd_recipes)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if getattr(args, "verbose", False) else logging.INFO
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers = [handler]
    log.setLevel(level)
    try:
        return args.func(args)
    except (ManifestError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except KeyError as exc:
        log.error("%s", exc.args[0] if exc.args else exc)
        return EXIT_INVALID
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
