"""Command line: ``dilution-lab run | validate | list-experiments``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import EXPERIMENTS, BudgetError, ConfigError, manifest_hash, validate_manifest


def _load(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as err:
        raise ConfigError([f"cannot read {path}: {err.strerror}"]) from None
    except json.JSONDecodeError as err:
        raise ConfigError([f"{path}: invalid JSON ({err.msg} at line {err.lineno})"]) from None


def resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("DILUTION_LAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"DILUTION_LAB_THREADS={env!r} is not an integer"]) from None
    return 1


def _report(err: ConfigError) -> int:
    kind = "budget exceeded" if isinstance(err, BudgetError) else "invalid manifest"
    print(f"error: {kind}", file=sys.stderr)
    for e in err.errors:
        print(f"  - {e}", file=sys.stderr)
    return 3 if isinstance(err, BudgetError) else 2


def cmd_run(args) -> int:
    from .experiments import run
    try:
        raw = _load(args.manifest)
        if args.mitigate is not None:
            if raw.get("experiment") != "mitigate":
                raise ConfigError(["--mitigate applies to the 'mitigate' experiment only"])
            raw = dict(raw)
            raw["options"] = dict(raw.get("options", {}), method=args.mitigate)
        man = validate_manifest(raw, seed=args.seed)
        threads = resolve_threads(args.threads)
    except ConfigError as err:
        return _report(err)
    out_dir = args.out or man["output"]
    summary = run(man, out_dir, threads)
    print(f"{man['experiment']}: wrote {len(summary['files']) + 1} files to {out_dir} "
          f"(manifest {summary['manifest_hash']})")
    return 0


def cmd_validate(args) -> int:
    try:
        man = validate_manifest(_load(args.manifest))
    except ConfigError as err:
        return _report(err)
    body = dict(man, manifest_hash=manifest_hash(man))
    print(json.dumps(body, indent=2, sort_keys=True))
    return 0


def cmd_list(args) -> int:
    width = max(len(k) for k in EXPERIMENTS)
    for name in sorted(EXPERIMENTS):
        print(f"{name:<{width}}  {EXPERIMENTS[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dilution-lab",
                                description="Noisy Trotter-circuit experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment manifest")
    r.add_argument("manifest")
    r.add_argument("--out", help="output directory (overrides the manifest)")
    r.add_argument("--seed", type=int, help="seed (overrides the manifest)")
    r.add_argument("--threads", type=int,
                   help="worker threads (default: $DILUTION_LAB_THREADS or 1)")
    r.add_argument("--mitigate", choices=["lin", "exp", "both"],
                   help="estimator(s) for the mitigate experiment")
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="check a manifest and print it normalized")
    v.add_argument("manifest")
    v.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-experiments", help="list experiment ids")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
