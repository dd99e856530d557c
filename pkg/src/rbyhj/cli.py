"""Command line entry point: ``rbyhj run --config FILE`` and ``rbyhj list``.

Exit status 0 means every check passed, 1 a failed check or a runtime
error (partial outputs are kept next to a ``FAILED`` marker) and 2 an
invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .experiments import ExperimentConfig, Outcome, jsonable, list_experiments, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def format_validation(err: ValidationError) -> list[str]:
    """One ``field.path: message`` line per validation error."""
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return lines


def load_config(path: str, seed: int | None = None) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    if seed is not None:
        raw["seeds"] = [seed]
    return ExperimentConfig.model_validate(raw)


def write_outputs(out: Path, res: Outcome, plots: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = dict(res.meta)
    meta["version"] = __version__
    (out / "meta.json").write_text(_dump(meta))
    for name, text in sorted(res.tables.items()):
        p = out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    if plots:
        for name, text in sorted(res.plots.items()):
            (out / name).write_text(text)
    report = {"passed": res.passed, "checks": res.checks}
    (out / "report.json").write_text(_dump(report))


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ValidationError as err:
        for line in format_validation(err):
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    plots = args.plots or cfg.plots
    cfg = cfg.model_copy(update={"plots": plots})
    out = Path(args.out or cfg.out or f"runs/{cfg.experiment}")
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    try:
        res = run_experiment(cfg)
    except Exception:
        marker.write_text(traceback.format_exc())
        print(f"runtime error, see {marker}", file=sys.stderr)
        return EXIT_FAIL
    write_outputs(out, res, plots)
    for name, check in res.checks.items():
        print(f"{'PASS' if check['passed'] else 'FAIL'} {name}")
    return EXIT_OK if res.passed else EXIT_FAIL


def cmd_list(args) -> int:
    for line in list_experiments():
        print(line)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbyhj", description="Pathwise curvature bounds for stochastic HJ equations")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="replace the config's seeds by this one")
    r.add_argument("--out", help="output directory")
    r.add_argument("--plots", action="store_true", help="also write SVG plots")
    r.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="list experiments")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
