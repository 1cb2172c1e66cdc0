"""videoinfer command line: infer, eval, judge, ablate, report.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import ablation
from .backends import Backends, build_backends
from .core import PipelineConfig, ValidationError, load_config, read_records, validate_config
from .ingest import Manifest, load_manifest
from .judge import Judge, judge_run
from .metrics import METRICS, ScoreReport, score_records
from .pipeline import CONFIG_FILE, RECORDS_FILE, RUN_INFO_FILE, run_manifest
from .prompts import PromptBook

log = logging.getLogger("videoinfer")

SCORES_FILE = "scores.tsv"
JUDGE_FILE = "judge.tsv"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _existing_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _resolve_config(args) -> PipelineConfig:
    # file first, then flag overrides; credentials stay in the environment
    config = load_config(_existing_file(args.config, "config"))
    if args.set:
        config = PipelineConfig.from_flat(_overrides(args.set), config)
    return validate_config(config)


def _manifest(path: str, rho: float | None = None) -> Manifest:
    manifest = load_manifest(_existing_file(path, "manifest"))
    for problem in manifest.problems:
        log.warning("%s", problem)
    return manifest.with_rho(rho) if rho is not None else manifest


def _backends(config: PipelineConfig, cache_dir, fixtures) -> Backends:
    if fixtures and not Path(fixtures).is_dir():
        raise UsageError(f"fixture directory not found: {fixtures}")
    return build_backends(config, cache_dir=cache_dir, fixtures=fixtures)


def _info(args, cache_dir: str) -> dict:
    return {
        "manifest": str(Path(args.manifest).resolve()),
        "fixtures": str(Path(args.fixtures).resolve()) if args.fixtures else None,
        "cache_dir": str(Path(cache_dir).resolve()),
        "rho_override": args.rho,
    }


def _run_info(run_dir: Path) -> dict:
    path = run_dir / RUN_INFO_FILE
    return json.loads(path.read_text(encoding="utf-8")) if path.is_file() else {}


def _run_backends(run_dir: Path, fixtures: str | None) -> tuple[PipelineConfig, Backends]:
    info = _run_info(run_dir)
    config_path = run_dir / CONFIG_FILE
    if not config_path.is_file():
        raise UsageError(f"{run_dir} has no {CONFIG_FILE}; not a run directory")
    config = load_config(config_path)
    return config, _backends(config, info.get("cache_dir"), fixtures or info.get("fixtures"))


def _records(run_dir: Path):
    path = run_dir / RECORDS_FILE
    if not path.is_file():
        raise UsageError(f"{run_dir} has no {RECORDS_FILE}")
    return read_records(path)


def _ground_truth(args, run_dir: Path) -> dict[str, str]:
    manifest_path = args.manifest or _run_info(run_dir).get("manifest")
    if not manifest_path:
        raise UsageError("--manifest is required (run directory does not record one)")
    return {e.video_id: e.ground_truth for e in _manifest(manifest_path)}


# --------------------------------------------------------------------------
# commands


def cmd_infer(args) -> int:
    config = _resolve_config(args)
    manifest = _manifest(args.manifest, args.rho)
    out = Path(args.out)
    cache_dir = args.cache_dir or str(out / "cache")
    backends = _backends(config, cache_dir, args.fixtures)
    summary = run_manifest(manifest, config, backends, out, args.parallelism, args.dump_sim, _info(args, cache_dir))
    s = summary.to_dict()
    print(f"{s['succeeded']}/{s['videos']} videos ok, backend calls {s['backend_calls']}, wrote {out}")
    for vid, err in s["failures"].items():
        print(f"  failed {vid}: {err}")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    records = _records(run_dir)
    _, backends = _run_backends(run_dir, args.fixtures)
    report = score_records(records, _ground_truth(args, run_dir), backends.text_embedder)
    report.write_tsv(run_dir / SCORES_FILE)
    print("\t".join(f"{m}={v:.4f}" for m, v in report.means.items()))
    return 0


def cmd_judge(args) -> int:
    run_dir = Path(args.run_dir)
    records = _records(run_dir)
    config, backends = _run_backends(run_dir, args.fixtures)
    policy = args.policy or config.unparseable_policy
    report = judge_run(records, _ground_truth(args, run_dir), Judge(backends.judge, PromptBook.from_config(config)), policy)
    report.write_tsv(run_dir / JUDGE_FILE)
    print(f"accuracy={report.accuracy:.2f}% over {len(report.items)} videos {report.counts}")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    manifest = _manifest(args.manifest, args.rho)
    grid = ablation.load_grid(_existing_file(args.grid, "grid")) if args.grid else ablation.DEFAULT_GRID
    out = Path(args.out)
    cache_dir = args.cache_dir or str(out / "cache")
    backends = _backends(config, cache_dir, args.fixtures)

    def progress(r: ablation.CellResult) -> None:
        print(f"{r.family}/{r.cell}: {r.status}" + (f" ({r.error})" if r.error else ""))

    results = ablation.run_grid(grid, manifest, config, backends, out, args.parallelism, progress, _info(args, cache_dir))
    print(f"wrote {out / 'comparison.tsv'} ({sum(r.status == 'ok' for r in results)}/{len(results)} cells ok)")
    return 0


REPORT_COLUMNS = ["dataset", "rho", "variant", "videos", *METRICS, "judge_accuracy"]


def build_report(run_dirs: list[str | Path]) -> list[dict[str, str]]:
    """One row per (run directory, rho), sorted by (dataset, rho, variant)."""
    rows = []
    seen: dict[str, int] = {}
    for d in run_dirs:
        d = Path(d)
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
        if not any(d.iterdir()):
            raise UsageError(f"empty run directory: {d}")
        scores = d / SCORES_FILE
        if not scores.is_file():
            raise UsageError(f"missing {SCORES_FILE} in {d}")
        info = _run_info(d)
        name = d.name
        seen[name] = seen.get(name, 0) + 1
        variant = name if seen[name] == 1 else f"{name}#{seen[name]}"
        judged = {}
        if (d / JUDGE_FILE).is_file():
            with open(d / JUDGE_FILE, encoding="utf-8", newline="") as fh:
                judged = {r["video_id"]: r["verdict"] for r in csv.DictReader(fh, delimiter="\t")}
        items = ScoreReport.read_tsv(scores).items
        for rho in sorted({it["rho"] for it in items}):
            group = [it for it in items if it["rho"] == rho]
            means = ScoreReport(group).means
            verdicts = [judged[it["video_id"]] for it in group if judged.get(it["video_id"]) not in (None, "missing_ground_truth")]
            rows.append(
                {
                    "dataset": info.get("dataset", ""),
                    "rho": f"{rho:g}",
                    "variant": variant,
                    "videos": str(len(group)),
                    **{m: f"{means[m]:.4f}" for m in METRICS},
                    "judge_accuracy": f"{100.0 * verdicts.count('yes') / len(verdicts):.2f}" if verdicts else "",
                }
            )
    rows.sort(key=lambda r: (r["dataset"], float(r["rho"]), r["variant"]))
    return rows


def cmd_report(args) -> int:
    rows = build_report(args.run_dirs)
    buf = io.StringIO()
    w = csv.DictWriter(buf, REPORT_COLUMNS, delimiter="\t" if args.format == "tsv" else ",", lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    return 0


# --------------------------------------------------------------------------
# parser


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("manifest", help="manifest (.jsonl)")
    p.add_argument("--config", required=True, help="config file (.ini)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rho", type=float, help="override every entry's observed fraction")
    p.add_argument("--parallelism", type=int, default=1, help="videos processed concurrently")
    p.add_argument("--cache-dir", help="response cache directory (default OUT/cache)")
    p.add_argument("--fixtures", help="use offline fixture backends from this directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="videoinfer", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run the pipeline over a manifest")
    _add_run_flags(p)
    p.add_argument("--dump-sim", action="store_true", help="write similarity matrices")
    p.set_defaults(func=cmd_infer)

    for name, func, extra in (("eval", cmd_eval, False), ("judge", cmd_judge, True)):
        p = sub.add_parser(name, help=f"{name} a run directory")
        p.add_argument("run_dir")
        p.add_argument("--manifest", help="manifest with ground truth (default: the one the run used)")
        p.add_argument("--fixtures", help="fixture backends (default: as recorded for the run)")
        if extra:
            p.add_argument("--policy", choices=("incorrect", "exclude"), help="unparseable verdict policy")
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="run an ablation grid")
    _add_run_flags(p)
    p.add_argument("--grid", help="grid file; sections named family/cell (default: built-in grid)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="merge scored run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    p.add_argument("--out", help="also write the table here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if getattr(args, "parallelism", 1) < 1:
            raise UsageError("--parallelism must be >= 1")
        return args.func(args)
    except (UsageError, ValidationError) as exc:
        print(f"videoinfer: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"videoinfer: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
