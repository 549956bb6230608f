"""``sbsim`` command line: ingest, run, replay, calibrate, eval, render.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 solver failure.
Every command writes a JSON run manifest next to its primary output.
Log level comes from ``SBSIM_LOG`` (debug, info, warning).
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .building import BuildingConfig, BuildingConfigError
from .calibration import (CalibrationError, ParamBounds, ReplayEpisode, calibrate, read_trials,
                          replay_error, n_step_replay, ts_mae)
from .env import BuildingEnv, EpisodeFailed, run_episode
from .episode import EpisodeFormatError, load_episode, save_episode
from .fd import ConfigurationError, ConvergenceFailure, SolverDivergence
from .grid import GridError, MaterialParams
from .hvac import PlantConfigError
from .ingest import IngestError, build_from_image, load_devices
from .policies import PolicyError, default_schedule, load_policy
from .render import render_heatmap, zone_field
from .reward import RewardConfigError
from .seeding import derive_seed

log = logging.getLogger("sbsim")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3, 4
VALIDATION_ERRORS = (BuildingConfigError, EpisodeFormatError, IngestError, PolicyError,
                     CalibrationError, GridError, RewardConfigError, PlantConfigError,
                     ConfigurationError, FileNotFoundError, ValueError)
SOLVER_ERRORS = (SolverDivergence, ConvergenceFailure, EpisodeFailed)


class UsageError(Exception):
    pass


def _hash_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_manifest(path, command: str, config_path, seed, started: str, outputs: list[str],
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": str(config_path) if config_path else None,
        "config_hash": _hash_file(config_path) if config_path else None,
        "seed": seed,
        "versions": {"sbsim": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "start_time": started,
        "end_time": _now(),
        "outputs": [str(o) for o in outputs],
    }
    if extra:
        manifest.update(extra)
    atomic_write(path, json.dumps(manifest, indent=1) + "\n")


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _load_params(path, base: MaterialParams) -> MaterialParams:
    if path is None:
        return base
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"parameter file not found: {p}")
    if p.suffix == ".csv":
        trials = read_trials(p)
        if not trials:
            raise CalibrationError(f"{p} has no trials")
        best = min(trials, key=lambda r: r.train_eps)
        return base.replace(**best.params)
    doc = json.loads(p.read_text())
    return base.replace(**doc.get("params", doc))


# ------------------------------------------------------------------ commands

def cmd_ingest(args) -> dict:
    devices = load_devices(args.devices)
    masks = [tuple(int(v) for v in m.split(",")) for m in args.mask]
    if any(len(m) != 4 for m in masks):
        raise UsageError("--mask takes row0,col0,row1,col1")
    b = build_from_image(args.image, devices, cv_size=args.cv_size, scale=args.scale,
                         floor_height=args.floor_height, threshold=args.threshold,
                         n_iters=args.n_iters, masks=masks, name=Path(args.image).stem)
    out = Path(args.out)
    atomic_write(out, json.dumps(b.to_dict(), indent=1))
    log.info("wrote %s: %d zones, grid %s", out, len(b.zones), b.floors[0].cells.shape)
    return {"config": args.image, "outputs": [out]}


def cmd_run(args) -> dict:
    b = BuildingConfig.load(args.building)
    policy = load_policy(args.policy) if args.policy else default_schedule(b)
    env = BuildingEnv(b, horizon=args.steps, seed=derive_seed(args.seed, "env"),
                      params=_load_params(args.params, b.params))

    def progress(i, info):
        if (i + 1) % 288 == 0 or i + 1 == args.steps:
            log.info("step %d/%d reward %.4f sweeps %s", i + 1, args.steps, info["reward"],
                     info["sweeps"])

    ic = {}
    if args.initial_temperature is not None:
        ic["zone_temperatures"] = args.initial_temperature
    archive = run_episode(env, policy, args.steps, ic, progress=progress)
    out = save_episode(archive, args.out)
    return {"config": args.building, "manifest": out / "manifest.json",
            "outputs": [out / "metadata.json"] + [out / f"{n}.csv" for n in archive.matrices()]}


def _replay_episode(args, b, path, start=0, stop=None, warmup=0):
    return ReplayEpisode.from_archive(load_episode(path), b, start, stop, warmup)


def cmd_replay(args) -> dict:
    b = BuildingConfig.load(args.building)
    params = _load_params(args.params, b.params)
    archive = load_episode(args.episode)
    stop = None if args.nsteps is None else args.start + args.nsteps
    if stop is not None and stop > archive.n_steps:
        raise CalibrationError(f"episode has {archive.n_steps} steps, asked for {stop}")
    ep = ReplayEpisode.from_archive(archive, b, args.start, stop)
    T_sim = n_step_replay(b, params, ep, seed=derive_seed(args.seed, "replay"))
    eps = ts_mae(ep.T_real, T_sim)
    per_zone = np.mean(np.abs(ep.T_real - T_sim), axis=0)
    report = {"ts_mae": eps, "n_steps": ep.n_steps, "start": args.start,
              "per_zone_mae": dict(zip(ep.zone_ids, per_zone.tolist())),
              "params": params.tunables()}
    out = Path(args.report)
    atomic_write(out, json.dumps(report, indent=1) + "\n")
    print(f"TS-MAE over {ep.n_steps} steps: {eps:.6f} C")
    return {"config": args.building, "outputs": [out]}


def cmd_calibrate(args) -> dict:
    b = BuildingConfig.load(args.building)
    train = _replay_episode(args, b, args.train)
    val = _replay_episode(args, b, args.val, start=args.val_warmup, warmup=args.val_warmup) \
        if args.val else None
    bounds = ParamBounds.from_dict(json.loads(Path(args.bounds).read_text())) \
        if args.bounds else ParamBounds()
    out = Path(args.out)

    def on_trial(r):
        if (r.trial + 1) % 50 == 0:
            log.info("trial %d: train eps %.4f", r.trial + 1, r.train_eps)

    best, history = calibrate(b, train, bounds, args.budget, args.optimizer, args.workers,
                              derive_seed(args.seed, "calibrate"), val, out, on_trial)
    best_path = out.with_name(out.stem + "_best.json")
    atomic_write(best_path, json.dumps({"trial": best.trial, "train_eps": best.train_eps,
                                        "val_eps": best.val_eps, "params": best.params},
                                       indent=1) + "\n")
    print(f"best trial {best.trial}: train eps {best.train_eps:.4f}"
          + (f", val eps {best.val_eps:.4f}" if best.val_eps is not None else ""))
    return {"config": args.building, "outputs": [out, best_path]}


def cmd_eval(args) -> dict:
    b = BuildingConfig.load(args.building)
    calibrated = _load_params(args.params, b.params)
    seed = derive_seed(args.seed, "eval")
    rows = []
    splits = [("train", args.train, 0)] + ([("val", args.val, args.val_warmup)] if args.val else [])
    for name, path, warm in splits:
        ep = _replay_episode(args, b, path, start=warm, warmup=warm)
        u = replay_error(b, b.params, ep, seed)
        c = replay_error(b, calibrated, ep, seed)
        rows.append({"split": name, "n_steps": ep.n_steps - ep.score_from,
                     "uncalibrated_eps": u, "calibrated_eps": c,
                     "ratio": c / u if u > 0 else float("nan")})
    print(f"{'split':<6} {'steps':>6} {'uncalib. eps':>13} {'calib. eps':>11} {'ratio':>7}")
    for r in rows:
        print(f"{r['split']:<6} {r['n_steps']:>6} {r['uncalibrated_eps']:>13.4f} "
              f"{r['calibrated_eps']:>11.4f} {r['ratio']:>7.3f}")
    outputs = []
    if args.report:
        atomic_write(args.report, json.dumps(rows, indent=1) + "\n")
        outputs.append(Path(args.report))
    return {"config": args.building, "outputs": outputs}


def cmd_render(args) -> dict:
    ep = load_episode(args.episode)
    t = ep.n_steps - 1 if args.t is None else args.t
    field, cells = zone_field(ep, t, args.floor)
    diff = args.diff_against is not None
    if diff:
        other, other_cells = zone_field(load_episode(args.diff_against), t, args.floor)
        if other_cells.shape != cells.shape:
            raise EpisodeFormatError("episodes have different floorplans")
        field = field - other
    stats = render_heatmap(field, cells, args.out, mask=np.isfinite(field), diff=diff,
                           transparent=args.transparent, pixels_per_cv=args.pixels_per_cv)
    log.info("rendered step %d: min %.3f max %.3f", t, stats["min"], stats["max"])
    out = Path(args.out)
    return {"config": Path(args.episode) / "metadata.json",
            "outputs": [out, out.with_suffix(".txt")]}


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sbsim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sbsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="floorplan image + device file -> building JSON")
    s.add_argument("--image", required=True)
    s.add_argument("--devices", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cv-size", type=float, default=0.5, help="CV edge in metres")
    s.add_argument("--scale", type=float, default=0.05, help="metres per pixel")
    s.add_argument("--floor-height", type=float, default=3.0)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--n-iters", type=int, default=2)
    s.add_argument("--mask", action="append", default=[], help="row0,col0,row1,col1 to erase")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("run", help="roll a policy and write an episode directory")
    s.add_argument("--building", required=True)
    s.add_argument("--policy")
    s.add_argument("--params", help="parameter JSON or trials.csv")
    s.add_argument("--steps", type=int, default=288)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--initial-temperature", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("replay", help="n-step replay of an episode, TS-MAE report")
    s.add_argument("--building", required=True)
    s.add_argument("--episode", required=True)
    s.add_argument("--params")
    s.add_argument("--nsteps", type=int)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("calibrate", help="tune material parameters against an episode")
    s.add_argument("--building", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--val")
    s.add_argument("--val-warmup", type=int, default=0,
                   help="replay this many leading validation steps without scoring them")
    s.add_argument("--bounds")
    s.add_argument("--budget", type=int, default=100)
    s.add_argument("--optimizer", choices=["random", "golden"], default="random")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("eval", help="train/val TS-MAE of calibrated vs default parameters")
    s.add_argument("--building", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--val")
    s.add_argument("--val-warmup", type=int, default=0)
    s.add_argument("--params", required=True, help="parameter JSON or trials.csv")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="heatmap of zone temperatures or their difference")
    s.add_argument("--episode", required=True)
    s.add_argument("--t", type=int)
    s.add_argument("--floor", type=int, default=0)
    s.add_argument("--diff-against")
    s.add_argument("--pixels-per-cv", type=int, default=8)
    s.add_argument("--transparent", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render)
    return p


def _setup_logging() -> None:
    level = os.environ.get("SBSIM_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"sbsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:     # --help / --version
        return int(exc.code or 0)
    started = _now()
    t0 = time.perf_counter()
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"sbsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SOLVER_ERRORS as exc:
        print(f"sbsim {args.command}: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VALIDATION_ERRORS as exc:
        print(f"sbsim {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    outputs = result["outputs"]
    manifest = result.get("manifest")
    if manifest is None:
        anchor = getattr(args, "out", None) or getattr(args, "report", None) or "sbsim_eval"
        manifest = _manifest_for(Path(anchor))
    write_manifest(manifest, args.command, result.get("config"),
                   getattr(args, "seed", None), started, outputs,
                   {"elapsed_seconds": round(time.perf_counter() - t0, 3)})
    log.debug("done in %.2fs", time.perf_counter() - t0)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
