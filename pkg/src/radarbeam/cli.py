"""Command-line pipeline: simulate -> make-dataset -> train -> eval.

Every command writes into its own ``--out`` directory (guarded by a lock
file) and leaves a ``manifest.json`` there.  stdout carries one JSON object
describing the outputs; log text goes to stderr.

Exit codes: 0 ok, 1 configuration error, 2 I/O error, 3 numeric error.
``RADARBEAM_THREADS`` (default 1) sets the BLAS/OpenMP thread count.
"""
from __future__ import annotations

import os

_THREADS = os.environ.get("RADARBEAM_THREADS", "1")
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import contextlib  # noqa: E402
import dataclasses  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__, nn, rbtk  # noqa: E402
from .comm import ArrayConfig, build_codebook  # noqa: E402
from .data import (TxIdTrainingSet, E2ETrainingSet, assemble_dataset, compute_features,  # noqa: E402
                   iter_labeled_frames, load_dataset, save_dataset)
from .evaluation import accuracy_vs_To, e2e_ranker, hold_ranker, txid_ranker, write_loss_curve  # noqa: E402
from .models import (E2EModel, E2EModelConfig, TrainingDivergedError, TxIdModel,  # noqa: E402
                     TxIdModelConfig, default_train_config, train)
from .radar import AliasingError, RadarWaveformConfig  # noqa: E402
from .scenario import ScenarioConfig, generate_timeline, timeline_to_csv  # noqa: E402

log = logging.getLogger("radarbeam")

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 1, 2, 3
LOCK = ".radarbeam.lock"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- helpers --------------------------------------------------------------------

def _read_json(path: str | None, what: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"{what} file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"{what} file {path} is not valid JSON: {exc}")


def _blob_hash(path: Path) -> str:
    data = path.read_bytes()
    return hashlib.sha256(b"blob %d\0" % len(data) + data).hexdigest()


def content_hash(paths) -> str:
    """Git-style tree hash: sha256 over (name, blob hash) of every input file."""
    files = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files += [(f"{p.name}/{f.relative_to(p)}", f) for f in sorted(p.rglob("*"))
                      if f.is_file() and f.name not in (LOCK,)]
        elif p.is_file():
            files.append((p.name, p))
    h = hashlib.sha256()
    for name, f in sorted(files):
        h.update(f"{_blob_hash(f)} {name}\n".encode())
    return h.hexdigest()


@contextlib.contextmanager
def _locked(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
        fd = os.open(out / LOCK, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(EXIT_IO, f"output directory {out} is locked by another run ({LOCK} exists)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            (out / LOCK).unlink()


def _write_manifest(out: Path, command: str, config: dict, seeds: dict, artifacts: dict,
                    inputs, started: float) -> Path:
    manifest = {
        "tool": "radarbeam", "version": __version__, "command": command,
        "config": config, "seeds": seeds,
        "artifacts": {k: str(Path(v).relative_to(out)) for k, v in artifacts.items()},
        "input_hash": content_hash(inputs),
        "wall_clock_s": round(time.perf_counter() - started, 3),
        "finished_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_t_obs(text: str) -> list[int]:
    vals: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            vals.update(range(int(a), int(b) + 1))
        elif part:
            vals.add(int(part))
    if not vals or min(vals) < 1:
        raise CliError(EXIT_CONFIG, f"invalid --t-obs {text!r}")
    return sorted(vals)


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise CliError(EXIT_CONFIG, f"invalid map shape {text!r}; expected e.g. 128x64")
    return h, w


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args) -> dict:
    started = time.perf_counter()
    raw = _read_json(args.scenario, "scenario config")
    radar_raw = _read_json(args.radar, "radar config")
    if args.seed is not None:
        raw["seed"] = args.seed
    scen = ScenarioConfig.from_dict(raw)
    radar = RadarWaveformConfig.from_dict(radar_raw) if radar_raw else RadarWaveformConfig()
    if args.noise_var is not None:
        radar = dataclasses.replace(radar, noise_var=args.noise_var)
    array = ArrayConfig()
    cb = build_codebook(array, args.n_beams)
    out = Path(args.out)
    with _locked(out):
        tl = generate_timeline(scen, radar)
        beams = []
        frames_path = out / "frames.bin"
        with open(frames_path, "wb") as fh:
            for lf in iter_labeled_frames(tl, radar, array, cb):
                rbtk.write_record(fh, lf.cube.data.astype(np.complex64))
                beams.append(lf.beam)
        labels_path = out / "labels.csv"
        with open(labels_path, "w") as fh:
            fh.write("step,t,beam\n")
            for i, (t, b) in enumerate(zip(tl.timestamps_s, beams)):
                fh.write(f"{i},{float(t)!r},{b}\n")
        timeline_path = out / "timeline.csv"
        timeline_to_csv(tl, timeline_path)
        artifacts = {"frames": frames_path, "labels": labels_path, "timeline": timeline_path}
        config = {"scenario": scen.to_dict(), "radar": radar.to_dict(),
                  "array": dataclasses.asdict(array), "n_beams": cb.size}
        inputs = [p for p in (args.scenario, args.radar) if p]
        manifest = _write_manifest(out, "simulate", config, {"scenario": scen.seed}, artifacts,
                                   inputs, started)
    log.info("simulated %d frames of %s into %s", len(beams), scen.preset, out)
    return {"command": "simulate", "out": str(out), "n_frames": len(beams),
            "manifest": str(manifest), **{k: str(v) for k, v in artifacts.items()}}


def _load_scene_dir(path: Path):
    man_path = path / "manifest.json"
    if not man_path.is_file():
        raise CliError(EXIT_IO, f"no simulate manifest in {path}")
    man = json.loads(man_path.read_text())
    if man.get("command") != "simulate":
        raise CliError(EXIT_CONFIG, f"{path} is not a simulate output")
    beams = []
    with open(path / "labels.csv") as fh:
        next(fh)
        for line in fh:
            beams.append(int(line.rstrip().split(",")[2]))
    return man["config"], beams


def cmd_make_dataset(args) -> dict:
    started = time.perf_counter()
    scenes = [Path(p) for p in args.inputs]
    configs, beams, cubes = [], [], []
    for p in scenes:
        cfg, b = _load_scene_dir(p)
        configs.append(cfg)
        beams.append(b)
        recs = rbtk.read_records(p / "frames.bin")
        if len(recs) != len(b):
            raise CliError(EXIT_IO, f"{p}: {len(recs)} frames but {len(b)} labels")
        cubes.extend(recs)
    for key in ("radar", "array", "n_beams"):
        if any(c[key] != configs[0][key] for c in configs):
            raise CliError(EXIT_CONFIG, f"input scenes disagree on {key}")
    radar = RadarWaveformConfig.from_dict(configs[0]["radar"])
    array = ArrayConfig(**configs[0]["array"])
    ds = assemble_dataset(beams, [c["scenario"] for c in configs],
                          [c["scenario"]["sample_rate_hz"] for c in configs], radar, array,
                          configs[0]["n_beams"], window=args.window,
                          keep_changing_only=args.filter_changing, ratio=args.ratio, cubes=cubes)
    if not ds.samples:
        log.warning("no sequences kept%s", " (all windows have a constant beam)" if args.filter_changing else "")
    out = Path(args.out)
    with _locked(out):
        save_dataset(ds, out)
        counts = ds.manifest()["counts"]
        config = {"window": args.window, "stride": 1, "filter_changing": args.filter_changing,
                  "ratio": args.ratio, "inputs": [str(p) for p in scenes]}
        run_manifest = {"frames": out / "frames.bin", "labels": out / "labels.csv"}
        # the dataset manifest doubles as the run manifest for this directory
        ds_manifest = json.loads((out / "manifest.json").read_text())
        ds_manifest["run"] = {
            "command": "make-dataset", "version": __version__, "config": config,
            "seeds": {"scenes": [c["scenario"]["seed"] for c in configs]},
            "artifacts": {k: v.name for k, v in run_manifest.items()},
            "input_hash": content_hash(scenes),
            "wall_clock_s": round(time.perf_counter() - started, 3),
        }
        (out / "manifest.json").write_text(json.dumps(ds_manifest, indent=2, sort_keys=True) + "\n")
    log.info("dataset: %(sequences)d sequences, %(train)d train / %(test)d test", counts)
    return {"command": "make-dataset", "out": str(out), "counts": counts,
            "manifest": str(out / "manifest.json")}


def _dataset(path: str, load_cubes: bool = True):
    p = Path(path)
    if not (p / "manifest.json").is_file():
        raise CliError(EXIT_IO, f"no dataset manifest in {p}")
    return load_dataset(p, load_cubes=load_cubes)


def _features(ds, frame_ids, map_shape=None, with_states=True):
    """Features for the given frames, scattered into full-length containers."""
    ids = sorted(set(frame_ids))
    f = compute_features((ds.cubes[i] for i in ids), ds.radar, map_shape, with_states=with_states)
    maps = states = None
    if map_shape is not None:
        maps = np.zeros((len(ds.frames),) + tuple(map_shape), dtype=np.float32)
        maps[ids] = f.maps
    if with_states:
        states = [[] for _ in ds.frames]
        for i, st in zip(ids, f.states):
            states[i] = st
    return maps, states


def _build_model(kind: str, args, n_beams: int, seed: int):
    if kind == "txid":
        cfg = TxIdModelConfig(n_beams=n_beams)
        return TxIdModel(cfg, seed=seed), dataclasses.asdict(cfg)
    cfg = E2EModelConfig(map_shape=_parse_shape(args.map_shape),
                         conv_channels=tuple(int(c) for c in args.channels.split(",")),
                         n_beams=n_beams)
    return E2EModel(cfg, seed=seed).astype(np.float32), dataclasses.asdict(cfg)


def cmd_train(args) -> dict:
    started = time.perf_counter()
    ds = _dataset(args.dataset)
    if not ds.split.train:
        raise CliError(EXIT_CONFIG, "dataset has no training sequences")
    overrides = {k: v for k, v in {"epochs": args.epochs, "lr": args.lr, "batch_size": args.batch_size,
                                   "decay_gamma": args.gamma, "decay_every_epochs": args.decay_every,
                                   "seed": args.seed}.items() if v is not None}
    tcfg = default_train_config(args.model, **overrides)
    model, model_cfg = _build_model(args.model, args, ds.n_beams, tcfg.seed)
    frame_ids = [f for s in ds.split.train for f in s.frame_ids]
    t_obs = _parse_t_obs(args.t_obs) if args.t_obs else None
    if args.model == "txid":
        _, states = _features(ds, frame_ids)
        data = TxIdTrainingSet(ds.split.train, states, ds.radar, build_codebook(ds.array, ds.n_beams))
    else:
        maps, _ = _features(ds, frame_ids, model.cfg.map_shape, with_states=False)
        data = E2ETrainingSet(ds.split.train, maps)
    result = train(model, data, tcfg, t_obs=t_obs)
    out = Path(args.out)
    with _locked(out):
        meta = {"kind": args.model, "model_config": model_cfg, "train_config": tcfg.to_dict(),
                "dtype": str(model.dtype)}
        nn.save_checkpoint(out, model.params, meta)
        curve_path = out / "loss_curve.csv"
        write_loss_curve(result.loss_curve, curve_path)
        artifacts = {"weights": out / "weights.bin", "checkpoint": out / "checkpoint.json",
                     "loss_curve": curve_path}
        config = {"model": args.model, "model_config": model_cfg, "train_config": tcfg.to_dict(),
                  "t_obs": t_obs or list(range(1, data.max_len + 1)), "dataset": str(args.dataset)}
        manifest = _write_manifest(out, "train", config, {"train": tcfg.seed}, artifacts,
                                   [args.dataset], started)
    return {"command": "train", "out": str(out), "final_loss": result.loss_curve[-1][2],
            "weights_sha256": hashlib.sha256((out / "weights.bin").read_bytes()).hexdigest(),
            "manifest": str(manifest)}


def _load_model(path: Path):
    if not (path / "checkpoint.json").is_file() or not (path / "weights.bin").is_file():
        raise CliError(EXIT_CONFIG, f"checkpoint not found: {path}")
    params, meta = nn.load_checkpoint(path)
    mc = dict(meta["model_config"])
    if meta["kind"] == "txid":
        model = TxIdModel(TxIdModelConfig(**mc))
    elif meta["kind"] == "e2e":
        mc["map_shape"] = tuple(mc["map_shape"])
        mc["conv_channels"] = tuple(mc["conv_channels"])
        mc["fc_hidden"] = tuple(mc["fc_hidden"])
        model = E2EModel(E2EModelConfig(**mc))
    else:
        raise CliError(EXIT_CONFIG, f"{path}: unknown model kind {meta['kind']!r}")
    model.params = params
    return meta["kind"], model


def cmd_eval(args) -> dict:
    started = time.perf_counter()
    t_obs = _parse_t_obs(args.t_obs)
    models = [_load_model(Path(p)) for p in args.models]
    ds = _dataset(args.dataset)
    test = ds.split.test
    if t_obs[-1] > ds.window:
        raise CliError(EXIT_CONFIG, f"--t-obs exceeds the window length {ds.window}")
    frame_ids = [f for s in test for f in s.frame_ids]
    rankers = {}
    if args.baseline == "hold":
        rankers["hold"] = hold_ranker(ds.n_beams)
    states = None
    maps_by_shape: dict = {}
    cb = build_codebook(ds.array, ds.n_beams)
    for kind, model in models:
        name = kind
        n = 2
        while name in rankers:
            name, n = f"{kind}_{n}", n + 1
        if kind == "txid":
            if states is None:
                _, states = _features(ds, frame_ids)
            rankers[name] = txid_ranker(model, TxIdTrainingSet(test, states, ds.radar, cb))
        else:
            shape = tuple(model.cfg.map_shape)
            if shape not in maps_by_shape:
                maps_by_shape[shape], _ = _features(ds, frame_ids, shape, with_states=False)
            rankers[name] = e2e_ranker(model, maps_by_shape[shape])
    if not rankers:
        raise CliError(EXIT_CONFIG, "nothing to evaluate: give --models and/or --baseline hold")
    report = accuracy_vs_To(test, rankers, t_obs, ds.n_beams, args.confusion_t_obs)
    out = Path(args.out)
    with _locked(out):
        paths = report.write(out)
        config = {"t_obs": t_obs, "baseline": args.baseline, "models": [str(p) for p in args.models],
                  "confusion_t_obs": report.confusion_t_obs, "dataset": str(args.dataset)}
        manifest = _write_manifest(out, "eval", config, {}, paths,
                                   [args.dataset, *args.models], started)
    return {"command": "eval", "out": str(out), "n_test": report.n_test,
            "manifest": str(manifest), **{k: str(v) for k, v in paths.items()}}


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radarbeam", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="INFO", help="stderr logging level (default INFO)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one scene: timeline, labelled frame cubes")
    p.add_argument("--scenario", required=True, help="scenario config JSON")
    p.add_argument("--radar", help="radar waveform config JSON (default: built-in defaults)")
    p.add_argument("--noise-var", type=float, help="override the radar noise variance")
    p.add_argument("--n-beams", type=int, default=64)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("make-dataset", help="window, filter and split simulated scenes")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="simulate output directories")
    p.add_argument("--out", required=True)
    p.add_argument("--filter-changing", action="store_true",
                   help="keep only windows whose beam changes")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--ratio", type=float, default=0.7, help="train share of the time split")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="train a txid or e2e model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=("txid", "e2e"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gamma", type=float, help="step-decay factor")
    p.add_argument("--decay-every", type=int, help="epochs between decays")
    p.add_argument("--seed", type=int)
    p.add_argument("--t-obs", help="training observation lengths, e.g. 1..10 (default: all)")
    p.add_argument("--map-shape", default="256x128", help="e2e input map size")
    p.add_argument("--channels", default="8,16,32,32,32", help="e2e conv channels")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="top-k accuracy vs T_o and confusion matrices")
    p.add_argument("--dataset", required=True)
    p.add_argument("--models", nargs="*", default=[], help="checkpoint directories")
    p.add_argument("--baseline", choices=("hold", "none"), default="hold")
    p.add_argument("--t-obs", default="1..10")
    p.add_argument("--confusion-t-obs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        result = args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (TrainingDivergedError, FloatingPointError) as exc:
        log.error("numeric error: %s", exc)
        return EXIT_NUMERIC
    except rbtk.FormatError as exc:
        log.error("bad input file: %s", exc)
        return EXIT_IO
    except (AliasingError, ValueError, KeyError, TypeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
