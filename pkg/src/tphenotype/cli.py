"""Command-line driver.

Subcommands::

    tphenotype gen       --generator synthetic --n 1200 --seed 7 --out data.jsonl
    tphenotype train     --config exp.ini --data data.jsonl --out run/
    tphenotype cluster   --checkpoint run/checkpoint.json --data data.jsonl --k 3 --out run/
    tphenotype eval      --clusters run/clusters.json --data data.jsonl --out run/
    tphenotype select-k  --config exp.ini --data data.jsonl --candidates 2,3,4,5
    tphenotype replay    run/manifest-train.json

Every run writes a manifest with the resolved configuration, its hash,
seeds, library versions, wall time and the SHA-256 of every output.
``replay`` reruns a manifest into a scratch directory and compares the
outputs byte for byte.

Exit codes are 0 on success, 1 on runtime failure and 2 on usage or
configuration errors. Output goes to ``--out``, else to the directory in
``TPHENOTYPE_OUT``, else to ``./tphenotype_out``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import platform
import shlex
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__, data, metrics
from . import pipeline as pl
from .clustering import ClusterConfig, Clustering, select_k
from .encoder import EncoderHyper
from .predictor import PredictorHyper, layout_signature
from .similarity import DEFAULT_STEPS

logger = logging.getLogger("tphenotype")

OUT_ENV = "TPHENOTYPE_OUT"
DEFAULT_OUT = "tphenotype_out"


class UsageError(Exception):
    """Bad arguments or configuration; exit status 2."""


# configuration ----------------------------------------------------------------


def _fields(cls) -> dict[str, object]:
    return {f.name: f.default for f in dataclasses.fields(cls)}


SECTIONS: dict[str, dict[str, object]] = {
    "data": {"generator": "", "path": "", "n": 1200, "seed": 0, "phi_rate": 0.3},
    "encoder": {"preset": "default", **_fields(EncoderHyper)},
    "predictor": _fields(PredictorHyper),
    "similarity": {"steps": DEFAULT_STEPS},
    "cluster": {**_fields(ClusterConfig), "candidates": "2,3,4,5"},
    "run": {"seeds": "0"},
}


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or (default is None and raw.strip().lower() != "none"):
            return float(raw)
        if default is None:
            return None
    except ValueError:
        raise UsageError(f"[{section}] {key}: cannot parse {raw!r}") from None
    return raw.strip()


def load_config(path: str | None, overrides=()) -> dict[str, dict]:
    """Resolved configuration from defaults, an optional INI file, then ``section.key=value`` overrides.

    Unknown sections and keys are rejected.
    """
    cfg = {s: dict(keys) for s, keys in SECTIONS.items()}
    entries: list[tuple[str, str, str]] = []
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        for section in parser.sections():
            entries += [(section, k, v) for k, v in parser.items(section)]
    for item in overrides:
        name, sep, value = item.partition("=")
        section, dot, key = name.partition(".")
        if not sep or not dot:
            raise UsageError(f"override {item!r} is not section.key=value")
        entries.append((section.strip(), key.strip(), value))
    for section, key, value in entries:
        if section not in SECTIONS:
            raise UsageError(f"unknown config section [{section}]")
        if key not in SECTIONS[section]:
            raise UsageError(f"unknown key {key!r} in [{section}]")
        cfg[section][key] = _coerce(section, key, value, SECTIONS[section][key])
    validate(cfg)
    return cfg


def _int_list(text: str, what: str) -> list[int]:
    try:
        out = [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None
    if not out:
        raise UsageError(f"{what} is empty")
    return out


def validate(cfg: dict) -> None:
    try:
        encoder_hyper(cfg)
        PredictorHyper(**cfg["predictor"])
        cluster_config(cfg)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None
    if cfg["similarity"]["steps"] < 2:
        raise UsageError("[similarity] steps must be >= 2")
    _int_list(cfg["run"]["seeds"], "[run] seeds")
    if min(_int_list(cfg["cluster"]["candidates"], "[cluster] candidates")) < 2:
        raise UsageError("[cluster] candidates must be >= 2")


def encoder_hyper(cfg: dict) -> EncoderHyper:
    enc = dict(cfg["encoder"])
    preset = enc.pop("preset")
    base = _fields(EncoderHyper)
    # explicit values win over the preset
    changed = {k: v for k, v in enc.items() if v != base[k]}
    return pl.preset_hyper(preset, **changed)


def cluster_config(cfg: dict, K: int | None = None) -> ClusterConfig:
    c = {k: v for k, v in cfg["cluster"].items() if k != "candidates"}
    if K is not None:
        c["K"] = K
    return ClusterConfig(**c)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# artifacts ---------------------------------------------------------------------


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "tphenotype": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


def write_manifest(out_dir: Path, command: str, argv: list[str], cfg: dict | None, seeds, outputs, wall: float) -> Path:
    doc = {
        "command": command,
        "argv": argv,
        "config": cfg,
        "config_hash": None if cfg is None else config_hash(cfg),
        "seeds": list(seeds),
        "versions": _versions(),
        "wall_time_s": wall,
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    return _write_json(out_dir / f"manifest-{command}.json", doc)


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(path: str) -> data.Dataset:
    if not Path(path).is_file():
        raise UsageError(f"data file not found: {path}")
    return data.load_dataset(path)


def _dataset(args, cfg: dict) -> tuple[data.Dataset, str]:
    """Dataset from ``--data``, else from the [data] section (file path or generator)."""
    if args.data:
        return _load_data(args.data), args.data
    d = cfg["data"]
    if d["path"]:
        return _load_data(d["path"]), d["path"]
    if d["generator"] not in data.GENERATORS:
        raise UsageError("give --data, or [data] path or generator in the config")
    ds = data.GENERATORS[d["generator"]](d["n"], seed=d["seed"], phi_rate=d["phi_rate"])
    path = args.out_dir / "data.jsonl"
    data.save_dataset(ds, path)
    return ds, str(path)


def _splits(ds: data.Dataset, seed: int):
    return data.split(ds, seed=seed)


def _load_checkpoint(path) -> tuple[dict, pl.Models]:
    doc = _read_json(path)
    try:
        return doc, pl.models_from_dict(doc["models"])
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{path} is not a checkpoint: missing {exc}") from None


def _check_compatible(models: pl.Models, ds: data.Dataset, ckpt_path, data_path) -> None:
    enc = models.encoder
    if ds.dim_x != enc.dim_x or tuple(ds.statics) != enc.statics:
        raise ValueError(
            f"checkpoint {ckpt_path} expects dim_x={enc.dim_x}, statics={list(enc.statics)}; "
            f"data {data_path} has dim_x={ds.dim_x}, statics={list(ds.statics)}"
        )
    if layout_signature(enc.layout) != tuple(models.predictor.layout):
        raise ValueError(f"checkpoint {ckpt_path} encoder layout does not match its predictor layout")


# plots -------------------------------------------------------------------------


def plot_trajectories(ds: data.Dataset, labels: np.ndarray, path: Path, per_cluster: int = 25) -> Path:
    """Per-cluster trajectory panels, one row per cluster and one column per feature."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "tphenotype"
    ks = np.unique(labels)
    fig, axes = plt.subplots(len(ks), ds.dim_x, figsize=(3.2 * ds.dim_x, 2.2 * len(ks)), squeeze=False)
    for r, k in enumerate(ks):
        members = np.flatnonzero(labels == k)
        for f in range(ds.dim_x):
            ax = axes[r, f]
            for i in members[:per_cluster]:
                s = ds.series[i]
                ax.plot(s.t, s.x[:, f], lw=0.6, alpha=0.6, color=f"C{int(k) % 10}")
            ax.set_title(f"cluster {int(k)} (n={members.size}), x{f + 1}", fontsize=8)
            ax.tick_params(labelsize=6)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# subcommands -------------------------------------------------------------------


def cmd_gen(args) -> list[Path]:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    gen = data.GENERATORS[args.generator]
    kw = {} if args.phi_rate is None else {"phi_rate": args.phi_rate}
    ds = gen(args.n, seed=args.seed, **kw)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_dataset(ds, out)
    print(f"wrote {len(ds)} records to {out}")
    return [out]


def cmd_train(args, cfg) -> list[Path]:
    ds, data_path = _dataset(args, cfg)
    seed = _int_list(cfg["run"]["seeds"], "seeds")[0]
    train, val, _ = _splits(ds, seed)
    models = pl.fit_models(train, val, encoder_hyper(cfg), PredictorHyper(**cfg["predictor"]), seed)
    out = args.out_dir
    doc = {
        "models": pl.models_to_dict(models),
        "config": cfg,
        "split_seed": seed,
        "data": str(Path(data_path).resolve()),
        "data_sha256": _sha256(data_path),
    }
    path = _write_json(out / "checkpoint.json", doc)
    print(f"wrote checkpoint {path}")
    return [path]


def cmd_cluster(args) -> list[Path]:
    ckpt, models = _load_checkpoint(args.checkpoint)
    ds = _load_data(args.data)
    _check_compatible(models, ds, args.checkpoint, args.data)
    if _sha256(args.data) != ckpt["data_sha256"]:
        raise ValueError(f"data {args.data} is not the training data of checkpoint {args.checkpoint}")
    cfg = ckpt["config"]
    seed = int(ckpt["split_seed"])
    train = _splits(ds, seed)[0]
    fit = pl.cluster_train(models, train, cluster_config(cfg, args.k), cfg["similarity"]["steps"], seed)
    doc = {
        "clustering": fit.clustering.to_dict(),
        "checkpoint": str(Path(args.checkpoint).resolve()),
        "checkpoint_sha256": _sha256(args.checkpoint),
        "steps": fit.info["steps"],
    }
    path = _write_json(args.out_dir / "clusters.json", doc)
    print(f"K={fit.clustering.K} delta={fit.clustering.delta!r} J={fit.clustering.J!r} "
          f"flagged={len(fit.clustering.flagged)}; wrote {path}")
    return [path]


def _training_split(ckpt: dict) -> data.Dataset:
    path = ckpt["data"]
    if not Path(path).is_file() or _sha256(path) != ckpt["data_sha256"]:
        raise ValueError(f"training data {path} of the checkpoint is missing or changed")
    return _splits(data.load_dataset(path), int(ckpt["split_seed"]))[0]


def _fit_from_clusters(doc: dict, ds: data.Dataset, data_path) -> tuple[pl.Fit, dict]:
    ckpt_path = doc["checkpoint"]
    if _sha256(ckpt_path) != doc["checkpoint_sha256"]:
        raise ValueError(f"checkpoint {ckpt_path} changed since clustering")
    ckpt, models = _load_checkpoint(ckpt_path)
    _check_compatible(models, ds, ckpt_path, data_path)
    train = _training_split(ckpt)
    Z = models.encoder.latents(train.series)
    clustering = Clustering.from_dict(doc["clustering"])
    if clustering.assignments.size != len(train):
        raise ValueError(f"clusters cover {clustering.assignments.size} samples, training split has {len(train)}")
    fit = pl.Fit(models, clustering, models.predictor.probs(Z), Z, {"steps": doc["steps"]})
    return fit, ckpt


def cmd_eval(args) -> list[Path]:
    doc = _read_json(args.clusters)
    ds = _load_data(args.data)
    fit, ckpt = _fit_from_clusters(doc, ds, args.data)
    # the held-out split of the training file, or every sample of another file
    test = _splits(ds, int(ckpt["split_seed"]))[2] if _sha256(args.data) == ckpt["data_sha256"] else ds
    report = pl.evaluate(fit, test, args.ausil_m)
    labels, _, _, _ = pl.assign(fit, test)
    out = args.out_dir
    paths = [_write_json(out / "report.json", report)]
    (out / "report.csv").write_text(metrics.report_csv(report), encoding="utf-8")
    (out / "report.txt").write_text(metrics.report_text(report), encoding="utf-8")
    paths += [out / "report.csv", out / "report.txt"]
    paths.append(plot_trajectories(test, labels, out / "trajectories.svg"))
    sys.stdout.write(metrics.report_text(report))
    return paths


def cmd_select_k(args, cfg) -> list[Path]:
    ds, _ = _dataset(args, cfg)
    candidates = _int_list(args.candidates or cfg["cluster"]["candidates"], "--candidates")
    if min(candidates) < 2:
        raise UsageError("candidate K must be >= 2")
    seeds = _int_list(cfg["run"]["seeds"], "seeds")
    scores = {}
    if len(set(candidates)) > 1:
        scores = pl.hprc_by_k(ds, sorted(set(candidates)), encoder_hyper(cfg), PredictorHyper(**cfg["predictor"]),
                              seeds, cfg["similarity"]["steps"], cluster_config(cfg))
    best, table = select_k(candidates, lambda k: scores[k])
    for k, v in sorted(table.items()):
        print(f"K={k} h_prc={v:.4f}")
    print(f"selected K={best}")
    path = _write_json(args.out_dir / "select_k.json", {"K": best, "table": {str(k): v for k, v in table.items()},
                                                         "folds": {str(k): v for k, v in scores.items()}})
    return [path]


def cmd_replay(args) -> int:
    man = _read_json(args.manifest)
    argv = list(man["argv"])
    with tempfile.TemporaryDirectory(prefix="tphenotype-replay-") as tmp:
        target = Path(args.out) if args.out else Path(tmp)
        if "--out" in argv:
            i = argv.index("--out")
            old = Path(argv[i + 1])
            # gen writes a file, the others a directory
            argv[i + 1] = str(target / old.name) if man["command"] == "gen" else str(target)
        else:
            argv += ["--out", str(target)]
        status = main(argv)
        if status != 0:
            return status
        bad = [name for name, digest in man["outputs"].items()
               if not (target / name).is_file() or _sha256(target / name) != digest]
        for name in sorted(man["outputs"]):
            print(f"{'MISMATCH' if name in bad else 'ok'} {name}")
    return 1 if bad else 0


# entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tphenotype", description="Temporal phenotype discovery.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a benchmark dataset")
    g.add_argument("--generator", choices=sorted(data.GENERATORS), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--phi-rate", type=float, default=None, help="rate of the exponential delay")
    g.add_argument("--out", required=True, help="dataset file (JSON lines)")

    def with_config(sp):
        sp.add_argument("--config", help="INI file with [data] [encoder] [predictor] [similarity] [cluster] [run]")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
        sp.add_argument("--seed", type=int, help="shorthand for --set run.seeds=SEED")

    t = sub.add_parser("train", help="fit encoders and predictor")
    with_config(t)
    t.add_argument("--data", help="dataset file (default from the [data] section)")
    t.add_argument("--out")

    c = sub.add_parser("cluster", help="discover clusters on the training split")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--k", type=int, help="number of clusters (default from the checkpoint config)")
    c.add_argument("--out")

    e = sub.add_parser("eval", help="assign held-out samples and report metrics")
    e.add_argument("--clusters", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--ausil-m", type=int, default=None, help="largest m of the AUSIL curve")
    e.add_argument("--out")

    s = sub.add_parser("select-k", help="choose K by validation H_PRC")
    with_config(s)
    s.add_argument("--data", help="dataset file (default from the [data] section)")
    s.add_argument("--candidates", help="comma-separated K values, e.g. 2,3,4,5")
    s.add_argument("--out")

    r = sub.add_parser("replay", help="rerun a manifest and compare outputs byte for byte")
    r.add_argument("manifest")
    r.add_argument("--out", help="directory for the rerun (default: a temporary one)")
    return p


def _absolute(argv: list[str]) -> list[str]:
    # file arguments are stored absolute so a manifest can be replayed from anywhere
    out = list(argv)
    for i, tok in enumerate(out[:-1]):
        if tok in ("--config", "--data", "--checkpoint", "--clusters", "--out"):
            out[i + 1] = str(Path(out[i + 1]).resolve())
    return out


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    start = time.perf_counter()
    try:
        if args.command == "replay":
            return cmd_replay(args)
        cfg = None
        if args.command in ("train", "select-k"):
            overrides = list(args.set) + ([f"run.seeds={args.seed}"] if args.seed is not None else [])
            cfg = load_config(args.config, overrides)
        if args.command == "gen":
            outputs = cmd_gen(args)
            out_dir, seeds = Path(args.out).parent, [args.seed]
        else:
            args.out_dir = _out_dir(args.out)
            out_dir = args.out_dir
            if args.command == "train":
                outputs = cmd_train(args, cfg)
            elif args.command == "cluster":
                outputs = cmd_cluster(args)
            elif args.command == "eval":
                outputs = cmd_eval(args)
            else:
                outputs = cmd_select_k(args, cfg)
            seeds = _int_list(cfg["run"]["seeds"], "seeds") if cfg else []
        full = _absolute(argv)
        if args.command != "gen" and "--out" not in full:
            full += ["--out", str(out_dir.resolve())]
        man = write_manifest(out_dir, args.command, full, cfg, seeds, outputs, time.perf_counter() - start)
        logger.info("manifest %s (%s)", man, shlex.join(full))
        return 0
    except UsageError as exc:
        print(f"tphenotype: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"tphenotype: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
