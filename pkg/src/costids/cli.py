"""Batch command-line driver: prepare | train | crossval | evaluate | sweep-alpha.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._seeding import stream
from .config import RunConfig
from .costs import CostMatrix, kdd_cost_matrix, load_cost_matrix
from .errors import ConfigError, CostIdsError, DataError
from .evaluation import (
    BootstrapConfig,
    alpha_grid,
    alpha_sweep,
    evaluation_reports,
    write_report_csv,
    write_report_json,
)
from .gmm import GmmClassifier, GmmHyperParams, train_gmm_classifier
from .kdd import (
    LabelMap,
    counts_summary,
    filter_novel_attacks,
    fit_encoder,
    load_dataset,
    parse_kdd_file,
    save_dataset,
    stratified_subsample,
    train_attack_names,
)
from .mlp import MlpClassifier, MlpHyperParams, train_mlp
from .selection import family as get_family
from .selection import staged_grid_search, write_cv_report

log = logging.getLogger("costids")

TEST_SETS = ("test1", "test2")
_HYPER_KEYS = {
    "mlp": {"learning_rate", "epochs", "hidden_units"},
    "linear": {"learning_rate", "epochs", "hidden_units"},
    "gmm": {"tol", "max_iter", "n_components", "var_floor"},
    "naive-bayes": {"tol", "max_iter", "n_components", "var_floor"},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class Run:
    """Shared state for one command invocation: config, output paths, manifest bookkeeping."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.inputs: dict = {}
        self.outputs: list = []
        self.started = time.time()

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def produced(self, path: Path) -> Path:
        self.outputs.append(str(path.relative_to(self.out)))
        return path

    def consumed(self, path, records=None) -> None:
        entry = {"sha256": sha256_file(path)}
        if records is not None:
            entry["records"] = int(records)
        self.inputs[str(path)] = entry

    @property
    def data_dir(self) -> Path:
        return self.out / "data"

    def write_manifest(self) -> Path:
        doc = {
            "command": self.command,
            "artifact": {"name": "costids", "version": __version__, "numpy": np.__version__},
            "config": self.cfg.to_dict(),
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "started_unix": self.started,
            "duration_s": time.time() - self.started,
        }
        target = self.path(f"manifest-{self.command}.json")
        atomic_write_text(target, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return target


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(OSError):
            lock.unlink()


# -- helpers ---------------------------------------------------------------

def _label_map(cfg):
    return LabelMap.from_file(cfg.label_map) if cfg.label_map else LabelMap.default()


def _cost_matrix(cfg) -> CostMatrix:
    if cfg.cost_matrix is None:
        return kdd_cost_matrix()
    return load_cost_matrix(cfg.cost_matrix, allow_nonstandard=cfg.allow_nonstandard_cost)


def _bootstrap(cfg) -> BootstrapConfig:
    return BootstrapConfig(int(cfg.bootstrap["resamples"]), float(cfg.bootstrap["confidence"]), cfg.seed)


def _train_raw(cfg, run: Run | None = None):
    cfg.require_files("train_file")
    raw = parse_kdd_file(cfg.train_file, _label_map(cfg))
    if run is not None:
        run.consumed(cfg.train_file, len(raw))
    full_names = train_attack_names(raw)
    if cfg.subsample:
        raw = raw.take(stratified_subsample(raw.labels, cfg.subsample, stream(cfg.seed, "subsample")))
    return raw, full_names


def resolve_hyperparameters(cfg: RunConfig) -> dict:
    """Family defaults, then a crossval winners file, then explicit config values."""
    fam = get_family(cfg.family)
    params = dict(fam.defaults)
    if cfg.hyperparameters_file:
        cfg.require_files("hyperparameters_file")
        with open(cfg.hyperparameters_file, encoding="utf-8") as fh:
            winners = json.load(fh)
        if winners.get("family") != cfg.family:
            raise ConfigError(f"{cfg.hyperparameters_file} holds {winners.get('family')!r} winners, not {cfg.family!r}")
        params.update(winners["hyperparameters"])
    params.update(cfg.hyperparameters)
    unknown = set(params) - _HYPER_KEYS[cfg.family]
    if unknown:
        raise ConfigError(f"unknown hyperparameters for {cfg.family}: {', '.join(sorted(unknown))}")
    if cfg.family == "linear":
        params["hidden_units"] = 0
    if cfg.family == "naive-bayes":
        params["n_components"] = 1
    return params


def build_model(family: str, ds, params: dict, seed: int):
    if family in ("mlp", "linear"):
        return train_mlp(ds, MlpHyperParams(**params, seed=seed))
    return train_gmm_classifier(ds, GmmHyperParams(**params, seed=seed))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    model_doc = doc["model"]
    if model_doc.get("format") == "costids-mlp":
        return doc["family"], MlpClassifier.from_dict(model_doc)
    if model_doc.get("format") == "costids-gmm":
        return doc["family"], GmmClassifier.from_dict(model_doc)
    raise DataError(f"{path}: unrecognised model document")


def _test_caches(run: Run):
    found = [(name, run.data_dir / f"{name}.npz") for name in TEST_SETS]
    found = [(n, p) for n, p in found if p.is_file()]
    if not found:
        raise ConfigError(f"no prepared test sets under {run.data_dir}; run 'prepare' with test_file set")
    return found


def _load_cache(run: Run, path):
    if not Path(path).is_file():
        raise ConfigError(f"missing prepared cache {path}; run 'prepare' first")
    enc, ds = load_dataset(path)
    run.consumed(path, len(ds))
    return enc, ds


def _model_path(run: Run) -> Path:
    return run.out / "model" / "model.json"


def _load_trained(run: Run):
    path = _model_path(run)
    if not path.is_file():
        raise ConfigError(f"no trained model at {path}; run 'train' first")
    run.consumed(path)
    return load_model(path)


# -- commands --------------------------------------------------------------

def cmd_prepare(run: Run) -> None:
    cfg = run.cfg
    raw_train, names = _train_raw(cfg, run)
    encoder = fit_encoder(raw_train)
    encoder_path = run.produced(run.path("data", "encoder.json"))
    encoder_path.write_text(json.dumps(encoder.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    save_dataset(run.produced(run.path("data", "train.npz")), encoder, encoder.dataset(raw_train, "train"))
    counts = {"train": counts_summary(raw_train.labels)}
    if cfg.test_file:
        cfg.require_files("test_file")
        raw_test = parse_kdd_file(cfg.test_file, _label_map(cfg))
        run.consumed(cfg.test_file, len(raw_test))
        sets = {"test1": raw_test, "test2": filter_novel_attacks(raw_test, names)}
        for name, raw in sets.items():
            save_dataset(run.produced(run.path("data", f"{name}.npz")), encoder, encoder.dataset(raw, name))
            counts[name] = counts_summary(raw.labels)
    run.produced(run.path("data", "counts.json")).write_text(json.dumps(counts, indent=2) + "\n", encoding="utf-8")
    with open(run.produced(run.path("data", "counts.csv")), "w", newline="", encoding="utf-8") as fh:
        cols = ["dataset", "Probe", "DoS", "R2L", "U2R", "Total Attacks", "Total Normal"]
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for name, row in counts.items():
            writer.writerow({"dataset": name, **row})
    for name, row in counts.items():
        log.info("%s: %s", name, row)


def cmd_train(run: Run) -> None:
    cfg = run.cfg
    _, ds = _load_cache(run, run.data_dir / "train.npz")
    params = resolve_hyperparameters(cfg)
    model = build_model(cfg.family, ds, params, cfg.seed)
    doc = {"family": cfg.family, "hyperparameters": params, "model": model.to_dict()}
    path = run.produced(run.path("model", "model.json"))
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")
    log.info("trained %s with %s", cfg.family, params)


def cmd_evaluate(run: Run) -> None:
    cfg = run.cfg
    family, model = _load_trained(run)
    cm = _cost_matrix(cfg)
    boot = _bootstrap(cfg)
    table = []
    for name, path in _test_caches(run):
        _, ds = _load_cache(run, path)
        if ds.dim != model.dim:
            raise ConfigError(f"model dimension {model.dim} does not match {name} dimension {ds.dim}")
        reports = evaluation_reports(model, ds, cm, boot)
        write_report_csv(run.produced(run.path("eval", f"{name}.csv")), reports)
        write_report_json(run.produced(run.path("eval", f"{name}.json")), reports)
        for r in reports:
            table.append({"dataset": name, "model": family, "mode": r.mode,
                          "low": r.ci_low, "mu": r.mu, "high": r.ci_high})
            log.info("%s %s: mu=%.4f [%.4f, %.4f] dr=%.4f fa=%.4f", name, r.mode, r.mu, r.ci_low, r.ci_high, r.dr, r.fa)
    with open(run.produced(run.path("eval", "table.csv")), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["dataset", "model", "mode", "low", "mu", "high"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)


def cmd_sweep_alpha(run: Run) -> None:
    cfg = run.cfg
    _, model = _load_trained(run)
    alphas = alpha_grid(cfg.alpha["min"], cfg.alpha["max"], cfg.alpha["step"])
    boot = _bootstrap(cfg)
    for name, path in _test_caches(run):
        _, ds = _load_cache(run, path)
        if ds.dim != model.dim:
            raise ConfigError(f"model dimension {model.dim} does not match {name} dimension {ds.dim}")
        reports = alpha_sweep(model, ds, alphas, boot, transpose=cfg.alpha_transpose)
        write_report_csv(run.produced(run.path("sweep", f"{name}_alpha.csv")), reports)
        write_report_json(run.produced(run.path("sweep", f"{name}_alpha.json")), reports)


def cmd_crossval(run: Run) -> None:
    cfg = run.cfg
    raw, _ = _train_raw(cfg, run)
    fam = get_family(cfg.family)
    result = staged_grid_search(raw, fam, k=int(cfg.cv["folds"]), seed=cfg.seed,
                                cm=_cost_matrix(cfg), score=cfg.cv["score"])
    write_cv_report(run.produced(run.path("cv", "cv_report.csv")),
                    run.produced(run.path("cv", "cv_summary.json")), result)
    winners = {"family": cfg.family, "hyperparameters": result.selected}
    run.produced(run.path("cv", "winners.json")).write_text(json.dumps(winners, indent=2, sort_keys=True) + "\n",
                                                             encoding="utf-8")
    log.info("winners: %s", result.selected)


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "crossval": cmd_crossval,
    "evaluate": cmd_evaluate,
    "sweep-alpha": cmd_sweep_alpha,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="costids", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir")
        p.add_argument("--family", choices=sorted(_HYPER_KEYS))
        p.add_argument("--alpha-min", type=float)
        p.add_argument("--alpha-max", type=float)
        p.add_argument("--alpha-step", type=float)
        p.add_argument("--subsample", type=int)
        p.add_argument("--allow-nonstandard-cost", action="store_true", default=None)
    return parser


def apply_overrides(cfg_doc: dict, args) -> dict:
    doc = dict(cfg_doc)
    for key in ("seed", "output_dir", "family", "subsample", "allow_nonstandard_cost"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    alpha = dict(doc.get("alpha", {}))
    for key in ("min", "max", "step"):
        value = getattr(args, f"alpha_{key}")
        if value is not None:
            alpha[key] = value
    if alpha:
        doc["alpha"] = alpha
    return doc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        cfg = RunConfig.from_dict(apply_overrides(doc, args))
        run = Run(args.command, cfg)
        with output_lock(run.out):
            COMMANDS[args.command](run)
            run.write_manifest()
    except CostIdsError as exc:
        print(f"costids {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"costids {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
