"""Command-line experiment runner.

    spikerules run <config.yaml> [--output-dir DIR] [--seed N]
    spikerules validate <config.yaml>
    spikerules fetch-mnist <dir>

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
``SPIKERULES_OUTPUT_DIR`` overrides the config's ``output_dir``; the
``--output-dir`` flag overrides both.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import check_config, load_config
from .data import Dataset, image_to_sequence, load_delimited_sequences, load_mnist, synthetic_tasks
from .data.idx import fetch_mnist
from .encoding import EncoderConfig, encode, decode_sf, encode_sequences, sparsity
from .neurons import MLP, RecurrentSNN
from .numerics import PseudoDerivative
from .rules import make_rule
from .rules.mala import MalaConfig, ModelPosterior, run_chain
from .training import (
    Evaluator,
    Optimizer,
    OptimizerConfig,
    RateRegularizer,
    TrainingDiverged,
    compare_gradients,
    entropy_split,
    evaluate_dataset,
    train,
    uncertainty_report,
)

log = logging.getLogger("spikerules")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
OUTPUT_ENV = "SPIKERULES_OUTPUT_DIR"

HISTORY_FIELDS = ("epoch", "loss", "accuracy", "firing_rate")
COMPARISON_FIELDS = ("step", "rule", "param", "cosine", "rel_l2", "bias")
SAMPLES_FIELDS = ("step", "log_post", "accepted")
UNCERTAINTY_FIELDS = ("example_id", "correct", "entropy", "std")
ENCODING_FIELDS = ("example_id", "channel", "spikes", "sparsity", "delta_density",
                   "reconstruction_error")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class CsvSink:
    """Header-first CSV that flushes every row, so partial runs leave usable files."""

    def __init__(self, path: Path, fields):
        self.fields = tuple(fields)
        self._f = open(path, "w", newline="")
        self._w = csv.writer(self._f, lineterminator="\n")
        self._w.writerow(self.fields)
        self._f.flush()

    def row(self, values: dict):
        self._w.writerow([_fmt(values.get(k)) for k in self.fields])
        self._f.flush()

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- assembly -------------------------------------------------------------------

def load_data(cfg: dict) -> tuple[Dataset, Dataset]:
    ds, seed = cfg["dataset"], cfg["seed"]
    name = ds["name"]
    if name == "mnist":
        train_set, test_set = load_mnist(ds["path"], ds["n_train"], ds["n_test"])
        if cfg["model"]["kind"] == "recurrent":
            conv = lambda d: Dataset(image_to_sequence(d.inputs, ds["input"], ds["steps"]),  # noqa: E731
                                     d.labels, d.class_count)
            train_set, test_set = conv(train_set), conv(test_set)
    else:
        if name == "delimited":
            full = load_delimited_sequences(ds["path"], ds["T"], ds["D"])
        else:
            full = synthetic_tasks(name, seed, **ds["params"])
        test_set, train_set = full.split(ds["test_fraction"], seed)
    if ds["encoder"] is not None:
        enc = ds["encoder"]
        ecfg = EncoderConfig(enc["kind"], enc["factor"], enc["threshold"], enc["window"])
        train_set, test_set = (Dataset(encode_sequences(d.inputs, ecfg, enc["rails"]), d.labels,
                                       d.class_count) for d in (train_set, test_set))
    if cfg["model"]["kind"] == "mlp" and train_set.inputs.ndim == 3:
        flat = lambda d: Dataset(d.inputs.reshape(len(d), -1), d.labels, d.class_count)  # noqa: E731
        train_set, test_set = flat(train_set), flat(test_set)
    return train_set, test_set


def build_model(cfg: dict, n_in: int, n_out: int):
    m, seed = cfg["model"], cfg["seed"]
    if m["kind"] == "mlp":
        return MLP([n_in, *m["hidden"], n_out], seed=seed, hidden_activation=m["hidden_activation"])
    kw = {k: m[k] for k in ("alpha", "rho", "beta", "kappa") if m[k] is not None}
    return RecurrentSNN(n_in, m["n_rec"], n_out, m["cell"], seed=seed, v_th=m["v_th"],
                        pseudo=PseudoDerivative(m["gamma"]), dt=m["dt"], **kw)


def build_evaluator(cfg: dict, model) -> Evaluator:
    e = cfg["evaluator"]
    reg = None
    if e["regularizer"] is not None:
        reg = RateRegularizer(e["regularizer"]["target_hz"], e["regularizer"]["coef"],
                              cfg["model"]["dt"])
    return Evaluator(model, e["loss"], tuple(e["metrics"]), e["readout"], reg)


def build_rule(spec: dict, seed: int):
    kw = {k: v for k, v in spec.items() if k != "name"}
    kw.setdefault("seed", seed)
    return make_rule(spec["name"], **kw)


def build_optimizer(cfg: dict) -> Optimizer:
    o = cfg["optimizer"]
    return Optimizer(OptimizerConfig(o["kind"], o["lr"]))


# -- modes ------------------------------------------------------------------------

def _history_row(row):
    return {k: row.get(k) for k in HISTORY_FIELDS}


def _run_training(cfg, ev, train_set, out: Path, epochs: int, rule_spec) -> list[dict]:
    rule = build_rule(rule_spec, cfg["seed"])
    with CsvSink(out / "history.csv", HISTORY_FIELDS) as sink:
        return train(ev, rule, train_set, epochs, build_optimizer(cfg),
                     batch_size=cfg["batch_size"], seed=cfg["seed"],
                     on_epoch=lambda r: sink.row(_history_row(r)))


def mode_train(cfg, out: Path) -> dict:
    train_set, test_set = load_data(cfg)
    model = build_model(cfg, train_set.inputs.shape[-1], train_set.class_count)
    ev = build_evaluator(cfg, model)
    history = _run_training(cfg, ev, train_set, out, cfg["epochs"], cfg["rules"][0])
    test_loss, test_metrics = evaluate_dataset(ev, test_set)
    return {"final_train": history[-1] if history else {},
            "test": {"loss": test_loss, **test_metrics}}


def mode_compare(cfg, out: Path) -> dict:
    train_set, _ = load_data(cfg)
    model = build_model(cfg, train_set.inputs.shape[-1], train_set.class_count)
    ev = build_evaluator(cfg, model)
    rules = [build_rule(spec, cfg["seed"] + i) for i, spec in enumerate(cfg["rules"])]
    o = cfg["optimizer"]
    records = compare_gradients(rules[0], rules[1:], ev, train_set, cfg["steps"],
                                OptimizerConfig(o["kind"], o["lr"]),
                                batch_size=cfg["batch_size"], seed=cfg["seed"])
    medians: dict = {}
    with CsvSink(out / "comparison.csv", COMPARISON_FIELDS) as sink:
        for rec in records:
            for rule, param, cos, rel, bias in rec.stats:
                sink.row({"step": rec.step, "rule": rule, "param": param, "cosine": cos,
                          "rel_l2": rel, "bias": bias})
                medians.setdefault(rule, {}).setdefault(param, []).append(cos)
    return {"steps": len(records),
            "median_cosine": {r: {p: float(np.median(v)) for p, v in ps.items()}
                              for r, ps in medians.items()}}


def mode_sample(cfg, out: Path) -> dict:
    train_set, test_set = load_data(cfg)
    model = build_model(cfg, train_set.inputs.shape[-1], train_set.class_count)
    ev = build_evaluator(cfg, model)
    s = cfg["sampler"]
    summary = {}
    if s["pretrain_epochs"] > 0:
        history = _run_training(cfg, ev, train_set, out, s["pretrain_epochs"], cfg["rules"][0])
        summary["pretrain"] = history[-1]
    mcfg = MalaConfig(s["sigma0"], s["target_accept"], s["adapt_rate"], s["adapt_decay"],
                      s["prior_std"], s["temperature"])
    post = ModelPosterior(ev, (train_set.inputs, train_set.labels), mcfg)
    rng = np.random.default_rng(cfg["seed"])
    kept, records, state = run_chain(post, post.flatten(model.params), s["steps"], mcfg, rng,
                                     keep_every=s["keep_every"], burn_in=s["burn_in"])
    with CsvSink(out / "samples.csv", SAMPLES_FIELDS) as sink:
        for step, lp, acc, _, _ in records:
            sink.row({"step": step, "log_post": lp, "accepted": acc})
    rows = uncertainty_report(kept, ev, test_set.inputs, test_set.labels)
    with CsvSink(out / "uncertainty.csv", UNCERTAINTY_FIELDS) as sink:
        for r in rows:
            sink.row(dict(zip(UNCERTAINTY_FIELDS, r)))
    med_ok, med_bad = entropy_split(rows)
    post_burn = [r[2] for r in records[s["burn_in"]:]]
    summary.update({
        "samples_kept": len(kept),
        "acceptance_rate": float(np.mean(post_burn)) if post_burn else float("nan"),
        "final_sigma": state.sigma,
        "posterior_accuracy": float(np.mean([r[1] for r in rows])),
        "median_entropy_correct": med_ok,
        "median_entropy_incorrect": med_bad,
    })
    return summary


def mode_encode(cfg, out: Path) -> dict:
    train_set, _ = load_data(cfg)
    e = cfg["encoder"]
    ecfg = EncoderConfig(e["kind"], e["factor"], e["threshold"], e["window"])
    spars, dens = [], []
    with CsvSink(out / "encoding.csv", ENCODING_FIELDS) as sink:
        for i, sample in enumerate(train_set.inputs):
            for ch in range(sample.shape[1]):
                sig = sample[:, ch]
                tr = encode(sig, ecfg)
                delta = float(np.count_nonzero(np.diff(sig)) / len(sig))
                err = float(np.abs(decode_sf(tr) - sig).max()) if e["kind"] == "SF" else None
                sp = sparsity(tr)
                spars.append(sp)
                dens.append(delta)
                sink.row({"example_id": i, "channel": ch, "spikes": int(np.count_nonzero(tr.values)),
                          "sparsity": sp, "delta_density": delta, "reconstruction_error": err})
    return {"mean_sparsity": float(np.mean(spars)), "mean_delta_density": float(np.mean(dens))}


MODES = {"train": mode_train, "compare": mode_compare, "sample": mode_sample,
         "encode": mode_encode}


# -- commands -------------------------------------------------------------------

def validate(config_path) -> list[str]:
    """Problems found in the config file (empty when valid). Never raises."""
    try:
        raw = load_config(config_path)
    except (OSError, ValueError) as exc:
        return [f"config: {exc}"]
    return check_config(raw)[1]


def resolve_output_dir(cfg: dict, flag: str | None, config_path) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV])
    if cfg.get("output_dir"):
        p = Path(cfg["output_dir"])
        return p if p.is_absolute() else Path(config_path).parent / p
    return Path("spikerules-out")


def _write_summary(out: Path, payload: dict):
    (out / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def run(config_path, output_dir: str | None = None, seed: int | None = None) -> int:
    try:
        raw = load_config(config_path)
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if seed is not None:
        raw = dict(raw, seed=seed)
    cfg, problems = check_config(raw)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    path = cfg["dataset"]["path"]
    if path and not Path(path).is_absolute():
        # data paths are relative to the config file, like output_dir
        cfg["dataset"]["path"] = str(Path(config_path).parent / path)
    out = resolve_output_dir(cfg, output_dir, config_path)
    out.mkdir(parents=True, exist_ok=True)
    echo = copy.deepcopy(raw)
    try:
        result = MODES[cfg["mode"]](cfg, out)
    except TrainingDiverged as exc:
        _write_summary(out, {"status": "diverged", "error": str(exc), "mode": cfg["mode"],
                             "config": echo})
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, ArithmeticError) as exc:
        _write_summary(out, {"status": "failed", "error": f"{type(exc).__name__}: {exc}",
                             "mode": cfg["mode"], "config": echo})
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write_summary(out, {"status": "ok", "mode": cfg["mode"], "results": result,
                         "config": echo, "version": __version__})
    log.info("wrote outputs to %s (kernels: %s)", out, kernels.BACKEND)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spikerules", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir")
    p_run.add_argument("--seed", type=int)
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    p_fetch = sub.add_parser("fetch-mnist", help="download MNIST and verify checksums")
    p_fetch.add_argument("dir")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "run":
        return run(args.config, args.output_dir, args.seed)
    if args.command == "validate":
        problems = validate(args.config)
        for p in problems:
            print(p)
        if not problems:
            print("ok")
        return EXIT_CONFIG if problems else EXIT_OK
    try:
        for path in fetch_mnist(args.dir):
            print(path)
    except (OSError, ValueError) as exc:
        print(f"fetch failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
