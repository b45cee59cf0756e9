"""Experiment configuration: YAML in, validated and normalized dict out.

``check_config`` never raises on bad content; it returns the normalized
config (``None`` when unusable) plus a list of ``"field: message"`` problems.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .data.sequences import IMAGE_MODES
from .data.synthetic import TASKS
from .encoding import KINDS as ENCODER_KINDS
from .rules import RULE_NAMES
from .training.evaluator import LOSSES, METRICS, READOUTS
from .training.optimizers import KINDS as OPTIMIZER_KINDS

MODES = ("train", "compare", "sample", "encode")
MODEL_KINDS = ("recurrent", "mlp")
DATASETS = TASKS + ("mnist", "delimited")
FLAT_DATASETS = ("gaussian_blobs",)

# which model kinds each rule can drive
RULE_MODELS = {
    "bptt": {"recurrent", "mlp"},
    "eprop_symmetric": {"recurrent"},
    "eprop_random": {"recurrent"},
    "eprop_adaptive": {"recurrent"},
    "manhattan": {"recurrent", "mlp"},
    "manhattan_constrained": {"recurrent", "mlp"},
}

DEFAULTS = {
    "model": {"kind": "recurrent", "cell": "alif", "n_rec": 32, "hidden": [64, 32],
              "hidden_activation": "relu", "alpha": None, "rho": None, "beta": None,
              "kappa": None, "v_th": 1.0, "gamma": 0.3, "dt": 1e-3},
    "dataset": {"name": None, "params": {}, "path": None, "T": None, "D": None,
                "n_train": None, "n_test": None, "input": "threshold_crossing",
                "steps": None, "test_fraction": 0.5, "encoder": None},
    "evaluator": {"loss": "categorical_crossentropy", "readout": "mean",
                  "metrics": ["accuracy"], "regularizer": None},
    "optimizer": {"kind": "adam", "lr": 1e-3},
    "sampler": {"steps": 1000, "burn_in": 200, "keep_every": 10, "sigma0": 0.01,
                "target_accept": 0.574, "adapt_rate": 0.5, "adapt_decay": 0.5,
                "prior_std": 1.0, "temperature": 1.0, "pretrain_epochs": 0},
    "encoder": {"kind": "SF", "factor": 1.0, "threshold": 0.1, "window": 3, "rails": True},
}
TOP_LEVEL = {"mode", "seed", "output_dir", "model", "dataset", "evaluator", "rule", "rules",
             "optimizer", "epochs", "batch_size", "steps", "sampler", "encoder"}


def load_config(path) -> dict:
    """Parse a YAML (or JSON) file into a mapping. Raises ``ValueError`` on bad syntax."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return raw


def _merge(section: str, raw, problems) -> dict:
    out = dict(DEFAULTS[section])
    if raw is None:
        return out
    if not isinstance(raw, dict):
        problems.append(f"{section}: must be a mapping")
        return out
    for k, v in raw.items():
        if k not in out:
            problems.append(f"{section}.{k}: unknown field; valid fields: {', '.join(out)}")
        else:
            out[k] = v
    return out


def _choice(field, value, options, problems):
    if value not in options:
        problems.append(f"{field}: {value!r} is not valid; valid options: {', '.join(options)}")


def _number(field, value, problems, *, positive=False, minimum=None, integer=False,
            optional=False):
    if value is None and optional:
        return
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if not ok or isinstance(value, bool):
        problems.append(f"{field}: expected {'an integer' if integer else 'a number'}, got {value!r}")
        return
    if positive and not value > 0:
        problems.append(f"{field}: must be positive, got {value}")
    if minimum is not None and value < minimum:
        problems.append(f"{field}: must be at least {minimum}, got {value}")


def _rule(field, raw, problems) -> dict | None:
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict) or "name" not in raw:
        problems.append(f"{field}: expected a rule name or a mapping with 'name'")
        return None
    rule = dict(raw)
    _choice(f"{field}.name", rule["name"], RULE_NAMES, problems)
    allowed = {"name", "seed", "delta", "g_min", "g_max"}
    for k in rule:
        if k not in allowed:
            problems.append(f"{field}.{k}: unknown field; valid fields: {', '.join(sorted(allowed))}")
    if "delta" in rule:
        _number(f"{field}.delta", rule["delta"], problems, positive=True)
    if rule["name"] == "manhattan_constrained":
        rule.setdefault("g_min", -1.0)
        rule.setdefault("g_max", 1.0)
    if ("g_min" in rule) != ("g_max" in rule):
        problems.append(f"{field}: g_min and g_max must be given together")
    elif "g_min" in rule:
        _number(f"{field}.g_min", rule["g_min"], problems)
        _number(f"{field}.g_max", rule["g_max"], problems)
        if (isinstance(rule["g_min"], (int, float)) and isinstance(rule["g_max"], (int, float))
                and not rule["g_min"] < rule["g_max"]):
            problems.append(f"{field}: need g_min < g_max")
        if rule["name"] not in ("manhattan", "manhattan_constrained"):
            problems.append(f"{field}: conductance bounds apply only to manhattan rules")
    return rule


def check_config(raw: dict) -> tuple[dict | None, list[str]]:
    problems: list[str] = []
    for k in raw:
        if k not in TOP_LEVEL:
            problems.append(f"{k}: unknown field; valid fields: {', '.join(sorted(TOP_LEVEL))}")
    cfg: dict = {}

    mode = raw.get("mode")
    if mode is None:
        problems.append("mode: required")
    else:
        _choice("mode", mode, MODES, problems)
    cfg["mode"] = mode
    if "seed" not in raw:
        problems.append("seed: required")
    else:
        _number("seed", raw["seed"], problems, integer=True, minimum=0)
    cfg["seed"] = raw.get("seed", 0)
    cfg["output_dir"] = raw.get("output_dir")

    model = cfg["model"] = _merge("model", raw.get("model"), problems)
    _choice("model.kind", model["kind"], MODEL_KINDS, problems)
    if model["kind"] == "recurrent":
        _choice("model.cell", model["cell"], ("lif", "alif"), problems)
        _number("model.n_rec", model["n_rec"], problems, integer=True, minimum=1)
        for k in ("alpha", "rho", "kappa"):
            _number(f"model.{k}", model[k], problems, optional=True)
            low_ok = (lambda v: v >= 0) if k == "kappa" else (lambda v: v > 0)
            if isinstance(model[k], (int, float)) and not (low_ok(model[k]) and model[k] < 1):
                interval = "[0, 1)" if k == "kappa" else "(0, 1)"
                problems.append(f"model.{k}: must lie in {interval}, got {model[k]}")
        _number("model.beta", model["beta"], problems, optional=True, minimum=0)
        _number("model.v_th", model["v_th"], problems, positive=True)
        _number("model.gamma", model["gamma"], problems, positive=True)
        _number("model.dt", model["dt"], problems, positive=True)
    elif model["kind"] == "mlp":
        if not isinstance(model["hidden"], list) or not all(
                isinstance(h, int) and h > 0 for h in model["hidden"]):
            problems.append(f"model.hidden: expected a list of positive integers, got {model['hidden']!r}")
        _choice("model.hidden_activation", model["hidden_activation"],
                ("relu", "sigmoid", "tanh", "linear"), problems)

    ds = cfg["dataset"] = _merge("dataset", raw.get("dataset"), problems)
    if ds["name"] is None:
        problems.append("dataset.name: required")
    else:
        _choice("dataset.name", ds["name"], DATASETS, problems)
    if not isinstance(ds["params"], dict):
        problems.append("dataset.params: must be a mapping")
    if ds["name"] in ("mnist", "delimited") and not ds["path"]:
        problems.append(f"dataset.path: required for {ds['name']}")
    if ds["name"] == "delimited":
        for k in ("T", "D"):
            _number(f"dataset.{k}", ds[k], problems, integer=True, minimum=1)
    if ds["name"] == "mnist" and model["kind"] == "recurrent":
        _choice("dataset.input", ds["input"], IMAGE_MODES, problems)
    for k in ("n_train", "n_test", "steps"):
        _number(f"dataset.{k}", ds[k], problems, integer=True, minimum=1, optional=True)
    _number("dataset.test_fraction", ds["test_fraction"], problems)
    if isinstance(ds["test_fraction"], (int, float)) and not 0 < ds["test_fraction"] < 1:
        problems.append(f"dataset.test_fraction: must lie in (0, 1), got {ds['test_fraction']}")
    if ds["encoder"] is not None:
        ds["encoder"] = _encoder("dataset.encoder", ds["encoder"], problems)
    flat = ds["name"] in FLAT_DATASETS or (ds["name"] == "mnist" and model["kind"] == "mlp")
    if model["kind"] == "recurrent" and ds["name"] in FLAT_DATASETS:
        problems.append(f"dataset.name: {ds['name']} gives flat vectors; a recurrent model needs sequences")
    if ds["encoder"] is not None and flat:
        problems.append("dataset.encoder: spike encoding needs sequence data")

    ev = cfg["evaluator"] = _merge("evaluator", raw.get("evaluator"), problems)
    _choice("evaluator.loss", ev["loss"], tuple(LOSSES), problems)
    _choice("evaluator.readout", ev["readout"], READOUTS, problems)
    if not isinstance(ev["metrics"], list):
        problems.append("evaluator.metrics: expected a list")
    else:
        for m in ev["metrics"]:
            _choice("evaluator.metrics", m, METRICS, problems)
    reg = ev["regularizer"]
    if reg is not None:
        if not isinstance(reg, dict):
            problems.append("evaluator.regularizer: must be a mapping with target_hz and coef")
        else:
            reg = ev["regularizer"] = {"target_hz": 10.0, "coef": 1e-4, **reg}
            for k in reg:
                if k not in ("target_hz", "coef"):
                    problems.append(f"evaluator.regularizer.{k}: unknown field; valid fields: coef, target_hz")
            _number("evaluator.regularizer.target_hz", reg["target_hz"], problems, minimum=0)
            _number("evaluator.regularizer.coef", reg["coef"], problems, minimum=0)
    if model["kind"] == "mlp":
        if reg is not None:
            problems.append("evaluator.regularizer: firing-rate regularization needs a recurrent model")
        if isinstance(ev["metrics"], list) and "firing_rate" in ev["metrics"]:
            problems.append("evaluator.metrics: firing_rate needs a recurrent model")

    opt = cfg["optimizer"] = _merge("optimizer", raw.get("optimizer"), problems)
    _choice("optimizer.kind", opt["kind"], OPTIMIZER_KINDS, problems)
    _number("optimizer.lr", opt["lr"], problems, minimum=0)

    cfg["epochs"] = raw.get("epochs", 1)
    cfg["batch_size"] = raw.get("batch_size", 32)
    cfg["steps"] = raw.get("steps", 20)
    _number("epochs", cfg["epochs"], problems, integer=True, minimum=0)
    _number("batch_size", cfg["batch_size"], problems, integer=True, minimum=1)
    _number("steps", cfg["steps"], problems, integer=True, minimum=1)

    rules = []
    if mode == "compare":
        if "rules" not in raw:
            problems.append("rules: required for mode compare (primary rule first)")
        elif not isinstance(raw["rules"], list) or len(raw["rules"]) < 2:
            problems.append("rules: expected a list of at least two rules")
        else:
            rules = [_rule(f"rules[{i}]", r, problems) for i, r in enumerate(raw["rules"])]
        if "optimizer" not in raw:
            cfg["optimizer"] = {"kind": "naive", "lr": 1.0}
    elif mode in ("train", "sample"):
        if "rule" in raw:
            rules = [_rule("rule", raw["rule"], problems)]
        elif mode == "train":
            problems.append("rule: required for mode train")
    cfg["rules"] = [r for r in rules if r is not None]
    for i, r in enumerate(cfg["rules"]):
        name = r["name"]
        where = "rule" if mode != "compare" else f"rules[{i}]"
        if name in RULE_MODELS and model["kind"] in MODEL_KINDS and model["kind"] not in RULE_MODELS[name]:
            problems.append(f"{where}.name: {name} cannot train a {model['kind']} model "
                            f"(supported: {', '.join(sorted(RULE_MODELS[name]))})")

    sampler = cfg["sampler"] = _merge("sampler", raw.get("sampler"), problems)
    if mode == "sample":
        for k in ("steps", "keep_every"):
            _number(f"sampler.{k}", sampler[k], problems, integer=True, minimum=1)
        for k in ("burn_in", "pretrain_epochs"):
            _number(f"sampler.{k}", sampler[k], problems, integer=True, minimum=0)
        for k in ("sigma0", "prior_std"):
            _number(f"sampler.{k}", sampler[k], problems, positive=True)
        for k in ("adapt_rate", "adapt_decay", "temperature"):
            _number(f"sampler.{k}", sampler[k], problems, minimum=0)
        _number("sampler.target_accept", sampler["target_accept"], problems)
        if isinstance(sampler["target_accept"], (int, float)) and not 0 < sampler["target_accept"] < 1:
            problems.append("sampler.target_accept: must lie in (0, 1)")
        if (isinstance(sampler["pretrain_epochs"], int) and sampler["pretrain_epochs"] > 0
                and not cfg["rules"]):
            problems.append("rule: required when sampler.pretrain_epochs > 0")
        if (isinstance(sampler["steps"], int) and isinstance(sampler["burn_in"], int)
                and isinstance(sampler["keep_every"], int) and sampler["keep_every"] > 0
                and len(range(sampler["burn_in"], sampler["steps"], sampler["keep_every"])) < 2):
            problems.append("sampler: fewer than two samples would be kept "
                            "(check steps, burn_in and keep_every)")

    cfg["encoder"] = None
    if mode == "encode":
        cfg["encoder"] = _encoder("encoder", raw.get("encoder"), problems)
        if flat:
            problems.append(f"dataset.name: encode mode needs sequence data, {ds['name']} is flat")
    return (cfg if not problems else None), problems


def _encoder(field, raw, problems) -> dict:
    enc = dict(DEFAULTS["encoder"])
    if raw is None:
        return enc
    if not isinstance(raw, dict):
        problems.append(f"{field}: must be a mapping")
        return enc
    for k, v in raw.items():
        if k not in enc:
            problems.append(f"{field}.{k}: unknown field; valid fields: {', '.join(enc)}")
        else:
            enc[k] = v
    _choice(f"{field}.kind", enc["kind"], ENCODER_KINDS, problems)
    _number(f"{field}.factor", enc["factor"], problems, positive=True)
    _number(f"{field}.threshold", enc["threshold"], problems, positive=True)
    _number(f"{field}.window", enc["window"], problems, integer=True, minimum=1)
    return enc
