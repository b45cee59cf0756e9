"""Run several learning rules on synchronized clones and record their updates.

The primary model trains normally. Before every step each clone is
overwritten with the primary's parameters, each rule computes its update on
that identical state and batch, and the deltas are compared against a
reference rule (BPTT by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data.datasets import Dataset, batches
from .optimizers import Optimizer, OptimizerConfig
from .trainer import apply_deltas

ALL = "all"


@dataclass
class ComparisonRecord:
    step: int
    deltas: dict                      # rule label -> {param: delta}
    stats: list = field(default_factory=list)   # (rule, param, cosine, rel_l2, bias)


def deviation_stats(a: np.ndarray, ref: np.ndarray) -> tuple[float, float, float]:
    """Cosine similarity, relative L2 ``|a - ref| / |ref|`` and mean signed bias."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1)
    na, nr = np.linalg.norm(a), np.linalg.norm(ref)
    diff = a - ref
    nd = np.linalg.norm(diff)
    if na == 0 and nr == 0:
        cosine = 1.0
    elif na == 0 or nr == 0:
        cosine = 0.0
    else:
        cosine = float(a @ ref / (na * nr))
    if nr == 0:
        rel = 0.0 if nd == 0 else float("inf")
    else:
        rel = float(nd / nr)
    return cosine, rel, float(diff.mean())


def _labels(rules) -> list[str]:
    seen, out = {}, []
    for r in rules:
        n = seen.get(r.name, 0) + 1
        seen[r.name] = n
        out.append(r.name if n == 1 else f"{r.name}#{n}")
    return out


def compare_gradients(primary_rule, other_rules, evaluator, data: Dataset, steps: int,
                      optimizer_cfg: OptimizerConfig | None = None, *, batch_size: int = 32,
                      seed: int = 0, reference: str | None = None,
                      check_sync: bool = True) -> list[ComparisonRecord]:
    """Exactly one rule evaluation per rule per step (``1 + len(other_rules)``)."""
    if not other_rules:
        raise ValueError("compare_gradients needs at least one other rule")
    optimizer_cfg = optimizer_cfg or OptimizerConfig("naive")
    model = evaluator.model
    rules = [primary_rule, *other_rules]
    for r in rules:
        r.check(model)
    labels = _labels(rules)
    if reference is None:
        reference = "bptt" if "bptt" in labels else labels[0]
    if reference not in labels:
        raise ValueError(f"reference rule {reference!r} not among {labels}")

    clones = [model.clone() for _ in other_rules]
    evaluators = [evaluator] + [evaluator.with_model(c) for c in clones]
    optimizers = [Optimizer(optimizer_cfg) for _ in rules]
    keys = list(model.trainable)

    rng = np.random.default_rng(seed)
    records: list[ComparisonRecord] = []
    step = 0
    while step < steps:
        for batch in batches(data, batch_size, rng):
            if step >= steps:
                break
            for c in clones:
                c.set_params(model.params)
                if check_sync:
                    for k in keys:
                        assert np.array_equal(c.params[k], model.params[k]), f"clone out of sync: {k}"
            deltas = {}
            for label, rule, ev, opt in zip(labels, rules, evaluators, optimizers):
                deltas[label] = rule.update(ev, batch, opt)
            ref = deltas[reference]
            stats = []
            for label in labels:
                d = deltas[label]
                for k in keys:
                    stats.append((label, k, *deviation_stats(d[k], ref[k])))
                stats.append((label, ALL, *deviation_stats(
                    np.concatenate([d[k].reshape(-1) for k in keys]),
                    np.concatenate([ref[k].reshape(-1) for k in keys]))))
            records.append(ComparisonRecord(step, deltas, stats))
            apply_deltas(model, deltas[labels[0]])
            step += 1
    return records
