from ..training.evaluator import firing_rate_regularizer
from .base import GradientSet, IncompatibleModel, LearningRule
from .bptt import BPTT, bptt_gradients
from .eprop import (
    BroadcastMatrix,
    Eprop,
    TraceState,
    eprop_gradients,
    eprop_reference,
    eprop_trace_step,
)
from .mala import (
    GaussianTarget,
    MalaConfig,
    MalaState,
    ModelPosterior,
    WeightSample,
    init_state,
    mala_step,
    posterior_predict,
    run_chain,
)
from .manhattan import Manhattan, ManhattanConfig, manhattan_update


def make_rule(name: str, **kw) -> LearningRule:
    """Build a rule from its config name."""
    if name == "bptt":
        return BPTT()
    if name.startswith("eprop"):
        mode = name.split("_", 1)[1] if "_" in name else kw.get("mode", "symmetric")
        return Eprop(mode, seed=kw.get("seed", 0))
    if name in ("manhattan", "manhattan_constrained"):
        cfg = ManhattanConfig(kw.get("delta", 0.001), kw.get("g_min"), kw.get("g_max"))
        return Manhattan(cfg)
    raise ValueError(f"unknown rule {name!r}; expected one of {list(RULE_NAMES)}")


RULE_NAMES = ("bptt", "eprop_symmetric", "eprop_random", "eprop_adaptive", "manhattan",
              "manhattan_constrained")
