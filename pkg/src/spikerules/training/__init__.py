from .evaluator import Evaluator, RateRegularizer, firing_rate_regularizer
from .optimizers import Optimizer, OptimizerConfig, adam_step, apply_naive, sgd_step
from .trainer import Trainer, TrainingDiverged, evaluate_dataset, train
from .comparison import ComparisonRecord, compare_gradients, deviation_stats
from .uncertainty import entropy_split, uncertainty_report
