"""Multi-period stochastic covering location: bounds, exact oracles and exports."""
from .instance import GeneratorConfig, Instance, generate, read_instance, validate, write_instance
from .model import FirstStageSolution, ModelVariant, SecondStageSolution, evaluate, evaluate_first_stage
from .lagrangian import HeuristicConfig, RunReport, run_heuristic
from .exact import solve_exact, value_of_modeling

__all__ = [
    "GeneratorConfig", "Instance", "generate", "read_instance", "validate", "write_instance",
    "FirstStageSolution", "ModelVariant", "SecondStageSolution", "evaluate", "evaluate_first_stage",
    "HeuristicConfig", "RunReport", "run_heuristic", "solve_exact", "value_of_modeling",
]
__version__ = "0.1.0"
