"""Forward-in-time simulator of paired host genotypes, microbiota and
phenotypes over non-overlapping generations."""

__version__ = "0.1.0"

from .config import EnvEffectSpec, ScenarioConfig, load_config  # noqa: E402
from .io import BaseInputs, generate_synthetic_base, load_base_inputs  # noqa: E402
from .simulation import (prepare_base, advance_generation, run_simulation,  # noqa: E402
                         run_replicates)

__all__ = [
    "BaseInputs",
    "EnvEffectSpec",
    "ScenarioConfig",
    "advance_generation",
    "generate_synthetic_base",
    "load_base_inputs",
    "load_config",
    "prepare_base",
    "run_replicates",
    "run_simulation",
]
