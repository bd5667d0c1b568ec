import importlib
import pkgutil
from typing import Dict, List, Type

from gzk.core.exceptions import ParameterError
from gzk.core.log import get_logger
from gzk.lab.core import LabExperiment

logger = get_logger(__name__)


class ExperimentRegistry:
    """
    Registry for lab experiments, keyed by experiment name.
    Populated by the @register_experiment decorator when scenario modules import.
    """
    _experiments: Dict[str, Type[LabExperiment]] = {}

    @classmethod
    def register(cls, experiment_cls: Type[LabExperiment]):
        name = experiment_cls.name
        if not name:
            raise ParameterError(f"Experiment {experiment_cls.__name__} has no name")
        cls._experiments[name] = experiment_cls

    @classmethod
    def scan(cls):
        """Import every module of gzk.lab.scenarios so their decorators run."""
        package = importlib.import_module("gzk.lab.scenarios")
        for _, module_name, _ in pkgutil.walk_packages(package.__path__, package.__name__ + "."):
            try:
                importlib.import_module(module_name)
            except ImportError as e:
                logger.warning(f"Failed to import scenario module {module_name}: {e}")

    @classmethod
    def names(cls) -> List[str]:
        if not cls._experiments:
            cls.scan()
        return sorted(cls._experiments)

    @classmethod
    def get(cls, name: str) -> LabExperiment:
        if not cls._experiments:
            cls.scan()
        if name not in cls._experiments:
            raise ParameterError(f"Unknown experiment '{name}'", {"known": sorted(cls._experiments)})
        return cls._experiments[name]()

    @classmethod
    def by_category(cls) -> Dict[str, List[str]]:
        if not cls._experiments:
            cls.scan()
        out: Dict[str, List[str]] = {}
        for name, exp in sorted(cls._experiments.items()):
            out.setdefault(exp.category, []).append(name)
        return out


# Decorator
def register_experiment(cls):
    """Decorator to register a LabExperiment."""
    ExperimentRegistry.register(cls)
    return cls
