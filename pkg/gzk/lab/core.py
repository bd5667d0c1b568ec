from abc import ABC, abstractmethod
from typing import Any, Dict, Optional, Type

from pydantic import BaseModel, ValidationError
from rich.console import Console

from gzk.core.exceptions import ExperimentPreconditionError
from gzk.core.log import get_logger
from gzk.models.schemas import ExperimentVerdict

# Common console for experiments to use
console = Console()

logger = get_logger(__name__)


class LabExperiment(ABC):
    """
    Abstract base class for all lab experiments.
    Enforces a consistent interface for the CLI and the sweep driver.
    """

    name: str = ""
    category: str = "Uncategorized"
    params_model: Type[BaseModel] = BaseModel

    def build_params(self, overrides: Optional[Dict[str, Any]] = None) -> BaseModel:
        try:
            return self.params_model(**(overrides or {}))
        except ValidationError as e:
            raise ExperimentPreconditionError(
                f"Invalid parameters for experiment '{self.name}'",
                {"errors": e.errors(include_url=False)}
            )

    def check_preconditions(self, params: BaseModel) -> None:
        """Raise ExperimentPreconditionError before any expensive work."""

    @abstractmethod
    def run(self, params: BaseModel) -> ExperimentVerdict:
        """The main execution logic; returns the machine-readable verdict."""

    def execute(self, overrides: Optional[Dict[str, Any]] = None) -> ExperimentVerdict:
        params = self.build_params(overrides)
        self.check_preconditions(params)
        logger.info(f"running experiment '{self.name}' with {params.model_dump()}")
        return self.run(params)
