"""
Runtime configuration: budgets, probe depths and output options
"""
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, asdict, replace
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

# Path of an optional JSON config file
CONFIG_ENV_VAR = "HOG_CONFIG"

# Stratified reduction and derivation expansion recurse along term spines
RECURSION_LIMIT = 20_000


def raise_recursion_limit(limit: int = RECURSION_LIMIT):
    """Raise the interpreter recursion limit to at least limit"""
    sys.setrecursionlimit(max(sys.getrecursionlimit(), limit))


@dataclass(frozen=True)
class Config:
    fuel: int = 1_000_000
    max_tree_size: int = 10_000
    enum_steps: int = 50_000
    probe_depth: int = 4
    prefix: int = 4
    output_format: str = "text"
    seed: int = 0
    candidate_cap: int = 20
    pump_tree_cap: int = 512
    period_budget: int = 12
    refinement_cap: int = 10_000
    intersection_width: int = 6
    saturation_bits: int = 64
    direction_budget: int = 4096
    database_url: str = os.environ.get("DATABASE_URL", "sqlite:///pump_runs.db")

    def __post_init__(self):
        self._verify()

    def _verify(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, int) and not isinstance(value, bool) and value <= 0:
                if f.name == "seed" and value == 0:
                    continue
                raise ValueError(f"Config field '{f.name}' must be positive, got {value}")
        if self.output_format not in ("text", "structured"):
            raise ValueError(f"Unknown output format: {self.output_format}")

    def override(self, **changes: Any) -> "Config":
        """Return a copy with the non-None entries of changes applied"""
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, path: Optional[str] = None) -> "Config":
        """
        Load configuration from a JSON file.

        Args:
            path: Explicit file path. Falls back to the HOG_CONFIG environment
                variable, then to built-in defaults.

        Returns:
            Validated Config instance

        Raises:
            ValueError: If the file contains unknown keys or non-positive budgets
        """
        path = path or os.environ.get(CONFIG_ENV_VAR)
        if not path:
            return cls()

        logger.info(f"Loading configuration from {path}")
        try:
            with open(path, "r") as handle:
                data = json.load(handle)
        except FileNotFoundError:
            logger.error(f"Config file not found at {path}")
            raise
        except json.JSONDecodeError as e:
            logger.error(f"Config file is not valid JSON: {e}")
            raise ValueError(f"Invalid config file {path}: {e}")

        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown config keys: {sorted(unknown)}")
        return cls(**data)
