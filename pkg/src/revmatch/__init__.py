"""Paper-reviewer matching with structured profiles and committee scoring.

The pipeline profiles submissions and reviewer histories into three-dimension
expertise tags, shortlists candidates by fusing lexical and semantic
retrieval streams with reciprocal rank fusion, rescored by a multi-persona
rubric committee, and evaluates rankings with Soft/Hard precision-at-N.
"""

__version__ = "0.1.0"

from .config import RunConfig  # noqa: F401
from .corpus import Dataset, load_dataset, validate_dataset  # noqa: F401
from .pipeline import Pipeline, cmd_ablate, cmd_pipeline, cmd_profile  # noqa: F401
