"""Staged pipeline: configuration, artifacts and orchestration."""

from .artifacts import Workspace, header_lines, read_header
from .config import (
    DEFAULT_TRUTH,
    PipelineConfig,
    config_from_dict,
    dump_config,
    load_config,
    paper_scale,
    validate,
)
from .stages import STAGES, Pipeline, SimulationRunner, classify_failure, column_names, verify_synthetic

__all__ = [
    "DEFAULT_TRUTH", "PipelineConfig", "config_from_dict", "dump_config", "load_config", "paper_scale",
    "validate", "Workspace", "header_lines", "read_header", "STAGES", "Pipeline", "SimulationRunner",
    "classify_failure", "column_names", "verify_synthetic",
]
