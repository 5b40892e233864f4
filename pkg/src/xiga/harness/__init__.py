"""Study configuration, runner, reports and command line."""

from .config import StudyConfig, apply_override, dump_yaml, from_dict, load_yaml, to_dict, validate
from .report import emit_report
from .studies import STUDIES, StepRecord, StudyReport, build_forest, make_config, run_study

__all__ = ["StudyConfig", "apply_override", "dump_yaml", "from_dict", "load_yaml", "to_dict", "validate",
           "emit_report", "STUDIES", "StepRecord", "StudyReport", "build_forest", "make_config", "run_study"]
