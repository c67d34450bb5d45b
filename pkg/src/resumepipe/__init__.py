"""Automated resume screening pipeline.

Stages: ingest a resume corpus, classify sentences and redact personal
information, grade and summarize each resume with a role-played agent,
rank and decide, then evaluate against gold data when available.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .runtime import RunReport, load_run, run_pipeline

__all__ = ["RunConfig", "RunReport", "load_config", "load_run", "run_pipeline",
           "__version__"]
