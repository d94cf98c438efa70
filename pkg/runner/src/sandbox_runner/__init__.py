"""Sandbox runner for candidate scripts.

Runs one script in a fresh interpreter with the workdir as its current
directory, enforces a wall-clock timeout by killing the whole process group,
and emits exactly one JSON execution report on stdout. A failing candidate
is a normal outcome (report with success=false); only a runner-internal
crash exits nonzero.
"""

from .runner import RUNNER_ERROR_TYPE, RunnerRequest, run_candidate

__version__ = "0.1.0"

__all__ = ["RUNNER_ERROR_TYPE", "RunnerRequest", "run_candidate", "__version__"]
