"""Execute one candidate script and build its execution report."""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

RUNNER_ERROR_TYPE = "SandboxRunnerError"
KILL_GRACE_SECONDS = 1.0

# Runs inside the candidate's interpreter: executes the script as __main__,
# and on an unhandled exception serializes type/message/frames to a side
# channel before exiting nonzero. SystemExit passes through so the candidate
# keeps control of its own exit status.
_BOOTSTRAP = r"""
import json, runpy, sys, traceback

trace_path, script = sys.argv[1], sys.argv[2]
sys.argv = [script]
try:
    runpy.run_path(script, run_name="__main__")
except SystemExit as exc:
    code = exc.code
    if code is None:
        code = 0
    elif not isinstance(code, int):
        print(code, file=sys.stderr)
        code = 1
    sys.exit(code)
except BaseException as exc:
    frames = [
        {"file": fr.filename, "line": fr.lineno, "function": fr.name}
        for fr in traceback.extract_tb(exc.__traceback__)
    ]
    payload = {
        "exception_type": type(exc).__name__,
        "exception_message": str(exc),
        "traceback_frames": frames,
    }
    with open(trace_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    traceback.print_exc()
    sys.exit(1)
"""


@dataclass(frozen=True)
class RunnerRequest:
    script_path: Path
    workdir: Path
    timeout_seconds: float = 120.0
    stdout_tail_chars: int = 4000


def _report(success: bool, exit_status: int, exception_type: str = "",
            exception_message: str = "", traceback_frames: list | None = None,
            stdout_tail: str = "", wall_time_seconds: float = 0.0,
            timed_out: bool = False) -> dict:
    return {
        "success": success,
        "exit_status": exit_status,
        "exception_type": exception_type,
        "exception_message": exception_message,
        "traceback_frames": traceback_frames or [],
        "stdout_tail": stdout_tail,
        "wall_time_seconds": wall_time_seconds,
        "timed_out": timed_out,
    }


def _runner_error(message: str) -> dict:
    return _report(success=False, exit_status=-1, exception_type=RUNNER_ERROR_TYPE,
                   exception_message=message)


def _candidate_frames(frames: list[dict], script: Path) -> list[dict]:
    """Drop interpreter bootstrap frames: keep from the script's first frame on."""
    for i, frame in enumerate(frames):
        if frame.get("file") == str(script):
            return frames[i:]
    return [f for f in frames if "runpy" not in str(f.get("file", ""))]


def _kill_process_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
    except (ProcessLookupError, PermissionError):
        proc.kill()


def run_candidate(request: RunnerRequest) -> dict:
    """Run the candidate and return the report dict (never raises for candidate bugs)."""
    workdir = Path(request.workdir)
    if request.timeout_seconds <= 0:
        return _runner_error(f"timeout must be positive, got {request.timeout_seconds}")
    if not workdir.is_dir():
        return _runner_error(f"workdir does not exist: {workdir}")
    script = Path(request.script_path)
    if not script.is_absolute():
        script = workdir / script
    script = script.resolve()
    try:
        script.relative_to(workdir.resolve())
    except ValueError:
        return _runner_error(f"script {script} is outside the workdir")
    if not script.is_file():
        return _runner_error(f"candidate script not found: {script}")

    trace_fd, trace_path = tempfile.mkstemp(prefix="scimind-trace-", suffix=".json")
    os.close(trace_fd)
    os.unlink(trace_path)  # the bootstrap creates it only on an exception
    start = time.perf_counter()
    timed_out = False
    try:
        proc = subprocess.Popen(
            [sys.executable, "-c", _BOOTSTRAP, trace_path, str(script)],
            cwd=workdir,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            start_new_session=True,  # own process group, so the kill takes children too
        )
    except OSError as exc:
        return _runner_error(f"could not spawn the candidate interpreter: {exc}")
    try:
        stdout, _ = proc.communicate(timeout=request.timeout_seconds)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_process_group(proc)
        try:
            stdout, _ = proc.communicate(timeout=KILL_GRACE_SECONDS)
        except subprocess.TimeoutExpired:
            proc.kill()
            stdout, _ = proc.communicate()
    wall_time = time.perf_counter() - start

    exit_status = proc.returncode
    success = exit_status == 0 and not timed_out
    exception_type = ""
    exception_message = ""
    frames: list[dict] = []
    if not success and not timed_out and os.path.exists(trace_path):
        try:
            with open(trace_path, encoding="utf-8") as fh:
                payload = json.load(fh)
            exception_type = str(payload.get("exception_type", ""))
            exception_message = str(payload.get("exception_message", ""))
            frames = _candidate_frames(list(payload.get("traceback_frames", [])), script)
        except (OSError, ValueError):
            pass  # fall back to the bare exit status
    if os.path.exists(trace_path):
        os.unlink(trace_path)

    return _report(
        success=success,
        exit_status=exit_status,
        exception_type=exception_type,
        exception_message=exception_message,
        traceback_frames=frames,
        stdout_tail=(stdout or "")[-request.stdout_tail_chars:],
        wall_time_seconds=wall_time,
        timed_out=timed_out,
    )
