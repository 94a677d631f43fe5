"""Subprocess-backed code execution with wall-clock and output limits."""

from __future__ import annotations

import os
import subprocess
import sys
import tempfile
from pathlib import Path

from ..errors import SandboxUnavailable
from .base import EXIT_ERROR, EXIT_OK, EXIT_TIMEOUT, CodeResult, ExecLimits

TRUNCATION_MARKER = "\n...[output truncated]"

# Only plain Python interpreters may be configured; anything else is refused.
_ALLOWED_BASENAMES = ("python", "python3")


def _interpreter_allowed(path: str) -> bool:
    base = Path(path).name
    return base in _ALLOWED_BASENAMES or base.startswith("python3.")


def _truncate(data: bytes, limit: int) -> str:
    text = data.decode("utf-8", errors="replace")
    if len(text.encode("utf-8")) <= limit:
        return text
    clipped = data[:limit].decode("utf-8", errors="replace")
    return clipped + TRUNCATION_MARKER


class SubprocessSandbox:
    """Runs snippets under an isolated interpreter in a throwaway directory.

    Isolation is best-effort: ``-I`` mode, empty environment, jailed working
    directory. Network denial is delegated to the container the pipeline
    runs in.
    """

    def __init__(self, interpreter: str = sys.executable):
        if not _interpreter_allowed(interpreter):
            raise SandboxUnavailable(f"interpreter {interpreter!r} is not on the allowlist")
        self.interpreter = interpreter

    def run(self, code: str, limits: ExecLimits) -> CodeResult:
        with tempfile.TemporaryDirectory(prefix="deepforge-sbx-") as workdir:
            try:
                proc = subprocess.run(
                    [self.interpreter, "-I", "-c", code],
                    cwd=workdir,
                    env={"PATH": os.defpath},
                    capture_output=True,
                    timeout=limits.wall_seconds,
                )
            except subprocess.TimeoutExpired as exc:
                return CodeResult(
                    stdout=_truncate(exc.stdout or b"", limits.output_bytes),
                    stderr=_truncate(exc.stderr or b"", limits.output_bytes),
                    exit=EXIT_TIMEOUT,
                )
            except OSError as exc:
                raise SandboxUnavailable(f"cannot launch interpreter: {exc}") from exc
        return CodeResult(
            stdout=_truncate(proc.stdout, limits.output_bytes),
            stderr=_truncate(proc.stderr, limits.output_bytes),
            exit=EXIT_OK if proc.returncode == 0 else EXIT_ERROR,
        )
