"""One-shot JSON-over-stdio subprocess calls shared by plugins and
measurement commands."""

from __future__ import annotations

import json
import os
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Mapping, Sequence

TIMEOUT_ENV = "PARETO_NAS_PLUGIN_TIMEOUT_MS"
DEFAULT_TIMEOUT_MS = 60000


class StdioCallError(RuntimeError):
    pass


def default_timeout_s() -> float:
    raw = os.environ.get(TIMEOUT_ENV)
    if not raw:
        return DEFAULT_TIMEOUT_MS / 1000.0
    try:
        return float(raw) / 1000.0
    except ValueError as exc:
        raise ValueError(f"{TIMEOUT_ENV} must be a number of milliseconds, got {raw!r}") from exc


@dataclass(frozen=True)
class Command:
    """An external executable spoken to over stdin/stdout."""

    argv: tuple[str, ...]
    timeout_s: float | None = None
    env: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def coerce(cls, value: "Command | str | Sequence[str]") -> "Command":
        if isinstance(value, Command):
            return value
        if isinstance(value, str):
            return cls(tuple(shlex.split(value)))
        return cls(tuple(value))

    def call(self, document: str, extra_env: Mapping[str, str] | None = None) -> dict:
        """Send one JSON line, read back exactly one JSON object."""
        timeout = self.timeout_s if self.timeout_s is not None else default_timeout_s()
        env = dict(os.environ)
        env.update(self.env)
        if extra_env:
            env.update(extra_env)
        try:
            proc = subprocess.run(
                list(self.argv),
                input=document + "\n",
                capture_output=True,
                text=True,
                timeout=timeout,
                env=env,
            )
        except subprocess.TimeoutExpired as exc:
            raise StdioCallError(f"{self.argv[0]} timed out after {timeout:g}s") from exc
        except OSError as exc:
            raise StdioCallError(f"cannot run {self.argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            raise StdioCallError(
                f"{self.argv[0]} exited with status {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != 1:
            raise StdioCallError(f"expected one JSON line on stdout, got {len(lines)}")
        try:
            obj = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise StdioCallError(f"malformed JSON from {self.argv[0]}: {exc}") from exc
        if not isinstance(obj, dict):
            raise StdioCallError("expected a JSON object")
        return obj
