"""Runs a catalog tool by materializing its bundle and invoking the wrapper CLI."""

from __future__ import annotations

import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Mapping

from .capsule import ROLE_FILENAMES, flag_for
from .catalog import Catalog
from .validator import _base_env, _execute

SecretResolver = Callable[[str], "str | None"]


def env_secret(secret_ref: str) -> str | None:
    """``env:NAME`` (or a bare ``NAME``) looks the secret up in the environment."""
    return os.environ.get(secret_ref.removeprefix("env:"))


def argv_for(arguments: Mapping[str, Any]) -> list[str]:
    argv: list[str] = []
    for name, value in sorted(arguments.items()):
        if isinstance(value, bool):
            argv.append(flag_for(name) if value else "--no-" + flag_for(name)[2:])
        elif value is not None:
            argv += [flag_for(name), str(value)]
    return argv


class BundleExecutor:
    """Executor for :meth:`Router.gate_call` backed by stored bundles.

    Mapped credentials are resolved through ``resolve_secret`` and exported
    under their contract alias; nothing else from the parent environment
    leaks into the child.
    """

    def __init__(
        self,
        catalog: Catalog,
        resolve_secret: SecretResolver = env_secret,
        timeout_ms: int = 60_000,
        capture_limit_bytes: int = 1 << 20,
    ) -> None:
        self.catalog = catalog
        self.resolve_secret = resolve_secret
        self.timeout_ms = timeout_ms
        self.capture_limit_bytes = capture_limit_bytes

    def __call__(self, tool_id: str, version: int, arguments: Mapping[str, Any]) -> tuple[int, str]:
        capsule = self.catalog.capsule(tool_id, version)
        refs = capsule.artifact_refs()
        workdir = tempfile.mkdtemp(prefix=f"call-{tool_id}-")
        try:
            for role, filename in ROLE_FILENAMES.items():
                if role in refs:
                    text = self.catalog.read_artifact(tool_id, role, version)
                    Path(workdir, filename).write_text(text, encoding="utf-8", newline="\n")
            if not Path(workdir, ROLE_FILENAMES["wrapper"]).exists():
                return 127, f"{tool_id} has no executable wrapper"
            env = _base_env(workdir)
            for alias, ref in capsule.governance.credential_mappings.items():
                secret = self.resolve_secret(ref)
                if secret is not None:
                    env[alias] = secret
            cmd = [sys.executable, ROLE_FILENAMES["wrapper"], *argv_for(arguments)]
            code, out = _execute(cmd, workdir, env, self.timeout_ms / 1000, self.capture_limit_bytes)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)
        text = out.decode("utf-8", errors="replace")
        return (124, text + "\n[timeout]") if code is None else (code, text)
