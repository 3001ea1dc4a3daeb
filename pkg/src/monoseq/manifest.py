"""Run manifests: every CLI run writes one next to its primary output.

Sorted key=value text.  The `argv` key holds the exact arguments of the run,
so a manifest alone is enough to replay it.  Manifests carry run metadata
(timings, skip counts) and are the one output not expected to be
byte-identical between repeated runs.
"""

from __future__ import annotations

import shlex


def manifest_path(primary_output: str) -> str:
    return primary_output + ".manifest"


def write_manifest(path: str, entries: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(entries):
            value = entries[key]
            if isinstance(value, float):
                value = repr(value)
            value = str(value)
            if "\n" in value:
                raise ValueError(f"manifest value for {key!r} contains a newline")
            f.write(f"{key}={value}\n")


def read_manifest(path: str) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f.read().splitlines():
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out


def replay_manifest(path: str) -> int:
    """Re-run the recorded subcommand with its recorded arguments."""
    from .cli import main

    entries = read_manifest(path)
    return main(shlex.split(entries["argv"]))
