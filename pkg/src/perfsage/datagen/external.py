"""Line protocol for black-box variants.

The harness writes one line of space-separated decimal features to the
variant's stdin; the variant answers with one line holding its runtime in
seconds. A nonzero exit status or a reply that is not a positive finite
number is an error.
"""

from __future__ import annotations

import math
import subprocess
from typing import Sequence

from perfsage.errors import ExternalVariantError


def format_request(features: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in features) + "\n"


def parse_reply(text: str, variant_id: str = "?") -> float:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 1:
        raise ExternalVariantError(f"variant {variant_id!r} must reply with one line, got {len(lines)}")
    try:
        value = float(lines[0])
    except ValueError:
        raise ExternalVariantError(f"variant {variant_id!r} replied non-numeric {lines[0]!r}") from None
    if not math.isfinite(value) or value <= 0:
        raise ExternalVariantError(f"variant {variant_id!r} replied non-positive runtime {value!r}")
    return value


def query(command: Sequence[str], features: Sequence[float], variant_id: str = "?", timeout: float = 600.0) -> float:
    """Run one external measurement and return the runtime it reports."""
    try:
        proc = subprocess.run(
            list(command),
            input=format_request(features),
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except (OSError, subprocess.SubprocessError) as exc:
        raise ExternalVariantError(f"could not run variant {variant_id!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ExternalVariantError(
            f"variant {variant_id!r} exited with status {proc.returncode}: {proc.stderr.strip()[:200]}"
        )
    return parse_reply(proc.stdout, variant_id)
