"""File formats: event CSV, model files, trajectory/matrix CSV, manifests.

Event files are CSV with header ``t,u``, strictly increasing float t and
integer node u; the writer emits 17 significant digits so a write/parse
cycle is lossless for float64.  Model files are JSON with the fixed
schema d / mu / a / kernel.{family,beta,truncation}; parsing is strict
and unknown keys are rejected.  Only shared exponential kernels are
serializable (tabulated and per-edge kernels are in-memory test fixtures).
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from typing import Optional

import numpy as np

from .cusum import DetectionOutcome
from .models import EventStream, HawkesModel, KernelSpec

logger = logging.getLogger(__name__)

__all__ = [
    "parse_events",
    "write_events",
    "parse_model",
    "write_model",
    "parse_matrix",
    "write_matrix",
    "write_trajectory",
    "parse_trajectory",
    "write_manifest",
]

_TIE_SHIFT = 1e-9


def write_events(stream: EventStream, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("t,u\n")
        for t, u in zip(stream.times, stream.nodes):
            fh.write(f"{t:.17g},{u:d}\n")


def parse_events(
    path: str, d: Optional[int] = None, horizon: Optional[float] = None
) -> EventStream:
    """Read an event CSV.

    Duplicate timestamps are shifted forward by 1e-9 (with a warning);
    decreasing timestamps or malformed rows are errors reporting the line
    number.  d and horizon default to what the data implies.
    """
    times, nodes = [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,u":
            raise ValueError(f"{path}:1: expected header 't,u', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two fields, got {len(parts)}")
            try:
                t = float(parts[0])
                u = int(parts[1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {line!r}") from exc
            if not np.isfinite(t) or t < 0:
                raise ValueError(f"{path}:{lineno}: bad timestamp {parts[0]}")
            if u < 0:
                raise ValueError(f"{path}:{lineno}: negative node index")
            if times:
                if t < times[-1]:
                    raise ValueError(f"{path}:{lineno}: timestamps decrease")
                if t <= times[-1]:
                    t = times[-1] + _TIE_SHIFT
                    logger.warning(
                        "%s:%d: duplicate timestamp, shifted by %g", path, lineno, _TIE_SHIFT
                    )
            times.append(t)
            nodes.append(u)
    tarr = np.asarray(times, dtype=np.float64)
    narr = np.asarray(nodes, dtype=np.int64)
    if d is None:
        d = int(narr.max()) + 1 if narr.size else 1
    if horizon is None:
        horizon = float(tarr[-1]) if tarr.size else 0.0
    return EventStream(tarr, narr, d, horizon)


_MODEL_KEYS = {"d", "mu", "a", "kernel"}
_KERNEL_KEYS = {"family", "beta", "truncation"}


def write_model(model: HawkesModel, path: str) -> None:
    kern = model.shared_kernel
    if kern is None or kern.family != "exponential":
        raise ValueError("only shared exponential kernels are serializable")
    doc = {
        "d": model.d,
        "mu": [float(x) for x in model.mu],
        "a": [[float(x) for x in row] for row in model.A],
        "kernel": {
            "family": kern.family,
            "beta": float(kern.beta),
            "truncation": None if kern.truncation is None else float(kern.truncation),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def parse_model(path: str) -> HawkesModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid model JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: model file must be a JSON object")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    missing = _MODEL_KEYS - set(doc)
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    kdoc = doc["kernel"]
    if not isinstance(kdoc, dict):
        raise ValueError(f"{path}: kernel must be an object")
    kunknown = set(kdoc) - _KERNEL_KEYS
    if kunknown:
        raise ValueError(f"{path}: unknown kernel keys {sorted(kunknown)}")
    if kdoc.get("family") != "exponential":
        raise ValueError(f"{path}: unsupported kernel family {kdoc.get('family')!r}")
    kern = KernelSpec(
        family="exponential",
        beta=float(kdoc["beta"]),
        truncation=None if kdoc.get("truncation") is None else float(kdoc["truncation"]),
    )
    mu = np.asarray(doc["mu"], dtype=np.float64)
    a = np.asarray(doc["a"], dtype=np.float64)
    d = int(doc["d"])
    if mu.shape != (d,) or a.shape != (d, d):
        raise ValueError(f"{path}: mu/a shapes inconsistent with d={d}")
    return HawkesModel(mu=mu, A=a, kernel=kern)


def write_matrix(m: np.ndarray, path: str) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    with open(path, "w") as fh:
        for row in m:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def parse_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row") from exc
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.asarray(rows, dtype=np.float64)


def write_trajectory(outcome: DetectionOutcome, path: str) -> None:
    """Trajectory CSV with columns t,S,tau_hat."""
    with open(path, "w") as fh:
        fh.write("t,S,tau_hat\n")
        for (t, s), tau in zip(outcome.trajectory, outcome.tau_path):
            fh.write(f"{t:.17g},{s:.17g},{tau:.17g}\n")


def parse_trajectory(path: str) -> np.ndarray:
    """Read a trajectory CSV back as an (n, 3) array."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,S,tau_hat":
            raise ValueError(f"{path}:1: expected header 't,S,tau_hat'")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected three fields")
            rows.append([float(x) for x in parts])
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def config_hash(config: dict) -> str:
    """Stable hash of a JSON-serializable configuration mapping."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_manifest(path: str, seed: int, config: dict) -> None:
    """Machine-readable run manifest: seed, config hash, library versions."""
    import scipy

    from . import __version__

    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    doc = {
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "versions": {
            "hawkscan": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba_version,
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=str)
        fh.write("\n")
