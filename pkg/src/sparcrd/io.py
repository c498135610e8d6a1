"""Reading and writing source blocks and JSON documents."""

import json
from pathlib import Path

import numpy as np

from ._validation import DomainError


def read_source(path, n=None):
    """Load a source block from ``.csv`` (one sample per line) or raw little-endian float64."""
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
        try:
            S = np.array([float(ln) for ln in lines])
        except ValueError as exc:
            raise DomainError(f"{path}: {exc}") from exc
    else:
        raw = path.read_bytes()
        if len(raw) % 8:
            raise DomainError(f"{path}: size {len(raw)} is not a multiple of 8 bytes")
        S = np.frombuffer(raw, dtype="<f8").astype(float)
    if n is not None and S.shape[0] != n:
        raise DomainError(f"{path}: expected {n} samples, found {S.shape[0]}")
    if not np.all(np.isfinite(S)):
        raise DomainError(f"{path}: non-finite samples")
    return S


def write_source(path, S):
    path = Path(path)
    S = np.asarray(S, dtype=float)
    if path.suffix.lower() in (".csv", ".txt"):
        path.write_text("".join(repr(float(x)) + "\n" for x in S))
    else:
        path.write_bytes(S.astype("<f8").tobytes())


def gaussian_source(n, sigma2, seed):
    """``n`` i.i.d. N(0, sigma2) samples from ``numpy.random.default_rng(seed)``."""
    return np.sqrt(sigma2) * np.random.default_rng(seed).standard_normal(n)


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: {exc}") from exc


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
