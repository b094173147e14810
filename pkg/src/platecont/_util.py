"""Small shared helpers: canonical JSON, config hashing, SPD guards."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def canonical_json(obj) -> str:
    """Serialize deterministically: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_spd(a, name="matrix", sym_tol=1e-10):
    """Return the symmetrized matrix, raising if it is not SPD."""
    m = as_matrix(a, name)
    if np.max(np.abs(m - m.T)) > sym_tol * (1.0 + np.max(np.abs(m))):
        raise ValueError(f"{name} is not symmetric")
    m = 0.5 * (m + m.T)
    evals = np.linalg.eigvalsh(m)
    if evals[0] <= 0.0:
        raise ValueError(f"{name} is not positive definite (min eigenvalue {evals[0]:.3e})")
    return m


def spd_sqrt(a):
    """Symmetric square root of an SPD matrix via eigendecomposition."""
    m = check_spd(a, "matrix for square root")
    evals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(evals)) @ vecs.T


def jsonable(obj):
    """Recursively convert numpy containers to plain Python for JSON output."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
