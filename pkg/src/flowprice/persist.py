"""Atomic file output and the raw-ensemble binary format."""

from __future__ import annotations

import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DomainError
from .grid import SampledPath, TimeGrid
from .sim import ParticleEnsemble

ENSEMBLE_ARRAYS = ("inventories", "cash", "controls", "noise")


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, frame: pd.DataFrame) -> Path:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, float_format="%.17g", lineterminator="\n")
    return atomic_write_text(path, buf.getvalue())


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_ensemble(path, ensemble: ParticleEnsemble) -> tuple[Path, Path]:
    """Raw paths as consecutive little-endian float64 blocks (row-major) plus a JSON sidecar."""
    path = Path(path)
    blocks, layout, offset = [], [], 0
    for name in ENSEMBLE_ARRAYS:
        arr = np.ascontiguousarray(getattr(ensemble, name), dtype="<f8")
        blocks.append(arr.tobytes(order="C"))
        layout.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    price = np.ascontiguousarray(ensemble.price.values, dtype="<f8")
    blocks.append(price.tobytes())
    layout.append({"name": "price", "shape": list(price.shape), "offset": offset})
    meta = {
        "dtype": "<f8",
        "order": "C",
        "arrays": layout,
        "grid": {"t0": ensemble.grid.t0, "dt": ensemble.grid.dt, "n_steps": ensemble.grid.n_steps},
        "sigma": ensemble.sigma,
        "kappa": ensemble.kappa,
    }
    atomic_write_bytes(path, b"".join(blocks))
    sidecar = path.with_suffix(path.suffix + ".json")
    write_json(sidecar, meta)
    return path, sidecar


def read_ensemble(path) -> ParticleEnsemble:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = path.read_bytes()
    arrays = {}
    for entry in meta["arrays"]:
        count = int(np.prod(entry["shape"]))
        end = entry["offset"] + 8 * count
        if end > len(raw):
            raise DomainError(f"ensemble file truncated while reading {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=entry["offset"]).reshape(entry["shape"]).copy()
    grid = TimeGrid(**meta["grid"])
    return ParticleEnsemble(grid, meta["sigma"], meta["kappa"], SampledPath(grid, arrays.pop("price")),
                            **{name: arrays[name] for name in ENSEMBLE_ARRAYS})
