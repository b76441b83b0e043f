"""Checkpoint container.

A checkpoint is a zip archive::

    manifest.json        format version, model kind and config, training
                         config, iteration counter, parameter index, rng and
                         data-order state for exact resume
    params/<name>.npy    parameter values (numpy .npy, little-endian)
    buffers/<name>.npy   non-trained state (batch-norm running statistics)
    opt/<name>.m.npy     Adam first-moment accumulator
    opt/<name>.v.npy     Adam second-moment accumulator

Zip entries carry a fixed timestamp so identical state serializes to
identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from ..errors import DataIoError
from .tensor import Parameter

FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _write_npy(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.save(buf, arr)
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, buf.getvalue())


def save_checkpoint(path, *, kind: str, iteration: int, model_config: dict,
                    params: dict[str, Parameter], buffers: dict[str, np.ndarray],
                    train_config: dict | None = None,
                    train_state: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "iteration": int(iteration),
        "model_config": model_config,
        "train_config": train_config,
        "train_state": train_state,
        "params": [
            {"name": n, "shape": list(p.data.shape), "dtype": p.data.dtype.name,
             "step": int(p.step)}
            for n, p in sorted(params.items())
        ],
        "buffers": [
            {"name": n, "shape": list(b.shape), "dtype": b.dtype.name}
            for n, b in sorted(buffers.items())
        ],
    }
    with zipfile.ZipFile(path, "w") as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=_ZIP_DATE)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, json.dumps(manifest, sort_keys=True, indent=1))
        for name, p in sorted(params.items()):
            _write_npy(zf, f"params/{name}.npy", p.data)
            if p.m is not None:
                _write_npy(zf, f"opt/{name}.m.npy", p.m)
                _write_npy(zf, f"opt/{name}.v.npy", p.v)
        for name, b in sorted(buffers.items()):
            _write_npy(zf, f"buffers/{name}.npy", b)


def load_checkpoint(path) -> dict:
    """Returns a dict with manifest fields plus 'params', 'buffers' and
    'opt' array mappings."""
    path = Path(path)
    if not path.is_file():
        raise DataIoError(f"checkpoint {path} does not exist")
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            names = set(zf.namelist())

            def read(name):
                return np.load(io.BytesIO(zf.read(name)), allow_pickle=False)

            params = {e["name"]: read(f"params/{e['name']}.npy")
                      for e in manifest["params"]}
            buffers = {e["name"]: read(f"buffers/{e['name']}.npy")
                       for e in manifest.get("buffers", [])}
            opt = {}
            for e in manifest["params"]:
                mkey = f"opt/{e['name']}.m.npy"
                if mkey in names:
                    opt[e["name"]] = {"m": read(mkey),
                                      "v": read(f"opt/{e['name']}.v.npy"),
                                      "step": e.get("step", 0)}
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as e:
        raise DataIoError(f"unreadable checkpoint {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataIoError(
            f"checkpoint format {manifest.get('format_version')} not supported")
    manifest["params"] = params
    manifest["buffers"] = buffers
    manifest["opt"] = opt
    return manifest
