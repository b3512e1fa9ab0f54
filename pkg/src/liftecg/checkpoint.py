"""Checkpoint persistence: JSON manifest + raw little-endian float32 blob.

The manifest records the format version, the model configuration, the
optimizer step counter and, for every parameter, the byte offsets of its
value and Adam moment buffers inside the adjacent blob file.  Loading
rebuilds the model from the stored configuration and rejects unknown
format versions, shape mismatches and truncated blobs.
"""

import json
from pathlib import Path

import numpy as np

from .model import ModelConfig, LiftingNetwork

FORMAT_VERSION = 1
_KINDS = ("value", "adam_m", "adam_v")


def _blob_path(manifest_path):
    p = Path(manifest_path)
    return p.with_suffix(".bin") if p.suffix == ".json" else Path(str(p) + ".bin")


def save_checkpoint(path, model, optimizer_step=0):
    """Write manifest JSON at `path` and the float32 blob next to it."""
    path = Path(path)
    blob = _blob_path(path)
    entries = []
    offset = 0
    arrays = []
    for p in model.params():
        for kind in _KINDS:
            arr = {"value": p.value, "adam_m": p.adam_m, "adam_v": p.adam_v}[kind]
            data = np.ascontiguousarray(arr, dtype="<f4")
            entries.append({
                "name": p.name,
                "kind": kind,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": data.nbytes,
            })
            arrays.append(data)
            offset += data.nbytes

    manifest = {
        "format_version": FORMAT_VERSION,
        "blob": blob.name,
        "model_config": model.config.to_dict(),
        "optimizer": {"step": int(optimizer_step)},
        "entries": entries,
    }
    with open(blob, "wb") as fh:
        for data in arrays:
            fh.write(data.tobytes())
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def load_checkpoint(path):
    """Rebuild (model, optimizer_step) from a checkpoint manifest."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version!r} "
                         f"(expected {FORMAT_VERSION})")

    config = ModelConfig.from_dict(manifest["model_config"])
    model = LiftingNetwork(config)

    blob = path.parent / manifest["blob"]
    if not blob.exists():
        raise FileNotFoundError(f"checkpoint blob not found: {blob}")
    raw = blob.read_bytes()

    seen = set()
    for entry in manifest["entries"]:
        name, kind = entry["name"], entry["kind"]
        if name not in model.registry.params:
            raise ValueError(f"checkpoint parameter {name!r} not present in model")
        param = model.registry.params[name]
        shape = tuple(entry["shape"])
        expected = {"value": param.value.shape,
                    "adam_m": param.adam_m.shape,
                    "adam_v": param.adam_v.shape}[kind]
        if shape != expected:
            raise ValueError(f"shape mismatch for {name}/{kind}: checkpoint "
                             f"{shape}, model {expected}")
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(raw):
            raise ValueError(f"checkpoint blob truncated at {name}/{kind}")
        arr = np.frombuffer(raw, dtype="<f4", count=nbytes // 4,
                            offset=start).reshape(shape)
        arr = arr.astype(config.np_dtype)
        if kind == "value":
            param.value = arr
        elif kind == "adam_m":
            param.adam_m = arr
        else:
            param.adam_v = arr
        seen.add((name, kind))

    missing = [(p.name, k) for p in model.params() for k in _KINDS
               if (p.name, k) not in seen]
    if missing:
        raise ValueError(f"checkpoint missing entries for {missing[:3]}"
                         f"{'...' if len(missing) > 3 else ''}")
    return model, manifest["optimizer"]["step"]
