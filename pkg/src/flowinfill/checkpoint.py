"""Self-describing binary checkpoint container.

Layout (all integers little-endian):

    magic.............8 bytes  b"FLOWCKPT"
    format_version....uint32
    header_len........uint32
    header............UTF-8 JSON: {"kind": str, "config": dict}
    n_tensors.........uint32
    per tensor:
        name_len......uint16, then UTF-8 name
        ndim..........uint8, then uint32 dims
        data..........row-major float32 values

The JSON header names the model kind and its full construction config, so a
checkpoint can be loaded without any out-of-band information.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

MAGIC = b"FLOWCKPT"
FORMAT_VERSION = 1


def write_checkpoint(path, kind: str, config: dict, tensors: dict[str, np.ndarray]) -> None:
    header = json.dumps({"kind": kind, "config": config}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ConfigError(f"truncated checkpoint while reading {what}")
    return data


def read_checkpoint(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC), "magic") != MAGIC:
            raise ConfigError(f"{path} is not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != FORMAT_VERSION:
            raise ConfigError(
                f"{path}: unsupported checkpoint format version {version}"
            )
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        try:
            header = json.loads(_read_exact(fh, header_len, "header"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: corrupt checkpoint header: {exc}") from None
        if "kind" not in header or "config" not in header:
            raise ConfigError(f"{path}: checkpoint header missing kind/config")
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dims"))
            count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            raw = _read_exact(fh, 4 * count, f"data of {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return header["kind"], header["config"], tensors


FIELD_MODEL_KIND = "field_model"
DURATION_MODEL_KIND = "duration_model"


def save_model(path, model) -> None:
    """Write a FieldModel or DurationModel with its config."""
    from .backbone import FieldModel
    from .duration import DurationModel

    if isinstance(model, FieldModel):
        kind = FIELD_MODEL_KIND
    elif isinstance(model, DurationModel):
        kind = DURATION_MODEL_KIND
    else:
        raise ConfigError(f"cannot checkpoint object of type {type(model).__name__}")
    tensors = {k: v.detach().numpy() for k, v in model.state_dict().items()}
    write_checkpoint(path, kind, model.config.to_dict(), tensors)


def load_model(path):
    """Reconstruct the model named in the checkpoint header."""
    import torch

    from .backbone import BackboneConfig, FieldModel
    from .duration import DurationConfig, DurationModel

    kind, config, tensors = read_checkpoint(path)
    if kind == FIELD_MODEL_KIND:
        model = FieldModel(BackboneConfig(**config))
    elif kind == DURATION_MODEL_KIND:
        model = DurationModel(DurationConfig(**config))
    else:
        raise ConfigError(f"{path}: unknown model kind {kind!r}")
    state = {k: torch.from_numpy(v) for k, v in tensors.items()}
    model.load_state_dict(state)
    model.eval()
    return model
