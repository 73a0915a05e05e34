"""Binary checkpoint container shared by all networks.

Layout (all integers little-endian):
    bytes 0..7    magic b"ADRCKPT1"
    u32           format version (1)
    u32           metadata byte length, then that many UTF-8 bytes of
                  key=value lines (configuration + catalog sizes)
    u32           tensor count
    per tensor:   u16 name length, name bytes, u8 rank, rank x u64 dims,
                  float64 little-endian row-major data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"ADRCKPT1"
VERSION = 1


def write_container(path: str | Path, meta: dict[str, str],
                    tensors: dict[str, np.ndarray]) -> None:
    meta_bytes = "".join(f"{k}={v}\n" for k, v in sorted(meta.items())).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            name_b = name.encode("utf-8")
            shape = np.asarray(arr).shape  # before any 0-d promotion
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}Q", *shape))
            fh.write(arr.tobytes())


def read_container(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic; not a checkpoint file")
    off = 8

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = struct.unpack_from(fmt, data, off)
        off += size
        return out

    (version,) = take("<I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (meta_len,) = take("<I")
    meta_bytes = data[off:off + meta_len]
    off += meta_len
    meta: dict[str, str] = {}
    for line in meta_bytes.decode("utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    (count,) = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = data[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = take("<B")
        shape = take(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        nbytes = 8 * n
        if off + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape)
        tensors[name] = arr.astype(np.float64).copy()
        off += nbytes
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return meta, tensors


def save_model(path: str | Path, model) -> None:
    """Persist a trained model (configuration, sizes, every parameter)."""
    from .config import canonical_text

    meta = {"num_users": str(model.num_users), "num_items": str(model.num_items)}
    for line in canonical_text(model.config).splitlines():
        key, _, value = line.partition("=")
        meta[f"config.{key}"] = value
    tensors = {name: p.data for name, p in model.named_params().items()}
    write_container(path, meta, tensors)


def load_model(path: str | Path):
    """Rebuild a ModelState from a checkpoint; shapes must match the config."""
    from .config import RunConfig
    from .trainer import ModelState

    meta, tensors = read_container(path)
    try:
        num_users = int(meta["num_users"])
        num_items = int(meta["num_items"])
        fields = {key[len("config."):]: value for key, value in meta.items()
                  if key.startswith("config.")}
        defaults = RunConfig()
        kwargs = {}
        for name, text in fields.items():
            kind = type(getattr(defaults, name))
            kwargs[name] = (text == "true") if kind is bool else kind(text)
        config = RunConfig(**kwargs).validate()
    except (KeyError, TypeError, ValueError, AttributeError) as err:
        raise CheckpointError(f"{path}: bad metadata ({err})") from None

    model = ModelState(config, num_users, num_items)
    params = model.named_params()
    if set(params) != set(tensors):
        missing = set(params) ^ set(tensors)
        raise CheckpointError(f"{path}: parameter set mismatch ({sorted(missing)[:4]}...)")
    for name, param in params.items():
        if tensors[name].shape != param.data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: "
                                  f"{tensors[name].shape} vs {param.data.shape}")
        param.data = tensors[name]
    return model
