"""Versioned binary checkpoints.

Layout: magic line, 8-byte little-endian header length, a JSON header
(model config, vocab hash, per-array name/shape/dtype manifest), then the
raw little-endian array bytes in manifest order. Writing the same state
twice produces byte-identical files, which the determinism guarantees
depend on.
"""

import json

import numpy as np

from .autodiff import Tensor, get_dtype
from .errors import ConfigError, DataError
from .model import Model, ModelConfig, param_shapes

MAGIC = b"MCCWS-CKPT\n"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float64): "<f8", np.dtype(np.float32): "<f4"}


def save_checkpoint(path, model: Model, vocab_sha256: str,
                    optimizer_arrays: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> None:
    manifest = []
    buffers = []

    def add(name, arr):
        arr = np.asarray(arr)
        tag = _DTYPE_TAGS[np.dtype(get_dtype())]
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": tag})
        buffers.append(np.ascontiguousarray(arr, dtype=tag).tobytes())

    for name, p in model.params.items():
        add(name, p.data)
    opt_names = []
    if optimizer_arrays:
        for name, arr in optimizer_arrays.items():
            add(name, arr)
            opt_names.append(name)
    header = {
        "format_version": VERSION,
        "config": model.config.to_dict(),
        "n_unigrams": model.n_unigrams,
        "n_bigrams": model.n_bigrams,
        "vocab_sha256": vocab_sha256,
        "arrays": manifest,
        "optimizer_arrays": opt_names,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for buf in buffers:
            fh.write(buf)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Raw read: (header, arrays by name). No vocabulary verification."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(MAGIC))
            if magic != MAGIC:
                raise DataError(f"{path}: not a checkpoint file")
            n = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(n).decode("utf-8"))
            if header.get("format_version") != VERSION:
                raise DataError(f"{path}: unsupported checkpoint version")
            arrays = {}
            for item in header["arrays"]:
                shape = tuple(item["shape"])
                count = int(np.prod(shape)) if shape else 1
                dt = np.dtype(item["dtype"])
                buf = fh.read(count * dt.itemsize)
                if len(buf) != count * dt.itemsize:
                    raise DataError(f"{path}: truncated array {item['name']}")
                arrays[item["name"]] = np.frombuffer(buf, dtype=dt).reshape(shape).astype(get_dtype())
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return header, arrays


def load_checkpoint(path, vocab) -> tuple[Model, dict[str, np.ndarray], dict]:
    """Load and verify a checkpoint against a vocabulary.

    Refuses vocab hash mismatches and any missing/extra/mis-shaped
    parameter. Returns (model, optimizer arrays, extra header dict).
    """
    header, arrays = read_checkpoint(path)
    if header["vocab_sha256"] != vocab.sha256():
        raise ConfigError(
            "checkpoint was trained with a different vocab "
            f"(checkpoint {header['vocab_sha256'][:12]}..., given {vocab.sha256()[:12]}...)")
    config = ModelConfig.from_dict(header["config"])
    expected = param_shapes(config, len(vocab.unigrams), len(vocab.bigrams))
    opt_names = set(header.get("optimizer_arrays", []))
    param_arrays = {k: v for k, v in arrays.items() if k not in opt_names}
    missing = sorted(set(expected) - set(param_arrays))
    extra_names = sorted(set(param_arrays) - set(expected))
    if missing or extra_names:
        raise DataError(f"checkpoint parameter names mismatch: missing={missing} extra={extra_names}")
    for name, shape in expected.items():
        if param_arrays[name].shape != shape:
            raise DataError(
                f"checkpoint parameter {name} has shape {param_arrays[name].shape}, expected {shape}")
    params = {name: Tensor(param_arrays[name], requires_grad=True) for name in expected}
    model = Model(config, len(vocab.unigrams), len(vocab.bigrams), params=params)
    opt_arrays = {name: arrays[name] for name in header.get("optimizer_arrays", [])}
    return model, opt_arrays, header.get("extra", {})
