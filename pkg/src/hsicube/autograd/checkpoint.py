"""Checkpoint files: text headers with little-endian float32 payloads.

Layout::

    HSICKPT1\n
    meta <key>=<value>\n        (zero or more)
    param <name> <d0> <d1> ...\n
    <raw little-endian float32 payload, 4 * prod(shape) bytes>
    param ...

Payloads are always 32-bit, so saving float64 parameters rounds them; the
format favors small reproducible artifacts over full precision.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError

MAGIC = "HSICKPT1"


def save_checkpoint(path, named_params, meta=None):
    """Write (name, array) pairs plus optional string metadata."""
    named_params = list(named_params)
    names = [name for name, _ in named_params]
    if len(set(names)) != len(names):
        raise ValueError("parameter names must be unique")
    for name in names:
        if not name or any(ch in name for ch in " \n\r"):
            raise ValueError(f"bad parameter name {name!r}")
    with open(path, "wb") as fh:
        fh.write((MAGIC + "\n").encode("ascii"))
        for key, value in (meta or {}).items():
            line = f"meta {key}={value}"
            if "\n" in line:
                raise ValueError("metadata must be single-line")
            fh.write((line + "\n").encode("utf-8"))
        for name, arr in named_params:
            arr = np.asarray(arr)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"param {name} {dims}".rstrip().encode("utf-8") + b"\n")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read back (meta dict, list of (name, float32 array)) from ``path``."""
    meta = {}
    params = []
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii", errors="replace").strip()
        if magic != MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
        while True:
            line = fh.readline()
            if not line:
                break
            text = line.decode("utf-8").rstrip("\n")
            if text.startswith("meta "):
                body = text[len("meta "):]
                if "=" not in body:
                    raise FormatError(f"{path}: malformed metadata line {text!r}")
                key, value = body.split("=", 1)
                meta[key] = value
            elif text.startswith("param "):
                fields = text.split()
                name = fields[1]
                shape = tuple(int(d) for d in fields[2:])
                count = int(np.prod(shape)) if shape else 1
                payload = fh.read(4 * count)
                if len(payload) != 4 * count:
                    raise FormatError(f"{path}: truncated payload for {name!r}")
                arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
                params.append((name, arr))
            else:
                raise FormatError(f"{path}: unexpected line {text!r}")
    return meta, params


def load_into_model(model, path):
    """Load a checkpoint into a model with already-assigned parameter names."""
    meta, params = load_checkpoint(path)
    by_name = dict(model.named_parameters())
    stored = dict(params)
    missing = sorted(set(by_name) - set(stored))
    extra = sorted(set(stored) - set(by_name))
    if missing or extra:
        raise FormatError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
    for name, p in by_name.items():
        arr = stored[name]
        if arr.shape != p.data.shape:
            raise FormatError(
                f"{name}: checkpoint shape {arr.shape} != model shape {p.data.shape}"
            )
        p.data = arr.astype(p.data.dtype)
    return meta
