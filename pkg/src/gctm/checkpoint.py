"""Checkpoint file format.

Layout: the header line ``GCTM-CKPT v1``, a textual key=value block that
declares (among run metadata) ``layer_dims``, ``ema_decay``, the schedule
and coupling settings, the seed, and the two array lengths, a terminating
``end_header`` line, then the raw little-endian float32 weight and EMA
arrays back to back.
"""

import numpy as np

from .nn import ParamStore, TimeEmbedding

MAGIC = "GCTM-CKPT v1"


def save_checkpoint(path, params, meta=None):
    """Write params plus metadata; meta values are stringified as-is."""
    lines = [MAGIC]
    keys = {
        "layer_dims": ",".join(str(d) for d in params.layer_dims),
        "ema_decay": repr(params.ema_decay),
        "num_frequencies": params.embedding.num_frequencies,
        "embed_scale": repr(params.embedding.scale),
    }
    if meta:
        for k, v in meta.items():
            keys.setdefault(str(k), v)
    keys["weights_len"] = params.weights.size
    keys["ema_weights_len"] = params.ema_weights.size
    lines.extend(f"{k}={v}" for k, v in keys.items())
    lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(params.weights, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(params.ema_weights, dtype="<f4").tobytes())
    return path


def load_checkpoint(path):
    """Read a checkpoint; returns (ParamStore, metadata dict)."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").rstrip("\n")
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (header {magic!r})")
        meta = {}
        while True:
            line = fh.readline().decode("ascii").rstrip("\n")
            if line == "end_header":
                break
            if not line:
                raise ValueError("truncated checkpoint header")
            key, _, value = line.partition("=")
            meta[key] = value
        n_w = int(meta["weights_len"])
        n_e = int(meta["ema_weights_len"])
        weights = np.frombuffer(fh.read(4 * n_w), dtype="<f4", count=n_w).copy()
        ema = np.frombuffer(fh.read(4 * n_e), dtype="<f4", count=n_e).copy()
    dims = [int(v) for v in meta["layer_dims"].split(",")]
    emb = TimeEmbedding(
        num_frequencies=int(meta.get("num_frequencies", 8)),
        scale=float(meta.get("embed_scale", 1.0)),
    )
    params = ParamStore(
        dims, weights, ema, ema_decay=float(meta.get("ema_decay", 0.999)), embedding=emb
    )
    return params, meta
