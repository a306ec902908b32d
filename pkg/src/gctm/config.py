"""Plain key=value run configuration, coupling (de)serialization, and the
per-run manifest that makes outputs reproducible byte for byte.
"""

import subprocess
from pathlib import Path

import numpy as np

from .couplings import CorruptionOperator, EntropicOT, Independent, Supervised
from .oracle import GaussianSpec
from .trainer import TrainConfig


def parse_kv_file(path):
    """Read key=value lines; '#' starts a comment, blanks are skipped."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv_file(path, mapping):
    lines = [f"{k}={v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def _floats(value):
    return [float(v) for v in value.split(",") if v.strip() != ""]


def operator_from_keys(keys, prefix="operator"):
    kind = keys.get(f"{prefix}_kind", "identity")
    if kind == "coordinate_mask":
        idx = tuple(int(v) for v in keys[f"{prefix}_mask_indices"].split(",") if v.strip() != "")
        return CorruptionOperator(kind="coordinate_mask", mask_indices=idx)
    if kind == "linear":
        matrix = np.atleast_2d(np.loadtxt(keys[f"{prefix}_matrix_file"], dtype=np.float64))
        return CorruptionOperator(
            kind="linear",
            matrix=matrix,
            noise_sigma=float(keys.get(f"{prefix}_noise_sigma", 0.0)),
            seed=int(keys.get(f"{prefix}_seed", 0)),
        )
    return CorruptionOperator()


def operator_to_keys(op, prefix="operator"):
    keys = {f"{prefix}_kind": op.kind}
    if op.kind == "coordinate_mask":
        keys[f"{prefix}_mask_indices"] = ",".join(str(i) for i in op.mask_indices)
    elif op.kind == "linear":
        keys[f"{prefix}_noise_sigma"] = repr(op.noise_sigma)
        keys[f"{prefix}_seed"] = op.seed
    return keys


def coupling_from_keys(keys):
    kind = keys.get("coupling", "independent")
    perturb = float(keys.get("perturb_scale", 0.05))
    if kind == "independent":
        return Independent(perturb_scale=perturb)
    if kind == "ot":
        tau_abs = keys.get("ot_tau")
        return EntropicOT(
            tau_rel=float(keys.get("ot_tau_rel", 0.05)),
            tau_abs=float(tau_abs) if tau_abs is not None else None,
            perturb_scale=perturb,
        )
    if kind == "supervised":
        return Supervised(operator=operator_from_keys(keys), perturb_scale=perturb)
    raise ValueError(f"unknown coupling {kind!r}")


def coupling_to_keys(coupling):
    if isinstance(coupling, Independent):
        return {"coupling": "independent", "perturb_scale": repr(coupling.perturb_scale)}
    if isinstance(coupling, EntropicOT):
        keys = {
            "coupling": "ot",
            "ot_tau_rel": repr(coupling.tau_rel),
            "perturb_scale": repr(coupling.perturb_scale),
        }
        if coupling.tau_abs is not None:
            keys["ot_tau"] = repr(coupling.tau_abs)
        return keys
    if isinstance(coupling, Supervised):
        keys = {"coupling": "supervised", "perturb_scale": repr(coupling.perturb_scale)}
        keys.update(operator_to_keys(coupling.operator))
        return keys
    raise ValueError(f"unknown coupling {coupling!r}")


def gaussian_spec_from_keys(keys):
    if "gaussian_mu0" not in keys:
        return None
    return GaussianSpec(
        np.array(_floats(keys["gaussian_mu0"])),
        np.array(_floats(keys.get("gaussian_mu1", keys["gaussian_mu0"]))),
        np.array(_floats(keys["gaussian_var0"])),
        np.array(_floats(keys.get("gaussian_var1", keys["gaussian_var0"]))),
    )


_TRAIN_KEY_TYPES = {
    "total_iters": int,
    "batch_size": int,
    "lambda_fm": float,
    "sigma_min": float,
    "sigma_max": float,
    "rho": float,
    "N_start": int,
    "doublings": int,
    "that_mode": str,
    "seed": int,
    "eval_every": int,
    "eval_samples": int,
    "checkpoint_every": int,
    "lr": float,
    "ema_decay": float,
}

_TRAIN_FIELD_NAMES = {"N_start": "n_start"}


def train_config_from_keys(keys):
    """Build a TrainConfig from a parsed mapping; unknown keys are ignored
    so manifests reload directly as configs."""
    kwargs = {}
    for key, cast in _TRAIN_KEY_TYPES.items():
        if key in keys:
            kwargs[_TRAIN_FIELD_NAMES.get(key, key)] = cast(keys[key])
    if "hidden" in keys:
        kwargs["hidden"] = tuple(int(v) for v in keys["hidden"].split(","))
    kwargs["coupling"] = coupling_from_keys(keys)
    return TrainConfig(**kwargs)


def train_config_to_keys(config):
    keys = {
        "total_iters": config.total_iters,
        "batch_size": config.batch_size,
        "lambda_fm": repr(config.lambda_fm),
        "sigma_min": repr(config.sigma_min),
        "sigma_max": repr(config.sigma_max),
        "rho": repr(config.rho),
        "N_start": config.n_start,
        "doublings": config.doublings,
        "that_mode": config.that_mode,
        "seed": config.seed,
        "eval_every": config.eval_every,
        "eval_samples": config.eval_samples,
        "checkpoint_every": config.checkpoint_every,
        "hidden": ",".join(str(h) for h in config.hidden),
        "ema_decay": repr(config.ema_decay),
    }
    if config.lr is not None:
        keys["lr"] = repr(config.lr)
    keys.update(coupling_to_keys(config.coupling))
    return keys


def git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
            check=False,
        )
        desc = out.stdout.strip()
        return desc if desc else "unknown"
    except OSError:
        return "unknown"


def write_manifest(out_dir, config_keys, seed, extra=None):
    """Echo the effective config plus provenance next to the outputs.

    The manifest is itself a loadable config: rerunning from it reproduces
    the outputs byte for byte (provenance keys are ignored on load).
    """
    manifest = dict(config_keys)
    manifest["seed"] = seed
    manifest["git_describe"] = git_describe()
    if extra:
        manifest.update(extra)
    return write_kv_file(Path(out_dir) / "manifest.txt", manifest)
