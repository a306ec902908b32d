"""Command-line front end.

Subcommands: train, sample, restore, edit, manip, verify, bench-ot.
Exit codes: 0 success, 1 usage, 2 check failure, 3 runtime fault.
Every run writes a manifest (config echo + git describe + seed) next to its
outputs; re-running with the manifest as the config reproduces them byte
for byte.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import verify as verifymod
from .checkpoint import load_checkpoint
from .couplings import EntropicOT, Independent
from .datasets import make_sampler
from .inference import (
    EDIT_T_INDEPENDENT,
    EDIT_T_SUPERVISED,
    GuidanceConfig,
    latent_manip,
    multistep_sample,
    one_step_sample,
    restore,
)
from .metrics import measurement_residual
from .model import TrajectoryModel
from .plotting import emit_plot
from .schedule import edm_time_grid
from .trainer import Problem, TrainConfig, train_loop

USAGE_EXIT, CHECK_EXIT, FAULT_EXIT = 1, 2, 3


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(USAGE_EXIT)


def build_parser():
    p = Parser(prog="gctm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    t = sub.add_parser("train", help="run the training loop from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--out", default="runs/train")

    s = sub.add_parser("sample", help="generate from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--nfe", type=int, default=1)
    s.add_argument("--n", type=int, default=2048)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--input", default=None, help="text rows used as x1 instead of noise")
    s.add_argument("--out", default="runs/sample")

    r = sub.add_parser("restore", help="measurement-guided restoration")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--method", choices=["dps", "cm", "gctm"], default="gctm")
    r.add_argument("--config", default=None, help="key=value file with operator settings")
    r.add_argument("--measurement", default=None, help="text rows; default synthesizes one")
    r.add_argument("--mask-indices", default=None, help="comma list, overrides config operator")
    r.add_argument("--lam", type=float, default=1.0)
    r.add_argument("--raw-lambda", action="store_true", help="disable residual normalization")
    r.add_argument("--steps", type=int, default=32)
    r.add_argument("--n-samples", type=int, default=64)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="runs/restore")

    e = sub.add_parser("edit", help="apply a point edit and re-generate")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--config", default=None, help="dataset config for drawing the pair")
    e.add_argument("--input", default=None, help="text file: first row x0, second row x1")
    e.add_argument("--shift", default=None, help="comma offsets added to x0")
    e.add_argument("--scale", type=float, default=None, help="factor multiplying x0")
    e.add_argument("--t-edit", type=float, default=None)
    e.add_argument("--n", type=int, default=256)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", default="runs/edit")

    m = sub.add_parser("manip", help="latent-offset generation sweep")
    m.add_argument("--ckpt", required=True)
    m.add_argument("--input", default=None, help="text rows used as x1; default noise draws")
    m.add_argument("--gamma", type=float, default=0.05)
    m.add_argument("--n-eps", type=int, default=4)
    m.add_argument("--n", type=int, default=256)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", default="runs/manip")

    sub.add_parser("verify", help="run the self-verification suite")

    b = sub.add_parser("bench-ot", help="coupling comparison at N=4")
    b.add_argument("--config", required=True)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default="runs/bench-ot")
    return p


def _problem_from_keys(keys):
    dim = int(keys.get("dim", 2))
    spec = cfgmod.gaussian_spec_from_keys(keys)
    data0, d0 = make_sampler(
        keys.get("data0", "eight_gaussians"), dim=dim, gaussian_spec=spec,
        path=keys.get("data0_path"),
    )
    data1_kind = keys.get("data1", "normal")
    data1, _ = make_sampler(data1_kind, dim=d0, path=keys.get("data1_path"))
    return Problem(d0, data0, data1)


def _grid_from_meta(meta, n):
    return edm_time_grid(
        n,
        float(meta.get("sigma_min", 0.002)),
        float(meta.get("sigma_max", 80.0)),
        float(meta.get("rho", 7.0)),
    )


def _load_model(path):
    params, meta = load_checkpoint(path)
    return TrajectoryModel(params), params, meta


def _write_points(out_dir, name, points):
    out_dir.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_dir / f"{name}.txt", points, fmt="%.10e")
    if points.shape[1] == 2:
        emit_plot(points, out_dir / f"{name}.ppm")


def cmd_train(args):
    keys = cfgmod.parse_kv_file(args.config)
    cfg = cfgmod.train_config_from_keys(keys)
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    problem = _problem_from_keys(keys)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, reports = train_loop(cfg, problem, out_dir=out)
    echo = dict(keys)
    echo.update(cfgmod.train_config_to_keys(cfg))
    cfgmod.write_manifest(out, echo, cfg.seed)
    print(f"trained {cfg.total_iters} iters; final total loss {reports[-1].total:.4e}")
    print(f"outputs in {out}")
    return 0


def cmd_sample(args):
    model, params, meta = _load_model(args.ckpt)
    dim = params.data_dim
    if args.input:
        x1 = np.atleast_2d(np.loadtxt(args.input, dtype=np.float64))
    else:
        rng = np.random.default_rng(args.seed)
        x1 = rng.standard_normal((args.n, dim))
    if args.nfe <= 1:
        samples = one_step_sample(model, x1)
    else:
        samples = multistep_sample(model, x1, _grid_from_meta(meta, args.nfe))
    out = Path(args.out)
    _write_points(out, "samples", samples)
    cfgmod.write_manifest(
        out,
        {"ckpt": args.ckpt, "nfe": args.nfe, "n": x1.shape[0], "input": args.input or ""},
        args.seed,
    )
    print(f"wrote {samples.shape[0]} samples (NFE={max(args.nfe, 1)}) to {out}")
    return 0


def _operator_from_args(args, keys):
    from .couplings import CorruptionOperator

    if args.mask_indices is not None:
        idx = tuple(int(v) for v in args.mask_indices.split(",") if v.strip() != "")
        return CorruptionOperator(kind="coordinate_mask", mask_indices=idx)
    if keys:
        return cfgmod.operator_from_keys(keys)
    return CorruptionOperator()


def cmd_restore(args):
    model, params, meta = _load_model(args.ckpt)
    keys = cfgmod.parse_kv_file(args.config) if args.config else {}
    op = _operator_from_args(args, keys)
    rng = np.random.default_rng(args.seed)
    truth = None
    if args.measurement:
        meas = np.atleast_2d(np.loadtxt(args.measurement, dtype=np.float64))
    else:
        problem = _problem_from_keys({**keys, "dim": str(params.data_dim)})
        truth = problem.sample_data(1, rng)
        meas = op.apply(truth, rng)
    gcfg = GuidanceConfig(
        operator=op,
        grid=_grid_from_meta(meta, args.steps),
        method=args.method,
        lam=args.lam,
        adaptive=not args.raw_lambda,
    )
    n_samples = args.n_samples if meas.shape[0] == 1 else None
    out = Path(args.out)
    restored = restore(model, meas, gcfg, rng, n_samples=n_samples, log=print)
    _write_points(out, "restored", restored)
    res = measurement_residual(np.repeat(meas, restored.shape[0] // meas.shape[0], axis=0), restored, op)
    cfgmod.write_manifest(
        out,
        {
            "ckpt": args.ckpt,
            "method": args.method,
            "lam": repr(args.lam),
            "adaptive": not args.raw_lambda,
            "steps": args.steps,
            **cfgmod.operator_to_keys(op),
        },
        args.seed,
    )
    if truth is not None:
        np.savetxt(out / "truth.txt", truth, fmt="%.10e")
    print(f"mean measurement residual: {res:.4e}")
    return 0


def cmd_edit(args):
    model, params, meta = _load_model(args.ckpt)
    rng = np.random.default_rng(args.seed)
    if args.input:
        rows = np.atleast_2d(np.loadtxt(args.input, dtype=np.float64))
        if rows.shape[0] < 2:
            raise ValueError("edit input needs an x0 row and an x1 row")
        x0, x1 = rows[:1].repeat(args.n, 0), rows[1:2].repeat(args.n, 0)
    else:
        keys = cfgmod.parse_kv_file(args.config) if args.config else {}
        problem = _problem_from_keys({**keys, "dim": str(params.data_dim)})
        x0 = problem.sample_data(args.n, rng)
        x1 = problem.sample_prior(args.n, rng)
    shift = np.zeros(params.data_dim)
    if args.shift:
        shift = np.array([float(v) for v in args.shift.split(",")])
    scale = 1.0 if args.scale is None else args.scale

    def edit_fn(pts):
        return pts * scale + shift

    t_edit = args.t_edit
    if t_edit is None:
        supervised = meta.get("coupling", "independent") == "supervised"
        t_edit = EDIT_T_SUPERVISED if supervised else EDIT_T_INDEPENDENT
    from .inference import edit as edit_op

    edited = edit_op(model, x0, x1, t_edit, edit_fn)
    out = Path(args.out)
    _write_points(out, "edited", edited)
    cfgmod.write_manifest(
        out,
        {
            "ckpt": args.ckpt,
            "t_edit": repr(t_edit),
            "shift": args.shift or "",
            "scale": repr(scale),
        },
        args.seed,
    )
    print(f"wrote {edited.shape[0]} edited points to {out}")
    return 0


def cmd_manip(args):
    model, params, _ = _load_model(args.ckpt)
    rng = np.random.default_rng(args.seed)
    if args.input:
        x1 = np.atleast_2d(np.loadtxt(args.input, dtype=np.float64))
    else:
        x1 = rng.standard_normal((args.n, params.data_dim))
    outputs = []
    for _ in range(args.n_eps):
        eps = rng.standard_normal((1, params.data_dim))
        outputs.append(latent_manip(model, x1, eps, args.gamma))
    stacked = np.concatenate(outputs, axis=0)
    out = Path(args.out)
    _write_points(out, "manip", stacked)
    cfgmod.write_manifest(
        out, {"ckpt": args.ckpt, "gamma": repr(args.gamma), "n_eps": args.n_eps}, args.seed
    )
    print(f"wrote {stacked.shape[0]} outputs ({args.n_eps} latent offsets) to {out}")
    return 0


def cmd_verify(_args):
    results = verifymod.run_all()
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else CHECK_EXIT


def cmd_bench_ot(args):
    keys = cfgmod.parse_kv_file(args.config)
    base = cfgmod.train_config_from_keys(keys)
    seed = args.seed if args.seed is not None else base.seed
    problem = _problem_from_keys(keys)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    finals = {}
    for name, coupling in (("independent", Independent()), ("ot", EntropicOT())):
        cfg = TrainConfig(
            **{
                **base.__dict__,
                "coupling": coupling,
                "seed": seed,
                "n_start": 4,
                "doublings": 1,
                "eval_every": base.eval_every or max(1, base.total_iters // 10),
            }
        )
        sub = out / name
        params, _ = train_loop(cfg, problem, out_dir=sub)
        import csv as csvmod

        with open(sub / "metrics.csv") as fh:
            for rec in csvmod.DictReader(fh):
                if rec["metric_name"]:
                    rows.append((int(rec["iter"]), name, rec["metric_value"]))
                    finals[name] = float(rec["metric_value"])
    rows.sort()
    with open(out / "coupling_compare.csv", "w", newline="") as fh:
        import csv as csvmod

        w = csvmod.writer(fh)
        w.writerow(["iter", "coupling", "energy_distance"])
        w.writerows(rows)
    echo = dict(keys)
    echo.update(cfgmod.train_config_to_keys(base))
    cfgmod.write_manifest(out, echo, seed)
    print(f"final energy distance: independent={finals.get('independent'):.4f} ot={finals.get('ot'):.4f}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "restore": cmd_restore,
    "edit": cmd_edit,
    "manip": cmd_manip,
    "verify": cmd_verify,
    "bench-ot": cmd_bench_ot,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return FAULT_EXIT


if __name__ == "__main__":
    sys.exit(main())
