"""Command line front end: ``lowrank-conv <command> ...``.

Every command prints a human-readable summary, or with ``--json`` a single
JSON document carrying ``schema`` and ``schema_version`` keys.  Exit codes:
0 success, 3 format, 4 dimension, 5 rank, 6 numeric, 7 training,
9 argument errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .bench import benchmark
from .conv import ConvConfig, MacCounter, conv_direct, conv_separable
from .cost import REDUCTION_TABLE, LayerSpec, layer_cost
from .decompose import (
    FactorPair,
    decompose_als,
    decompose_closed_form,
    objective_e1,
    reconstruct,
    select_rank,
    tail_energy,
)
from .errors import ArgumentError, DimensionError, LowRankError, NumericError
from .tensor import as_kernel, dematricize, frobenius_norm_sq, matricize, numerical_rank
from .wlra import build_weight_matrix, weighted_als, weighted_objective

SCHEMA_VERSION = 1
ALS_TOLERANCE = 1e-9


def _emit(args, kind, payload, text):
    if args.json:
        doc = {"schema": f"lowrank-conv/{kind}", "schema_version": SCHEMA_VERSION, **payload}
        print(json.dumps(doc, indent=2))
    else:
        print(text)


def _load_kernel(path):
    return as_kernel(io.read_tensor(path))


def _relative_error(w, e1):
    n = frobenius_norm_sq(w)
    return float(np.sqrt(e1 / n)) if n > 0 else 0.0


def _decompose_one(w, rank, energy, prefix, dtype):
    C, d, _, N = w.shape
    K = rank if rank is not None else select_rank(w, energy)
    f = decompose_closed_form(w, K)
    paths = io.write_factors(prefix, f, dtype)
    stored = io.read_factors(*paths)
    e1 = objective_e1(w, stored)
    return {
        "C": C,
        "d": d,
        "N": N,
        "K": K,
        "objective": e1,
        "tail_energy": tail_energy(w, K),
        "relative_error": _relative_error(w, e1),
        "factor_files": [str(p) for p in paths],
        "cost": layer_cost(LayerSpec(N=N, C=C, d=d), K).to_dict(),
    }


def cmd_decompose(args):
    if args.rank is not None and args.energy is not None:
        raise ArgumentError("give only one of --rank / --energy")
    src = Path(args.kernel)
    prefix = args.output or str(src.with_suffix(""))
    if src.suffix == ".json":
        doc, root = io.read_manifest(src)
        jobs = []
        for i, entry in enumerate(doc["layers"]):
            if entry["type"] != "direct-conv":
                continue
            w = _load_kernel(root / entry["params"]["W"])
            rank = args.rank if args.rank is not None else entry.get("K")
            energy = None if rank is not None else args.energy
            if rank is None and energy is None:
                raise ArgumentError(f"layer {i} has no K; pass --rank or --energy")
            jobs.append((i, w, rank, energy, f"{prefix}_layer{i}"))
        # layers are independent; map() keeps manifest order
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(lambda j: {"layer": j[0], **_decompose_one(*j[1:], args.dtype)}, jobs))
        payload = {"layers": results}
        text = "\n".join(
            f"layer {r['layer']}: K={r['K']} objective={r['objective']:.6e} "
            f"weight_reduction={r['cost']['weight_reduction']:.2f}x" for r in results)
    else:
        if args.rank is None and args.energy is None:
            raise ArgumentError("give one of --rank / --energy")
        payload = _decompose_one(_load_kernel(src), args.rank, args.energy, prefix, args.dtype)
        c = payload["cost"]
        text = (f"C={payload['C']} d={payload['d']} N={payload['N']} K={payload['K']}\n"
                f"objective E1          {payload['objective']!r}\n"
                f"sum_(k>K) sigma_k^2   {payload['tail_energy']!r}\n"
                f"relative error        {payload['relative_error']:.6e}\n"
                f"theoretical speedup   {c['theoretical_speedup']:.2f}x\n"
                f"weight reduction      {c['weight_reduction']:.2f}x\n"
                f"factors written to    {', '.join(payload['factor_files'])}")
    _emit(args, "decompose", payload, text)
    return 0


def cmd_verify(args):
    w = _load_kernel(args.kernel)
    f = io.read_factors(args.vertical, args.horizontal)
    if f.dims != (w.shape[0], w.shape[1], w.shape[3]):
        raise DimensionError(f"factors {f.dims} do not match kernel {w.shape}")
    e1 = objective_e1(w, f)
    payload = {
        "K": f.K,
        "objective": e1,
        "relative_error": _relative_error(w, e1),
        "reconstruction_rank": numerical_rank(matricize(reconstruct(f))),
    }
    text = (f"objective E1          {e1!r}\nrelative error        {payload['relative_error']:.6e}\n"
            f"reconstruction rank   {payload['reconstruction_rank']} (K={f.K})")
    _emit(args, "verify", payload, text)
    return 0


def cmd_cost(args):
    include_bias = not args.no_bias
    if args.table3:
        rows = []
        for layer, d, C, N, K, printed in REDUCTION_TABLE:
            r = layer_cost(LayerSpec(N=N, C=C, d=d), K, include_bias)
            rounded = round(r.weight_reduction, 1)
            rows.append({
                "layer": layer, "d": d, "C": C, "N": N, "K": K,
                "weight_reduction": r.weight_reduction,
                "rounded": rounded,
                "printed": printed,
                "match": abs(rounded - printed) <= 0.05 + 1e-9,
                "theoretical_speedup": r.theoretical_speedup,
            })
        lines = [f"{'layer':<7}{'C':>5}{'N':>5}{'K':>5}{'reduction':>12}{'rounded':>9}{'printed':>9}  match"]
        for r in rows:
            lines.append(f"{r['layer']:<7}{r['C']:>5}{r['N']:>5}{r['K']:>5}{r['weight_reduction']:>12.4f}"
                         f"{r['rounded']:>9.1f}{r['printed']:>9.1f}  {'yes' if r['match'] else 'NO'}")
        _emit(args, "cost-table", {"include_bias": include_bias, "rows": rows}, "\n".join(lines))
        return 0
    if None in (args.N, args.C, args.d, args.K):
        raise ArgumentError("--N, --C, --d and --K are required without --table3")
    r = layer_cost(LayerSpec(N=args.N, C=args.C, d=args.d), args.K, include_bias)
    text = "\n".join(f"{k:<26}{v}" for k, v in r.to_dict().items())
    _emit(args, "cost", r.to_dict(), text)
    return 0


def _layer_spec(args):
    return LayerSpec(N=args.N, C=args.C, d=args.d, stride=args.stride, padding=args.padding)


def cmd_bench(args):
    spec = _layer_spec(args)
    if args.count:
        rng = np.random.default_rng(args.seed)
        z = rng.standard_normal((args.C, args.height, args.width))
        f = FactorPair(rng.standard_normal((args.K, args.d, args.C)), rng.standard_normal((args.N, args.d, args.K)))
        cfg = ConvConfig(args.stride, args.padding)
        cd, cs = MacCounter(), MacCounter()
        out = conv_direct(z, reconstruct(f), cfg, counter=cd)
        conv_separable(z, f, cfg, counter=cs)
        Yo, Xo = out.shape[1:]  # stage 1 shares the vertical geometry, so it has Yo rows
        payload = {
            "direct_macs": cd.macs,
            "separable_macs": cs.macs,
            "expected_direct": args.d**2 * args.N * args.C * Xo * Yo,
            "expected_separable": args.d * args.K * args.C * args.width * Yo + args.d * args.N * args.K * Xo * Yo,
            "output_dims": [Yo, Xo],
        }
        text = (f"direct MACs     {payload['direct_macs']} (expected {payload['expected_direct']})\n"
                f"separable MACs  {payload['separable_macs']} (expected {payload['expected_separable']})")
        _emit(args, "bench-count", payload, text)
        return 0
    rep = benchmark(spec, args.K, (args.height, args.width), args.repeats, args.seed, args.threads)
    text = (f"layer N={rep.N} C={rep.C} d={rep.d} K={rep.K} input={rep.input_dims[0]}x{rep.input_dims[1]} "
            f"threads={rep.threads}\n"
            f"direct     min {rep.direct.min * 1e3:9.3f} ms  median {rep.direct.median * 1e3:9.3f} ms  "
            f"mean {rep.direct.mean * 1e3:9.3f} ms\n"
            f"separable  min {rep.separable.min * 1e3:9.3f} ms  median {rep.separable.median * 1e3:9.3f} ms  "
            f"mean {rep.separable.mean * 1e3:9.3f} ms\n"
            f"speedup    measured {rep.measured_speedup:.2f}x  theoretical {rep.theoretical_speedup:.2f}x")
    _emit(args, "bench", rep.to_dict(), text)
    return 0


def cmd_compare(args):
    w = _load_kernel(args.kernel)
    cf = objective_e1(w, decompose_closed_form(w, args.rank))
    rows = []
    for seed in range(args.seeds):
        als = objective_e1(w, decompose_als(w, args.rank, max_iters=args.als_iters, seed=seed))
        rows.append({"seed": seed, "als_objective": als, "closed_form_objective": cf,
                     "gap": als - cf, "als_better": als < cf - ALS_TOLERANCE})
    flagged = [r["seed"] for r in rows if r["als_better"]]
    lines = [f"closed form objective {cf:.6e}", f"{'seed':>4}  {'ALS objective':>14}  {'gap':>12}"]
    lines += [f"{r['seed']:>4}  {r['als_objective']:>14.6e}  {r['gap']:>12.4e}" for r in rows]
    if flagged:
        lines.append(f"ALS beat the closed form for seeds {flagged}")
    _emit(args, "compare", {"K": args.rank, "closed_form_objective": cf, "rows": rows, "flagged": flagged},
          "\n".join(lines))
    return NumericError.exit_code if flagged else 0


def cmd_train(args):
    from .train import TrainConfig, build_model, evaluate, generate_synthetic_dataset, lowrank_cnn_spec, train

    if args.synthetic == (args.data is not None):
        raise ArgumentError("give exactly one of --synthetic / --data")
    if args.synthetic:
        ds = generate_synthetic_dataset(args.n_per_class, args.classes, (args.size, args.size), seed=args.seed)
    else:
        ds = io.load_dataset(args.data)
    if args.manifest:
        model = io.load_model(args.manifest, seed=args.seed)
    else:
        model = build_model(lowrank_cnn_spec(ds.input_shape, ds.classes), seed=args.seed)
    cfg = TrainConfig(batch_size=args.batch_size, initial_lr=args.lr, lr_decay_factor=args.decay,
                      patience=args.patience, max_epochs=args.epochs, seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    hist_path = out / "history.jsonl"
    with open(hist_path, "w") as fh:
        def log_epoch(rec, _model):
            fh.write(json.dumps(rec.to_dict()) + "\n")
            fh.flush()
            if not args.json:
                print(f"epoch {rec.epoch:3d}  lr {rec.lr:.0e}  loss {rec.train_loss:.4f}  val_error {rec.val_error:.4f}")

        history, model = train(model, ds, cfg, callback=log_epoch)
    manifest = io.save_model(model, out / "model")
    test_acc = 1.0 - evaluate(model, ds.test)
    payload = {
        "epochs": len(history) - 1,
        "initial_loss": history[0].train_loss,
        "final_loss": history[-1].train_loss,
        "final_val_error": history[-1].val_error,
        "test_accuracy": test_acc,
        "history_file": str(hist_path),
        "manifest": str(manifest),
    }
    _emit(args, "train", payload, f"test accuracy {test_acc:.4f}\nmodel written to {manifest}")
    return 0


def cmd_wlra(args):
    w = _load_kernel(args.kernel)
    C, d, _, N = w.shape
    maps_dir = Path(args.maps)
    files = sorted(maps_dir.glob("*.lrct")) if maps_dir.is_dir() else []
    if not files:
        raise ArgumentError(f"no feature-map files (*.lrct) in {maps_dir}")
    g = build_weight_matrix((io.read_tensor(p) for p in files), d, args.stride, N)
    W = np.asarray(matricize(w))
    W_tilde, trace = weighted_als(W, g, args.rank, max_iters=args.iters, seed=args.seed,
                                  restarts=args.restarts, return_trace=True)
    kernel_tilde = dematricize(W_tilde, (C, d, N))
    f = decompose_closed_form(kernel_tilde, args.rank)
    prefix = args.output or str(Path(args.kernel).with_suffix("")) + "_wlra"
    paths = io.write_factors(prefix, f, "f64")
    unweighted = decompose_closed_form(w, args.rank)
    payload = {
        "K": args.rank,
        "n_maps": len(files),
        "G": g.summary(),
        "trace": trace,
        "weighted_objective": weighted_objective(W, W_tilde, g),
        "closed_form_weighted_objective": weighted_objective(W, matricize(reconstruct(unweighted)), g),
        "monotone": bool(np.all(np.diff(trace) <= 0)),
        "factor_files": [str(p) for p in paths],
    }
    text = (f"G: {payload['G']}\nobjective trace: {trace[0]:.6e} -> {trace[-1]:.6e} in {len(trace) - 1} sweeps\n"
            f"closed-form (unweighted) solution scores {payload['closed_form_weighted_objective']:.6e}\n"
            f"factors written to {', '.join(payload['factor_files'])}")
    _emit(args, "wlra", payload, text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="lowrank-conv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.set_defaults(func=fn)
        return sp

    sp = add("decompose", cmd_decompose, "closed-form rank-K factorization of a kernel file or manifest")
    sp.add_argument("kernel", help="kernel tensor file, or a model manifest (.json) of direct-conv layers")
    sp.add_argument("-K", "--rank", type=int)
    sp.add_argument("--energy", type=float, help="pick the smallest K keeping this fraction of sigma^2")
    sp.add_argument("-o", "--output", help="output prefix for <prefix>_V.lrct / <prefix>_H.lrct")
    sp.add_argument("--dtype", choices=("f32", "f64"), default="f64")
    sp.add_argument("--workers", type=int, default=4)

    sp = add("verify", cmd_verify, "evaluate factors against a kernel")
    sp.add_argument("kernel")
    sp.add_argument("vertical")
    sp.add_argument("horizontal")

    sp = add("cost", cmd_cost, "operation and parameter counts for one layer")
    for flag in ("N", "C", "d", "K"):
        sp.add_argument(f"--{flag}", type=int)
    sp.add_argument("--table3", action="store_true", help="recompute the CIFAR-10 weight-reduction table")
    sp.add_argument("--no-bias", action="store_true", help="exclude biases from parameter counts")

    sp = add("bench", cmd_bench, "time direct vs separable convolution")
    for flag, default in (("N", 128), ("C", 192), ("d", 5), ("K", 8)):
        sp.add_argument(f"--{flag}", type=int, default=default)
    sp.add_argument("--height", type=int, default=32)
    sp.add_argument("--width", type=int, default=32)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--padding", type=int, default=0)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--count", action="store_true", help="report multiply-accumulate counts instead of timing")

    sp = add("compare", cmd_compare, "closed form vs alternating least squares")
    sp.add_argument("kernel")
    sp.add_argument("-K", "--rank", type=int, required=True)
    sp.add_argument("--als-iters", type=int, default=200)
    sp.add_argument("--seeds", type=int, default=5, help="number of ALS seeds (0..n-1)")

    sp = add("train", cmd_train, "train a low-rank CNN from scratch")
    sp.add_argument("--manifest", help="model manifest; default is the built-in two-block low-rank CNN")
    sp.add_argument("--data", help="dataset directory with {train,val,test}_{x,y}.lrct")
    sp.add_argument("--synthetic", action="store_true", help="use generated oriented-grating data")
    sp.add_argument("--n-per-class", type=int, default=500)
    sp.add_argument("--classes", type=int, default=4)
    sp.add_argument("--size", type=int, default=16)
    sp.add_argument("--batch-size", type=int, default=100)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--decay", type=float, default=10.0)
    sp.add_argument("--patience", type=int, default=3)
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", default="run")

    sp = add("wlra", cmd_wlra, "data-weighted low-rank approximation of a kernel")
    sp.add_argument("kernel")
    sp.add_argument("maps", help="directory of (C, Y, X) feature-map files")
    sp.add_argument("-K", "--rank", type=int, required=True)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except LowRankError as exc:
        epoch = getattr(exc, "epoch", None)
        suffix = f" (epoch {epoch})" if epoch is not None else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
