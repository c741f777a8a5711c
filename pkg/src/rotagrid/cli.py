"""Command-line client for the rotagrid service.

All computation happens behind the service endpoints; the CLI only parses
arguments, moves CSV/model files, and renders responses. By default the
service app is driven in-process; pass --server to talk to a running
deployment instead, and use `rotagrid serve` to start one.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import RotagridError

_CONFIG_FLAGS = [
    # (flag, dest, type, help)
    ("--degree", "degree", int, "total degree of the polynomial surrogate"),
    ("--truncation", "truncation", int,
     "number of rotated coordinates to keep (default min(d, 3))"),
    ("--initial-level", "initial_level", int, "level of the starting regular grid"),
    ("--threshold", "threshold", float, "compression threshold on the error indicator"),
    ("--refine-count", "refine_count", int, "basis functions refined per iteration"),
    ("--max-points", "max_points", int, "stop once the grid exceeds this size"),
    ("--mode", "mode", str, "refinement mode: standard or anova"),
    ("--lam", "lam", float, "Tikhonov regularization weight"),
    ("--cg-reduction", "cg_reduction", float, "CG residual reduction target"),
    ("--cg-max-iters", "cg_max_iters", int, "CG iteration cap"),
    ("--clamp", "clamp", float, "CDF outputs are clipped into [clamp, 1-clamp]"),
    ("--seed", "seed", int, "seed for the rotation search restarts"),
    ("--opt-max-iters", "opt_max_iters", int, "CG iterations per rotation restart"),
    ("--opt-fd-step", "opt_fd_step", float, "forward-difference step for gradients"),
    ("--opt-grad-tol", "opt_grad_tol", float, "tangent-gradient stopping tolerance"),
    ("--opt-restarts", "opt_restarts", int, "independent rotation restarts"),
    ("--opt-initial-step", "opt_initial_step", float, "line search initial step"),
    ("--opt-shrink", "opt_shrink", float, "line search backtracking factor"),
    ("--opt-max-halvings", "opt_max_halvings", int, "line search halving cap"),
    ("--opt-sufficient-increase", "opt_sufficient_increase", float,
     "line search sufficient-increase constant"),
]


def _add_config_flags(parser):
    for flag, dest, typ, help_text in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    parser.add_argument("--standardize", action="store_true",
                        help="z-score features before the surrogate fit")
    parser.add_argument("--normalize-threshold", action="store_true",
                        help="scale the compression threshold by the total "
                             "squared residual")


def _options_payload(args) -> dict:
    options: dict = {}
    optimizer: dict = {}
    mapping = {
        "opt_max_iters": "max_iters",
        "opt_fd_step": "fd_step",
        "opt_grad_tol": "grad_tol",
        "opt_restarts": "restarts",
        "opt_initial_step": "initial_step",
        "opt_shrink": "shrink",
        "opt_max_halvings": "max_halvings",
        "opt_sufficient_increase": "sufficient_increase",
    }
    for _, dest, _, _ in _CONFIG_FLAGS:
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest in mapping:
            optimizer[mapping[dest]] = value
        else:
            options[dest] = value
    if getattr(args, "standardize", False):
        options["standardize"] = True
    if getattr(args, "normalize_threshold", False):
        options["normalize_threshold"] = True
    if optimizer:
        options["optimizer"] = optimizer
    return options


class ServiceClient:
    """HTTP client for the service; without --server the app runs in-process
    over an ASGI bridge, so the CLI works with no deployment at all."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            from starlette.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise RotagridError(f"{path} failed ({response.status_code}): {detail}")
        return response.json()


def _dataset_payload(path) -> dict:
    from .datasets import load_csv

    data = load_csv(path)
    return {"points": data.points.tolist(), "targets": data.targets.tolist()}


def _write_dataset_csv(payload: dict, path) -> None:
    import numpy as np

    from .datasets import Dataset, save_csv

    save_csv(Dataset(np.array(payload["points"]), np.array(payload["targets"])), path)


def _write_trace_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,grid_points,train_rmse,test_nrmse\n")
        for row in rows:
            nr = row.get("test_nrmse")
            fh.write(f"{row['iteration']},{row['grid_points']},"
                     f"{row['train_rmse']!r},{'' if nr is None else repr(nr)}\n")


def _write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_generate(args) -> int:
    client = ServiceClient(args.server)
    response = client.post("/datasets/generate", {
        "problem": args.problem,
        "n": args.n,
        "noise_var": args.noise_var,
        "seed": args.seed,
    })
    _write_dataset_csv(response["train"], args.train_out)
    _write_dataset_csv(response["test"], args.test_out)
    print(f"wrote {args.n} train rows to {args.train_out} and "
          f"{args.n} test rows to {args.test_out}")
    return 0


def _cmd_fit(args) -> int:
    client = ServiceClient(args.server)
    payload = {
        "train": _dataset_payload(args.train),
        "options": _options_payload(args),
    }
    if args.baseline:
        payload["options"]["baseline"] = True
    if args.test:
        payload["test"] = _dataset_payload(args.test)
    response = client.post("/models/fit", payload)
    with open(args.model_out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(response["model"])
    if args.trace_out:
        _write_trace_csv(response["trace"], args.trace_out)
    if args.metrics_out:
        _write_json(response["metrics"], args.metrics_out)
    metrics = response["metrics"]
    nr = metrics.get("nrmse")
    print(f"fit: {metrics['grid_points']} grid points, "
          f"{metrics['iterations']} iterations"
          + (f", test NRMSE {nr:.6g}" if nr is not None else ""))
    return 0


def _cmd_evaluate(args) -> int:
    client = ServiceClient(args.server)
    with open(args.model, "r", encoding="utf-8") as fh:
        model_text = fh.read()
    response = client.post("/models/evaluate", {
        "model": model_text,
        "data": _dataset_payload(args.data),
    })
    if args.metrics_out:
        _write_json(response, args.metrics_out)
    print(f"NRMSE {response['nrmse']:.6g} on {args.data} "
          f"({response['grid_points']} grid points)")
    return 0


def _cmd_sweep(args) -> int:
    client = ServiceClient(args.server)
    payload = {
        "data": _dataset_payload(args.data),
        "options": _options_payload(args),
        "splits": args.splits,
        "lambdas": [float(v) for v in args.lambdas.split(",")],
        "modes": args.modes.split(","),
        "variants": args.variants.split(","),
        "seed": args.seed if args.seed is not None else 0,
        "workers": args.workers,
    }
    response = client.post("/sweep", payload)
    if args.table_out:
        with open(args.table_out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("variant,mode,lam,mean_nrmse,std_nrmse,"
                     "mean_grid_points,n_splits\n")
            for row in response["table"]:
                fh.write(f"{row['variant']},{row['mode']},{row['lam']!r},"
                         f"{row['mean_nrmse']!r},{row['std_nrmse']!r},"
                         f"{row['mean_grid_points']!r},{row['n_splits']}\n")
    if args.cells_out:
        _write_json(response["cells"], args.cells_out)
    for row in response["table"]:
        print(f"{row['variant']:>8} {row['mode']:>8} lam={row['lam']:<8g} "
              f"mean NRMSE {row['mean_nrmse']:.6g} "
              f"(+/- {row['std_nrmse']:.3g}, "
              f"{row['mean_grid_points']:.0f} pts)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("rotagrid.service:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotagrid",
        description="Learn low-effective-dimension regressors: rotate, "
                    "rescale, then fit an adaptive sparse grid.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic train/test CSV files")
    p.add_argument("--problem", choices=["ridge2d", "ridge5d"], required=True)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--noise-var", dest="noise_var", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", default="train.csv")
    p.add_argument("--test-out", default="test.csv")
    p.add_argument("--server", default=None, help="service URL (default: in-process)")
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--test", default=None, help="test CSV for per-iteration NRMSE")
    p.add_argument("--baseline", action="store_true",
                   help="skip the rotation (identity frame on all coordinates)")
    _add_config_flags(p)
    p.add_argument("--model-out", default="model.txt")
    p.add_argument("--trace-out", default=None)
    p.add_argument("--metrics-out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("evaluate", help="NRMSE of a saved model on a CSV dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics-out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("sweep", help="averaged NRMSE over random splits, "
                                     "lambdas, and refinement modes")
    p.add_argument("--data", required=True)
    p.add_argument("--splits", type=int, default=20)
    p.add_argument("--lambdas", default="1e-2,1e-4,1e-6")
    p.add_argument("--modes", default="standard,anova")
    p.add_argument("--variants", default="rotated,baseline")
    p.add_argument("--workers", type=int, default=1)
    _add_config_flags(p)
    p.add_argument("--table-out", default=None)
    p.add_argument("--cells-out", default=None)
    p.add_argument("--server", default=None)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("serve", help="run the service with uvicorn")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except RotagridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
