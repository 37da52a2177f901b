"""Command-line entry points.

One subcommand per procedure: scan, icv, idd, rep-idd, train-precursor,
train-smos, grad-check.  Every run emits a RunReport whose config_echo
(the fully resolved argv) reproduces the run byte-identically on the same
inputs; wall time goes to stderr so report bytes stay deterministic.

Exit codes: 0 success, 1 domain error (structured JSON on stdout),
2 usage error.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .corpus import SplitSpec, load_manifest, save_manifest, scan_tree
from .divergence import LOG_BASE
from .errors import DomainShiftError
from .metrics import (
    DEFAULT_FEATURE_BINS,
    DEFAULT_TRIALS,
    idd_matrix,
    intra_class_variation,
    representation_idd,
)
from .synthetic import make_precursor_task, make_tinted_task
from .trainer import (
    TrainConfig,
    finite_diff_check,
    init_featurizer,
    init_head,
    load_checkpoint,
    make_smos_loss_fn,
    model_params,
    save_checkpoint,
    train_grounded,
    train_precursor,
)

DEFAULT_LAMBDA = 0.1


def _resolve_seed(value):
    if value is not None:
        return value
    env = os.environ.get("DOMAINSHIFT_SEED")
    return int(env) if env else 0


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=2) + "\n"


def _history_rows(history):
    return [[i] + b.as_row() for i, b in enumerate(history)]


def _results_csv(results: dict) -> str:
    lines = []
    kind = results["kind"]
    if kind == "idd":
        names = results["domain_names"]
        lines.append(",".join(["domain"] + names))
        for name, row in zip(names, results["values"]):
            lines.append(",".join([name] + [repr(v) for v in row]))
    elif kind == "icv":
        lines.append("class,trial,jsd")
        for j, cname in enumerate(results["class_order"]):
            for t in range(results["trials"]):
                lines.append(f"{cname},{t},{results['per_trial'][t][j]!r}")
    elif kind == "loss_history":
        lines.append("step,l_s,l_erm,l_js,l_kl,total")
        for row in results["history"]:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    elif kind == "grad_check":
        lines.append("block,shape,checked,max_rel_err")
        for b in results["blocks"]:
            shape = "x".join(str(s) for s in b["shape"])
            lines.append(f"{b['block']},{shape},{b['checked']},{b['max_rel_err']!r}")
    else:
        raise DomainShiftError(f"no CSV form for result kind {kind!r}")
    return "\n".join(lines) + "\n"


def emit_report(report: dict, fmt: str = "json", path=None) -> str:
    """Write a RunReport as canonical JSON or flattened CSV."""
    if fmt == "json":
        text = _canonical_json(report)
    elif fmt == "csv":
        text = _results_csv(report["results"])
    else:
        raise DomainShiftError(f"unknown format {fmt!r}")
    if path:
        try:
            with open(path, "w") as f:
                f.write(text)
        except OSError as e:
            raise DomainShiftError(f"cannot write {path}: {e}") from e
    else:
        sys.stdout.write(text)
    return text


def _report(command, echo_argv, results):
    return {
        "command": command,
        "config_echo": {"argv": [str(a) for a in echo_argv]},
        "divergence_log_base": LOG_BASE,
        "results": results,
        "tool_version": __version__,
    }


def _load_npz_domains(path):
    data = np.load(path)
    names = sorted(k[2:] for k in data.files if k.startswith("X_"))
    if not names:
        raise DomainShiftError(f"{path}: expected X_<name> arrays")
    out = []
    for name in names:
        x = data[f"X_{name}"]
        y = data[f"y_{name}"] if f"y_{name}" in data.files else None
        out.append((name, x, y))
    return out


def _build_parser():
    parser = argparse.ArgumentParser(prog="domainshift", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None)

    p = sub.add_parser("scan", help="index a root/<domain>/<class>/ tree")
    p.add_argument("--root", required=True)
    p.add_argument("--name", default=None)
    common(p)

    p = sub.add_parser("icv", help="intra-class variation of one domain")
    p.add_argument("--manifest", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--sample-cap", type=int, default=None)
    common(p)

    p = sub.add_parser("idd", help="pairwise inter-domain dissimilarity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--reference", default=None, help="manifest of the reference corpus")
    p.add_argument("--reference-domain", default=None)
    p.add_argument("--sample-cap", type=int, default=None)
    common(p)

    p = sub.add_parser("rep-idd", help="representation-space IDD from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", default=None, help=".npz with X_<name> arrays")
    p.add_argument("--synthetic-seed", type=int, default=None)
    p.add_argument("--bins", type=int, default=DEFAULT_FEATURE_BINS)
    common(p)

    p = sub.add_parser("train-precursor", help="phase 1: cross-entropy training")
    p.add_argument("--data", default=None, help=".npz with X and y arrays")
    p.add_argument("--synthetic-seed", type=int, default=None)
    p.add_argument("--dims", default="4,16,8")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--checkpoint-out", default=None)
    common(p)

    p = sub.add_parser("train-smos", help="phase 2: grounded training")
    p.add_argument("--precursor", required=True)
    p.add_argument("--data", default=None, help=".npz with X_<name>/y_<name> arrays")
    p.add_argument("--synthetic-seed", type=int, default=None)
    p.add_argument("--dims", default="4,16,8")
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--lambda-kl", dest="lam_kl", type=float, default=0.0)
    p.add_argument("--checkpoint-out", default=None)
    common(p)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--dims", default="4,8,6")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    common(p)

    return parser


def _parse_dims(text):
    return tuple(int(d) for d in text.split(","))


def _echo_argv(args, parser_defaults):
    """Fully resolved argv for the report's config_echo."""
    argv = [args.subcommand]
    for key, value in sorted(vars(args).items()):
        if key == "subcommand" or value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if flag == "--lam":
            flag = "--lambda"
        elif flag == "--lam-kl":
            flag = "--lambda-kl"
        argv.extend([flag, str(value)])
    return argv


def _cmd_scan(args):
    manifest = scan_tree(args.root, corpus_name=args.name, seed=args.seed)
    return {"kind": "manifest", **manifest.to_dict()}


def _cmd_icv(args):
    manifest = load_manifest(args.manifest)
    report = intra_class_variation(
        manifest.domain(args.domain),
        root=manifest.root,
        trials=args.trials,
        seed=args.seed,
        sample_cap=args.sample_cap,
    )
    return {"kind": "icv", **report.to_dict()}


def _cmd_idd(args):
    manifest = load_manifest(args.manifest)
    reference = reference_root = None
    if args.reference:
        ref_manifest = load_manifest(args.reference)
        ref_name = args.reference_domain or ref_manifest.domains[0].name
        reference = ref_manifest.domain(ref_name)
        reference_root = ref_manifest.root
    matrix = idd_matrix(
        manifest,
        reference=reference,
        reference_root=reference_root,
        sample_cap=args.sample_cap,
        seed=args.seed,
    )
    return {"kind": "idd", **matrix.to_dict()}


def _cmd_rep_idd(args):
    f, _ = load_checkpoint(args.checkpoint)
    if args.data:
        domains = [(name, x) for name, x, _ in _load_npz_domains(args.data)]
    elif args.synthetic_seed is not None:
        task = make_tinted_task(args.synthetic_seed)
        domains = [(name, x) for name, x, _ in task["train"]]
        domains.append((task["test"][0], task["test"][1]))
    else:
        raise DomainShiftError("rep-idd needs --data or --synthetic-seed")
    matrix = representation_idd(f, domains, bins=args.bins, seed=args.seed)
    return {"kind": "idd", **matrix.to_dict()}


def _train_config(args, lam=0.0, lam_kl=0.0):
    return TrainConfig(
        lam=lam, lam_kl=lam_kl, lr=args.lr, batch_size=args.batch_size,
        steps=args.steps, seed=args.seed,
    )


def _cmd_train_precursor(args):
    if args.data:
        data = np.load(args.data)
        x, y = data["X"], data["y"]
    elif args.synthetic_seed is not None:
        x, y = make_precursor_task(args.synthetic_seed)
    else:
        raise DomainShiftError("train-precursor needs --data or --synthetic-seed")
    config = _train_config(args)
    dims = _parse_dims(args.dims)
    f, g, curve = train_precursor((x, y), dims, int(np.max(y)) + 1, config)
    if args.checkpoint_out:
        save_checkpoint(f, g, args.checkpoint_out)
    history = [[i, 0.0, loss, 0.0, 0.0, loss] for i, loss in enumerate(curve)]
    return {"kind": "loss_history", "history": history, "final_loss": curve[-1]}


def _cmd_train_smos(args):
    f_s, g_s = load_checkpoint(args.precursor)
    if g_s is None:
        raise DomainShiftError("precursor checkpoint has no head")
    if args.data:
        domains = [(x, y) for _, x, y in _load_npz_domains(args.data)]
    elif args.synthetic_seed is not None:
        task = make_tinted_task(args.synthetic_seed)
        domains = [(x, y) for _, x, y in task["train"]]
    else:
        raise DomainShiftError("train-smos needs --data or --synthetic-seed")
    config = _train_config(args, lam=args.lam, lam_kl=args.lam_kl)
    dims = _parse_dims(args.dims)
    f, g, history = train_grounded(domains, (f_s, g_s), dims, config)
    if args.checkpoint_out:
        save_checkpoint(f, g, args.checkpoint_out)
    return {
        "kind": "loss_history",
        "history": _history_rows(history),
        "final_total": history[-1].total,
    }


def _cmd_grad_check(args):
    dims = _parse_dims(args.dims)
    f_s = init_featurizer(dims, seed=args.seed + 1)
    g_s = init_head(f_s.feat_dim, 3, seed=args.seed + 1)
    f = init_featurizer(dims, seed=args.seed)
    g = init_head(f.feat_dim, 3, seed=args.seed)
    gen = np.random.Generator(np.random.Philox(key=args.seed))
    x = gen.normal(size=(4, dims[0]))
    y = gen.integers(0, 3, size=4)
    config = TrainConfig(lam=0.5, lam_kl=0.3, steps=1)
    loss_fn = make_smos_loss_fn((x, y), (x, y), f_s, g_s, f, g, config)
    result = finite_diff_check(
        loss_fn, model_params(f, g), h=args.h, tolerance=args.tolerance, seed=args.seed
    )
    return {"kind": "grad_check", **result}


_COMMANDS = {
    "scan": _cmd_scan,
    "icv": _cmd_icv,
    "idd": _cmd_idd,
    "rep-idd": _cmd_rep_idd,
    "train-precursor": _cmd_train_precursor,
    "train-smos": _cmd_train_smos,
    "grad-check": _cmd_grad_check,
}


def run_command(argv) -> int:
    """Execute one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args([str(a) for a in argv])
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    args.seed = _resolve_seed(args.seed)

    start = time.monotonic()
    try:
        results = _COMMANDS[args.subcommand](args)
        report = _report(args.subcommand, _echo_argv(args, parser), results)
        emit_report(report, fmt=args.format, path=args.out)
    except DomainShiftError as e:
        error = {"error": type(e).__name__, "detail": str(e)}
        sys.stdout.write(json.dumps(error, sort_keys=True) + "\n")
        return 1
    print(
        json.dumps({"info": "wall_time_s", "value": time.monotonic() - start}),
        file=sys.stderr,
    )
    return 0


def rerun_from_config(config_echo: dict) -> int:
    """Re-execute a run from a prior report's config_echo."""
    return run_command(config_echo["argv"])


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
