"""Command-line orchestration.

Subcommands: synth, validate, train-teacher, quantify, distill, eval,
sweep, bench. Exit codes: 1 usage/parameter error, 2 data or format
error, 3 numerical divergence. Every training command writes a run
directory containing the resolved config, history, checkpoint, and
metrics.json; multi-seed invocations add an aggregate CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from krd import backend
from krd.distill import (
    DistillConfig,
    glnn_baseline,
    make_view,
    run_distillation,
    write_run_dir,
)
from krd.errors import (
    ContractError,
    DivergenceError,
    FitError,
    FormatError,
    KrdError,
    LoadError,
    ParameterError,
)
from krd.graphs import (
    GraphBundle,
    SplitSpec,
    load_bundle,
    load_splits,
    make_split,
    normalize_adjacency,
    save_bundle,
    synth_graph,
)
from krd.knowledge import ReliabilityProfile, quantify_reliability, save_reliability_csv
from krd.linalg import softmax_rows
from krd.models import TrainConfig, forward, load_model, save_model, train_teacher
from krd.report import (
    RunMetrics,
    attach_energies,
    config_hash,
    evaluate,
    save_metrics,
)
from krd.rng import Rng


class Parser(argparse.ArgumentParser):
    # usage errors are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Union of every knob, resolvable from defaults, config file, flags."""

    bundle: str = ""
    out: str = "runs"
    run_name: str = ""
    method: str = "krd"  # krd | glnn | mlp
    mode: str = "transductive"
    strategy: str = "knowledge"
    prob_model: str = "power-learnable"
    krd_direction: str = "teacher_at_sampled"
    seeds: tuple = (0,)
    teacher: str = ""  # checkpoint path; empty trains one per seed
    hidden: int = 64
    layers: int = 2
    teacher_epochs: int = 500
    teacher_lr: float = 0.01
    teacher_weight_decay: float = 5e-4
    teacher_dropout: float = 0.5
    teacher_patience: int = 50
    epochs: int = 500
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    patience: int = 50
    lam: float = 0.3
    tau: float = 1.0
    eta: float = 0.99
    delta: float = 1.0
    num_samples: int = 10
    fit_bins: int = 20
    train_per_class: int = 20
    val_size: int = 500
    test_size: int = 1000
    train_ratio: float = 0.0
    inductive_fraction: float = 0.2
    split_seed: int = -1  # -1 follows the run seed

    PATH_KEYS = ("bundle", "out", "run_name", "teacher")

    def logical_doc(self) -> dict:
        doc = asdict(self)
        for key in self.PATH_KEYS:
            doc.pop(key)
        doc["seeds"] = list(self.seeds)
        return doc

    def resolved_doc(self) -> dict:
        doc = asdict(self)
        doc["seeds"] = list(self.seeds)
        return doc


def load_run_config(path, overrides: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    doc = {}
    if path:
        f = Path(path)
        if not f.is_file():
            raise LoadError(f"config file missing: {f}")
        try:
            doc = json.loads(f.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad config JSON: {exc}") from exc
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if "seeds" in doc:
        doc["seeds"] = tuple(int(s) for s in doc["seeds"])
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise ParameterError(f"bad config: {exc}") from exc


def parse_prob_model(text: str) -> tuple:
    """'power-learnable' | 'power-fixed:A' | 'exponential' | 'gaussian'."""
    if text == "power-learnable":
        return "power_learnable", 1.0
    if text == "exponential":
        return "exponential_learnable", 1.0
    if text == "gaussian":
        return "gaussian_learnable", 1.0
    if text.startswith("power-fixed:"):
        try:
            alpha = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ParameterError(f"bad fixed power in {text!r}") from exc
        if alpha <= 0.0:
            raise ParameterError("fixed power must be positive")
        return "power_fixed", alpha
    raise ParameterError(
        f"unknown probability model {text!r} (expected power-learnable, "
        "power-fixed:A, exponential, or gaussian)"
    )


def distill_config(rc: RunConfig, seed: int) -> DistillConfig:
    kind, alpha = parse_prob_model(rc.prob_model)
    lam = 1.0 if rc.method == "mlp" else rc.lam
    return DistillConfig(
        lam=lam,
        tau=rc.tau,
        eta=rc.eta,
        delta=rc.delta,
        num_samples=rc.num_samples,
        strategy=rc.strategy,
        prob_kind=kind,
        fixed_alpha=alpha,
        krd_direction=rc.krd_direction,
        epochs=rc.epochs,
        lr=rc.lr,
        weight_decay=rc.weight_decay,
        dropout=rc.dropout,
        hidden=rc.hidden,
        layers=rc.layers,
        seed=seed,
        patience=rc.patience,
        fit_bins=rc.fit_bins,
    )


def teacher_config(rc: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=rc.teacher_epochs,
        lr=rc.teacher_lr,
        weight_decay=rc.teacher_weight_decay,
        dropout=rc.teacher_dropout,
        hidden=rc.hidden,
        layers=rc.layers,
        seed=seed,
        patience=rc.teacher_patience,
    )


def resolve_split(bundle: GraphBundle, bundle_dir, rc: RunConfig, seed: int) -> SplitSpec:
    if rc.mode == "transductive":
        stored = load_splits(bundle_dir, bundle)
        if stored is not None and stored.mode == "transductive":
            return stored
    split_seed = seed if rc.split_seed < 0 else rc.split_seed
    return make_split(
        bundle,
        mode=rc.mode,
        seed=split_seed,
        train_per_class=rc.train_per_class,
        val_size=rc.val_size,
        test_size=rc.test_size,
        train_ratio=rc.train_ratio,
        inductive_fraction=rc.inductive_fraction,
    )


def run_base_dir(rc: RunConfig, command: str) -> Path:
    name = rc.run_name or f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"
    base = Path(rc.out) / name
    base.mkdir(parents=True, exist_ok=True)
    return base


def write_aggregate(path: Path, rows: list) -> None:
    lines = ["variant,param,seed_count,mean_acc,std_acc"]
    for variant, param, accs in rows:
        arr = np.asarray(accs, dtype=np.float64)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        lines.append(f"{variant},{param},{len(arr)},{arr.mean():.6f},{std:.6f}")
    path.write_text("\n".join(lines) + "\n")


def headline_accuracy(metrics: RunMetrics) -> float:
    """The accuracy a run is judged by: inductive if present, else test."""
    acc = metrics.split_accuracy
    if "inductive" in acc:
        return acc["inductive"]
    if "test" in acc:
        return acc["test"]
    raise ParameterError("metrics carry no test or inductive accuracy")


def _distill_one_seed(
    rc: RunConfig, bundle: GraphBundle, bundle_dir, seed: int, base: Path, teacher_cache: dict
) -> RunMetrics:
    adj = normalize_adjacency(bundle)
    split = resolve_split(bundle, bundle_dir, rc, seed)
    view = make_view(bundle, adj, split)

    if rc.teacher:
        teacher = load_model(rc.teacher)
    elif seed in teacher_cache:
        teacher = teacher_cache[seed]
    else:
        tcfg = teacher_config(rc, seed)
        tsplit = SplitSpec(train_ids=view.train_ids, val_ids=view.val_ids,
                           test_ids=np.zeros(0, dtype=np.int64))
        teacher, _ = train_teacher(view.bundle, view.adj, tsplit, tcfg)
        save_model(teacher, base / f"teacher-seed{seed}", seed=seed)
        teacher_cache[seed] = teacher

    dcfg = distill_config(rc, seed)
    if rc.method == "krd":
        qrng = Rng(seed).spawn("quantify")
        profile = quantify_reliability(
            teacher, view.adj, view.bundle.features, rc.delta, rc.num_samples, qrng
        )
        run = run_distillation(bundle, adj, split, teacher, profile, dcfg)
    elif rc.method == "glnn":
        run = glnn_baseline(bundle, adj, split, teacher, dcfg)
    elif rc.method == "mlp":
        run = run_distillation(bundle, adj, split, teacher, _empty_profile(), dcfg,
                               enable_krd=False)
    else:
        raise ParameterError(f"unknown method {rc.method!r} (expected krd, glnn, or mlp)")

    metrics = evaluate(run.student, bundle, None, split)
    teacher_probs = softmax_rows(forward(teacher, view.adj, view.bundle.features).logits)
    student_probs = softmax_rows(forward(run.student, None, view.bundle.features).logits)
    attach_energies(metrics, view.bundle, teacher_probs, student_probs)
    metrics.seed = seed
    metrics.config_hash = config_hash(rc.logical_doc())
    write_run_dir(base / f"{rc.method}-seed{seed}", dcfg, run, metrics.to_json())
    return metrics


def _empty_profile() -> ReliabilityProfile:
    z = np.zeros(0)
    return ReliabilityProfile(z, 0.0, z.copy(), z.copy(), 0, 1.0, True)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    bundle = synth_graph(args.nodes, args.classes, args.intra, args.inter,
                         args.noise, args.seed)
    save_bundle(bundle, args.out)
    print(f"wrote {bundle.name}: N={bundle.num_nodes} d={bundle.num_features} "
          f"C={bundle.num_classes} edges={bundle.num_edges} -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    bundle = load_bundle(args.bundle)
    split = load_splits(args.bundle, bundle)
    msg = (f"ok {bundle.name}: N={bundle.num_nodes} d={bundle.num_features} "
           f"C={bundle.num_classes} edges={bundle.num_edges}")
    if split is not None:
        msg += (f" splits: train={len(split.train_ids)} val={len(split.val_ids)} "
                f"test={len(split.test_ids)}")
    print(msg)
    return 0


def cmd_train_teacher(args) -> int:
    rc = load_run_config(args.config, _overrides(args))
    bundle = load_bundle(rc.bundle)
    base = run_base_dir(rc, "teacher")
    accs = []
    for seed in rc.seeds:
        adj = normalize_adjacency(bundle)
        split = resolve_split(bundle, rc.bundle, rc, seed)
        view = make_view(bundle, adj, split)
        tcfg = teacher_config(rc, seed)
        tsplit = SplitSpec(train_ids=view.train_ids, val_ids=view.val_ids,
                           test_ids=np.zeros(0, dtype=np.int64))
        teacher, history = train_teacher(view.bundle, view.adj, tsplit, tcfg)
        run_dir = base / f"teacher-seed{seed}"
        save_model(teacher, run_dir, seed=seed, epoch=len(history))
        (run_dir / "config.json").write_text(
            json.dumps(rc.resolved_doc(), indent=2, sort_keys=True) + "\n")
        rows = ["epoch,loss,val_acc"]
        rows += [f"{e},{l:.17g},{v:.17g}" for e, l, v in history]
        (run_dir / "history.csv").write_text("\n".join(rows) + "\n")
        metrics = evaluate(teacher, bundle, adj, split) if rc.mode == "transductive" \
            else evaluate(teacher, view.bundle, view.adj, tsplit)
        metrics.seed = seed
        metrics.config_hash = config_hash(rc.logical_doc())
        save_metrics(metrics, run_dir / "metrics.json")
        acc = metrics.split_accuracy.get("test")
        if acc is not None:
            accs.append(acc)
            print(f"seed {seed}: teacher test acc {acc:.4f}")
    if accs:
        write_aggregate(base / "aggregate.csv", [("teacher", "-", accs)])
    print(f"run dir: {base}")
    return 0


def cmd_quantify(args) -> int:
    bundle = load_bundle(args.bundle)
    teacher = load_model(args.teacher)
    adj = normalize_adjacency(bundle)
    rng = Rng(args.seed).spawn("quantify")
    profile = quantify_reliability(teacher, adj, bundle.features, args.delta,
                                   args.samples, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_reliability_csv(profile, out)
    spread = profile.rho.std() / profile.rho.mean() if profile.rho.mean() > 0 else 0.0
    print(f"rho: max={profile.rho_max:.6g} mean={profile.rho.mean():.6g} "
          f"cv={spread:.3f} degenerate={profile.degenerate} -> {out}")
    return 0


def cmd_distill(args) -> int:
    rc = load_run_config(args.config, _overrides(args))
    bundle = load_bundle(rc.bundle)
    base = run_base_dir(rc, f"distill-{rc.method}")
    teacher_cache: dict = {}
    accs = []
    for seed in rc.seeds:
        metrics = _distill_one_seed(rc, bundle, rc.bundle, seed, base, teacher_cache)
        acc = headline_accuracy(metrics)
        accs.append(acc)
        print(f"seed {seed}: {rc.method} acc {acc:.4f}")
    write_aggregate(base / "aggregate.csv", [(rc.method, "-", accs)])
    mean = float(np.mean(accs))
    print(f"{rc.method}: mean acc {mean:.4f} over {len(accs)} seed(s); run dir: {base}")
    return 0


def cmd_eval(args) -> int:
    bundle = load_bundle(args.bundle)
    model = load_model(args.model)
    adj = normalize_adjacency(bundle) if model.kind == "gcn" else None
    rc = RunConfig(bundle=args.bundle, mode=args.mode,
                   train_per_class=args.train_per_class, val_size=args.val_size,
                   test_size=args.test_size, train_ratio=args.train_ratio,
                   inductive_fraction=args.inductive_fraction,
                   split_seed=args.split_seed)
    split = resolve_split(bundle, args.bundle, rc, args.seed)
    metrics = evaluate(model, bundle, adj, split)
    metrics.seed = args.seed
    doc = json.dumps(metrics.to_json(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(doc + "\n")
    print(doc)
    return 0


def cmd_sweep(args) -> int:
    rc = load_run_config(args.config, _overrides(args))
    lams = [float(v) for v in args.lambdas.split(",")] if args.lambdas else [rc.lam]
    etas = [float(v) for v in args.etas.split(",")] if args.etas else [rc.eta]
    bundle = load_bundle(rc.bundle)
    base = run_base_dir(rc, "sweep")
    teacher_cache: dict = {}
    rows = []
    for lam, eta in product(lams, etas):
        point = replace(rc, lam=lam, eta=eta,
                        run_name=f"{rc.run_name or 'sweep'}-lam{lam}-eta{eta}")
        accs = []
        for seed in rc.seeds:
            metrics = _distill_one_seed(point, bundle, rc.bundle, seed,
                                        base / f"lam{lam}-eta{eta}", teacher_cache)
            accs.append(headline_accuracy(metrics))
        rows.append((rc.method, f"lam={lam};eta={eta}", accs))
        print(f"lam={lam} eta={eta}: mean acc {np.mean(accs):.4f}")
    write_aggregate(base / "sweep.csv", rows)
    print(f"sweep dir: {base}")
    return 0


def cmd_bench(args) -> int:
    rows = backend.run_benchmark(num_values=args.values, num_nodes=args.nodes,
                                 avg_degree=args.degree, width=args.width)
    print(f"{'kernel':<12} {'backend':<10} {'seconds':>10}")
    for kernel, name, seconds in rows:
        print(f"{kernel:<12} {name:<10} {seconds:>10.4f}")
    return 0


# ---------------------------------------------------------------- wiring

_FLAG_FIELDS = [
    ("--bundle", "bundle", str, "bundle directory"),
    ("--out", "out", str, "output root for run directories"),
    ("--run-name", "run_name", str, "fixed run directory name (default: timestamped)"),
    ("--mode", "mode", str, "transductive or inductive"),
    ("--strategy", "strategy", str, "knowledge, entropy, random, or all"),
    ("--prob-model", "prob_model", str,
     "power-learnable, power-fixed:A, exponential, or gaussian"),
    ("--krd-direction", "krd_direction", str, "teacher_at_sampled or teacher_at_center"),
    ("--teacher", "teacher", str, "teacher checkpoint directory (default: train one)"),
    ("--hidden", "hidden", int, "hidden width"),
    ("--layers", "layers", int, "layer count"),
    ("--teacher-epochs", "teacher_epochs", int, "teacher epochs"),
    ("--teacher-lr", "teacher_lr", float, "teacher learning rate"),
    ("--teacher-weight-decay", "teacher_weight_decay", float, "teacher weight decay"),
    ("--teacher-dropout", "teacher_dropout", float, "teacher dropout"),
    ("--teacher-patience", "teacher_patience", int, "teacher early-stop patience"),
    ("--epochs", "epochs", int, "student epochs"),
    ("--lr", "lr", float, "student learning rate"),
    ("--weight-decay", "weight_decay", float, "student weight decay"),
    ("--dropout", "dropout", float, "student dropout"),
    ("--patience", "patience", int, "student early-stop patience"),
    ("--lam", "lam", float, "supervised loss weight"),
    ("--tau", "tau", float, "distillation temperature"),
    ("--eta", "eta", float, "alpha momentum rate"),
    ("--delta", "delta", float, "perturbation scale"),
    ("--samples", "num_samples", int, "Monte-Carlo perturbation draws"),
    ("--fit-bins", "fit_bins", int, "agreement histogram bins"),
    ("--train-per-class", "train_per_class", int, "labeled nodes per class"),
    ("--val-size", "val_size", int, "validation set size"),
    ("--test-size", "test_size", int, "test set size"),
    ("--train-ratio", "train_ratio", float, "ratio split instead of per-class"),
    ("--inductive-fraction", "inductive_fraction", float, "inductive holdout fraction"),
    ("--split-seed", "split_seed", int, "split seed (-1 follows run seed)"),
]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="", help="JSON config file")
    p.add_argument("--seed", type=int, default=None, help="single seed")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    for flag, dest, typ, help_text in _FLAG_FIELDS:
        p.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)


def _overrides(args) -> dict:
    over = {dest: getattr(args, dest, None) for _, dest, _, _ in _FLAG_FIELDS}
    if getattr(args, "seeds", None):
        over["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    elif getattr(args, "seed", None) is not None:
        over["seeds"] = (args.seed,)
    if getattr(args, "method", None):
        over["method"] = args.method
    return over


def build_parser() -> Parser:
    parser = Parser(prog="krd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bundle")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--intra", type=float, default=0.3)
    p.add_argument("--inter", type=float, default=0.02)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("validate", help="validate a bundle directory")
    p.add_argument("bundle")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("train-teacher", help="pretrain the GCN teacher")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("quantify", help="export per-node reliability")
    p.add_argument("--bundle", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_quantify)

    p = sub.add_parser("distill", help="train a student (krd, glnn, or mlp)")
    p.add_argument("--method", choices=("krd", "glnn", "mlp"), default=None)
    _add_run_flags(p)
    p.set_defaults(fn=cmd_distill)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", default="transductive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-per-class", type=int, default=20)
    p.add_argument("--val-size", type=int, default=500)
    p.add_argument("--test-size", type=int, default=1000)
    p.add_argument("--train-ratio", type=float, default=0.0)
    p.add_argument("--inductive-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=-1)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="grid over lambda/eta values and seeds")
    p.add_argument("--method", choices=("krd", "glnn", "mlp"), default=None)
    p.add_argument("--lambdas", default="", help="comma-separated lambda values")
    p.add_argument("--etas", default="", help="comma-separated eta values")
    _add_run_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("bench", help="time the compiled and python kernels")
    p.add_argument("--values", type=int, default=4_000_000)
    p.add_argument("--nodes", type=int, default=2000)
    p.add_argument("--degree", type=int, default=10)
    p.add_argument("--width", type=int, default=64)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LoadError, FormatError, ContractError, FitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except KrdError as exc:  # any new family member defaults to a data error
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
