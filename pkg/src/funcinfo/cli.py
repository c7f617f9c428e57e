"""
Command-line driver for functional-information attribution.

Subcommands: generate, train, explain, evaluate, verify, compare. Each
takes ``--config FILE`` (a JSON object keyed by option name); explicit flags
override config values. ``FUNCINFO_SEED`` sets the default seed.

Exit codes: 0 success, 1 failed verification, 2 configuration or input
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import DEFAULT_JITTER, CovarianceScheme, estimate_class_covariance
from .data import GroupedSuite, blobs_spec, generate, grouped_suite, load_csv, save_csv
from .errors import NotPositiveDefinite, ParseError, TooFewPoints
from .evaluation import DEFAULT_FRACTIONS, Masker, spearman
from .explain import METHODS, EstimatorConfig, default_noise_variance, explain, load_attribution, save_attribution
from .heatmap import image_scores, to_gray, write_pgm
from .model import accuracy, init_mlp, load_checkpoint, save_checkpoint, train
from .pipeline import class_covariances, compare_methods
from .verify import VerifyConfig, run_all

EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("FUNCINFO_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"FUNCINFO_SEED must be an integer, got {raw!r}") from None


def _meta(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return {"tool": "funcinfo", "version": __version__, "command": args.command, "config_hash": digest}


def _header_line(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def _load_data(path, label="--data"):
    if not path or not Path(path).is_file():
        raise ConfigError(f"{label}: no such file: {path}")
    return load_csv(path)


def _load_model(path):
    if not path or not Path(path).is_file():
        raise ConfigError(f"--model: no such file: {path}")
    return load_checkpoint(path)


def _scheme(text: str, data) -> CovarianceScheme:
    parts = text.split(":")
    kind = parts[0]
    if kind in ("full", "diagonal") and len(parts) == 1:
        return CovarianceScheme(kind)
    if kind == "identity":
        return CovarianceScheme("identity", variance=float(parts[1]) if len(parts) > 1 else 1.0)
    if kind == "shared":
        if len(parts) == 3:
            return CovarianceScheme("shared", int(parts[1]), int(parts[2]))
        if len(parts) == 1:
            return CovarianceScheme.shared_for(data.layout)
    raise ConfigError(f"unknown covariance scheme {text!r}")


def _estimator(args) -> EstimatorConfig:
    return EstimatorConfig(n=args.n, seed=args.seed, value_floor=args.value_floor, normalize_by_f=args.normalize)


def cmd_generate(args) -> int:
    _require(args, "out")
    if args.suite == "grouped":
        spec = grouped_suite(args.seed, GroupedSuite(m_per_class=args.m_per_class))
    elif args.suite == "blobs":
        spec = blobs_spec(args.seed, m_per_class=args.m_per_class)
    else:
        raise ConfigError(f"unknown suite {args.suite!r}")
    data, informative = generate(spec)
    save_csv(data, args.out)
    print(f"wrote {data.m} rows, d={data.d}, k={data.num_classes}; informative features "
          f"{np.flatnonzero(informative).tolist()}")
    return 0


def cmd_train(args) -> int:
    _require(args, "data", "out")
    data = _load_data(args.data)
    widths = [data.d] + [int(h) for h in args.hidden] + [data.num_classes]
    model, losses = train(init_mlp(widths, args.seed), data.features, data.labels,
                          args.epochs, args.lr, args.batch_size, args.seed)
    meta = _meta(args)
    save_checkpoint(model, args.out, meta)
    loss_path = args.loss_out or str(args.out) + ".loss.csv"
    lines = [_header_line(meta), "epoch,loss"] + [f"{i + 1},{format(v, '.17g')}" for i, v in enumerate(losses)]
    Path(loss_path).write_text("\n".join(lines) + "\n")
    print(f"train accuracy {accuracy(model, data.features, data.labels):.4f}; "
          f"final loss {losses[-1] if losses else float('nan'):.6f}")
    return 0


def _target(spec: str, model, x, label) -> int:
    if spec == "gt":
        return int(label)
    if spec == "predicted":
        return int(np.argmax(model.predict_proba(x[None, :])[0]))
    try:
        y = int(spec)
    except ValueError:
        raise ConfigError(f"--target must be gt, predicted or a class index, got {spec!r}") from None
    if not 0 <= y < model.k:
        raise ConfigError(f"--target {y} outside 0..{model.k - 1}")
    return y


def cmd_explain(args) -> int:
    _require(args, "model", "data", "out")
    if args.method not in METHODS:
        raise ConfigError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    model = _load_model(args.model)
    data = _load_data(args.data)
    if not 0 <= args.index < data.m:
        raise ConfigError(f"--index {args.index} outside 0..{data.m - 1}")
    x = data.features[args.index]
    y = _target(args.target, model, x, data.labels[args.index])
    cov = None
    scheme = _scheme(args.scheme, data)
    if args.method == "ours":
        cov_data = _load_data(args.cov_data, "--cov-data") if args.cov_data else data
        cov = estimate_class_covariance(cov_data, y, scheme, args.jitter, args.pooled)
    sigma2 = args.sigma2 if args.sigma2 is not None else default_noise_variance(np.ptp(data.features))
    a = explain(args.method, model, y, x, _estimator(args), cov, sigma2)
    meta = _meta(args)
    extra = dict(meta, index=args.index, covariance_scheme=scheme.tag if args.method == "ours" else None)
    save_attribution(a, args.out, extra)
    if data.layout.kind == "image":
        pgm = args.heatmap or str(Path(args.out).with_suffix(".pgm"))
        write_pgm(pgm, to_gray(image_scores(a.scores, data.layout)), json.dumps(meta, sort_keys=True))
    print(f"{args.method} class {y}: top features {np.argsort(-a.scores, kind='stable')[:5].tolist()}")
    return 0


def cmd_evaluate(args) -> int:
    _require(args, "model", "data", "out")
    fractions = [float(q) for q in args.fractions]
    if len(fractions) < 2:
        raise TooFewPoints("AUC needs at least two masking fractions")
    for m in args.methods:
        if m not in METHODS and m != "random":
            raise ConfigError(f"unknown method {m!r}")
    model = _load_model(args.model)
    full = _load_data(args.data)
    test = full.subset(slice(0, args.limit)) if args.limit else full
    train_data = _load_data(args.train_data, "--train-data") if args.train_data else full
    covs = None
    scheme = _scheme(args.scheme, train_data)
    if "ours" in args.methods:
        covs = class_covariances(train_data, scheme, args.jitter, args.pooled)
        needed = set(test.labels.tolist()) | set(model.predict(test.features).tolist())
        missing = needed - set(covs)
        if missing:
            raise ConfigError(f"no training examples for classes {sorted(missing)}")
    sigma2 = args.sigma2 if args.sigma2 is not None else default_noise_variance(np.ptp(train_data.features))
    if test.layout.kind == "tokens":
        t, e = test.layout.shape
        masker = Masker("token_rows", row=(args.mask_value,) * e, layout=(t, e))
    else:
        masker = Masker("value", args.mask_value)
    results = compare_methods(model, test, args.methods, _estimator(args), covs, sigma2, fractions, masker)

    meta = dict(_meta(args), anchor_included=fractions[0] == 0.0, ties="lower index masked first",
                covariance_scheme=scheme.tag, mask_value=args.mask_value)
    curve_lines = [_header_line(meta), "method,target,fraction,metric,value"]
    summary_lines = [_header_line(meta), "method,target,metric,auc"]
    for r in results:
        c = r["curve"]
        for q, v in zip(c.fractions, c.values):
            curve_lines.append(f"{r['method']},{r['target']},{format(q, '.17g')},{r['metric']},{format(v, '.17g')}")
        summary_lines.append(f"{r['method']},{r['target']},{r['metric']},{format(c.auc, '.17g')}")
    Path(args.out).write_text("\n".join(curve_lines) + "\n")
    summary = args.summary or str(Path(args.out).with_suffix("")) + ".summary.csv"
    Path(summary).write_text("\n".join(summary_lines) + "\n")
    for line in summary_lines[2:]:
        print(line)
    return 0


def cmd_verify(args) -> int:
    cfg = VerifyConfig(seed=args.seed, trials=args.trials, n_bound=args.n_bound, n_exact=args.n_exact,
                       tamper=args.tamper)
    checks = run_all(cfg)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_VERIFY_FAILED if failed else 0


def cmd_compare(args) -> int:
    _require(args, "first", "second")
    for p in (args.first, args.second):
        if not Path(p).is_file():
            raise ConfigError(f"no such attribution file: {p}")
    a, b = load_attribution(args.first), load_attribution(args.second)
    rho = spearman(a.scores, b.scores)
    print(f"spearman {rho:.6f}")
    return 0


def _add_common(p, seed=True):
    p.add_argument("--config", help="JSON file of option values; flags override it")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="random seed (default: $FUNCINFO_SEED or 0)")


def _add_estimator(p):
    p.add_argument("--n", type=int, default=64, help="Monte-Carlo samples per attribution (default 64)")
    p.add_argument("--normalize", action="store_true", help="divide each summand by f(z)")
    p.add_argument("--value-floor", type=float, default=1e-12, help="floor on f(z) when normalizing")
    p.add_argument("--scheme", default="full",
                   help="covariance: full, diagonal, identity[:var], shared or shared:BLOCK:GROUPS (default full)")
    p.add_argument("--jitter", type=float, default=DEFAULT_JITTER, help="relative diagonal jitter (default 1e-6)")
    p.add_argument("--pooled", action="store_true", help="one covariance from all classes")
    p.add_argument("--sigma2", type=float, default=None,
                   help="baseline noise variance (default 0.01 * data range^2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcinfo", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"funcinfo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset CSV")
    _add_common(p)
    p.add_argument("--suite", default="grouped", help="grouped or blobs (default grouped)")
    p.add_argument("--m-per-class", type=int, default=300)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train an MLP classifier")
    _add_common(p)
    p.add_argument("--data", help="training CSV")
    p.add_argument("--hidden", nargs="*", default=["32"], help="hidden layer widths (default 32)")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--loss-out", help="loss trace CSV (default <out>.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="attribute one example")
    _add_common(p)
    _add_estimator(p)
    p.add_argument("--model")
    p.add_argument("--data", help="CSV holding the example")
    p.add_argument("--cov-data", help="CSV for covariance estimation (default --data)")
    p.add_argument("--index", type=int, default=0, help="row of the example (default 0)")
    p.add_argument("--method", default="ours", help=f"one of {', '.join(METHODS)} (default ours)")
    p.add_argument("--target", default="predicted", help="gt, predicted or a class index (default predicted)")
    p.add_argument("--out", help="attribution CSV")
    p.add_argument("--heatmap", help="PGM path for image layouts (default <out>.pgm)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="negative-perturbation comparison of methods")
    _add_common(p)
    _add_estimator(p)
    p.add_argument("--model")
    p.add_argument("--data", help="test CSV")
    p.add_argument("--train-data", help="CSV for covariance estimation and noise scale (default: all rows of --data)")
    p.add_argument("--methods", nargs="+", default=["ours", "smoothgrad", "smoothgrad_sq", "vargrad", "random"])
    p.add_argument("--fractions", nargs="+", default=[str(q) for q in DEFAULT_FRACTIONS])
    p.add_argument("--mask-value", type=float, default=0.0)
    p.add_argument("--limit", type=int, default=0, help="use only the first LIMIT test rows")
    p.add_argument("--out", help="curve CSV")
    p.add_argument("--summary", help="AUC summary CSV (default <out stem>.summary.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="numerical checks of the entropy/Fisher bounds")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--n-bound", type=int, default=4000)
    p.add_argument("--n-exact", type=int, default=1_000_000)
    p.add_argument("--tamper", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="Spearman correlation of two attribution files")
    _add_common(p, seed=False)
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(func=cmd_compare)
    return parser


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"--config: no such file: {path}")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("--config must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        values = {k.replace("-", "_"): v for k, v in values.items()}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    if getattr(args, "seed", "absent") is None:
        args.seed = _default_seed()
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NotPositiveDefinite, TooFewPoints, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
