"""Command line entry point: ``tenantmask <command> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime errors.
Results go to standard output, errors to standard error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import model as model_io
from .config import CONFIG_ENV, resolve_config
from .corpus import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_by_label_partition,
    split_within_class,
    train_test_split,
)
from .errors import TenantMaskError
from .features import featurize_many
from .harness import emit_epoch_curves, run_comparison, write_outputs
from .labelspace import LabelSpace
from .metrics import evaluate_model
from .model import train
from .predictor import predict_for_tenant, predict_unrestricted

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_ref(value):
    tenant, sep, path = value.partition("=")
    if not sep:
        return Path(value).stem, Path(value)
    if not tenant or not path:
        raise argparse.ArgumentTypeError(f"expected TENANT=PATH, got {value!r}")
    return tenant, Path(path)


def _print_dataset_summary(d, path):
    print(f"{path}\t{d.tenant}\t{len(d)} examples\t{len(d.labels)} labels")


# -- corpus ----------------------------------------------------------------


def cmd_split_by_label(args):
    d = load_dataset(args.input, args.tenant or Path(args.input).stem)
    left, right = split_by_label_partition(d, args.left, args.order)
    save_dataset(left, args.out_left)
    save_dataset(right, args.out_right)
    _print_dataset_summary(left, args.out_left)
    _print_dataset_summary(right, args.out_right)


def cmd_split_within_class(args):
    d = load_dataset(args.input, args.tenant or Path(args.input).stem)
    left, right = split_within_class(d, args.fraction, args.seed)
    save_dataset(left, args.out_left)
    save_dataset(right, args.out_right)
    _print_dataset_summary(left, args.out_left)
    _print_dataset_summary(right, args.out_right)


def cmd_train_test(args):
    d = load_dataset(args.input, args.tenant or Path(args.input).stem)
    tr, te = train_test_split(d, args.test_fraction, args.seed)
    save_dataset(tr, args.out_train)
    save_dataset(te, args.out_test)
    _print_dataset_summary(tr, args.out_train)
    _print_dataset_summary(te, args.out_test)


def cmd_synth(args):
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if "synthetic" in data:
            data = data["synthetic"]
        spec = SyntheticSpec.from_dict(data)
    else:
        spec = SyntheticSpec()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for d in generate_synthetic(spec):
        path = out / f"{d.tenant}.jsonl"
        save_dataset(d, path)
        _print_dataset_summary(d, path)


# -- train / evaluate / predict ---------------------------------------------


def _configs(args):
    cfg = resolve_config(args.config)
    fcfg, tcfg = cfg.featurizer, cfg.train
    if args.dims is not None:
        fcfg = dataclasses.replace(fcfg, dims=args.dims)
    overrides = {
        k: v
        for k, v in {
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
            "hidden_dim": args.hidden_dim,
            "batch_size": args.batch_size,
            "seed": args.seed,
        }.items()
        if v is not None
    }
    return fcfg, dataclasses.replace(tcfg, **overrides)


def cmd_train(args):
    refs = args.data
    if args.tenant:
        if len(refs) != 1:
            raise UsageError("--tenant trains on exactly one --data file")
        refs = [(args.tenant, refs[0][1])]
    datasets = [load_dataset(path, tenant) for tenant, path in refs]
    if len({d.tenant for d in datasets}) != len(datasets):
        raise UsageError("tenant ids must be unique")
    fcfg, tcfg = _configs(args)
    space = LabelSpace.from_tenants((d.tenant, d.labels) for d in datasets)
    texts = [t for d in datasets for t in d.texts]
    y = np.array([space.local_to_global(ex.tenant, ex.label) for d in datasets for ex in d], dtype=np.int64)
    eval_set = None
    if args.test:
        tests = [load_dataset(path, tenant) for tenant, path in args.test]
        eval_set = (
            featurize_many(fcfg, [t for d in tests for t in d.texts]),
            np.array([space.local_to_global(ex.tenant, ex.label) for d in tests for ex in d], dtype=np.int64),
        )
    name = "unified" if args.unified else f"dedicated-{datasets[0].tenant}"
    m, trace = train(featurize_many(fcfg, texts), y, tcfg, space, fcfg, eval_set=eval_set, name=name)
    size = model_io.save(m, args.out)
    for rec in trace:
        print(f"epoch {rec.epoch}: loss={rec.train_loss:.4f} train_acc={rec.train_accuracy:.4f} "
              f"test_acc={rec.test_accuracy:.4f}")
    print(f"wrote {args.out} ({size} bytes, {m.n_classes} classes)")
    if args.curves:
        emit_epoch_curves([trace], args.curves)


def cmd_evaluate(args):
    m = model_io.load(args.model)
    tenant, path = args.data
    d = load_dataset(path, tenant)
    report = evaluate_model(m, d, tenant, masked=not args.unmasked)
    names = {g: f"{t}/{lab}" for g, (t, lab) in enumerate(m.label_space.entries)}
    mode = "unmasked" if args.unmasked else "masked"
    print(f"# {mode} evaluation of tenant {tenant}")
    print(report.to_text(names), end="")
    if args.json:
        Path(args.json).write_text(report.to_json(names), encoding="utf-8")
    if args.confusion_csv:
        labels = [names[g] for g in report.confusion.labelset]
        Path(args.confusion_csv).write_text(report.confusion.to_csv(labels), encoding="utf-8")


def cmd_predict(args):
    from .service import prediction_body

    m = model_io.load(args.model)
    if args.tenant:
        pred = predict_for_tenant(m, args.tenant, args.text, args.k)
    else:
        pred = predict_unrestricted(m, args.text, args.k)
    if args.json:
        print(json.dumps(prediction_body(pred, with_tenant=True), ensure_ascii=False))
        return
    print(f"{pred.tenant}\t{pred.label}\t{pred.confidence:.6f}")
    for a in pred.alternatives[1:]:
        print(f"  {a.tenant}\t{a.label}\t{a.probability:.6f}")


def cmd_compare(args):
    cfg = resolve_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.epochs is not None:
        cfg.train = dataclasses.replace(cfg.train, epochs=args.epochs)
    if args.n_jobs is not None:
        cfg.n_jobs = args.n_jobs
    out = Path(args.out_dir) if args.out_dir else cfg.output_dir
    if cfg.synthetic is not None:
        datasets = generate_synthetic(cfg.synthetic)
    else:
        datasets = [load_dataset(ref.path, ref.tenant) for ref in cfg.datasets]
    result = run_comparison(datasets, cfg.train, cfg.split, cfg.featurizer, model_dir=out / "models", n_jobs=cfg.n_jobs)
    curves = write_outputs(result, out)
    print(result.report.to_text(), end="")
    print(f"wrote {out / 'report.json'}, {len(result.model_paths)} models and {len(curves)} epoch-curve files")


def cmd_serve(args):
    from .service import ServiceConfig, serve

    cfg = ServiceConfig(
        host=args.host,
        port=args.port,
        model_path=Path(args.model),
        top_k=args.top_k,
        max_body_bytes=args.max_body_bytes,
        timeout_s=args.timeout,
    )
    print(f"serving {args.model} on http://{cfg.host}:{cfg.port}", flush=True)
    serve(cfg)


# -- parser ----------------------------------------------------------------


def _add_train_overrides(p):
    p.add_argument("--config", help=f"run configuration file (default: ${CONFIG_ENV} or the bundled default)")
    p.add_argument("--dims", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)


def build_parser():
    parser = _Parser(prog="tenantmask", description="Multi-tenant intent classification with tenant masks.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    corpus = sub.add_parser("corpus", help="prepare datasets")
    csub = corpus.add_subparsers(dest="corpus_command", metavar="action", parser_class=_Parser)
    csub.required = True

    p = csub.add_parser("split-by-label", help="split a dataset by label partition")
    p.add_argument("--input", required=True)
    p.add_argument("--tenant")
    p.add_argument("--left", type=int, required=True, help="number of labels for the left side")
    p.add_argument("--order", choices=["lexicographic", "first_seen"], default="lexicographic")
    p.add_argument("--out-left", required=True)
    p.add_argument("--out-right", required=True)
    p.set_defaults(func=cmd_split_by_label)

    p = csub.add_parser("split-within-class", help="split every class in two")
    p.add_argument("--input", required=True)
    p.add_argument("--tenant")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-left", required=True)
    p.add_argument("--out-right", required=True)
    p.set_defaults(func=cmd_split_within_class)

    p = csub.add_parser("train-test", help="stratified train/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--tenant")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=cmd_train_test)

    p = csub.add_parser("synth", help="generate a synthetic multi-tenant corpus")
    p.add_argument("--spec", help="YAML/JSON synthetic spec (or a run config with a 'synthetic' section)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a dedicated or unified model")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--tenant", help="train a dedicated model for this tenant")
    mode.add_argument("--unified", action="store_true", help="train one model over every --data tenant")
    p.add_argument("--data", type=_data_ref, action="append", required=True, metavar="[TENANT=]PATH")
    p.add_argument("--test", type=_data_ref, action="append", metavar="[TENANT=]PATH")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="directory for the epoch-curve CSV")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model on one tenant's data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", type=_data_ref, required=True, metavar="[TENANT=]PATH")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--masked", action="store_true", help="restrict to the tenant's labels (default)")
    mode.add_argument("--unmasked", action="store_true", help="predict over every class")
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--confusion-csv", help="also write the confusion matrix as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="dedicated-vs-unified comparison")
    p.add_argument("--config", help=f"run configuration file (default: ${CONFIG_ENV} or the bundled default)")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-jobs", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="serve a model over HTTP")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--max-body-bytes", type=int, default=64 * 1024)
    p.add_argument("--timeout", type=float, default=5.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("predict", help="classify one text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--tenant", help="restrict to this tenant (omit for the unrestricted baseline)")
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tenantmask: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TenantMaskError, OSError) as exc:
        print(f"tenantmask: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
