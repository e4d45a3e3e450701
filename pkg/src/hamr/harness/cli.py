"""Command line entry point.

Subcommands: train, eval, gen-data, consistency, gradcheck, report.
Every config key is also a flag (``--learning_rate 0.01``) that overrides the
config file; ``HAMR_SEED`` overrides the file's seed. Exit codes: 0 success,
1 failed check, 2 config error, 3 data error, 4 divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DivergenceError, HamrError
from ..metrics import imbalance_ratio
from .artifact import RunArtifact
from .config import FIELDS, load_config
from .data import load_dataset, save_dataset, save_embeddings

log = logging.getLogger("hamr")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    group = p.add_argument_group("config overrides")
    for name in FIELDS:
        group.add_argument(f"--{name}", dest=f"cfg_{name}", default=None, metavar="VALUE")


def _config_from_args(args):
    overrides = {name: getattr(args, f"cfg_{name}") for name in FIELDS
                 if getattr(args, f"cfg_{name}", None) is not None}
    return load_config(args.config, overrides)


def _dataset_for(cfg, data=None, embeddings=None):
    path = data or cfg.data
    if not path:
        raise ConfigError("no dataset given (use --data or data= in the config)")
    return load_dataset(path, embeddings or cfg.embeddings or None)


def cmd_train(args) -> int:
    from .trainer import train

    cfg = _config_from_args(args)
    ds = _dataset_for(cfg)
    out = args.output or cfg.output
    try:
        art = train(cfg, ds)
    except DivergenceError as exc:
        if out and exc.artifact is not None:
            exc.artifact.save(out)
            log.error("diagnostic artifact written to %s", out)
        raise
    if out:
        art.save(out)
    test = art.final.get("test", {}).get("f1", {})
    print(f"method={cfg.method} seed={cfg.seed} epochs={cfg.epochs} "
          f"test_macro_f1={test.get('macro_f1', float('nan')):.4f} "
          f"test_micro_f1={test.get('micro_f1', float('nan')):.4f} "
          f"seconds={art.wall_clock_seconds:.2f}")
    if out:
        print(f"artifact: {out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate

    art = RunArtifact.load(args.artifact)
    ds = load_dataset(args.data or art.config.get("data"), args.embeddings)
    report = evaluate(art, ds, args.split)
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=1))
        return 0
    print(f"split={args.split} macro_f1={report.f1.macro_f1:.4f} micro_f1={report.f1.micro_f1:.4f}")
    print("label,precision,recall,f1,support")
    for label, s in report.f1.per_class.items():
        print(f"{label},{s.precision:.4f},{s.recall:.4f},{s.f1:.4f},{s.support}")
    return 0


def cmd_gen_data(args) -> int:
    from .generate import generate_longtail, generate_sequences

    if args.kind == "cls":
        ds = generate_longtail(args.num_classes, args.imbalance_ratio, args.n_total, args.embed_dim,
                               args.separation, args.seed, args.noise)
    else:
        ds = generate_sequences(args.num_classes, args.imbalance_ratio, args.n_total, args.embed_dim,
                                args.separation, args.seed, args.noise)
    save_dataset(ds, args.out)
    if args.emb_out:
        save_embeddings(ds.embedding_matrix(), args.emb_out)
    counts = ds.label_counts()
    print(f"wrote {args.out}: {ds.kind} n={ds.n} d={ds.feature_dim} classes={ds.num_classes} "
          f"IR={imbalance_ratio(counts)} counts={counts.tolist()}")
    return 0


def cmd_consistency(args) -> int:
    from .consistency import format_consistency, run_consistency

    cfg = _config_from_args(args)
    result = run_consistency(cfg, _dataset_for(cfg))
    print(format_consistency(result))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(result, indent=1) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import check_meta_gradient, check_model_gradient

    results = [check_model_gradient(args.model_cases, args.seed),
               check_meta_gradient(args.meta_cases, args.seed)]
    for r in results:
        print(r.summary())
    return 0 if all(r.passed for r in results) else 1


def write_report(art: RunArtifact, out_dir, split: str = "test", figures: bool = True) -> list[Path]:
    """Quartile and per-class CSV tables, plus figures when ``figures`` is set."""
    if split not in art.final:
        raise ConfigError(f"artifact has no final report for split {split!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep = art.final[split]
    quart = rep["quartiles"]
    written = []
    qpath = out_dir / f"quartiles_{split}.csv"
    with qpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quartile", "mean_f1", "labels"])
        for q, m in quart["mean_f1"].items():
            w.writerow([q, "" if m is None else f"{m:.6f}", " ".join(quart["members"][q])])
    written.append(qpath)
    cpath = out_dir / f"per_class_{split}.csv"
    counts = art.dataset["train_label_counts"]
    with cpath.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "quartile", "train_count", "precision", "recall", "f1", "support"])
        for i, (label, s) in enumerate(rep["f1"]["per_class"].items()):
            count = counts[i] if i < len(counts) else ""
            w.writerow([label, quart["quartile_assignment"].get(label, ""), count,
                        f"{s['precision']:.6f}", f"{s['recall']:.6f}", f"{s['f1']:.6f}", s["support"]])
    written.append(cpath)
    if art.history:
        hpath = out_dir / "history.csv"
        keys = list(art.history[0])
        with hpath.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(art.history)
        written.append(hpath)
    if figures:
        from ..plotting import plot_history, plot_quartiles

        written.append(plot_quartiles(quart["mean_f1"], out_dir / f"quartiles_{split}.png"))
        if art.history:
            written.append(plot_history(art.history, out_dir / "history.png"))
    return written


def cmd_report(args) -> int:
    art = RunArtifact.load(args.artifact)
    written = write_report(art, args.out_dir, args.split, figures=not args.no_figures)
    quart = art.final[args.split]["quartiles"]["mean_f1"]
    print("quartile,mean_f1")
    for q, m in quart.items():
        print(f"{q},{'' if m is None else f'{m:.4f}'}")
    for p in written:
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hamr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write a run artifact")
    _add_config_flags(p)
    p.add_argument("--out", dest="output", help="artifact path (overrides output=)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved artifact on a split")
    p.add_argument("--artifact", required=True)
    p.add_argument("--data", help="dataset file (defaults to the artifact's data path)")
    p.add_argument("--embeddings")
    p.add_argument("--split", default="test")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-data", help="write a synthetic long-tailed dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--emb-out", help="also write an embedding sidecar")
    p.add_argument("--kind", choices=("cls", "seq"), default="cls")
    p.add_argument("--num-classes", type=int, default=10, help="classes (entity types for seq)")
    p.add_argument("--imbalance-ratio", type=float, default=50.0)
    p.add_argument("--n-total", type=int, default=4000, help="examples (sentences for seq)")
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("consistency", help="label-consistency audit of the hard set")
    _add_config_flags(p)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--model-cases", type=int, default=50)
    p.add_argument("--meta-cases", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="quartile tables, CSV and figures from an artifact")
    p.add_argument("--artifact", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HamrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
