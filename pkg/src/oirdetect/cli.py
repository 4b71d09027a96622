"""Command-line pipelines: corpus ingestion, feature extraction, context
export, training, evaluation, scenario tables, and explanations.

Every artifact-producing command writes a run manifest next to its
outputs (config hash, seeds, input hashes, output paths) so a run can be
reproduced from the manifest alone.  Exit codes: 0 success, 1 data or
processing error, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    module_version: str
    timestamp: str
    input_hashes: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> None:
        (out_dir / "manifest.json").write_text(
            json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(args, inputs: list[Path], outputs: list[Path]) -> RunManifest:
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k != "func" and not callable(v)}
    cfg_hash = hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()
    return RunManifest(
        command=args.command, config_hash=cfg_hash,
        seed=getattr(args, "seed", 0), module_version=__version__,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        input_hashes={str(p): _sha256(p) for p in inputs if p.is_file()},
        outputs=[str(p) for p in outputs])


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(path: str):
    from .corpus import parse_corpus
    return parse_corpus(path)


def _audio_provider(args):
    from .prosody import wav_audio_provider
    root = getattr(args, "audio_root", None)
    return wav_audio_provider(root if root else Path(args.corpus).parent)


def _runner(args, require_split: bool = True):
    from .corpus import split_dataset
    from .scenarios import ScenarioRunner
    ds = _load_dataset(args.corpus)
    if ds.split_assignment is None:
        if require_split:
            ds = split_dataset(ds, (0.7, 0.15, 0.15), args.seed)
    vocab = None
    vocab_path = getattr(args, "vocab", None)
    if vocab_path:
        from .linguistic import BigramVocabulary
        vocab = BigramVocabulary.from_json(
            Path(vocab_path).read_text(encoding="utf-8"))
    return ds, ScenarioRunner(ds, _audio_provider(args), seed=args.seed,
                              vocab=vocab)


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    from .corpus import serialize_corpus, split_dataset
    from .synth import synth_corpus
    out = _out_dir(args)
    ds = synth_corpus(args.n, args.ri_fraction, args.noise, args.seed, out)
    ds = split_dataset(ds, (0.7, 0.15, 0.15), args.seed)
    corpus_path = out / "corpus.jsonl"
    corpus_path.write_text(serialize_corpus(ds), encoding="utf-8")
    _manifest(args, [], [corpus_path]).write(out)
    print(f"wrote {corpus_path} ({len(ds.segments)} segments)")
    return 0


def cmd_ingest(args) -> int:
    from .corpus import (balance_dataset, serialize_corpus, split_dataset,
                         validate_oir)
    out = _out_dir(args)
    ds = _load_dataset(args.input)
    violations = validate_oir(ds)
    for v in violations:
        print(f"violation {v.rule} in {v.sequence_id}: {v.detail}",
              file=sys.stderr)
    if violations and args.strict:
        return 1
    if args.balance_rd is not None:
        ds = balance_dataset(ds, args.balance_rd, args.seed)
    ds = split_dataset(ds, tuple(args.ratios), args.seed)
    corpus_path = out / "corpus.jsonl"
    corpus_path.write_text(serialize_corpus(ds), encoding="utf-8")
    _manifest(args, [Path(args.input)], [corpus_path]).write(out)
    print(f"wrote {corpus_path}")
    return 0


def cmd_extract(args) -> int:
    from .features import write_csv, write_pfv1
    out = _out_dir(args)
    ds = _load_dataset(args.corpus)
    if args.kind == "prosody":
        from .prosody import ProsodicExtractor
        matrix = ProsodicExtractor(_audio_provider(args)).transform(ds)
        stem = "prosodic"
    else:
        from .linguistic import LinguisticFeaturizer
        featurizer = LinguisticFeaturizer().fit(ds)
        matrix = featurizer.transform(ds)
        stem = "linguistic"
        (out / "bigram_vocab.json").write_text(
            featurizer.vocab_.to_json(), encoding="utf-8")
    csv_path = out / f"{stem}.csv"
    write_csv(matrix, csv_path)
    outputs = [csv_path]
    if args.format == "pfv1":
        bin_path = out / f"{stem}.pfv1"
        write_pfv1(matrix, bin_path)
        outputs.append(bin_path)
    _manifest(args, [Path(args.corpus)], outputs).write(out)
    print(f"wrote {csv_path} ({len(matrix.ids)} rows, "
          f"{len(matrix.names)} features)")
    return 0


def cmd_context(args) -> int:
    from .context import (ContextConfig, assemble_micro_context,
                          write_context_jsonl)
    out = _out_dir(args)
    ds = _load_dataset(args.corpus)
    window = "max" if args.window == "max" else int(args.window)
    cfg = ContextConfig(args.mode, window, args.max_tokens)
    rows = []
    for dlg in ds.dialogue_ids():
        segs = ds.dialogue_segments(dlg)
        for i, seg in enumerate(segs):
            if seg.role in ("RI", "RD"):
                rows.append((seg.segment_id,
                             assemble_micro_context(segs, i, cfg)))
    path = out / "context.jsonl"
    write_context_jsonl(rows, path)
    _manifest(args, [Path(args.corpus)], [path]).write(out)
    print(f"wrote {path} ({len(rows)} contexts)")
    return 0


def cmd_embed_import(args) -> int:
    from .embeddings import load_embeddings
    store = load_embeddings(args.file)
    print(f"{args.file}: modality={store.modality} dim={store.dim} "
          f"count={len(store)} model={store.model_tag!r}")
    if args.corpus:
        ds = _load_dataset(args.corpus)
        missing = [s.segment_id for s in ds.classification_segments()
                   if s.segment_id not in store.vectors]
        if missing:
            print(f"{len(missing)} classification segments missing "
                  f"(first: {missing[0]})", file=sys.stderr)
            return 1
        print("all classification segments covered")
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    ds, runner = _runner(args)
    clf, metrics = runner.run_holdout(args.scenario, args.context)
    ckpt = out / "model.oirm"
    clf.save(ckpt)
    outputs = [ckpt]
    if runner.featurizer_ is not None and runner.featurizer_.vocab_:
        vocab_path = out / "bigram_vocab.json"
        vocab_path.write_text(runner.featurizer_.vocab_.to_json(),
                              encoding="utf-8")
        outputs.append(vocab_path)
    p, r, f1 = metrics
    print(f"{args.scenario} [{args.context}] "
          f"test precision={p:.1f} recall={r:.1f} macroF1={f1:.1f}")
    _manifest(args, [Path(args.corpus)], outputs).write(out)
    return 0


def cmd_cv(args) -> int:
    from .evaluation import MetricsTable
    out = _out_dir(args)
    ds, runner = _runner(args, require_split=False)
    folds = runner.run_cv(args.scenario, args.context, k=args.folds)
    table = MetricsTable()
    table.rows.append(MetricsTable.aggregate(args.scenario, args.context,
                                             folds))
    path = out / "cv_metrics.csv"
    table.to_csv(path)
    print(table.to_markdown())
    _manifest(args, [Path(args.corpus)], [path]).write(out)
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import MetricsTable, compute_metrics
    from .model import FusionClassifier
    out = _out_dir(args)
    ds, runner = _runner(args)
    runner.prepare()
    clf = FusionClassifier.load(args.checkpoint)
    ids = runner.data.splits[args.split]
    bundle = runner.bundle(ids, clf.modalities, args.context)
    preds = clf.predict(bundle)
    p, r, f1 = compute_metrics(preds, runner._subset_y(ids))
    table = MetricsTable()
    table.rows.append(MetricsTable.aggregate(
        Path(args.checkpoint).stem, args.context, [(p, r, f1)]))
    path = out / "eval_metrics.csv"
    table.to_csv(path)
    print(f"{args.split}: precision={p:.1f} recall={r:.1f} macroF1={f1:.1f}")
    _manifest(args, [Path(args.corpus), Path(args.checkpoint)],
              [path]).write(out)
    return 0


def cmd_scenarios(args) -> int:
    from .scenarios import (context_sweep, interaction_analysis,
                            modality_comparison)
    out = _out_dir(args)
    ds, runner = _runner(args)
    outputs = []
    if args.rq in (1, 2):
        table = modality_comparison(runner, cv_folds=args.folds)
        path = out / f"rq{args.rq}_metrics.csv"
        table.to_csv(path)
        print(table.to_markdown())
        outputs.append(path)
    elif args.rq == 4:
        table = context_sweep(runner, cv_folds=args.folds)
        path = out / "rq4_metrics.csv"
        table.to_csv(path)
        print(table.to_markdown())
        outputs.append(path)
    else:
        result = interaction_analysis(runner, seed=args.seed)
        path = out / "rq3_interactions.json"
        path.write_text(json.dumps({
            "segment_id": result["segment_id"],
            "base_value": result["base_value"],
            "attributions": [[a.feature, a.shap]
                             for a in result["attributions"]],
            "synergies": result["synergies"],
        }, indent=2), encoding="utf-8")
        print(f"wrote {path}")
        outputs.append(path)
    _manifest(args, [Path(args.corpus)], outputs).write(out)
    return 0


def cmd_explain(args) -> int:
    args.rq = 3
    return cmd_scenarios(args)


def cmd_report_errors(args) -> int:
    from .evaluation import error_report
    out = _out_dir(args)
    ds, runner = _runner(args)
    runner.prepare()
    clf, _ = runner.run_holdout(args.scenario, args.context)
    ids = runner.data.splits["test"]
    bundle = runner.bundle(ids, clf.modalities, args.context)
    probs = clf.predict_proba(bundle)
    segs = [ds.by_id(i) for i in ids]
    # standardized handcrafted features give the per-instance diagnostics
    feat_names, standardized = [], None
    if "pros" in clf.modalities:
        values, present = bundle["pros"]
        std = clf.standardizers_["pros"]
        z = std.transform(values, present)
        kept = std.kept
        feat_names = [runner.data.pros.names[i] for i in kept]
        standardized = z[:, :len(kept)]
    report = error_report(
        ids, [s.transcript for s in segs], [s.oir_type for s in segs],
        probs, runner._subset_y(ids), feat_names or None, standardized)
    path = out / "error_report.json"
    report.to_json(path)
    print(report.to_markdown())
    _manifest(args, [Path(args.corpus)], [path]).write(out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default already exits 2
        self.print_usage(sys.stderr)
        raise SystemExit(2) if False else super().error(message)


def _apply_config(args, parser_defaults: dict) -> None:
    """TOML config: [common] plus per-subcommand sections; explicit flags
    win over file values, file values win over defaults."""
    if not getattr(args, "config", None):
        return
    with open(args.config, "rb") as fh:
        cfg = tomllib.load(fh)
    merged = dict(cfg.get("common", {}))
    merged.update(cfg.get(args.command.replace("-", "_"), {}))
    for key, value in merged.items():
        key = key.replace("-", "_")
        if hasattr(args, key) and getattr(args, key) == \
                parser_defaults.get(key):
            setattr(args, key, value)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out")
    common.add_argument("--threads", type=int, default=1,
                        help="math library thread cap")

    parser = _Parser(prog="oirdetect",
                     description="repair initiation detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common])
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--ri-fraction", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common])
    p.add_argument("--input", required=True)
    p.add_argument("--balance-rd", type=int, default=None)
    p.add_argument("--ratios", type=float, nargs=3,
                   default=[0.7, 0.15, 0.15])
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", parents=[common])
    p.add_argument("kind", choices=["prosody", "linguistic"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--audio-root")
    p.add_argument("--format", choices=["csv", "pfv1"], default="csv")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("context", parents=[common])
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", default="Full",
                   choices=["Past", "Future", "Current", "Full"])
    p.add_argument("--window", default="max")
    p.add_argument("--max-tokens", type=int, default=384)
    p.set_defaults(func=cmd_context)

    p = sub.add_parser("embed-import", parents=[common])
    p.add_argument("--file", required=True)
    p.add_argument("--corpus")
    p.set_defaults(func=cmd_embed_import)

    scenario_flags = argparse.ArgumentParser(add_help=False)
    scenario_flags.add_argument("--corpus", required=True)
    scenario_flags.add_argument("--audio-root")
    scenario_flags.add_argument("--scenario", default="Multi_Ours")
    scenario_flags.add_argument("--context", default="Full(2)")
    scenario_flags.add_argument("--vocab")

    p = sub.add_parser("train", parents=[common, scenario_flags])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", parents=[common, scenario_flags])
    p.add_argument("--folds", type=int, default=10)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("evaluate", parents=[common, scenario_flags])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test",
                   choices=["train", "val", "test"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scenarios", parents=[common, scenario_flags])
    p.add_argument("--rq", type=int, required=True, choices=[1, 2, 3, 4])
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("explain", parents=[common, scenario_flags])
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report-errors", parents=[common, scenario_flags])
    p.set_defaults(func=cmd_report_errors)

    defaults = {}
    for action in sub.choices.values():
        for a in action._actions:
            defaults[a.dest] = a.default
    return parser, defaults


def main(argv: list[str] | None = None) -> int:
    parser, defaults = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        _apply_config(args, defaults)
        import torch
        torch.set_num_threads(max(1, args.threads))
        return args.func(args)
    except (OSError, ValueError, KeyError, Exception) as exc:
        if isinstance(exc, KeyboardInterrupt):
            raise
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
