"""Command-line entry point: ``bootparse <subcommand> ...``.

Every subcommand writes its outputs plus a ``<output>.manifest.json`` sidecar
recording inputs, config, seed and sha256 hashes. Exit codes: 0 ok, 1 usage
error, 2 data error, 3 translation backend error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .errors import BackendError, BootparseError, MrlError

log = logging.getLogger("bootparse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- helpers ------------------------------------------------------------------

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out, command, inputs, outputs, config, seed):
    """Sidecar next to ``out``. Paths are recorded as given; no timestamps so reruns match."""
    rec = {
        "tool": "bootparse",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(p): sha256(p) for p in outputs},
    }
    path = Path(str(out) + ".manifest.json")
    _write_json(path, rec)
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _overrides(args) -> dict:
    cfg = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip().replace("-", "_")] = v.strip()
    return cfg


def _take(cfg: dict, names) -> dict:
    return {k: cfg.pop(k) for k in list(cfg) if k in names}


def _no_leftovers(cfg: dict, command: str):
    if cfg:
        raise UsageError(f"{command}: unknown config option(s) {sorted(cfg)}")


def _aligner_config(cfg, args):
    from .aligner import AlignerConfig
    names = {f.name for f in fields(AlignerConfig)} | {"lambda"}
    d = _take(cfg, names)
    d["seed"] = args.seed
    if args.threads:
        d["workers"] = args.threads
    try:
        return AlignerConfig.from_dict(d)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"aligner config: {exc}") from exc


def _parser_config(cfg, args, base=None):
    from .parser import ParserConfig
    d = dict(base or {})
    d.update(_take(cfg, {f.name for f in fields(ParserConfig)}))
    d["seed"] = args.seed
    try:
        return ParserConfig.from_dict(d)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"parser config: {exc}") from exc


def _read_corpus(path):
    from .dataset import read_corpus
    return read_corpus(path)


def _read_sentences(path):
    """Token lists from a corpus file, or from plain text (one sentence per line)."""
    from .dataset import tokenize
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        is_corpus = "schema_version" in json.loads(first)
    except (ValueError, TypeError):
        is_corpus = False
    if is_corpus:
        return [list(ex.question_tokens) for ex in _read_corpus(path)]
    with open(path, encoding="utf-8") as fh:
        return [tokenize(line.strip()) for line in fh if line.strip()]


def _read_bitext(path):
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" in line:
                src, tgt = line.split("\t", 1)
            elif " ||| " in line:
                src, tgt = line.split(" ||| ", 1)
            else:
                raise BootparseError(f"{path}:{lineno}: expected 'source<TAB>target' or 'source ||| target'")
            pairs.append((src.lower().split(), tgt.lower().split()))
    return pairs


def _backend(args):
    from .translate import make_backend
    try:
        return make_backend(args.backend, lexicon=args.lexicon, cache_file=args.cache,
                            endpoint=args.endpoint)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _set_threads(args):
    if args.threads:
        import torch
        torch.set_num_threads(args.threads)


# -- subcommands ----------------------------------------------------------------

def cmd_ingest_top(args, cfg):
    from .dataset import ingest_top_tsv, write_corpus
    _no_leftovers(cfg, "ingest-top")
    corpus, report = ingest_top_tsv(args.input, args.split, args.lang, args.skip_malformed)
    write_corpus(corpus, args.out)
    rep_path = Path(str(args.out) + ".report.json")
    _write_json(rep_path, report.as_dict())
    write_manifest(args.out, "ingest-top", [args.input], [args.out, rep_path],
                   {"split": args.split, "lang": args.lang, "skip_malformed": args.skip_malformed},
                   args.seed)
    print(json.dumps(report.as_dict(), sort_keys=True))


def cmd_bootstrap(args, cfg):
    from .dataset import write_corpus
    from .placeholder import make_template
    from .projection import bootstrap_corpus
    from .translate import TranslationCache
    acfg = _aligner_config(cfg, args)
    _no_leftovers(cfg, "bootstrap")
    source = _read_corpus(args.input)
    backend = _backend(args)
    cache = TranslationCache(args.cache) if args.cache and args.backend != "file" else None
    corpus, report = bootstrap_corpus(source, backend, acfg, args.tgt, args.src, cache)
    write_corpus(corpus, args.out)
    rep_path = Path(str(args.out) + ".report.json")
    _write_json(rep_path, report.as_dict())
    outputs = [args.out, rep_path]
    if args.templates:
        from .errors import DataError
        with open(args.templates, "w", encoding="utf-8", newline="\n") as fh:
            for ex in source:
                try:
                    fh.write(f"{ex.id}\t" + make_template(ex).debug_string().replace("\n", "\t") + "\n")
                except DataError as exc:
                    fh.write(f"{ex.id}\t# {exc}\n")
        outputs.append(args.templates)
    inputs = [args.input] + [p for p in (args.lexicon,) if p]
    write_manifest(args.out, "bootstrap", inputs, outputs,
                   {"src": args.src, "tgt": args.tgt, "backend": args.backend,
                    "aligner": {k: getattr(acfg, k) for k in ("iterations", "lam", "p_null", "smoothing_alpha")}},
                   args.seed)
    print(json.dumps({k: v for k, v in report.as_dict().items() if k != "failures"}, sort_keys=True))


def cmd_align_train(args, cfg):
    from .aligner import train_aligner
    acfg = _aligner_config(cfg, args)
    _no_leftovers(cfg, "align-train")
    model = train_aligner(_read_bitext(args.bitext), acfg)
    model.save(args.out)
    write_manifest(args.out, "align-train", [args.bitext], [args.out],
                   {"iterations": acfg.iterations, "lam": acfg.lam, "p_null": acfg.p_null,
                    "smoothing_alpha": acfg.smoothing_alpha}, args.seed)
    print(json.dumps({"loglik": model.loglik_history[-1], "pairs": len(model.ttable)}))


def cmd_align(args, cfg):
    from .aligner import AlignmentModel, viterbi_align
    _no_leftovers(cfg, "align")
    model = AlignmentModel.load(args.model)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for src, tgt in _read_bitext(args.bitext):
            fh.write(viterbi_align(model, src, tgt).pharaoh() + "\n")
    write_manifest(args.out, "align", [args.model, args.bitext], [args.out], {}, args.seed)


def cmd_bpe_learn(args, cfg):
    from .bpe import learn_bpe, word_frequencies
    merges = int(_take(cfg, {"merges"}).get("merges", args.merges))
    _no_leftovers(cfg, "bpe-learn")
    sents = [s for path in args.input for s in _read_sentences(path)]
    model = learn_bpe(word_frequencies(sents), merges)
    model.save(args.out)
    write_manifest(args.out, "bpe-learn", args.input, [args.out], {"merges": merges}, args.seed)
    print(json.dumps({"merges": len(model.merges)}))


def cmd_pretrain_mlm(args, cfg):
    from .bpe import BpeModel
    from .parser import build_parser, mlm_pretrain, save_checkpoint
    _set_threads(args)
    extra = _take(cfg, {"epochs", "mlm_learning_rate", "mlm_batch_size"})
    pcfg = _parser_config(cfg, args)
    _no_leftovers(cfg, "pretrain-mlm")
    epochs = int(extra.get("epochs", args.epochs))
    bpe = BpeModel.load(args.bpe)
    train = _read_corpus(args.train)
    sents = [s for path in args.sentences for s in _read_sentences(path)]
    sents = [list(ex.question_tokens) for ex in train] + sents
    model = build_parser(bpe, train, pcfg, extra_sentences=sents)
    losses = mlm_pretrain(model, sents, epochs=epochs,
                          batch_size=int(extra.get("mlm_batch_size", 64)),
                          learning_rate=float(extra.get("mlm_learning_rate", 1e-3)), seed=args.seed)
    save_checkpoint(model, args.out, {"mlm_losses": losses, "pretrained": True,
                                      "train_langs": sorted(train.langs)})
    write_manifest(args.out, "pretrain-mlm", [args.bpe, args.train, *args.sentences], [args.out],
                   {"parser": pcfg.as_dict(), "epochs": epochs}, args.seed)
    print(json.dumps({"mlm_loss": losses[-1] if losses else None}))


_ARCH = ("enc_layers", "dec_layers", "model_dim", "heads", "ffn_dim", "copy", "max_decode_len")


def cmd_train(args, cfg):
    from .bpe import BpeModel
    from .parser import build_parser, load_checkpoint, save_checkpoint, set_unfreeze_schedule, train_parser
    _set_threads(args)
    sched = _take(cfg, {"unfreeze_rate", "gradual"})
    rate = float(sched.get("unfreeze_rate", args.unfreeze_rate))
    gradual = str(sched.get("gradual", args.gradual)).lower() in ("1", "true", "yes", "on")
    train = _read_corpus(args.train)
    dev = _read_corpus(args.dev) if args.dev else None
    inputs = [args.train] + ([args.dev] if args.dev else [])
    if args.init:
        model, _ = load_checkpoint(args.init)
        pcfg = _parser_config(cfg, args, base=model.config.as_dict())
        changed = [k for k in _ARCH if getattr(pcfg, k) != getattr(model.config, k)]
        if changed:
            raise UsageError(f"cannot change architecture options {changed} of an --init checkpoint")
        model.config = pcfg
        inputs.append(args.init)
    else:
        if not args.bpe:
            raise UsageError("train needs --bpe (or --init)")
        pcfg = _parser_config(cfg, args)
        model = build_parser(BpeModel.load(args.bpe), train, pcfg)
        inputs.append(args.bpe)
    _no_leftovers(cfg, "train")
    schedule = set_unfreeze_schedule(model, rate, gradual)
    model, history = train_parser(model, train, dev, pcfg, schedule, dev_exact_match=dev is not None)
    history["train_langs"] = sorted(train.langs)
    history["unfreeze"] = {"rate": rate, "gradual": gradual}
    save_checkpoint(model, args.out, history)
    write_manifest(args.out, "train", inputs, [args.out],
                   {"parser": pcfg.as_dict(), "unfreeze_rate": rate, "gradual": gradual}, args.seed)
    summary = {"best_epoch": history.get("best_epoch"), "steps": history["steps"]}
    if "best_dev_exact_match" in history:
        summary["dev_exact_match"] = history["best_dev_exact_match"]
    print(json.dumps(summary, sort_keys=True))


def cmd_predict(args, cfg):
    from .dataset import tokenize
    from .parser import decode_beam, load_checkpoint
    _set_threads(args)
    beam = int(_take(cfg, {"beam_size"}).get("beam_size", args.beam or 0)) or None
    _no_leftovers(cfg, "predict")
    model, _ = load_checkpoint(args.model)
    if args.question:
        items = [("q0", tokenize(args.question, args.lang))]
        inputs = [args.model]
    else:
        items = [(ex.id, list(ex.question_tokens)) for ex in _read_corpus(args.input)]
        inputs = [args.model, args.input]
    rows = []
    for ex_id, toks in items:
        r = decode_beam(model, toks, beam)
        rows.append({"id": ex_id, "mrl": r.mrl, "score": round(r.score, 6), "truncated": r.truncated})
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
        write_manifest(args.out, "predict", inputs, [args.out], {"beam_size": beam}, args.seed)
    else:
        for row in rows:
            print(f"{row['id']}\t{row['mrl']}")


def cmd_evaluate(args, cfg):
    from .evalkit import FilterList, Mode, run_harness
    from .parser import load_checkpoint
    from .translate import TranslationCache
    _set_threads(args)
    beam = int(_take(cfg, {"beam_size"}).get("beam_size", args.beam or 0)) or None
    _no_leftovers(cfg, "evaluate")
    try:
        mode = Mode.parse(args.mode)
    except ValueError as exc:
        raise UsageError(f"unknown mode {args.mode!r}") from exc
    model, history = load_checkpoint(args.model)
    test = _read_corpus(args.test)
    gold = _read_corpus(args.gold) if args.gold else None
    flt = None
    if args.filter:
        flt = FilterList.from_file(args.filter) if Path(args.filter).is_file() else FilterList.shipped(args.filter)
    backend = cache = None
    if mode is Mode.TRANSLATE_TEST:
        if not args.backend:
            raise UsageError("--mode translate-test needs --backend")
        backend = _backend(args)
        cache = TranslationCache(args.cache) if args.cache and args.backend != "file" else None
    train_langs = args.train_langs.split(",") if args.train_langs else history.get("train_langs")
    rep = run_harness(model, test, mode, backend, gold, flt, train_langs, beam, cache)
    print(rep.table())
    inputs = [args.model, args.test] + [p for p in (args.gold, args.lexicon) if p]
    if args.out:
        _write_json(args.out, rep.as_dict())
        write_manifest(args.out, "evaluate", inputs, [args.out],
                       {"mode": mode.value, "beam_size": beam, "filter": args.filter}, args.seed)


def cmd_report(args, cfg):
    from .evalkit import EvalReport
    _no_leftovers(cfg, "report")
    lines = []
    for path in args.input:
        with open(path, encoding="utf-8") as fh:
            rec = json.load(fh)
        lines.append(f"== {path}")
        if "exact_match_accuracy" in rec:
            known = {"n", "exact_match_accuracy", "filtered_accuracy", "per_intent", "mismatches"}
            rep = EvalReport(rec["n"], rec["exact_match_accuracy"], rec.get("filtered_accuracy"),
                             rec.get("per_intent", {}), rec.get("mismatches", []),
                             {k: v for k, v in rec.items() if k not in known})
            lines.append(rep.table())
            for m in rec.get("mismatches", [])[:args.show]:
                lines.append(f"  {m[0]}\n    gold {m[1]}\n    pred {m[2]}")
        else:
            w = max((len(k) for k in rec), default=0)
            for k in sorted(rec):
                v = rec[k]
                if isinstance(v, (dict, list)):
                    v = json.dumps(v, ensure_ascii=False, sort_keys=True)
                    v = v if len(v) <= 80 else v[:77] + "..."
                lines.append(f"{k:<{w}}  {v}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        write_manifest(args.out, "report", args.input, [args.out], {}, args.seed)
    sys.stdout.write(text)


def cmd_synth(args, cfg):
    from . import synthetic
    from .dataset import write_corpus
    _no_leftovers(cfg, "synth")
    corpus = synthetic.generate(args.n, seed=args.seed, split=args.split, open_vocab=args.open_vocab)
    if args.cognate:
        corpus = synthetic.to_cognate_language(corpus, args.cognate)
    write_corpus(corpus, args.out)
    outputs = [args.out]
    if args.lexicon_out:
        with open(args.lexicon_out, "w", encoding="utf-8", newline="\n") as fh:
            for w in sorted(synthetic.vocabulary()):
                fh.write(f"{w}\t{synthetic.cognate(w)}\n")
        outputs.append(args.lexicon_out)
    write_manifest(args.out, "synth", [], outputs,
                   {"n": args.n, "split": args.split, "open_vocab": args.open_vocab,
                    "cognate": args.cognate}, args.seed)


# -- argument parsing -------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="cap worker threads (0 = library default)")
    p.add_argument("-v", "--verbose", action="store_true")


def _backend_flags(p, required=False):
    p.add_argument("--backend", choices=["identity", "dict", "file", "http"], required=required)
    p.add_argument("--lexicon", help="TSV lexicon for the dict backend")
    p.add_argument("--cache", help="translation cache TSV (the file backend reads only from it)")
    p.add_argument("--endpoint", help="HTTP endpoint (default: $MT_ENDPOINT)")


def build_arg_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bootparse", description="Bootstrap multilingual semantic parsing data and train parsers.")
    ap.add_argument("--version", action="version", version=f"bootparse {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest-top", help="convert a TOP TSV file to a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", choices=["train", "dev", "test"])
    p.add_argument("--lang", default="en")
    p.add_argument("--skip-malformed", action="store_true")
    p.set_defaults(func=cmd_ingest_top)

    p = sub.add_parser("bootstrap", help="translate, align and project a corpus")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    _backend_flags(p, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--templates", help="also write placeholder templates here")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("align-train", help="train the word aligner on a bitext")
    p.add_argument("--bitext", required=True, help="'source<TAB>target' per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align_train)

    p = sub.add_parser("align", help="Viterbi-align a bitext")
    p.add_argument("--model", required=True)
    p.add_argument("--bitext", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("bpe-learn", help="learn BPE merges")
    p.add_argument("--in", dest="input", nargs="+", required=True, help="corpus or plain-text files")
    p.add_argument("--merges", type=int, default=8000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("pretrain-mlm", help="masked-symbol pretraining of the parser encoder")
    p.add_argument("--bpe", required=True)
    p.add_argument("--train", required=True, help="labelled corpus (defines the output vocabulary)")
    p.add_argument("--sentences", nargs="*", default=[], help="extra unlabelled corpora or text")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain_mlm)

    p = sub.add_parser("train", help="train or finetune the parser")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--bpe")
    p.add_argument("--init", help="start from this checkpoint (e.g. from pretrain-mlm)")
    p.add_argument("--unfreeze-rate", type=float, default=1.0)
    p.add_argument("--gradual", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode questions")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--in", dest="input")
    g.add_argument("--question")
    p.add_argument("--lang", default="en")
    p.add_argument("--beam", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a test corpus")
    p.add_argument("--mode", default="standard", choices=["standard", "zero-shot", "translate-test"])
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--gold", help="training-language gold corpus (translate-test)")
    p.add_argument("--filter", help="filter list: a language code with a shipped list, or a file")
    p.add_argument("--train-langs", help="comma-separated; default from the checkpoint")
    p.add_argument("--beam", type=int)
    _backend_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render report / manifest records as text")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--show", type=int, default=5, help="mismatches to list")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="sample a synthetic grammar corpus")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--split", default="train", choices=["train", "dev", "test"])
    p.add_argument("--open-vocab", choices=["train", "dev"])
    p.add_argument("--cognate", metavar="LANG", help="rewrite into a suffix-cognate language")
    p.add_argument("--lexicon-out", help="write the source->cognate lexicon TSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    for action in sub.choices.values():
        _common(action)
    return ap


def main(argv=None) -> int:
    ap = build_arg_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _overrides(args)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"bootparse {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"bootparse {args.command}: translation backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (BootparseError, MrlError, OSError, ValueError, KeyError) as exc:
        print(f"bootparse {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
