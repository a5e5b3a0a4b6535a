"""Command-line entry point: ``kstm {train,eval,keywords,gradcheck}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .autodiff import CheckpointError
from .keywords import NoKeywordError, load_stopwords
from .knowledge import StoreParseError, build_graph, load_store
from .objectives import format_metrics
from .pipeline import ConfigError, DataError, RunConfig, evaluate, load_dataset, train
from .text import tokenize

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kstm", description="Knowledge-enhanced short text matching")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--train", dest="train_path")
    p.add_argument("--valid", dest="valid_path")
    p.add_argument("--store", dest="store_path")
    p.add_argument("--stopwords", dest="stopwords_path")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--epochs", dest="max_epochs", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="write the metrics record here as well")

    p = sub.add_parser("keywords", help="show keywords and knowledge graph for a sentence pair")
    p.add_argument("s1")
    p.add_argument("s2")
    p.add_argument("--store", help="knowledge TSV (default: bundled sample)")
    p.add_argument("--stopwords")
    p.add_argument("--top-k", type=int, default=5)

    p = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> RunConfig:
    from .pipeline import coerce, parse_config_text

    values = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for key in ("seed", "train_path", "valid_path", "store_path", "stopwords_path", "out_dir", "max_epochs"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        values[key.strip()] = coerce(key.strip(), raw)
    return RunConfig.from_dict(values)


def cmd_train(args) -> int:
    config = _config_from_args(args)
    if not config.train_path:
        raise UsageError("train needs a training set (--train or train_path in the config)")
    train_pairs = load_dataset(config.train_path)
    valid_pairs = load_dataset(config.valid_path) if config.valid_path else []
    result = train(config, train_pairs, valid_pairs)
    print(f"epochs={result.state.epoch} best_valid_acc={result.state.best_acc:.4f} best_epoch={result.state.best_epoch}")
    if result.checkpoint is not None:
        print(f"checkpoint={result.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    record = format_metrics(evaluate(args.checkpoint, load_dataset(args.data)))
    print(record)
    if args.output:
        Path(args.output).write_text(record + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_keywords(args) -> int:
    from .keywords import extract_keyword

    store = load_store(args.store)
    stop = load_stopwords(args.stopwords)
    k1 = extract_keyword(tokenize(args.s1), stop)
    k2 = extract_keyword(tokenize(args.s2), stop)
    graph = build_graph(k1.keyword, k2.keyword, store, args.top_k)
    print(f"k1\t{k1.keyword}\t{k1.score:.6f}{' (fallback)' if k1.fallback else ''}")
    print(f"k2\t{k2.keyword}\t{k2.score:.6f}{' (fallback)' if k2.fallback else ''}")
    print("nodes\t" + "\t".join(graph.nodes))
    n = graph.n_nodes
    for i in range(n):
        for j in range(i + 1, n):
            if graph.adjacency[i, j]:
                print(f"edge\t{graph.nodes[i]}\t{graph.nodes[j]}\t{graph.adjacency[i, j]:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_DATA


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "keywords": cmd_keywords, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kstm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"kstm: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, StoreParseError, CheckpointError, NoKeywordError, OSError) as exc:
        print(f"kstm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
