"""Dataset handling, complement provisioning, training and evaluation."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .keywords import extract_keyword, load_stopwords
from .knowledge import LexicalStore, build_graph, load_store
from .model import KSTM, PreparedPair
from .objectives import (
    LossConfig,
    bce_with_logits,
    composite_loss,
    confusion_from,
    info_nce,
    metrics,
)
from .text import Vocabulary, build_vocab, detokenize, encode_ids, tokenize

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed input data."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class NonFiniteLossError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    d: int = 64
    d_p: int = 64
    gcn_layers: int = 2
    top_k: int = 5
    window: int = 3
    damping: float = 0.85
    tau: float = 0.1
    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1
    lr_encoder: float = 1e-3
    lr_other: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    no_contrastive: bool = False
    no_graph: bool = False
    self_complement: bool = False
    provider: str = "augment"
    contrast_negatives: str = "projected"
    threshold: float = 0.5
    max_len: int = 64
    min_count: int = 1
    cache_graphs: bool = False
    target_acc: float | None = None
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    store_path: str | None = None
    stopwords_path: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.provider not in ("augment", "column", "identity"):
            raise ConfigError(f"unknown complement provider {self.provider!r}")
        if self.contrast_negatives not in ("projected", "raw"):
            raise ConfigError("contrast_negatives must be 'projected' or 'raw'")
        if self.contrast_negatives == "raw" and self.d_p != self.d:
            raise ConfigError("contrast_negatives=raw needs d_p == d")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.self_complement:
            self.provider = "identity"
        LossConfig(self.alpha, self.beta, self.gamma, self.tau)

    @property
    def loss(self) -> LossConfig:
        if self.no_contrastive:
            return LossConfig(self.alpha, 0.0, 0.0, self.tau)
        return LossConfig(self.alpha, self.beta, self.gamma, self.tau)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        values = parse_config_text(Path(path).read_text(encoding="utf-8"))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    if "None" in kind and text.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("bool"):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, raw)
    return values


# ---------------------------------------------------------------------------
# data


@dataclass
class SentencePair:
    s1: str
    s2: str
    label: int
    s1_comp: str | None = None
    s2_comp: str | None = None
    columns: tuple[str, str] | None = None  # complements supplied by the file, if any


def load_dataset(path) -> list[SentencePair]:
    """Read ``s1<TAB>s2<TAB>label[<TAB>s1_comp<TAB>s2_comp]`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    pairs = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        fields = line.rstrip("\r").split("\t")
        if len(fields) not in (3, 5):
            raise DataError(f"{path}:{lineno}: expected 3 or 5 tab-separated fields, got {len(fields)}")
        s1, s2, label = fields[:3]
        if label not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        if not s1.strip() or not s2.strip():
            raise DataError(f"{path}:{lineno}: empty sentence")
        columns = None
        if len(fields) == 5:
            if not fields[3].strip() or not fields[4].strip():
                raise DataError(f"{path}:{lineno}: empty complement sentence")
            columns = (fields[3], fields[4])
        pairs.append(SentencePair(s1, s2, int(label), columns=columns))
    if not pairs:
        log.warning("dataset %s is empty", path)
    return pairs


def write_dataset(path, pairs: Sequence[SentencePair], with_complements: bool = False) -> None:
    lines = []
    for p in pairs:
        row = [p.s1, p.s2, str(p.label)]
        if with_complements:
            comps = p.columns or (p.s1_comp, p.s2_comp)
            row += list(comps)
        lines.append("\t".join(row))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# complement sentences


class ColumnProvider:
    """Complements taken from the 4th and 5th dataset columns."""

    name = "column"

    def __call__(self, pair: SentencePair, index: int, seed: int) -> tuple[str, str]:
        if pair.columns is None:
            raise ConfigError("column provider needs a 5-column dataset")
        return pair.columns


class IdentityProvider:
    """Each sentence is its own complement (self-complement ablation)."""

    name = "identity"

    def __call__(self, pair: SentencePair, index: int, seed: int) -> tuple[str, str]:
        return pair.s1, pair.s2


class AugmentProvider:
    """Swap up to two tokens for their top related word, then drop one random token."""

    name = "augment"

    def __init__(self, store: LexicalStore, max_substitutions: int = 2):
        self.store = store
        self.max_substitutions = max_substitutions

    def augment(self, text: str, rng: np.random.Generator) -> str:
        tokens = tokenize(text)
        swapped = list(tokens)
        n_subs = 0
        for i, tok in enumerate(tokens):
            if n_subs >= self.max_substitutions:
                break
            related = self.store.related(tok)
            if related:
                swapped[i] = related[0][0]
                n_subs += 1
        out = list(swapped)
        if len(out) > 1:
            del out[int(rng.integers(len(out)))]
        result = detokenize(out)
        if n_subs and result == text:
            result = detokenize(swapped)
        return result

    def __call__(self, pair: SentencePair, index: int, seed: int) -> tuple[str, str]:
        return (
            self.augment(pair.s1, np.random.default_rng([seed, index, 0])),
            self.augment(pair.s2, np.random.default_rng([seed, index, 1])),
        )


def make_provider(name: str, store: LexicalStore | None = None):
    if name == "column":
        return ColumnProvider()
    if name == "identity":
        return IdentityProvider()
    if name == "augment":
        return AugmentProvider(store if store is not None else LexicalStore())
    raise ConfigError(f"unknown complement provider {name!r}")


def provide_complements(pairs: Sequence[SentencePair], provider, seed: int = 0) -> list[SentencePair]:
    out = []
    for i, pair in enumerate(pairs):
        c1, c2 = provider(pair, i, seed)
        out.append(dataclasses.replace(pair, s1_comp=c1 or pair.s1, s2_comp=c2 or pair.s2))
    return out


# ---------------------------------------------------------------------------
# batch preparation


class Preparer:
    """Turns complemented pairs into model inputs (ids, keywords, knowledge graph)."""

    def __init__(self, vocab: Vocabulary, store: LexicalStore, stopwords, config: RunConfig):
        self.vocab = vocab
        self.store = store
        self.stopwords = frozenset(stopwords)
        self.config = config
        self._cache: dict[tuple[str, str], tuple] | None = {} if config.cache_graphs else None

    def keywords(self, s1: str, s2: str):
        cfg = self.config
        k1 = extract_keyword(tokenize(s1), self.stopwords, cfg.window, cfg.damping)
        k2 = extract_keyword(tokenize(s2), self.stopwords, cfg.window, cfg.damping)
        return k1, k2

    def graph_inputs(self, s1: str, s2: str):
        key = (s1, s2)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        k1, k2 = self.keywords(s1, s2)
        graph = build_graph(k1.keyword, k2.keyword, self.store, self.config.top_k)
        node_seqs = [encode_ids(self.vocab, w, self.config.max_len) for w in graph.nodes]
        result = (graph, node_seqs, (k1.keyword, k2.keyword))
        if self._cache is not None:
            self._cache[key] = result
        return result

    def __call__(self, pair: SentencePair) -> PreparedPair:
        if pair.s1_comp is None or pair.s2_comp is None:
            raise ConfigError("pair has no complement sentences; run provide_complements first")
        enc = lambda s: encode_ids(self.vocab, s, self.config.max_len)  # noqa: E731
        graph, node_seqs, kws = self.graph_inputs(pair.s1, pair.s2)
        return PreparedPair(enc(pair.s1), enc(pair.s2), enc(pair.s1_comp), enc(pair.s2_comp), graph, node_seqs, pair.label, kws)


def vocab_corpus(pairs: Sequence[SentencePair], store: LexicalStore):
    for p in pairs:
        yield p.s1
        yield p.s2
        if p.s1_comp is not None:
            yield p.s1_comp
        if p.s2_comp is not None:
            yield p.s2_comp
    yield from sorted(store.words())


# ---------------------------------------------------------------------------
# losses for one batch


@dataclass
class BatchLosses:
    binary: Tensor
    contrast1: Tensor | None
    contrast2: Tensor | None
    total: Tensor

    def values(self) -> tuple[float, float, float, float]:
        c1 = self.contrast1.item() if self.contrast1 is not None else 0.0
        c2 = self.contrast2.item() if self.contrast2 is not None else 0.0
        return self.binary.item(), c1, c2, self.total.item()


def batch_losses(model: KSTM, batch: Sequence[PreparedPair], config: RunConfig) -> BatchLosses:
    fw = model.forward(batch, use_graph=not config.no_graph)
    labels = [p.label for p in batch]
    l_bin = bce_with_logits(fw.logits, labels)
    cfg = config.loss
    if config.no_contrastive:
        return BatchLosses(l_bin, None, None, cfg.alpha * l_bin)
    raw = config.contrast_negatives == "raw"
    l_c1 = info_nce(fw.proj1, fw.projc1, cfg.tau, negatives=fw.c1 if raw else None)
    l_c2 = info_nce(fw.proj2, fw.projc2, cfg.tau, negatives=fw.c2 if raw else None)
    return BatchLosses(l_bin, l_c1, l_c2, composite_loss(l_bin, l_c1, l_c2, cfg))


def predict(model: KSTM, prepared: Sequence[PreparedPair], config: RunConfig, batch_size: int = 64) -> np.ndarray:
    probs = []
    with ad.no_grad():
        for start in range(0, len(prepared), batch_size):
            fw = model.forward(prepared[start : start + batch_size], use_graph=not config.no_graph)
            probs.append(ad.sigmoid(fw.logits).data.ravel())
    return np.concatenate(probs) if probs else np.zeros(0)


def evaluate_prepared(model: KSTM, prepared: Sequence[PreparedPair], config: RunConfig) -> dict:
    probs = predict(model, prepared, config)
    return metrics(confusion_from(probs, [p.label for p in prepared], config.threshold))


# ---------------------------------------------------------------------------
# training


LOG_FORMAT = "{}\t{}\t{:.6f}\t{:.6f}\t{:.6f}\t{:.6f}"


@dataclass
class TrainState:
    epoch: int = 0
    best_acc: float = -1.0
    best_epoch: int = -1
    patience_counter: int = 0
    step_count: int = 0
    rng_state: dict = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    batch_log: list[tuple[int, int, float, float, float, float]] = field(default_factory=list)
    params: list[tuple[str, np.ndarray]] = field(default_factory=list)
    best_params: list[tuple[str, np.ndarray]] = field(default_factory=list)
    optimizer: list[tuple[str, np.ndarray]] = field(default_factory=list)
    stopped_early: bool = False

    _SCALARS = ("epoch", "best_acc", "best_epoch", "patience_counter", "step_count", "rng_state", "history", "stopped_early")

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {k: getattr(self, k) for k in self._SCALARS}
        # float.hex keeps the per-batch losses bit-exact through JSON
        meta["batch_log"] = [[r[0], r[1], *(float(x).hex() for x in r[2:])] for r in self.batch_log]
        meta["best_acc"] = float(self.best_acc).hex()
        (d / "state.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        ad.save_tensors(d / "params.bin", self.params)
        ad.save_tensors(d / "best.bin", self.best_params)
        ad.save_tensors(d / "optimizer.bin", self.optimizer)

    @classmethod
    def load(cls, directory) -> "TrainState":
        d = Path(directory)
        meta = json.loads((d / "state.json").read_text(encoding="utf-8"))
        log_rows = [(r[0], r[1], *(float.fromhex(x) for x in r[2:])) for r in meta.pop("batch_log")]
        meta["best_acc"] = float.fromhex(meta["best_acc"])
        return cls(
            **meta,
            batch_log=log_rows,
            params=ad.load_tensors(d / "params.bin"),
            best_params=ad.load_tensors(d / "best.bin"),
            optimizer=ad.load_tensors(d / "optimizer.bin"),
        )


@dataclass
class TrainResult:
    model: KSTM
    state: TrainState
    vocab: Vocabulary
    config: RunConfig
    checkpoint: Path | None = None


def _complemented(pairs, config: RunConfig, store: LexicalStore) -> list[SentencePair]:
    provider = make_provider(config.provider, store)
    return provide_complements(pairs, provider, config.seed)


def train(
    config: RunConfig,
    train_pairs: Sequence[SentencePair],
    valid_pairs: Sequence[SentencePair],
    store: LexicalStore | None = None,
    stopwords=None,
    state: TrainState | None = None,
    on_batch: Callable[[tuple], None] | None = None,
) -> TrainResult:
    """Train with early stopping on validation accuracy.

    When ``config.out_dir`` is set, the best model is checkpointed there and
    one log line per batch is written to ``train.log``.
    """
    if not train_pairs:
        raise DataError("training set is empty")
    if store is None:
        store = load_store(config.store_path) if config.store_path else LexicalStore()
    if stopwords is None:
        stopwords = load_stopwords(config.stopwords_path)

    train_c = _complemented(train_pairs, config, store)
    valid_c = _complemented(valid_pairs, config, store)
    vocab = build_vocab(vocab_corpus(train_c, store), config.min_count)
    prep = Preparer(vocab, store, stopwords, config)
    valid_prepared = [prep(p) for p in valid_c]

    model = KSTM(len(vocab), config.d, config.d_p, config.gcn_layers, seed=config.seed)
    opt = ad.AdamW(
        [(model.encoder_parameters(), config.lr_encoder), (model.head_parameters(), config.lr_other)],
        weight_decay=config.weight_decay,
    )
    opt.zero_grad()
    rng = np.random.default_rng(config.seed)
    best = [(p.name, p.data.copy()) for p in model.parameters()]

    if state is None:
        state = TrainState()
    else:
        _restore(model, opt, rng, state)
        best = [(n, a.copy()) for n, a in state.best_params] or best

    out_dir = Path(config.out_dir) if config.out_dir else None
    log_fh = None
    ckpt = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / "model.ckpt"
        log_fh = open(out_dir / "train.log", "a" if state.batch_log else "w", encoding="utf-8")

    try:
        while state.epoch < config.max_epochs and not state.stopped_early:
            epoch = state.epoch
            order = rng.permutation(len(train_c))
            for b, start in enumerate(range(0, len(order), config.batch_size)):
                batch = [prep(train_c[i]) for i in order[start : start + config.batch_size]]
                losses = batch_losses(model, batch, config)
                values = losses.values()
                if not all(math.isfinite(v) for v in values):
                    raise NonFiniteLossError(
                        f"non-finite loss at epoch {epoch} batch {b}: "
                        f"L_bin={values[0]} L_c1={values[1]} L_c2={values[2]} L_total={values[3]}"
                    )
                ad.backward(losses.total)
                opt.step()
                row = (epoch, b, *values)
                state.batch_log.append(row)
                if log_fh is not None:
                    log_fh.write(LOG_FORMAT.format(*row) + "\n")
                if on_batch is not None:
                    on_batch(row)

            valid = evaluate_prepared(model, valid_prepared, config) if valid_prepared else {"acc": 0.0}
            state.history.append({"epoch": epoch, **valid})
            state.epoch = epoch + 1
            if valid["acc"] > state.best_acc:
                state.best_acc = valid["acc"]
                state.best_epoch = epoch
                state.patience_counter = 0
                best = [(p.name, p.data.copy()) for p in model.parameters()]
                if ckpt is not None:
                    save_checkpoint(ckpt, model, vocab, config)
            else:
                state.patience_counter += 1
            log.info("epoch %d valid acc %.4f (best %.4f)", epoch, valid["acc"], state.best_acc)
            if state.patience_counter >= config.patience:
                state.stopped_early = True
            if config.target_acc is not None and valid["acc"] >= config.target_acc:
                state.stopped_early = True
            _snapshot(model, opt, rng, state, best)
    finally:
        if log_fh is not None:
            log_fh.close()

    for p, (_, arr) in zip(model.parameters(), best):
        p.data = arr.copy()
    return TrainResult(model, state, vocab, config, ckpt)


def _snapshot(model: KSTM, opt: ad.AdamW, rng, state: TrainState, best) -> None:
    state.params = [(p.name, p.data.copy()) for p in model.parameters()]
    state.best_params = [(n, a.copy()) for n, a in best]
    state.optimizer = [(n, a.copy()) for n, a in opt.state_arrays()]
    state.step_count = opt.step_count
    state.rng_state = rng.bit_generator.state


def _restore(model: KSTM, opt: ad.AdamW, rng, state: TrainState) -> None:
    by_name = dict(state.params)
    for p in model.parameters():
        arr = by_name[p.name]
        if arr.shape != p.shape:
            raise ad.CheckpointError(f"resume: {p.name} has shape {arr.shape}, model expects {p.shape}")
        p.data = arr.copy()
    opt.load_state_arrays(dict(state.optimizer), state.step_count)
    rng.bit_generator.state = state.rng_state


# ---------------------------------------------------------------------------
# checkpoints and evaluation


def save_checkpoint(path, model: KSTM, vocab: Vocabulary, config: RunConfig) -> None:
    path = Path(path)
    ad.save_tensors(path, model.named_arrays())
    Path(f"{path}.json").write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    vocab.save(f"{path}.vocab")


def load_checkpoint(path) -> tuple[KSTM, Vocabulary, RunConfig]:
    path = Path(path)
    config = RunConfig.from_dict(json.loads(Path(f"{path}.json").read_text(encoding="utf-8")))
    vocab = Vocabulary.load(f"{path}.vocab")
    model = KSTM(len(vocab), config.d, config.d_p, config.gcn_layers, seed=config.seed)
    ad.load_into(path, model.parameters())
    return model, vocab, config


def evaluate(checkpoint, pairs: Sequence[SentencePair], store: LexicalStore | None = None, stopwords=None) -> dict:
    """Metrics of a saved model on ``pairs`` (complements provisioned as in training)."""
    if not pairs:
        raise DataError("evaluation set is empty")
    model, vocab, config = load_checkpoint(checkpoint)
    if store is None:
        store = load_store(config.store_path) if config.store_path else LexicalStore()
    if stopwords is None:
        stopwords = load_stopwords(config.stopwords_path)
    pairs_c = _complemented(pairs, config, store)
    prep = Preparer(vocab, store, stopwords, config)
    return evaluate_prepared(model, [prep(p) for p in pairs_c], config)
