import math
import time

import numpy as np
import pytest

from kstm import pipeline
from kstm.knowledge import LexicalStore, load_store
from kstm.pipeline import (
    AugmentProvider,
    ConfigError,
    DataError,
    NonFiniteLossError,
    Preparer,
    RunConfig,
    SentencePair,
    TrainState,
    evaluate,
    evaluate_prepared,
    load_checkpoint,
    load_dataset,
    make_provider,
    provide_complements,
    train,
    vocab_corpus,
    write_dataset,
)
from kstm.synthetic import separable_dataset
from kstm.text import build_vocab


def small(**kw):
    base = dict(d=8, d_p=8, batch_size=8, max_epochs=3, patience=10, seed=0)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def separable():
    return separable_dataset(32, seed=0)


class TestDataset:
    def test_basic(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("a\tb\t1\n你好\t您好\t0\nx\ty\t1\n", encoding="utf-8")
        pairs = load_dataset(p)
        assert [(q.s1, q.s2, q.label) for q in pairs] == [("a", "b", 1), ("你好", "您好", 0), ("x", "y", 1)]

    @pytest.mark.parametrize("text", ["a\tb\t2\n", "a\tb\n", "\tb\t1\n", "a\tb\t1\tc\n", "a\tb\t1\t\td\n"])
    def test_errors_name_line(self, tmp_path, text):
        p = tmp_path / "d.tsv"
        p.write_text(text, encoding="utf-8")
        with pytest.raises(DataError, match=":1:"):
            load_dataset(p)

    def test_empty_file_warns(self, tmp_path, caplog):
        p = tmp_path / "d.tsv"
        p.write_text("", encoding="utf-8")
        assert load_dataset(p) == []
        assert "empty" in caplog.text

    def test_five_columns_round_trip(self, tmp_path):
        pairs = [SentencePair("a", "b", 1, columns=("a2", "b2")), SentencePair("c", "d", 0, columns=("c2", "d2"))]
        write_dataset(tmp_path / "d.tsv", pairs, with_complements=True)
        assert load_dataset(tmp_path / "d.tsv") == pairs


class TestConfig:
    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nd = 16\nno_graph = true\ntau = 0.05  # inline\ntarget_acc = none\n", encoding="utf-8")
        cfg = RunConfig.from_file(p, seed=7)
        assert (cfg.d, cfg.no_graph, cfg.tau, cfg.seed, cfg.target_acc) == (16, True, 0.05, 7, None)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            pipeline.parse_config_text("bogus = 1")
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"bogus": 1})

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            pipeline.coerce("d", "abc")
        with pytest.raises(ConfigError):
            RunConfig(provider="magic")
        with pytest.raises(ConfigError):
            RunConfig(contrast_negatives="raw", d=8, d_p=4)

    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.batch_size, cfg.max_epochs, cfg.alpha, cfg.beta, cfg.gamma) == (16, 30, 0.8, 0.1, 0.1)

    def test_self_complement_forces_identity(self):
        assert RunConfig(self_complement=True).provider == "identity"


class TestProviders:
    pairs = [SentencePair("我想买车", "西安好玩吗", 1), SentencePair("今天天气", "明天下雨", 0)]

    def test_identity(self):
        out = provide_complements(self.pairs, make_provider("identity"))
        assert all(p.s1_comp == p.s1 and p.s2_comp == p.s2 for p in out)

    def test_augment_empty_store_drops_one(self):
        out = provide_complements(self.pairs, make_provider("augment", LexicalStore()), seed=3)
        for p, q in zip(self.pairs, out):
            assert q.s1_comp and len(q.s1_comp) == len(p.s1) - 1

    def test_augment_substitutes(self):
        store = load_store()
        out = provide_complements(self.pairs, AugmentProvider(store), seed=0)
        assert out[0].s1_comp != self.pairs[0].s1
        assert "汽车" in out[0].s1_comp or "车" not in out[0].s1_comp

    def test_same_seed_same_complements(self):
        store = load_store()
        a = provide_complements(self.pairs, make_provider("augment", store), seed=5)
        b = provide_complements(self.pairs, make_provider("augment", store), seed=5)
        assert a == b

    def test_single_token_never_empty(self):
        out = provide_complements([SentencePair("车", "a", 1)], make_provider("augment", LexicalStore()), seed=0)
        assert out[0].s1_comp == "车" and out[0].s2_comp == "a"

    def test_column_needs_columns(self):
        with pytest.raises(ConfigError):
            provide_complements(self.pairs, make_provider("column"))


class TestTraining:
    def test_no_graph_runs(self, separable):
        pairs, store = separable
        res = train(small(no_graph=True, max_epochs=2), pairs, pairs[:8], store=store)
        assert len(res.state.batch_log) == 2 * 4

    def test_batch_size_one(self, separable):
        pairs, store = separable
        rows = train(small(batch_size=1, max_epochs=1), pairs[:6], [], store=store).state.batch_log
        for _, _, l_bin, l_c1, l_c2, total in rows:
            assert l_c1 == 0.0 and l_c2 == 0.0
            assert total == 0.8 * l_bin

    def test_no_contrastive(self, separable):
        pairs, store = separable
        rows = train(small(no_contrastive=True, max_epochs=1), pairs, [], store=store).state.batch_log
        assert all(r[5] == 0.8 * r[2] for r in rows)

    def test_self_complement_runs(self, separable):
        pairs, store = separable
        res = train(small(self_complement=True, max_epochs=1), pairs, [], store=store)
        assert all(math.isfinite(r[5]) for r in res.state.batch_log)

    def test_raw_negatives_runs(self, separable):
        pairs, store = separable
        res = train(small(contrast_negatives="raw", max_epochs=1), pairs, [], store=store)
        assert all(math.isfinite(r[5]) for r in res.state.batch_log)

    def test_empty_train_set(self):
        with pytest.raises(DataError):
            train(small(), [], [])

    def test_non_finite_loss_aborts(self, separable, monkeypatch):
        pairs, store = separable
        real = pipeline.batch_losses

        def poisoned(model, batch, config):
            out = real(model, batch, config)
            out.binary.data = np.array(np.nan)
            return out

        monkeypatch.setattr(pipeline, "batch_losses", poisoned)
        with pytest.raises(NonFiniteLossError, match="epoch 0 batch 0"):
            train(small(), pairs, [], store=store)

    def test_early_stopping_respects_patience(self, separable):
        pairs, store = separable
        res = train(small(max_epochs=40, patience=2, lr_encoder=0.0, lr_other=0.0, weight_decay=0.0), pairs, pairs, store=store)
        assert res.state.stopped_early
        assert res.state.epoch == res.state.best_epoch + 1 + 2
        streak = 0
        best = -1.0
        for h in res.state.history:
            streak = 0 if h["acc"] > best else streak + 1
            best = max(best, h["acc"])
            assert streak <= 2

    def test_epoch_under_five_seconds(self):
        pairs, store = separable_dataset(64, seed=1)
        start = time.perf_counter()
        train(RunConfig(d=64, d_p=64, max_epochs=1), pairs, [], store=store)
        assert time.perf_counter() - start < 5.0


class TestStateAndCheckpoints:
    def test_state_round_trip(self, separable, tmp_path):
        pairs, store = separable
        state = train(small(max_epochs=2), pairs, pairs[:8], store=store).state
        state.save(tmp_path / "state")
        back = TrainState.load(tmp_path / "state")
        for name in ("epoch", "best_acc", "best_epoch", "patience_counter", "step_count", "rng_state", "history", "batch_log", "stopped_early"):
            assert getattr(back, name) == getattr(state, name), name
        for field in ("params", "best_params", "optimizer"):
            for (n1, a1), (n2, a2) in zip(getattr(state, field), getattr(back, field)):
                assert n1 == n2 and a1.tobytes() == a2.tobytes()

    def test_resume_matches_uninterrupted(self, separable, tmp_path):
        pairs, store = separable
        full = train(small(max_epochs=4), pairs, pairs[:8], store=store)
        half = train(small(max_epochs=2), pairs, pairs[:8], store=store).state
        half.save(tmp_path / "s")
        resumed = train(small(max_epochs=4), pairs, pairs[:8], store=store, state=TrainState.load(tmp_path / "s"))
        assert resumed.state.batch_log == full.state.batch_log
        for p, q in zip(full.model.parameters(), resumed.model.parameters()):
            assert p.data.tobytes() == q.data.tobytes()

    def test_checkpoint_round_trip_and_determinism(self, separable, tmp_path):
        pairs, store = separable
        cfg = small(out_dir=str(tmp_path / "run"))
        res = train(cfg, pairs, pairs[:8], store=store)
        assert res.checkpoint.exists()
        first = evaluate(res.checkpoint, pairs, store=store)
        assert first == evaluate(res.checkpoint, pairs, store=store)
        # the in-memory model holds the best parameters, which are what was saved
        prep = Preparer(res.vocab, store, pipeline.load_stopwords(), cfg)
        before = evaluate_prepared(res.model, [prep(p) for p in pipeline._complemented(pairs, cfg, store)], cfg)
        assert before == first
        model, vocab, config = load_checkpoint(res.checkpoint)
        assert vocab == res.vocab and config == cfg

    def test_log_lines(self, separable, tmp_path):
        pairs, store = separable
        res = train(small(max_epochs=1, out_dir=str(tmp_path)), pairs, [], store=store)
        lines = (tmp_path / "train.log").read_text().splitlines()
        assert len(lines) == len(res.state.batch_log)
        fields = lines[0].split("\t")
        assert fields[:2] == ["0", "0"] and all(len(f.split(".")[1]) == 6 for f in fields[2:])

    def test_fresh_model_is_chance_level(self):
        pairs, store = separable_dataset(200, seed=3)
        rng = np.random.default_rng(0)
        labels = rng.permutation([p.label for p in pairs])
        shuffled = [SentencePair(p.s1, p.s2, int(y)) for p, y in zip(pairs, labels)]
        cfg = small(max_epochs=0)
        res = train(cfg, shuffled, [], store=store)
        prep = Preparer(res.vocab, store, pipeline.load_stopwords(), cfg)
        m = evaluate_prepared(res.model, [prep(p) for p in pipeline._complemented(shuffled, cfg, store)], cfg)
        assert abs(m["acc"] - 0.5) <= 0.15

    def test_all_positive(self, separable, tmp_path):
        pairs, store = separable
        cfg = small(max_epochs=0)
        res = train(cfg, pairs, [], store=store)
        res.model.classifier.b.data[:] = 50.0
        positives = [p for p in pairs if p.label == 1]
        prep = Preparer(res.vocab, store, pipeline.load_stopwords(), cfg)
        m = evaluate_prepared(res.model, [prep(p) for p in pipeline._complemented(positives, cfg, store)], cfg)
        assert m["acc"] == 1.0 and m["f1"] == 1.0

    def test_evaluate_empty(self, tmp_path):
        with pytest.raises(DataError):
            evaluate(tmp_path / "none.ckpt", [])


def test_vocab_includes_store_words(separable):
    pairs, store = separable
    vocab = build_vocab(vocab_corpus(pairs, store))
    assert all(w in vocab for w in store.words())
