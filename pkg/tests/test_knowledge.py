import numpy as np
import pytest

from kstm.knowledge import LexicalStore, StoreParseError, build_graph, load_store, retrieve_topk


def write(tmp_path, text):
    p = tmp_path / "store.tsv"
    p.write_text(text, encoding="utf-8")
    return p


class TestLoad:
    def test_empty_file(self, tmp_path):
        assert len(load_store(write(tmp_path, ""))) == 0

    def test_one_line(self, tmp_path):
        s = load_store(write(tmp_path, "汽车\t轿车\t0.9\n"))
        assert s.related("汽车") == [("轿车", 0.9)]

    def test_comments_and_blanks(self, tmp_path):
        s = load_store(write(tmp_path, "# header\n\n汽车\t轿车\t0.9\n"))
        assert s.n_entries == 1

    @pytest.mark.parametrize(
        "line, reason",
        [("汽车\t轿车\t1.5", "outside"), ("汽车\t轿车", "fields"), ("汽车\t轿车\tx", "not a number"), ("车\t车\t0.5", "self"), ("车\t轿车\t0", "outside")],
    )
    def test_errors_name_line(self, tmp_path, line, reason):
        with pytest.raises(StoreParseError, match=reason) as exc:
            load_store(write(tmp_path, "# c\n" + line + "\n"))
        assert exc.value.lineno == 2
        assert ":2:" in str(exc.value)

    def test_bundled_sample(self):
        s = load_store()
        assert s.related("车")[0] == ("汽车", 0.9)

    def test_sorted_with_lexicographic_ties(self):
        s = LexicalStore({"w": [("b", 0.5), ("a", 0.5), ("c", 0.9)]})
        assert [w for w, _ in s.related("w")] == ["c", "a", "b"]


class TestRetrieve:
    store = LexicalStore({"k": [("a", 0.9), ("b", 0.5), ("c", 0.2)]})

    def test_prefix(self):
        assert retrieve_topk(self.store, "k", 2) == [("a", 0.9), ("b", 0.5)]

    def test_absent(self):
        assert retrieve_topk(self.store, "zzz", 3) == []

    def test_k_larger_than_list(self):
        assert len(retrieve_topk(self.store, "k", 10)) == 3

    def test_k_validation(self):
        with pytest.raises(ValueError):
            retrieve_topk(self.store, "k", 0)


class TestGraph:
    def test_empty_retrieval(self):
        g = build_graph("x", "y", LexicalStore(), 5)
        assert g.nodes == ["x", "y"]
        assert not g.adjacency.any()

    def test_shared_word(self):
        g = build_graph("k1", "k2", LexicalStore({"k1": [("a", 0.9)], "k2": [("a", 0.4)]}))
        assert g.nodes == ["k1", "k2", "a"]
        assert g.adjacency[0, 2] == 0.9 and g.adjacency[1, 2] == 0.4
        assert g.adjacency[0, 1] == 0.0
        np.testing.assert_array_equal(g.adjacency, g.adjacency.T)

    def test_five_nodes_three_edges(self):
        g = build_graph("k1", "k2", LexicalStore({"k1": [("a", 0.9), ("b", 0.5)], "k2": [("c", 0.7)]}))
        assert g.n_nodes == 5
        assert np.count_nonzero(np.triu(g.adjacency)) == 3

    def test_keyword_retrieves_other_keyword(self):
        store = LexicalStore({"k1": [("k2", 0.3)], "k2": [("k1", 0.6)]})
        g = build_graph("k1", "k2", store)
        assert g.n_nodes == 2 and g.adjacency[0, 1] == 0.6 == g.adjacency[1, 0]

    def test_identical_keywords_keep_two_nodes(self):
        g = build_graph("k", "k", LexicalStore({"k": [("a", 0.5)]}))
        assert g.nodes == ["k", "k", "a"]
        np.testing.assert_array_equal(g.adjacency[0], g.adjacency[1])

    def test_swap_is_isomorphic(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(8)]
        entries = {
            k: [(str(w), float(s)) for w, s in zip(rng.choice(words, 4, replace=False), rng.uniform(0.1, 1, 4))]
            for k in ("k1", "k2")
        }
        store = LexicalStore(entries)
        g = build_graph("k1", "k2", store, 3)
        h = build_graph("k2", "k1", store, 3)
        perm = [1, 0, *(h.nodes.index(w) for w in g.knowledge_words)]
        np.testing.assert_array_equal(h.adjacency[np.ix_(perm, perm)], g.adjacency)

    def test_invariants_on_sample_store(self):
        store = load_store()
        for k1 in ("车", "西", "iphone", "nothing"):
            for k2 in ("汽", "安", "机"):
                g = build_graph(k1, k2, store, 5)
                assert len(set(g.knowledge_words)) == len(g.knowledge_words)
                assert np.array_equal(g.adjacency, g.adjacency.T)
                assert ((g.adjacency >= 0) & (g.adjacency <= 1)).all()
                assert not np.diag(g.adjacency).any()
