from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mose.graph import Graph, cycle_graph, disjoint_union, path_graph, star_graph
from mose.util import BudgetError, substream
from mose.walks import (WalkConfig, enumerate_anonymous_walks, extract_dataset,
                        extract_subgraph, load_cache, sample_walks, save_cache,
                        to_anonymous, top_patterns,
                        walk_distributions_distinguish)


def cfg(**kw):
    base = dict(walk_length=4, walks_per_node=5, pattern_budget=3,
                subgraph_cap=64, seed=0)
    base.update(kw)
    return WalkConfig(**base)


class TestSampleWalks:
    def test_isolated_node_yields_nothing(self):
        g = Graph.from_edges(3, [(1, 2)])
        assert sample_walks(g, 0, cfg(), substream(0, 1)) == []

    def test_p2_walk_is_forced(self):
        for w in sample_walks(path_graph(2), 0, cfg(walk_length=3), substream(0, 2)):
            assert w == (0, 1, 0, 1)

    def test_walk_shape_and_adjacency(self):
        g = cycle_graph(5)
        for w in sample_walks(g, 2, cfg(walk_length=6), substream(0, 3)):
            assert len(w) == 7 and w[0] == 2
            for a, b in zip(w, w[1:]):
                assert b in g.neighbors_of(a)

    def test_triangle_walk_frequencies_uniform(self):
        # two uniform binary choices per walk: each of 4 walks has mass 1/4
        walks = sample_walks(cycle_graph(3), 0,
                             cfg(walk_length=2, walks_per_node=1000),
                             substream(7, 4))
        freq = Counter(walks)
        assert set(freq) == {(0, 1, 0), (0, 1, 2), (0, 2, 0), (0, 2, 1)}
        for count in freq.values():
            assert abs(count / 1000 - 0.25) < 0.05

    def test_deterministic_under_seed(self):
        g = cycle_graph(6)
        a = sample_walks(g, 1, cfg(), substream(3, 9))
        b = sample_walks(g, 1, cfg(), substream(3, 9))
        assert a == b


class TestToAnonymous:
    def test_examples(self):
        assert to_anonymous((7, 2, 7, 9)) == (0, 1, 0, 2)
        assert to_anonymous((4, 8, 1, 4)) == (0, 1, 2, 0)
        assert to_anonymous((5,)) == (0,)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            to_anonymous(())

    @given(st.lists(st.integers(0, 20), min_size=1, max_size=12),
           st.permutations(list(range(21))))
    @settings(max_examples=300, deadline=None)
    def test_relabeling_invariance_and_validity(self, walk, perm):
        pat = to_anonymous(tuple(walk))
        assert pat == to_anonymous(tuple(perm[x] for x in walk))
        assert pat[0] == 0
        running_max = 0
        for x in pat[1:]:
            assert 0 <= x <= running_max + 1
            running_max = max(running_max, x)
        assert len(pat) == len(walk)


class TestTopPatterns:
    def test_tie_breaks_lexicographically(self):
        counts = Counter({(0, 1, 0): 5, (0, 1, 2): 5, (0, 1, 0, 1): 3})
        assert top_patterns(counts, 2) == [(0, 1, 0), (0, 1, 2)]

    def test_budget_above_distinct_count(self):
        counts = Counter({(0, 1): 2, (0, 1, 0): 1})
        assert top_patterns(counts, 10) == [(0, 1), (0, 1, 0)]

    def test_single_winner(self):
        counts = Counter({(0, 1, 2): 9, (0, 1, 0): 1})
        assert top_patterns(counts, 1) == [(0, 1, 2)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            top_patterns(Counter(), 2)


class TestExtractSubgraph:
    def test_no_match_falls_back_to_singleton(self):
        g = cycle_graph(4)
        walks = [(0, 1, 2, 3)]
        sub = extract_subgraph(g, 0, walks, {(0, 0, 0, 0)})
        assert sub.graph.node_count == 1
        assert sub.parent_ids.tolist() == [0]

    def test_p2_collects_both_nodes(self):
        g = path_graph(2)
        walks = [(0, 1, 0, 1)]
        sub = extract_subgraph(g, 0, walks, {(0, 1, 0, 1)})
        assert sub.graph.node_count == 2
        assert sub.graph.edge_count == 1

    def test_c4_full_walk_induces_whole_cycle(self):
        g = cycle_graph(4)
        sub = extract_subgraph(g, 0, [(0, 1, 2, 3)], {(0, 1, 2, 3)})
        assert sub.graph.node_count == 4
        assert sub.graph.edge_count == 4  # induction restores the closing edge

    def test_cap_keeps_earliest_visits(self):
        g = path_graph(6)
        walks = [(0, 1, 2, 3, 4, 5)]
        sub = extract_subgraph(g, 0, walks, {to_anonymous(walks[0])}, cap=3)
        assert sub.parent_ids.tolist() == [0, 1, 2]

    def test_wrong_start_rejected(self):
        with pytest.raises(ValueError):
            extract_subgraph(path_graph(3), 0, [(1, 0)], {(0, 1)})

    def test_contains_center_and_connected(self):
        g = cycle_graph(8)
        rng = substream(5, 0)
        walks = sample_walks(g, 3, cfg(walk_length=5, walks_per_node=8), rng)
        pats = {to_anonymous(w) for w in walks}
        sub = extract_subgraph(g, 3, walks, pats)
        assert sub.parent_ids[0] == 3
        # connectivity via BFS over the induced subgraph
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for u in frontier:
                for v in sub.graph.neighbors_of(u):
                    if int(v) not in seen:
                        seen.add(int(v))
                        nxt.append(int(v))
            frontier = nxt
        assert seen == set(range(sub.graph.node_count))


class TestEnumeration:
    def test_p2_single_pattern(self):
        assert enumerate_anonymous_walks(path_graph(2), 0, 2) == \
            Counter({(0, 1, 0): 1})

    def test_c3_two_step_patterns(self):
        assert enumerate_anonymous_walks(cycle_graph(3), 0, 2) == \
            Counter({(0, 1, 0): 2, (0, 1, 2): 2})

    def test_star_center_two_steps(self):
        assert enumerate_anonymous_walks(star_graph(3), 0, 2) == \
            Counter({(0, 1, 0): 3})

    @pytest.mark.parametrize("seed", range(8))
    def test_multiset_size_matches_power_row_sum(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < 0.4]
        g = Graph.from_edges(n, edges)
        length = int(rng.integers(1, 6))
        v = int(rng.integers(0, n))
        counts = enumerate_anonymous_walks(g, v, length)
        a = np.linalg.matrix_power(g.adjacency_dense(), length)
        assert sum(counts.values()) == int(a[v].sum())

    def test_budget_exceeded(self):
        k6 = Graph.from_edges(6, [(i, j) for i in range(6) for j in range(i + 1, 6)])
        with pytest.raises(BudgetError):
            enumerate_anonymous_walks(k6, 0, 12, budget=10**4)


class TestDistributionDistinguish:
    def test_c6_vs_triangles(self):
        c6 = cycle_graph(6)
        tri2 = disjoint_union(cycle_graph(3), cycle_graph(3))
        # the closed 3-step pattern occurs only on the triangle component
        assert (0, 1, 2, 0) in enumerate_anonymous_walks(tri2, 0, 3)
        assert (0, 1, 2, 0) not in enumerate_anonymous_walks(c6, 0, 3)
        assert walk_distributions_distinguish(c6, 0, tri2, 0, 3)

    def test_path_endpoint_vs_midpoint(self):
        p3 = path_graph(3)
        assert walk_distributions_distinguish(p3, 0, p3, 1, 2)

    def test_isomorphic_roots_equal_for_all_small_lengths(self):
        g = cycle_graph(5)
        for length in (1, 2, 3, 4):
            assert not walk_distributions_distinguish(g, 0, g, 3, length)


class TestDatasetExtraction:
    def make_graphs(self):
        return [cycle_graph(5).with_features(np.eye(5)),
                star_graph(4).with_features(np.eye(5))]

    def test_deterministic_and_thread_invariant(self):
        graphs = self.make_graphs()
        a = extract_dataset(graphs, "t", cfg(seed=2))
        b = extract_dataset(graphs, "t", cfg(seed=2), threads=3)
        assert a.records == b.records
        assert a.pattern_tables == b.pattern_tables

    def test_record_contract(self):
        graphs = self.make_graphs()
        cache = extract_dataset(graphs, "t", cfg(subgraph_cap=3))
        for recs in cache.records:
            for v, nodes in enumerate(recs):
                assert nodes[0] == v
                assert len(nodes) <= 3

    def test_cache_roundtrip(self, tmp_path):
        graphs = self.make_graphs()
        cache = extract_dataset(graphs, "toyset", cfg(seed=4))
        path = str(tmp_path / "sub.cache")
        save_cache(path, cache)
        back = load_cache(path)
        assert back.dataset_name == "toyset"
        assert back.cfg == cache.cfg
        assert back.records == cache.records
        assert back.pattern_tables == cache.pattern_tables

    def test_cache_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.cache"
        path.write_text("not a cache\n")
        with pytest.raises(ValueError):
            load_cache(str(path))
