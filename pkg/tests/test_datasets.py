import numpy as np
import pytest

from mose.datasets import (Dataset, SplitPlan, gen_graph_cycle, gen_graph_five,
                           load_tu_dataset, make_folds, make_node_splits,
                           save_tu_dataset)
from mose.graph import Graph, cycle_graph, degree_features, path_graph
from mose.util import FormatError


def write_tu(tmp_path, name, a, indicator, labels, node_labels=None, attrs=None):
    d = tmp_path / name
    d.mkdir(exist_ok=True)
    (d / f"{name}_A.txt").write_text("\n".join(a) + "\n")
    (d / f"{name}_graph_indicator.txt").write_text("\n".join(indicator) + "\n")
    (d / f"{name}_graph_labels.txt").write_text("\n".join(labels) + "\n")
    if node_labels is not None:
        (d / f"{name}_node_labels.txt").write_text("\n".join(node_labels) + "\n")
    if attrs is not None:
        (d / f"{name}_node_attributes.txt").write_text("\n".join(attrs) + "\n")
    return str(d)


class TestLoader:
    def test_smallest_wellformed_input(self, tmp_path):
        d = write_tu(tmp_path, "tiny", ["1, 2", "2, 1"], ["1", "1"], ["1"])
        data = load_tu_dataset(d, "tiny")
        assert len(data.graphs) == 1
        assert data.graphs[0].node_count == 2
        assert data.graphs[0].edge_count == 1
        assert data.class_count == 1
        assert data.task == "graph"

    def test_labels_remapped_contiguous(self, tmp_path):
        d = write_tu(tmp_path, "remap", ["1, 2", "2, 1", "3, 4", "4, 3"],
                     ["1", "1", "2", "2"], ["7", "-3"])
        data = load_tu_dataset(d, "remap")
        assert sorted(g.graph_label for g in data.graphs) == [0, 1]
        assert data.graphs[0].graph_label == 1  # 7 sorts after -3

    def test_node_labels_become_onehot_features(self, tmp_path):
        d = write_tu(tmp_path, "lab", ["1, 2", "2, 1", "3, 4", "4, 3"],
                     ["1", "1", "2", "2"], ["1", "1"],
                     node_labels=["3", "5", "5", "3"])
        data = load_tu_dataset(d, "lab")
        assert data.graphs[0].features.tolist() == [[1, 0], [0, 1]]
        assert data.graphs[1].features.tolist() == [[0, 1], [1, 0]]

    def test_attributes_and_labels_concatenate(self, tmp_path):
        d = write_tu(tmp_path, "both", ["1, 2", "2, 1", "3, 4", "4, 3"],
                     ["1", "1", "2", "2"], ["1", "2"],
                     node_labels=["2", "4", "4", "2"],
                     attrs=["0.5, 1.5", "2.5,3.5", "0.0, 0.0", "1.0, 1.0"])
        data = load_tu_dataset(d, "both")
        assert data.graphs[0].features.tolist() == [[0.5, 1.5, 1, 0],
                                                    [2.5, 3.5, 0, 1]]

    def test_featureless_gets_degree_onehot(self, tmp_path):
        d = write_tu(tmp_path, "deg", ["1, 2", "2, 1", "2, 3", "3, 2"],
                     ["1", "1", "1"], ["1"])
        data = load_tu_dataset(d, "deg")
        assert data.feature_dim == 3  # global max degree 2
        assert data.graphs[0].features[1].tolist() == [0, 0, 1]

    def test_edges_deduplicated_and_symmetrized(self, tmp_path):
        d = write_tu(tmp_path, "dup", ["1, 2", "1, 2", "2, 1"], ["1", "1"], ["1"])
        assert load_tu_dataset(d, "dup").graphs[0].edge_count == 1

    def test_missing_file_names_it(self, tmp_path):
        d = write_tu(tmp_path, "partial", ["1, 2"], ["1", "1"], ["1"])
        import os
        os.remove(os.path.join(d, "partial_graph_labels.txt"))
        with pytest.raises(FileNotFoundError, match="partial_graph_labels.txt"):
            load_tu_dataset(d, "partial")

    def test_dangling_node_id_reports_line(self, tmp_path):
        d = write_tu(tmp_path, "dangle", ["1, 2", "2, 1", "1, 9"],
                     ["1", "1"], ["1"])
        with pytest.raises(FormatError, match=r"dangle_A.txt:3"):
            load_tu_dataset(d, "dangle")

    def test_single_labeled_graph_is_node_task(self, tmp_path):
        d = write_tu(tmp_path, "nodes", ["1, 2", "2, 1", "2, 3", "3, 2"],
                     ["1", "1", "1"], ["1"], node_labels=["4", "9", "4"])
        data = load_tu_dataset(d, "nodes")
        assert data.task == "node"
        assert data.class_count == 2
        assert data.graphs[0].node_labels.tolist() == [0, 1, 0]
        # labels are targets, so features fall back to degrees
        assert data.feature_dim == 3

    def test_roundtrip_degree_features(self, tmp_path):
        data = gen_graph_cycle(4, seed=3)
        out = str(tmp_path / "GraphCycle")
        save_tu_dataset(data, out)
        back = load_tu_dataset(out, "GraphCycle")
        assert len(back.graphs) == len(data.graphs)
        for a, b in zip(data.graphs, back.graphs):
            assert a.edges() == b.edges()
            assert a.graph_label == b.graph_label
            assert np.array_equal(a.features, b.features)

    def test_roundtrip_real_attributes(self, tmp_path):
        rng = np.random.default_rng(0)
        graphs = [cycle_graph(4).with_features(rng.normal(size=(4, 3))).with_label(0),
                  path_graph(3).with_features(rng.normal(size=(3, 3))).with_label(1)]
        data = Dataset(graphs=graphs, task="graph", class_count=2, name="attr")
        out = str(tmp_path / "attr")
        save_tu_dataset(data, out)
        back = load_tu_dataset(out, "attr")
        for a, b in zip(data.graphs, back.graphs):
            assert a.edges() == b.edges()
            assert np.array_equal(a.features, b.features)


class TestGenerators:
    def test_cycle_dataset_shape(self):
        data = gen_graph_cycle(10, seed=0)
        assert data.class_count == 2
        labels = [g.graph_label for g in data.graphs]
        assert labels.count(0) == 5 and labels.count(1) == 5

    def test_cycle_deterministic(self, tmp_path):
        a, b = gen_graph_cycle(2, seed=9), gen_graph_cycle(2, seed=9)
        for ga, gb in zip(a.graphs, b.graphs):
            assert ga.edges() == gb.edges()
            assert np.array_equal(ga.features, gb.features)
        save_tu_dataset(a, str(tmp_path / "a"))
        save_tu_dataset(b, str(tmp_path / "b"))
        for suffix in ("A", "graph_indicator", "graph_labels"):
            fa = (tmp_path / "a" / f"GraphCycle_{suffix}.txt").read_bytes()
            fb = (tmp_path / "b" / f"GraphCycle_{suffix}.txt").read_bytes()
            assert fa == fb

    def test_five_dataset_shape(self):
        data = gen_graph_five(5, seed=1)
        assert data.class_count == 5
        assert sorted(g.graph_label for g in data.graphs) == [0, 1, 2, 3, 4]

    @pytest.mark.parametrize("gen,count", [(gen_graph_cycle, 6), (gen_graph_five, 10)])
    def test_generated_graphs_connected(self, gen, count):
        for g in gen(count, seed=2).graphs:
            seen = {0}
            frontier = [0]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in g.neighbors_of(u):
                        if int(v) not in seen:
                            seen.add(int(v))
                            nxt.append(int(v))
                frontier = nxt
            assert len(seen) == g.node_count

    def test_generated_graphs_satisfy_invariants(self):
        # construction already validates symmetry/no-self-loops; spot-check sizes
        data = gen_graph_cycle(8, seed=5)
        for g in data.graphs:
            assert g.node_count >= 80  # at least 8 communities of 10
            assert g.feature_dim == int(max(h.degrees.max()
                                            for h in data.graphs)) + 1

    def test_count_validation(self):
        with pytest.raises(ValueError):
            gen_graph_cycle(1, seed=0)
        with pytest.raises(ValueError):
            gen_graph_five(3, seed=0)


def toy_graph_dataset(n_graphs, class_count=2):
    graphs = []
    for i in range(n_graphs):
        g = cycle_graph(3 + i % 3).with_label(i % class_count)
        graphs.append(g.with_features(degree_features(g, 3)))
    return Dataset(graphs=graphs, task="graph", class_count=class_count, name="toy")


class TestFolds:
    def test_even_partition(self):
        plan = make_folds(toy_graph_dataset(100), 10, seed=0)
        assert all(len(te) == 10 for _, te in plan.folds)

    def test_188_graphs_fold_sizes(self):
        plan = make_folds(toy_graph_dataset(188), 10, seed=1)
        sizes = sorted(len(te) for _, te in plan.folds)
        assert set(sizes) <= {18, 19}
        assert sum(sizes) == 188

    def test_partition_properties(self):
        data = toy_graph_dataset(37, class_count=3)
        plan = make_folds(data, 5, seed=2)
        all_test = [i for _, te in plan.folds for i in te]
        assert sorted(all_test) == list(range(37))
        for tr, te in plan.folds:
            assert set(tr) | set(te) == set(range(37))
            assert not set(tr) & set(te)

    def test_stratification(self):
        data = toy_graph_dataset(40, class_count=2)
        plan = make_folds(data, 4, seed=3)
        labels = data.labels()
        for _, te in plan.folds:
            counts = np.bincount(labels[te], minlength=2)
            assert counts.min() >= 1

    def test_deterministic(self):
        data = toy_graph_dataset(30)
        a = make_folds(data, 3, seed=7)
        b = make_folds(data, 3, seed=7)
        for (tra, tea), (trb, teb) in zip(a.folds, b.folds):
            assert np.array_equal(tra, trb) and np.array_equal(tea, teb)

    def test_small_class_warns(self):
        data = toy_graph_dataset(11, class_count=2)
        bad = Dataset(graphs=data.graphs[:3] + [g.with_label(1) for g in data.graphs[3:]],
                      task="graph", class_count=2, name="warn")
        with pytest.warns(UserWarning, match="fewer members"):
            make_folds(bad, 5, seed=0)

    def test_validation(self):
        with pytest.raises(ValueError):
            make_folds(toy_graph_dataset(10), 1, seed=0)


def toy_node_dataset(n=183, classes=5, seed=0, class_sizes=None):
    edges = [(i, (i + 1) % n) for i in range(n)]
    if class_sizes is None:
        labels = np.array([i % classes for i in range(n)])
    else:
        assert sum(class_sizes) == n
        labels = np.concatenate([np.full(s, c) for c, s in enumerate(class_sizes)])
    g = Graph.from_edges(n, edges, node_labels=labels)
    g = g.with_features(degree_features(g, 2))
    return Dataset(graphs=[g], task="node", class_count=classes, name="toynode")


class TestNodeSplits:
    def test_cornell_sized_split(self):
        # 183 nodes in 5 classes; floors plus train-first leftovers
        data = toy_node_dataset(183, 5, class_sizes=(50, 40, 40, 30, 23))
        plan = make_node_splits(data, (0.6, 0.2, 0.2), seed=0)
        train, val, test = plan.masks
        labels = data.graphs[0].node_labels
        exp_train = 0
        for c in range(5):
            n_c = int((labels == c).sum())
            sizes = [int(np.floor(r * n_c)) for r in (0.6, 0.2, 0.2)]
            leftover = n_c - sum(sizes)
            for i in range(leftover):
                sizes[i % 3] += 1
            exp_train += sizes[0]
        assert int(train.sum()) == exp_train
        assert exp_train in (109, 110)
        assert not np.any(train & val) and not np.any(train & test)
        assert not np.any(val & test)
        assert np.all(train | val | test)

    def test_all_train(self):
        data = toy_node_dataset(50, 2)
        train, val, test = make_node_splits(data, (1.0, 0.0, 0.0), seed=1).masks
        assert train.all() and not val.any() and not test.any()

    def test_deterministic(self):
        data = toy_node_dataset(60, 3)
        a = make_node_splits(data, (0.6, 0.2, 0.2), seed=5).masks
        b = make_node_splits(data, (0.6, 0.2, 0.2), seed=5).masks
        for ma, mb in zip(a, b):
            assert np.array_equal(ma, mb)

    def test_validation(self):
        data = toy_node_dataset(20, 2)
        with pytest.raises(ValueError):
            make_node_splits(data, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ValueError):
            make_node_splits(toy_graph_dataset(10), (0.6, 0.2, 0.2), seed=0)


class TestDatasetType:
    def test_node_dataset_requires_single_labeled_graph(self):
        with pytest.raises(ValueError):
            Dataset(graphs=[cycle_graph(3), cycle_graph(4)], task="node",
                    class_count=2, name="bad")

    def test_split_plan_kinds(self):
        with pytest.raises(ValueError):
            SplitPlan(kind="bogus", seed=0)
