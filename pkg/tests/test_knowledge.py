"""Reliability quantification: MC estimator laws, Dirichlet energy oracle."""

import numpy as np
import pytest

from conftest import spearman
from krd.errors import ParameterError
from krd.graphs import normalize_adjacency, synth_graph
from krd.knowledge import (
    ReliabilityProfile,
    dirichlet_energy,
    entropy_profile,
    load_reliability_csv,
    quantify_reliability,
    save_reliability_csv,
)
from krd.linalg import entropy_rows, softmax_rows
from krd.models import StudentModel, TeacherModel, TrainConfig, init_model
from krd.rng import Rng


def naive_rho(teacher, adj, x, delta, num_samples, rng):
    """Literal per-node double loop over samples, no vectorization."""
    from krd.models import forward

    base = softmax_rows(forward(teacher, adj, x).logits)
    base_h = entropy_rows(base)
    n = x.shape[0]
    total = np.zeros(n)
    for _ in range(num_samples):
        noise = rng.normal(x.shape)
        probs = softmax_rows(forward(teacher, adj, x + delta * noise).logits)
        hs = entropy_rows(probs)
        for i in range(n):
            total[i] += (hs[i] - base_h[i]) ** 2
    return total / (num_samples * delta * delta)


@pytest.fixture
def tiny_case(tiny_bundle):
    adj = normalize_adjacency(tiny_bundle)
    cfg = TrainConfig(epochs=1, hidden=5, layers=2, dropout=0.0)
    teacher = init_model("gcn", 3, 3, cfg, Rng(21))
    return tiny_bundle, adj, teacher


class TestQuantify:
    def test_matches_naive_double_loop(self, tiny_case):
        bundle, adj, teacher = tiny_case
        fast = quantify_reliability(teacher, adj, bundle.features, 0.05, 8, Rng(5).spawn("q"))
        slow = naive_rho(teacher, adj, bundle.features, 0.05, 8, Rng(5).spawn("q"))
        assert np.abs(fast.rho - slow).max() <= 1e-12

    def test_zero_weight_teacher_is_degenerate(self, tiny_case):
        bundle, adj, teacher = tiny_case
        teacher.weights = [np.zeros_like(w) for w in teacher.weights]
        teacher.touch()
        prof = quantify_reliability(teacher, adj, bundle.features, 0.1, 4, Rng(0))
        assert prof.degenerate
        assert not prof.rho.any()
        assert not prof.rho_normalized.any()
        assert prof.rho_max == 0.0

    def test_normalization_and_bounds(self, tiny_case):
        bundle, adj, teacher = tiny_case
        prof = quantify_reliability(teacher, adj, bundle.features, 0.05, 16, Rng(2))
        assert not prof.degenerate
        assert prof.rho.min() >= 0.0
        assert prof.rho_normalized.max() == pytest.approx(1.0)
        assert prof.rho_normalized.min() >= 0.0
        assert np.abs(prof.rho_normalized * prof.rho_max - prof.rho).max() <= 1e-15
        base = softmax_rows(
            __import__("krd.models", fromlist=["forward"]).forward(
                teacher, adj, bundle.features).logits)
        assert np.array_equal(prof.base_entropy, entropy_rows(base))

    def test_monte_carlo_self_consistency(self, tiny_case):
        """Two disjoint sample streams agree within 5 percent per node."""
        bundle, adj, teacher = tiny_case
        a = quantify_reliability(teacher, adj, bundle.features, 0.05, 4000, Rng(1).spawn("a"))
        b = quantify_reliability(teacher, adj, bundle.features, 0.05, 4000, Rng(1).spawn("b"))
        rel = np.abs(a.rho - b.rho) / np.maximum(np.maximum(a.rho, b.rho), 1e-30)
        assert rel.max() <= 0.05

    def test_delta_invariance_in_linear_regime(self, tiny_bundle):
        """On a 1-layer teacher the 1/delta^2 scaling removes delta to first order."""
        cfg = TrainConfig(epochs=1, hidden=4, layers=1, dropout=0.0)
        teacher = init_model("gcn", 3, 3, cfg, Rng(31))
        adj = normalize_adjacency(tiny_bundle)
        x = tiny_bundle.features
        small = quantify_reliability(teacher, adj, x, 0.01, 3000, Rng(7).spawn("s"))
        large = quantify_reliability(teacher, adj, x, 0.02, 3000, Rng(7).spawn("s"))
        rel = np.abs(small.rho - large.rho) / np.maximum(small.rho, 1e-30)
        assert rel.max() < 0.5

    def test_ranking_stable_across_seeds(self, sep_bundle, sep_adj, sep_teacher):
        a = quantify_reliability(sep_teacher, sep_adj, sep_bundle.features, 0.05, 400,
                                 Rng(10).spawn("q"))
        b = quantify_reliability(sep_teacher, sep_adj, sep_bundle.features, 0.05, 400,
                                 Rng(11).spawn("q"))
        assert spearman(a.rho, b.rho) > 0.9

    def test_deterministic_for_fixed_stream(self, tiny_case):
        bundle, adj, teacher = tiny_case
        a = quantify_reliability(teacher, adj, bundle.features, 0.05, 8, Rng(3).spawn("q"))
        b = quantify_reliability(teacher, adj, bundle.features, 0.05, 8, Rng(3).spawn("q"))
        assert np.array_equal(a.rho, b.rho)
        assert np.array_equal(a.rho_normalized, b.rho_normalized)

    def test_works_for_mlp_teacher_too(self, tiny_bundle):
        cfg = TrainConfig(epochs=1, hidden=4, layers=2, dropout=0.0)
        model = StudentModel(init_model("mlp", 3, 3, cfg, Rng(1)).weights, 0.0)
        prof = quantify_reliability(model, None, tiny_bundle.features, 0.05, 4, Rng(2))
        assert prof.rho.shape == (12,)

    def test_parameter_validation(self, tiny_case):
        bundle, adj, teacher = tiny_case
        with pytest.raises(ParameterError):
            quantify_reliability(teacher, adj, bundle.features, 0.0, 4, Rng(0))
        with pytest.raises(ParameterError):
            quantify_reliability(teacher, adj, bundle.features, -0.1, 4, Rng(0))
        with pytest.raises(ParameterError):
            quantify_reliability(teacher, adj, bundle.features, 0.1, 0, Rng(0))

    def test_profile_validate_rejects_bad_values(self):
        with pytest.raises(ParameterError):
            ReliabilityProfile(
                rho=np.array([-1.0]), rho_max=1.0, rho_normalized=np.array([0.5]),
                base_entropy=np.array([0.1]), num_samples=1, delta=0.1,
                degenerate=False,
            ).validate()
        with pytest.raises(ParameterError):
            ReliabilityProfile(
                rho=np.array([1.0]), rho_max=1.0, rho_normalized=np.array([1.5]),
                base_entropy=np.array([0.1]), num_samples=1, delta=0.1,
                degenerate=False,
            ).validate()


class TestEntropyProfile:
    def test_scalar_loop_oracle(self):
        probs = softmax_rows(Rng(4).normal((9, 5)))
        got = entropy_profile(probs)
        for i in range(9):
            want = -sum(p * np.log(p) for p in probs[i] if p > 0)
            assert abs(got[i] - want) <= 1e-12


class TestDirichletEnergy:
    def test_identical_rows_give_zero_on_regular_graph(self):
        # 4-cycle: all degrees equal, so constant rows scale uniformly
        bundle = synth_graph(12, 3, 0.6, 0.1, 0.3, seed=9)
        import dataclasses
        edges = np.array([[0, 1], [1, 2], [2, 3], [0, 3]], dtype=np.int64)
        cyc = dataclasses.replace(bundle, num_nodes=4, edges=edges,
                                  features=bundle.features[:4],
                                  labels=bundle.labels[:4] % 3)
        y = np.tile(np.array([[1.0, 2.0, 3.0]]), (4, 1))
        assert dirichlet_energy(y, cyc) == 0.0

    def test_two_node_hand_value(self):
        import dataclasses
        bundle = synth_graph(12, 3, 0.6, 0.1, 0.3, seed=9)
        pair = dataclasses.replace(
            bundle, num_nodes=2, edges=np.array([[0, 1]], dtype=np.int64),
            features=bundle.features[:2], labels=np.array([0, 1], dtype=np.int64))
        y = np.array([[2.0], [0.0]])
        # degrees (A+I): both 2. scaled rows 2/sqrt2, 0. diff^2 = 2, doubled = 4
        assert dirichlet_energy(y, pair) == pytest.approx(4.0, abs=1e-12)

    def test_matches_naive_double_loop(self, sep_bundle):
        y = Rng(6).normal((90, 3))
        deg = sep_bundle.degrees().astype(np.float64)
        neighbors = {}
        for u, v in sep_bundle.edges:
            neighbors.setdefault(int(u), []).append(int(v))
            neighbors.setdefault(int(v), []).append(int(u))
        total = 0.0
        for i in range(90):
            for j in neighbors.get(i, []):
                d = y[i] / np.sqrt(deg[i]) - y[j] / np.sqrt(deg[j])
                total += float((d * d).sum())
        got = dirichlet_energy(y, sep_bundle)
        assert got == pytest.approx(total, rel=1e-12)
        assert got >= 0.0

    def test_empty_graph_zero(self):
        import dataclasses
        bundle = synth_graph(12, 3, 0.6, 0.1, 0.3, seed=9)
        lonely = dataclasses.replace(bundle, edges=np.zeros((0, 2), dtype=np.int64))
        assert dirichlet_energy(Rng(0).normal((12, 2)), lonely) == 0.0

    def test_row_count_mismatch(self, sep_bundle):
        with pytest.raises(ParameterError):
            dirichlet_energy(np.zeros((5, 3)), sep_bundle)


class TestReliabilityCsv:
    def test_round_trip(self, tiny_case, tmp_path):
        bundle, adj, teacher = tiny_case
        prof = quantify_reliability(teacher, adj, bundle.features, 0.05, 8, Rng(2))
        path = tmp_path / "reliability.csv"
        save_reliability_csv(prof, path)
        text = path.read_text()
        assert text.splitlines()[0] == "node_id,rho,rho_normalized,entropy"
        loaded = load_reliability_csv(path)
        # 17 significant digits round-trip doubles exactly
        assert np.array_equal(loaded.rho, prof.rho)
        assert np.array_equal(loaded.rho_normalized, prof.rho_normalized)
        assert np.array_equal(loaded.base_entropy, prof.base_entropy)
        assert loaded.degenerate == prof.degenerate

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "reliability.csv"
        path.write_text("id,r\n0,1\n")
        with pytest.raises(ParameterError):
            load_reliability_csv(path)
