import numpy as np
import pytest
import scipy.sparse as sp
from conftest import random_graph
from hypothesis import given, settings
from hypothesis import strategies as st

from pprdyn.embedding import (PPREmbedding, aggregate, bundle, default_pe_dim, encode, hash_reduce,
                              load_embeddings, save_embeddings, sparse_random_project)
from pprdyn.exceptions import FormatError, InvalidArgumentError
from pprdyn.ppr import PprConfig, PprVector, forward_push


def vec(entries, source=0):
    return PprVector(source, dict(entries))


def test_aggregate_unit_vector():
    X = np.arange(12, dtype=np.float32).reshape(3, 4)
    np.testing.assert_array_equal(aggregate(X, vec({2: 1.0})), X[:, 2])


def test_aggregate_empty():
    X = np.ones((3, 4), dtype=np.float32)
    np.testing.assert_array_equal(aggregate(X, vec({})), np.zeros(3))


def test_aggregate_weighted_sum():
    np.testing.assert_allclose(aggregate(np.eye(2), vec({0: 0.6, 1: 0.4})), (0.6, 0.4))


def test_aggregate_out_of_range():
    with pytest.raises(InvalidArgumentError):
        aggregate(np.eye(2), vec({5: 1.0}))


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_aggregate_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(5, 30))
    p1 = rng.random(30) * (rng.random(30) < 0.3)
    p2 = rng.random(30) * (rng.random(30) < 0.3)
    lhs = aggregate(X, a * p1 + b * p2)
    rhs = a * aggregate(X, p1) + b * aggregate(X, p2)
    assert np.allclose(lhs, rhs, rtol=1e-6, atol=1e-9)


def test_hash_single_entry():
    pe = hash_reduce(vec({11: 0.3}), 8, seed=4).vector
    nz = np.flatnonzero(pe)
    assert nz.size == 1
    assert abs(pe[nz[0]]) == pytest.approx(0.3)


def test_hash_empty():
    assert not hash_reduce(vec({}), 8).vector.any()


def test_hash_bad_width():
    with pytest.raises(InvalidArgumentError):
        hash_reduce(vec({0: 1.0}), 0)


def test_hash_disjoint_supports_rarely_collide():
    rng = np.random.default_rng(0)
    failures = 0
    for seed in range(100):
        nodes = rng.choice(5000, 20, replace=False)
        a = vec({int(i): 0.1 for i in nodes[:10]})
        b = vec({int(i): 0.1 for i in nodes[10:]})
        d = np.linalg.norm(hash_reduce(a, 256, seed).vector - hash_reduce(b, 256, seed).vector)
        failures += d == 0
    assert failures < 5


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.integers(0, 10_000), st.floats(1e-9, 1.0), max_size=50),
       st.integers(1, 64), st.integers(0, 2**40))
def test_hash_l1_contraction(entries, d_pe, seed):
    pi = vec(entries)
    assert np.abs(hash_reduce(pi, d_pe, seed).vector).sum() <= pi.l1() * (1 + 1e-12) + 1e-15


def test_encoders_deterministic():
    pi = vec({3: 0.5, 9: 0.25, 40: 0.25})
    for enc in ("hash", "srp"):
        a = encode(pi, 32, seed=7, encoder=enc).vector
        b = encode(pi, 32, seed=7, encoder=enc).vector
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, encode(pi, 32, seed=8, encoder=enc).vector)


def test_srp_empty():
    assert not sparse_random_project(vec({}), 16).vector.any()


def test_srp_entry_distribution():
    # One-hot inputs read out single columns of the projection.
    cols = np.array([sparse_random_project(vec({j: 1.0}), 64, seed=1).vector for j in range(400)])
    vals = np.round(cols * np.sqrt(64) / np.sqrt(3)).ravel()
    frac = {v: np.mean(vals == v) for v in (-1, 0, 1)}
    assert abs(frac[0] - 2 / 3) < 0.02
    assert abs(frac[1] - 1 / 6) < 0.02 and abs(frac[-1] - 1 / 6) < 0.02


def test_srp_distance_preservation():
    g = random_graph(500, 1500, seed=3)
    rng = np.random.default_rng(0)
    cfg = PprConfig(eps_push=1e-2)
    vecs = []
    for s in rng.choice(500, 20, replace=False):
        p = forward_push(g, int(s), cfg).p
        vecs.append(p)
    proj = [sparse_random_project(p, 128, seed=5).vector for p in vecs]
    ratios = []
    for i in range(20):
        for j in range(i + 1, 20):
            ratios.append(np.linalg.norm(proj[i] - proj[j]) / np.linalg.norm(vecs[i] - vecs[j]))
    ratios = np.array(ratios)
    assert np.mean((ratios >= 0.5) & (ratios <= 2.0)) >= 0.95


def test_pe_distinguishes_identical_features():
    g = random_graph(200, 600, seed=4)
    cfg = PprConfig(eps_push=1e-6)
    pes = [hash_reduce(forward_push(g, s, cfg).p, 64, 0).vector for s in range(30)]
    for i in range(30):
        for j in range(i + 1, 30):
            assert np.abs(pes[i] - pes[j]).max() > 1e-9


def test_bundle_lengths():
    h = np.ones(4)
    pe = hash_reduce(vec({0: 1.0}), 2)
    assert bundle(h, pe, "concat").input_dim == 6
    assert bundle(h, pe, "pe_only").input_dim == 2
    assert bundle(h, pe, "feat_only").input_dim == 4
    with pytest.raises(InvalidArgumentError):
        bundle(h, pe, "sum")


def test_feat_only_unit_ppr_is_raw_features():
    X = np.random.default_rng(0).normal(size=(5, 9))
    b = bundle(aggregate(X, vec({4: 1.0})), hash_reduce(vec({4: 1.0}), 3), "feat_only")
    np.testing.assert_allclose(b.features, X[:, 4])


def test_default_pe_dim():
    assert default_pe_dim(100) == 100
    assert default_pe_dim(2708) == 256
    assert default_pe_dim(20_000) == 512


def test_transformer_matches_functions():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(6, 40)).astype(np.float32)
    P = sp.random(5, 40, density=0.3, random_state=2, format="csr")
    for enc in ("hash", "srp"):
        emb = PPREmbedding(features=X, mode="concat", d_pe=16, encoder=enc, seed=3)
        Z = emb.fit_transform(P)
        assert Z.shape == (5, 22) and Z.dtype == np.float32
        for k in range(5):
            h = aggregate(X, P[k])
            pe = encode(P[k], 16, 3, enc).vector
            np.testing.assert_allclose(Z[k], np.concatenate([h, pe]), rtol=1e-5, atol=1e-6)


def test_transformer_modes_and_split():
    X = np.ones((3, 10), dtype=np.float32)
    P = sp.identity(10, format="csr")
    assert PPREmbedding(X, mode="pe_only", d_pe=4).fit_transform(P).shape == (10, 4)
    assert PPREmbedding(X, mode="feat_only", d_pe=4).fit_transform(P).shape == (10, 3)
    emb = PPREmbedding(X, mode="additive", d_pe=4).fit(P)
    assert emb.split_ == 3
    with pytest.raises(InvalidArgumentError):
        PPREmbedding(None, mode="concat").fit(P)
    with pytest.raises(InvalidArgumentError):
        PPREmbedding(np.ones((3, 9)), mode="concat").fit(P)


def test_transformer_params():
    emb = PPREmbedding(mode="pe_only", d_pe=8)
    assert emb.get_params()["d_pe"] == 8
    assert emb.set_params(seed=5).seed == 5


def test_embedding_file_round_trip(tmp_path):
    M = np.random.default_rng(0).normal(size=(4, 3)).astype(np.float32)
    save_embeddings(tmp_path / "e.bin", M, node_ids=[10, 11, 12, 13])
    raw = (tmp_path / "e.bin").read_bytes()
    assert raw[:4] == b"EMB1" and len(raw) == 16 + 4 * 12
    back, ids = load_embeddings(tmp_path / "e.bin")
    np.testing.assert_array_equal(back, M)
    assert ids == [10, 11, 12, 13]


def test_embedding_file_corrupt(tmp_path):
    (tmp_path / "e.bin").write_bytes(b"EMB1" + b"\x02\x00\x00\x00" * 3)
    with pytest.raises(FormatError):
        load_embeddings(tmp_path / "e.bin")
