import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaynet import DimensionError, ParseError, StructuredMatrix, build_extended_matrix, data_path
from delaynet import generic_rank, has_form_t, lemma_consistency, structural_controllability
from delaynet.acceptance import random_pattern
from delaynet.structural import (
    brute_force_form_t,
    brute_force_max_zero_excess,
    konig_cover,
    maximum_matching,
    monte_carlo_ranks,
    parse_pattern,
    read_pattern,
    sample_nonzero,
)


def Q0():
    return read_pattern(data_path("q0.pattern"))


def Q1():
    return read_pattern(data_path("q1.pattern"))


def kalman_rank(A, K):
    blocks = [K]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks))


def test_generic_rank_examples():
    assert generic_rank(Q0()) == 3
    assert generic_rank(Q1()) == 3
    for n in (1, 4, 7):
        assert generic_rank(StructuredMatrix.identity(n)) == n
        assert generic_rank(StructuredMatrix.identity(n, free=False)) == n


def test_form_4_witnesses():
    form, w = has_form_t(Q0(), 4)
    assert form and w.k == 5 and w.order == (2, 5)
    assert w.rows == (0, 1)
    form, w = has_form_t(Q1(), 4)
    assert form and w.k == 4 and w.order == (3, 4)
    assert w.rows == (0, 1, 2) and w.cols == (1, 2, 3, 4)
    for S in (Q0(), Q1()):
        mask = S.support()
        _, w = has_form_t(S, 4)
        assert not mask[np.ix_(w.rows, w.cols)].any()
        assert len(w.rows) + w.k == 5 + 5 - 4 + 1


def test_full_pattern_never_of_form():
    S = StructuredMatrix.from_mask(np.ones((4, 6)))
    assert not any(has_form_t(S, t)[0] for t in range(1, 5))


def test_form_argument_checks():
    with pytest.raises(DimensionError):
        has_form_t(StructuredMatrix.from_mask(np.ones((4, 3))), 2)
    with pytest.raises(DimensionError):
        has_form_t(Q0(), 6)
    with pytest.raises(DimensionError):
        StructuredMatrix(2, 2, frozenset({(2, 0)}))


def test_lemma_consistency_examples():
    chk = lemma_consistency(Q0(), 4, trials=100)
    assert chk.form and chk.max_sampled_rank == 3 and chk.consistent
    chk = lemma_consistency(StructuredMatrix.identity(3), 3)
    assert not chk.form and chk.max_sampled_rank == 3 and chk.consistent


def test_freeing_an_entry_breaks_form():
    S = Q1().with_free((0, 1))
    assert generic_rank(S) == 4
    assert not has_form_t(S, 4)[0]
    assert not brute_force_form_t(S, 4)[0]
    assert lemma_consistency(S, 4).consistent


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matching_cover_duality(seed):
    S = random_pattern(np.random.default_rng(seed))
    n, s = S.shape
    M = maximum_matching(S)
    rows, cols = konig_cover(S)
    rank = generic_rank(S)
    assert len(rows) + len(cols) == rank
    assert brute_force_max_zero_excess(S) == n + s - rank
    mask = S.support()
    # the cover really covers every possible nonzero
    keep_r = np.setdiff1d(np.arange(n), rows)
    keep_c = np.setdiff1d(np.arange(s), cols)
    assert not mask[np.ix_(keep_r, keep_c)].any()
    assert M.size == rank
    matched = [(i, j) for i, j in enumerate(M.row_match) if j >= 0]
    assert all(mask[i, j] for i, j in matched)
    assert len({j for _, j in matched}) == len(matched)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_form_matches_brute_force_and_is_monotone(seed):
    S = random_pattern(np.random.default_rng(seed))
    n, s = S.shape
    if s < n:
        S = StructuredMatrix(s, n, frozenset((j, i) for i, j in S.free), tuple(((j, i), v) for (i, j), v in S.fixed))
        n, s = S.shape
    verdicts = []
    for t in range(1, n + 1):
        form, wit = has_form_t(S, t)
        assert form == brute_force_form_t(S, t)[0]
        assert form == (generic_rank(S) < t)
        if form:
            assert not S.support()[np.ix_(wit.rows, wit.cols)].any()
            assert wit.k >= s - t + 1 and len(wit.rows) == n + s - t - wit.k + 1
        verdicts.append(form)
    # form (t) implies form (t + 1)
    assert all(b for a, b in zip(verdicts, verdicts[1:]) if a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monte_carlo_attains_generic_rank(seed):
    S = random_pattern(np.random.default_rng(seed))
    assert monte_carlo_ranks(S, trials=200, seed=seed % 1000).max() == generic_rank(S)


def test_sampling_floor():
    v = sample_nonzero(np.random.default_rng(0), 10000)
    assert np.all(np.abs(v) >= 1e-3) and np.all(np.abs(v) <= 1)


def test_extended_matrix_single_edge():
    ext = build_extended_matrix(StructuredMatrix(1, 1), parse_pattern("x"))
    assert ext.matrix.shape == (1, 1) and ext.matrix.free == {(0, 0)}
    assert structural_controllability(StructuredMatrix(1, 1), parse_pattern("x")).controllable
    assert not structural_controllability(StructuredMatrix(1, 1), parse_pattern("0")).controllable


def test_extended_matrix_layout_two_edges():
    A = StructuredMatrix.from_mask(np.ones((2, 2)))
    K = parse_pattern("x\n0")
    ext = build_extended_matrix(A, K)
    # block columns K | I | K with widths 1, 2, 1
    assert ext.col_blocks == (("K", 0, 1), ("I", 1, 2), ("K", 3, 1))
    assert ext.K_positions == ((0, 0), (2, 3))
    assert ext.I_positions == ((0, 1),)
    assert ext.A_positions == ((2, 1),)
    rng = np.random.default_rng(2)
    An, Kn = rng.normal(size=(2, 2)), np.array([[0.7], [0.0]])
    expected = np.array(
        [
            [0.7, 1, 0, 0],
            [0.0, 0, 1, 0],
            [0, -An[0, 0], -An[0, 1], 0.7],
            [0, -An[1, 0], -An[1, 1], 0.0],
        ]
    )
    np.testing.assert_allclose(ext.numeric(An, Kn), expected)
    assert ext.target == 4


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_extended_rank_tracks_kalman_rank(seed):
    rng = np.random.default_rng(seed)
    m, N = int(rng.integers(1, 5)), int(rng.integers(1, 3))
    A = StructuredMatrix.from_mask(rng.random((m, m)) < 0.4)
    K = StructuredMatrix.from_mask(rng.random((m, N)) < 0.4)
    ext = build_extended_matrix(A, K)
    An, Kn = A.sample(rng), K.sample(rng)
    assert np.linalg.matrix_rank(ext.numeric(An, Kn)) == m * (m - 1) + kalman_rank(An, Kn)


def test_zero_input_pattern_uncontrollable():
    rep = structural_controllability(StructuredMatrix.from_mask(np.ones((3, 3))), StructuredMatrix(3, 1))
    assert not rep.controllable and rep.witness is not None and rep.oracle_agrees


def test_chain_controllable():
    rep = structural_controllability(read_pattern(data_path("chain_A.pattern")), read_pattern(data_path("chain_K.pattern")))
    assert rep.controllable and rep.oracle_max_kalman_rank == 3 and rep.oracle_agrees
    assert rep.extended_generic_rank == rep.target == 9


def test_decoupled_uncontrollable_with_zero_row():
    rep = structural_controllability(
        read_pattern(data_path("decoupled_A.pattern")), read_pattern(data_path("decoupled_K.pattern"))
    )
    assert not rep.controllable and rep.zero_rows == [2] and rep.oracle_agrees


def test_pattern_parse_errors(tmp_path):
    with pytest.raises(ParseError) as info:
        parse_pattern("x 0\nx 0 0\n")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        parse_pattern("x y\n")
    with pytest.raises(ParseError):
        parse_pattern("# only a comment\n")
    with pytest.raises(ParseError):
        read_pattern(tmp_path / "missing.pattern")
    S = parse_pattern("x01\n1x0\n")
    assert parse_pattern(S.to_text()) == S


def test_graph_patterns_junction():
    from delaynet.fixtures import atfm_junction
    from delaynet.structural import graph_patterns

    g, _ = atfm_junction()
    A, K = graph_patterns(g)
    assert A.free == {(1, 0), (2, 0), (0, 1), (0, 2)}
    assert K.free == {(0, 0)}
    # both outgoing edges see only the incoming one: a dilation, whatever the weights
    rep = structural_controllability(A, K)
    assert not rep.controllable and rep.oracle_agrees
