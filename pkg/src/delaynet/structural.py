"""Structured (zero/nonzero pattern) matrices and generic-rank tests.

Generic rank is the term rank of the pattern: the size of a maximum
matching in the bipartite row/column graph of nonzero positions. A minimum
vertex cover obtained from that matching (Konig) gives the largest zero
submatrix, which is the certificate behind the form-(t) test.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import DimensionError, ParseError

MC_TRIALS = 200
MC_FLOOR = 1e-3


@dataclass(frozen=True)
class StructuredMatrix:
    n_rows: int
    n_cols: int
    free: frozenset = frozenset()
    fixed: tuple = ()  # ((row, col), value) pairs, value != 0

    def __post_init__(self):
        free = frozenset((int(i), int(j)) for i, j in self.free)
        fixed = tuple(sorted(((int(i), int(j)), float(v)) for (i, j), v in dict(self.fixed).items() if v != 0))
        for i, j in itertools.chain(free, (p for p, _ in fixed)):
            if not (0 <= i < self.n_rows and 0 <= j < self.n_cols):
                raise DimensionError(f"position ({i}, {j}) outside {self.n_rows}x{self.n_cols}")
        if free & {p for p, _ in fixed}:
            raise DimensionError("fixed and free entries overlap")
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "fixed", fixed)

    @classmethod
    def from_mask(cls, mask, fixed=None):
        mask = np.asarray(mask, dtype=bool)
        free = {(int(i), int(j)) for i, j in zip(*np.nonzero(mask))}
        return cls(mask.shape[0], mask.shape[1], frozenset(free), tuple((fixed or {}).items()))

    @classmethod
    def identity(cls, n, free=True):
        diag = [(i, i) for i in range(n)]
        if free:
            return cls(n, n, frozenset(diag))
        return cls(n, n, frozenset(), tuple((p, 1.0) for p in diag))

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    @property
    def fixed_dict(self):
        return dict(self.fixed)

    def support(self):
        """Boolean mask of entries that can be nonzero."""
        mask = np.zeros(self.shape, dtype=bool)
        for i, j in self.free:
            mask[i, j] = True
        for (i, j), _ in self.fixed:
            mask[i, j] = True
        return mask

    def with_free(self, *positions):
        return StructuredMatrix(self.n_rows, self.n_cols, self.free | set(positions), self.fixed)

    def sample(self, rng):
        """A numeric realization: fixed entries kept, free entries drawn away from zero."""
        out = np.zeros(self.shape)
        for (i, j), v in self.fixed:
            out[i, j] = v
        free = sorted(self.free)
        if free:
            vals = sample_nonzero(rng, len(free))
            rows, cols = zip(*free)
            out[list(rows), list(cols)] = vals
        return out

    def to_text(self):
        fixed = self.fixed_dict
        lines = []
        for i in range(self.n_rows):
            row = []
            for j in range(self.n_cols):
                if (i, j) in self.free:
                    row.append("x")
                elif (i, j) in fixed:
                    row.append("1" if fixed[(i, j)] == 1.0 else repr(fixed[(i, j)]))
                else:
                    row.append("0")
            lines.append(" ".join(row))
        return "\n".join(lines) + "\n"


def sample_nonzero(rng, size, floor=MC_FLOOR):
    """uniform(-1, 1) draws with |v| >= floor (rejection sampling)."""
    out = rng.uniform(-1.0, 1.0, size)
    bad = np.abs(out) < floor
    while np.any(bad):
        out[bad] = rng.uniform(-1.0, 1.0, int(bad.sum()))
        bad = np.abs(out) < floor
    return out


def parse_pattern(text, path=None):
    """Text grid: ``x`` free nonzero, ``0`` zero, ``1`` fixed one; ``#`` starts a comment."""
    rows = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) == 1 and len(tokens[0]) > 1:
            tokens = list(tokens[0])
        if width is None:
            width = len(tokens)
        elif len(tokens) != width:
            raise ParseError(f"row has {len(tokens)} entries, expected {width}", path, lineno, 1)
        for col, tok in enumerate(tokens, 1):
            if tok.lower() not in ("x", "0", "1"):
                raise ParseError(f"unknown pattern symbol {tok!r}", path, lineno, raw.find(tok) + 1 or col)
        rows.append([tok.lower() for tok in tokens])
    if not rows:
        raise ParseError("empty pattern", path, 1, 1)
    free = {(i, j) for i, r in enumerate(rows) for j, tok in enumerate(r) if tok == "x"}
    fixed = {(i, j): 1.0 for i, r in enumerate(rows) for j, tok in enumerate(r) if tok == "1"}
    return StructuredMatrix(len(rows), width, frozenset(free), tuple(fixed.items()))


def read_pattern(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_pattern(text, str(path))


# ---------------------------------------------------------------- matching


@dataclass(frozen=True)
class Matching:
    size: int
    row_match: np.ndarray  # column matched to each row, -1 if none
    col_match: np.ndarray


def maximum_matching(S):
    mask = S.support() if isinstance(S, StructuredMatrix) else np.asarray(S, dtype=bool)
    n, s = mask.shape
    if n == 0 or s == 0 or not mask.any():
        return Matching(0, np.full(n, -1), np.full(s, -1))
    graph = csr_array(mask.astype(np.int8))
    row_match = maximum_bipartite_matching(graph, perm_type="column")
    col_match = np.full(s, -1)
    for i, j in enumerate(row_match):
        if j >= 0:
            col_match[j] = i
    return Matching(int(np.sum(row_match >= 0)), row_match, col_match)


def generic_rank(S):
    return maximum_matching(S).size


def konig_cover(S, matching=None):
    """Minimum vertex cover (rows, cols) from a maximum matching via alternating search."""
    mask = S.support() if isinstance(S, StructuredMatrix) else np.asarray(S, dtype=bool)
    mt = maximum_matching(mask) if matching is None else matching
    n, s = mask.shape
    row_seen = np.zeros(n, dtype=bool)
    col_seen = np.zeros(s, dtype=bool)
    stack = [i for i in range(n) if mt.row_match[i] < 0]
    row_seen[stack] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(mask[i])[0]:
            if not col_seen[j]:
                col_seen[j] = True
                k = mt.col_match[j]
                if k >= 0 and not row_seen[k]:
                    row_seen[k] = True
                    stack.append(k)
    cover_rows = np.nonzero(~row_seen)[0]
    cover_cols = np.nonzero(col_seen)[0]
    return cover_rows, cover_cols


@dataclass(frozen=True)
class FormWitness:
    t: int
    k: int
    rows: tuple  # zero-block rows (size n + s - t - k + 1)
    cols: tuple  # zero-block cols (size k)

    @property
    def order(self):
        return len(self.rows), len(self.cols)


def largest_zero_block(S):
    """Zero submatrix maximizing rows + cols: the complement of a minimum cover."""
    mask = S.support() if isinstance(S, StructuredMatrix) else np.asarray(S, dtype=bool)
    cover_rows, cover_cols = konig_cover(mask)
    rows = tuple(int(i) for i in np.setdiff1d(np.arange(mask.shape[0]), cover_rows))
    cols = tuple(int(j) for j in np.setdiff1d(np.arange(mask.shape[1]), cover_cols))
    return rows, cols


def has_form_t(S, t):
    """Form-(t) test. Returns ``(True, FormWitness)`` or ``(False, None)``.

    A zero block p x q with p + q = n + s - t + 1 exists iff a vertex cover
    of size t - 1 exists, i.e. iff the term rank is below t.
    """
    n, s = S.shape
    if s < n:
        raise DimensionError(f"form (t) needs at least as many columns as rows, got {n}x{s}")
    if not 1 <= t <= n:
        raise DimensionError(f"t must lie in [1, {n}], got {t}")
    total = n + s - t + 1
    rows, cols = largest_zero_block(S)
    if len(rows) + len(cols) < total:
        return False, None
    k = max(total - len(rows), s - t + 1)
    need_rows = total - k
    return True, FormWitness(t, k, rows[:need_rows], cols[:k])


def brute_force_form_t(S, t):
    """Exhaustive search over row subsets, straight from the definition (small n only)."""
    mask = S.support() if isinstance(S, StructuredMatrix) else np.asarray(S, dtype=bool)
    n, s = mask.shape
    if n > 12:
        raise ValueError("brute-force search limited to 12 rows")
    for p in range(1, n + 1):
        for rows in itertools.combinations(range(n), p):
            zero_cols = np.nonzero(~mask[list(rows)].any(axis=0))[0]
            for k in range(s - t + 1, s + 1):
                if k <= zero_cols.size and n + s - t - k + 1 == p:
                    return True, FormWitness(t, k, rows, tuple(int(j) for j in zero_cols[:k]))
    return False, None


def brute_force_max_zero_excess(S):
    """max (p + q) over zero submatrices, by enumeration of row subsets."""
    mask = S.support() if isinstance(S, StructuredMatrix) else np.asarray(S, dtype=bool)
    n, s = mask.shape
    best = s  # empty row set, every column
    for p in range(1, n + 1):
        for rows in itertools.combinations(range(n), p):
            best = max(best, p + int(np.sum(~mask[list(rows)].any(axis=0))))
    return best


def monte_carlo_ranks(S, trials=MC_TRIALS, seed=0):
    rng = np.random.default_rng(seed)
    return np.array([np.linalg.matrix_rank(S.sample(rng)) for _ in range(trials)])


@dataclass
class LemmaCheck:
    t: int
    form: bool
    witness: FormWitness | None
    generic_rank: int
    max_sampled_rank: int
    consistent: bool


def lemma_consistency(S, t, trials=MC_TRIALS, seed=0):
    """Monte-Carlo check that (rank < t for all samples) matches the form-(t) verdict."""
    form, wit = has_form_t(S, t)
    ranks = monte_carlo_ranks(S, trials, seed)
    all_below = bool(np.all(ranks < t))
    return LemmaCheck(t, form, wit, generic_rank(S), int(ranks.max(initial=0)), all_below == form)


# ------------------------------------------------------- extended matrix


@dataclass(frozen=True)
class ExtendedControllabilityMatrix:
    matrix: StructuredMatrix
    m: int
    n_inputs: int
    col_blocks: tuple  # (kind, start, width) per block column; kind in {"K", "I"}
    A_positions: tuple  # per row block i>=1: (row offset, col offset) of -A
    K_positions: tuple
    I_positions: tuple

    @property
    def target(self):
        return self.m * self.m

    def numeric(self, A, K):
        """Dense realization for given A (m x m) and K (m x N)."""
        out = np.zeros(self.matrix.shape)
        m = self.m
        for r0, c0 in self.K_positions:
            out[r0 : r0 + m, c0 : c0 + self.n_inputs] = K
        for r0, c0 in self.I_positions:
            out[r0 : r0 + m, c0 : c0 + m] = np.eye(m)
        for r0, c0 in self.A_positions:
            out[r0 : r0 + m, c0 : c0 + m] = -np.asarray(A)
        return out


def build_extended_matrix(A_pattern, K_pattern):
    """Chain matrix with block rows [K, I, 0 ...], [0, -A, K, I, 0 ...], ..., [... -A, K].

    There are m block rows; block columns alternate K (width N) and I (width m),
    m of the former and m - 1 of the latter.
    """
    m = A_pattern.n_rows
    if A_pattern.n_cols != m:
        raise DimensionError("A pattern must be square")
    if K_pattern.n_rows != m:
        raise DimensionError(f"K pattern has {K_pattern.n_rows} rows, expected {m}")
    N = K_pattern.n_cols
    blocks = []
    col = 0
    for b in range(2 * m - 1):
        kind = "K" if b % 2 == 0 else "I"
        width = N if kind == "K" else m
        blocks.append((kind, col, width))
        col += width
    n_cols = col
    free, fixed = set(), {}
    A_pos, K_pos, I_pos = [], [], []
    for i in range(m):
        r0 = i * m
        kb = blocks[2 * i]
        K_pos.append((r0, kb[1]))
        for a, b in K_pattern.free:
            free.add((r0 + a, kb[1] + b))
        for (a, b), v in K_pattern.fixed:
            fixed[(r0 + a, kb[1] + b)] = v
        if i < m - 1:
            ib = blocks[2 * i + 1]
            I_pos.append((r0, ib[1]))
            for a in range(m):
                fixed[(r0 + a, ib[1] + a)] = 1.0
        if i > 0:
            ab = blocks[2 * i - 1]
            A_pos.append((r0, ab[1]))
            for a, b in A_pattern.free:
                free.add((r0 + a, ab[1] + b))
            for (a, b), v in A_pattern.fixed:
                fixed[(r0 + a, ab[1] + b)] = -v
    S = StructuredMatrix(m * m, n_cols, frozenset(free - set(fixed)), tuple(fixed.items()))
    return ExtendedControllabilityMatrix(S, m, N, tuple(blocks), tuple(A_pos), tuple(K_pos), tuple(I_pos))


def _kalman_rank(A, K):
    m = A.shape[0]
    blocks = [K]
    for _ in range(m - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks))


@dataclass
class StructuralReport:
    verdict: str  # "structurally-controllable" | "structurally-uncontrollable"
    m: int
    n_inputs: int
    target: int
    extended_generic_rank: int
    witness: FormWitness | None
    zero_rows: list = field(default_factory=list)  # rows of [A K] with no free entry
    oracle_max_kalman_rank: int | None = None
    oracle_agrees: bool | None = None
    trials: int = 0
    notes: list = field(default_factory=list)

    @property
    def controllable(self):
        return self.verdict == "structurally-controllable"


def structural_controllability(A_pattern, K_pattern, trials=MC_TRIALS, seed=0):
    """Form-(m^2) test on the extended matrix, cross-checked by random Kalman ranks.

    The random oracle draws one value per free entry of A and K, reuses the
    same A in every block, and records the largest Kalman rank seen.
    """
    ext = build_extended_matrix(A_pattern, K_pattern)
    m, N = ext.m, ext.n_inputs
    form, wit = has_form_t(ext.matrix, ext.target)
    verdict = "structurally-uncontrollable" if form else "structurally-controllable"
    AK = np.hstack([A_pattern.support(), K_pattern.support()])
    zero_rows = [int(i) for i in np.nonzero(~AK.any(axis=1))[0]]
    rep = StructuralReport(verdict, m, N, ext.target, generic_rank(ext.matrix), wit, zero_rows, trials=trials)
    if trials:
        rng = np.random.default_rng(seed)
        best = 0
        for _ in range(trials):
            A = A_pattern.sample(rng)
            K = K_pattern.sample(rng)
            best = max(best, _kalman_rank(A, K))
            if best == m:
                break
        rep.oracle_max_kalman_rank = int(best)
        rep.oracle_agrees = (best == m) == (not form)
        if not rep.oracle_agrees:
            rep.notes.append(
                f"random Kalman oracle reached rank {best} of {m}, disagreeing with the form test"
            )
    return rep


def graph_patterns(g):
    """Zero/nonzero patterns (A, K) of a network: a_jk free iff edge k feeds edge j with positive weight."""
    from .graph import adjacency_B

    return StructuredMatrix.from_mask(adjacency_B(g) != 0), StructuredMatrix.from_mask(np.asarray(g.control) != 0)
