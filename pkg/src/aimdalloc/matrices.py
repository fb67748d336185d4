"""Randomized back-off matrices, their window-lifted and block forms, and norm checks.

One capacity event of a resource with back-off pattern p (entries beta or 1)
acts on the at-capacity allocation vector as the column-stochastic matrix

    A = diag(p) + (1/n) e (e^T - p^T),

where e is the all-ones vector: agents keep p_i of their allocation and the
shed capacity is returned in equal shares through linear growth until the
next event.  Lifting A propagates the stack of running partial averages over
a window of T events; embedding the lifted matrix as one diagonal block of a
resource-indexed block matrix gives the per-event update of the stacked
multi-resource state.

The norm used throughout is the maximum L1 norm over length-n subblocks;
applied to a window stack it is the window norm, applied to the full stacked
state it is the multi-resource norm (the maximum distributes over blocks, so
one function serves both).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "aimd_matrix",
    "full_backoff_matrix",
    "pattern_vector",
    "pattern_probability",
    "sample_pattern",
    "all_patterns",
    "l1_norm",
    "block_max_l1",
    "project_block_zero_sum",
    "lift_window",
    "event_block_matrix",
    "chain_product",
    "NormCheck",
    "max_norm_ratio",
    "random_block_zero_sum",
    "property_suite",
    "PropertyResult",
]


def aimd_matrix(pattern) -> np.ndarray:
    """Event matrix for one back-off pattern (entries in (0,1]); columns sum to 1.

    Entry pattern[i] is the factor agent i applies to its own allocation:
    1 means it kept its demand, a value in (0,1) means it backed off.
    """
    p = np.asarray(pattern, dtype=float)
    if p.ndim != 1 or p.size < 1:
        raise ValueError("pattern must be a non-empty vector")
    if np.any((p <= 0) | (p > 1)):
        raise ValueError(f"pattern entries must lie in (0, 1], got {p}")
    n = p.size
    return np.diag(p) + np.tile((1.0 - p) / n, (n, 1))


def full_backoff_matrix(beta: float, n: int) -> np.ndarray:
    """Event matrix where every agent backs off; entrywise positive for n >= 1."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    return aimd_matrix(np.full(n, beta))


def pattern_vector(mask, beta: float) -> np.ndarray:
    """Numeric pattern from a boolean back-off mask (True means backed off)."""
    return np.where(np.asarray(mask, dtype=bool), float(beta), 1.0)


def pattern_probability(mask, lam) -> float:
    """Probability of one back-off mask under independent per-agent draws."""
    mask = np.asarray(mask, dtype=bool)
    lam = np.asarray(lam, dtype=float)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return float(np.prod(np.where(mask, lam, 1.0 - lam)))


def sample_pattern(lam, rng) -> np.ndarray:
    """Independent Bernoulli back-off mask: entry i is True with probability lam[i]."""
    lam = np.asarray(lam, dtype=float)
    return rng.random(lam.size) < lam


def all_patterns(n: int):
    """Iterate all 2^n boolean back-off masks (agent 0 varies slowest)."""
    for bits in itertools.product((False, True), repeat=n):
        yield np.array(bits, dtype=bool)


def l1_norm(v) -> float:
    return float(np.sum(np.abs(v)))


def block_max_l1(v, n: int) -> float:
    """Maximum L1 norm over consecutive length-n subblocks of v.

    This is the window norm on stacks of T subblocks and, unchanged, the
    stacked multi-resource norm on m*T subblocks.
    """
    v = np.asarray(v, dtype=float)
    if v.size % n:
        raise ValueError(f"vector length {v.size} is not a multiple of the block size {n}")
    return float(np.abs(v.reshape(-1, n)).sum(axis=1).max())


def _block_max_l1_cols(Z: np.ndarray, n: int) -> np.ndarray:
    """block_max_l1 of every column of Z (dim x k)."""
    k = Z.shape[1]
    return np.abs(Z.reshape(-1, n, k)).sum(axis=1).max(axis=0)


def project_block_zero_sum(v, n: int) -> np.ndarray:
    """Orthogonal projection making every length-n subblock sum to zero.

    Idempotent; differences of feasible at-capacity states already live in
    this subspace and pass through unchanged.
    """
    v = np.asarray(v, dtype=float)
    if v.size % n:
        raise ValueError(f"vector length {v.size} is not a multiple of the block size {n}")
    blocks = v.reshape(-1, n)
    return (blocks - blocks.mean(axis=1, keepdims=True)).reshape(v.shape)


def lift_window(A: np.ndarray, T: int) -> np.ndarray:
    """Lift an n x n event matrix to the Tn x Tn propagator of partial averages.

    Block row r (1-indexed) holds A/r in the first block column plus
    ((r-1)/r) I in block column r-1, so that row r of the image is the
    running mean of the newest r at-capacity samples.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("event matrix must be square")
    if T < 1:
        raise ValueError("window must be >= 1")
    D = np.zeros((T * n, T * n))
    eye = np.eye(n)
    for r in range(1, T + 1):
        rows = slice((r - 1) * n, r * n)
        D[rows, 0:n] += A / r
        if r >= 2:
            cols = slice((r - 2) * n, (r - 1) * n)
            D[rows, cols] += (r - 1) / r * eye
    return D


def event_block_matrix(lifted: np.ndarray, resource: int, m: int) -> np.ndarray:
    """Embed a lifted matrix as diagonal block ``resource`` of an m-block identity."""
    d = lifted.shape[0]
    if lifted.shape != (d, d):
        raise ValueError("lifted matrix must be square")
    if not 0 <= resource < m:
        raise ValueError(f"resource index {resource} out of range for m={m}")
    U = np.eye(m * d)
    s = slice(resource * d, (resource + 1) * d)
    U[s, s] = lifted
    return U


def chain_product(factors) -> np.ndarray:
    """Ordered product factors[-1] @ ... @ factors[0] (first factor applied first)."""
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    out = np.asarray(factors[0], dtype=float)
    for M in factors[1:]:
        M = np.asarray(M, dtype=float)
        if M.shape[1] != out.shape[0]:
            raise ValueError(f"size mismatch: {M.shape} @ {out.shape}")
        out = M @ out
    return out


def random_block_zero_sum(dim: int, n: int, rng, trials: int = 1) -> np.ndarray:
    """Random vectors (columns) with every length-n subblock summing to zero."""
    Z = rng.standard_normal((dim, trials))
    k = Z.shape[1]
    B = Z.reshape(-1, n, k)
    return (B - B.mean(axis=1, keepdims=True)).reshape(dim, k)


@dataclass
class NormCheck:
    """Result of a randomized norm-ratio probe: max ||Mz|| / ||z|| and its witness."""

    max_ratio: float
    witness: np.ndarray
    trials: int

    def nonexpansive(self, tol: float = 1e-12) -> bool:
        return self.max_ratio <= 1.0 + tol

    def strictly_contracting(self, margin: float = 1e-10) -> bool:
        return self.max_ratio <= 1.0 - margin


def max_norm_ratio(M: np.ndarray, n: int, *, zero_sum: bool = False,
                   trials: int = 512, rng=None) -> NormCheck:
    """Sample unit-norm vectors and report the largest block-max-L1 ratio under M.

    With ``zero_sum=True`` samples are projected into the subspace whose
    length-n subblocks sum to zero before measuring.  The caller asserts
    non-expansivity (<= 1) or strict contraction (< 1) on the result.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    dim = M.shape[0]
    if zero_sum:
        Z = random_block_zero_sum(dim, n, rng, trials)
    else:
        Z = rng.standard_normal((dim, trials))
    norms = _block_max_l1_cols(Z, n)
    keep = norms > 1e-12
    Z = Z[:, keep]
    norms = norms[keep]
    if Z.shape[1] == 0:
        # degenerate subspace (n = 1 zero-sum blocks): identity action only
        return NormCheck(max_ratio=0.0, witness=np.zeros(dim), trials=0)
    ratios = _block_max_l1_cols(M @ Z, n) / norms
    k = int(np.argmax(ratios))
    return NormCheck(max_ratio=float(ratios[k]), witness=Z[:, k].copy(), trials=Z.shape[1])


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str
    worst: float
    witness: list | None = None  # worst-case vector for norm-ratio checks

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "worst": self.worst,
            "witness": self.witness,
        }


def _random_pattern(n: int, beta: float, rng) -> np.ndarray:
    return pattern_vector(rng.random(n) < 0.5, beta)


def property_suite(n: int, T: int, m: int, beta, *, trials: int = 200,
                   seed: int = 0) -> list[PropertyResult]:
    """Randomized verification of the matrix laws behind the allocation model.

    Covers column stochasticity and its closure under products, positivity of
    products containing a full back-off factor, L1 non-expansivity of event
    matrix powers (strict with a full back-off factor on zero-sum vectors),
    invariance of the zero-block-sum subspace, norm axioms, and the
    non-expansive / contraction bounds for lifted and block matrices.

    Builders resolve through module globals at call time, so tests can inject
    a corrupted builder and watch the corresponding check fail.
    """
    rng = np.random.default_rng(seed)
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.size == 1:
        beta = np.full(m, beta[0])
    results: list[PropertyResult] = []

    def add(name, passed, detail, worst, witness=None):
        if witness is not None:
            witness = [float(v) for v in witness]
        results.append(PropertyResult(name, bool(passed), detail, float(worst), witness))

    b0 = float(beta[0])

    # Column stochasticity of single event matrices and short products.
    worst = 0.0
    for _ in range(trials):
        length = int(rng.integers(1, 7))
        P = chain_product([aimd_matrix(_random_pattern(n, b0, rng)) for _ in range(length)])
        worst = max(worst, float(np.abs(P.sum(axis=0) - 1.0).max()), float(max(0.0, -(P.min()))))
    add("product_column_stochastic", worst <= 1e-12, "max column-sum / negativity error over products of <=6 factors", worst)

    # Positivity of products containing the full back-off matrix.
    min_entry = np.inf
    for _ in range(trials):
        length = int(rng.integers(1, 7))
        factors = [aimd_matrix(_random_pattern(n, b0, rng)) for _ in range(length)]
        factors[int(rng.integers(0, length))] = full_backoff_matrix(b0, n)
        min_entry = min(min_entry, float(chain_product(factors).min()))
    add("full_backoff_product_positive", min_entry > 0.0, "min entry of products containing the all-back-off factor", min_entry)

    # L1 non-expansivity of powers; strict decrease on zero-sum vectors with a
    # full back-off factor present.
    worst = 0.0
    for _ in range(trials):
        A = aimd_matrix(_random_pattern(n, b0, rng))
        power = np.linalg.matrix_power(A, int(rng.integers(1, 9)))
        z = rng.standard_normal(n)
        worst = max(worst, l1_norm(power @ z) / l1_norm(z))
    add("power_l1_nonexpansive", worst <= 1.0 + 1e-12, "max ||A^l z||_1 / ||z||_1", worst)

    if n >= 2:
        worst = 0.0
        for _ in range(trials):
            length = int(rng.integers(1, 7))
            factors = [aimd_matrix(_random_pattern(n, b0, rng)) for _ in range(length)]
            factors[int(rng.integers(0, length))] = full_backoff_matrix(b0, n)
            z = rng.standard_normal(n)
            z -= z.mean()
            worst = max(worst, l1_norm(chain_product(factors) @ z) / l1_norm(z))
        add("backoff_product_l1_contracts", worst <= 1.0 - 1e-10, "max L1 ratio on zero-sum vectors, one full back-off factor", worst)

    # Zero-block-sum subspace is invariant under lifted matrices.
    worst = 0.0
    for _ in range(trials // 4 + 1):
        D = lift_window(aimd_matrix(_random_pattern(n, b0, rng)), T)
        z = random_block_zero_sum(T * n, n, rng)[:, 0]
        img = D @ z
        sums = np.abs(img.reshape(T, n).sum(axis=1))
        worst = max(worst, float(sums.max()))
    add("zero_sum_subspace_invariant", worst <= 1e-12, "max |subblock sum| of images of zero-sum vectors", worst)

    # Norm axioms for the block-max-L1 norm on the stacked space.
    worst = 0.0
    dim = m * T * n
    for _ in range(trials // 4 + 1):
        u = rng.standard_normal(dim)
        v = rng.standard_normal(dim)
        c = float(rng.standard_normal())
        homog = abs(block_max_l1(c * u, n) - abs(c) * block_max_l1(u, n))
        tri = block_max_l1(u + v, n) - (block_max_l1(u, n) + block_max_l1(v, n))
        worst = max(worst, homog, tri)
    add("norm_axioms", worst <= 1e-12, "max homogeneity / triangle-inequality violation", worst)

    # Lifted matrices never expand the window norm; block matrices never
    # expand the stacked norm on the zero-sum subspace.
    def ratio_scan(builder, count=8, **kw):
        worst_check = None
        for _ in range(count):
            check = max_norm_ratio(builder(), n, trials=max(trials, 64), rng=rng, **kw)
            if worst_check is None or check.max_ratio > worst_check.max_ratio:
                worst_check = check
        return worst_check

    check = ratio_scan(lambda: lift_window(aimd_matrix(_random_pattern(n, b0, rng)), T))
    add("lifted_nonexpansive", check.max_ratio <= 1.0 + 1e-12,
        "max window-norm ratio of lifted matrices on arbitrary vectors",
        check.max_ratio, check.witness)

    def one_event_block():
        j = int(rng.integers(0, m))
        D = lift_window(aimd_matrix(_random_pattern(n, float(beta[j]), rng)), T)
        return event_block_matrix(D, j, m)

    check = ratio_scan(one_event_block, zero_sum=True)
    add("block_nonexpansive_zero_sum", check.max_ratio <= 1.0 + 1e-12,
        "max stacked-norm ratio of single-event block matrices on the zero-sum subspace",
        check.max_ratio, check.witness)

    if n >= 2:
        check = ratio_scan(lambda: lift_window(full_backoff_matrix(b0, n), T), zero_sum=True)
        add("full_backoff_lift_contracts", check.max_ratio <= 1.0 - 1e-10,
            "max window-norm ratio of the all-back-off lift on zero-sum vectors",
            check.max_ratio, check.witness)

        # Block products with one full back-off event per resource contract strictly.
        def full_backoff_block_product():
            factors = []
            for j in range(m):
                bj = float(beta[j])
                factors.append(event_block_matrix(lift_window(full_backoff_matrix(bj, n), T), j, m))
                for _ in range(int(rng.integers(0, 3))):
                    factors.append(event_block_matrix(lift_window(aimd_matrix(_random_pattern(n, bj, rng)), T), j, m))
            rng.shuffle(factors)
            return chain_product(factors)

        check = ratio_scan(full_backoff_block_product, zero_sum=True)
        add("full_backoff_block_product_contracts", check.max_ratio <= 1.0 - 1e-10,
            "max stacked-norm ratio of block products containing a full back-off per resource",
            check.max_ratio, check.witness)

    return results
