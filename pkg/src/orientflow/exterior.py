"""Dense exterior algebra over Lambda_k(R^m).

A k-vector is stored as its coefficient vector in the basis
``e_a = e_{a1} ^ ... ^ e_{ak}`` with ``a`` running over strictly increasing
index tuples in lexicographic order.  Indices are 1-based in the public
``KIndex`` type to match the usual notation, 0-based internally.

The coefficient-level functions (``wedge_coeffs``, ``hodge_coeffs``, ...)
accept arrays with arbitrary leading batch axes, which is what the identity
suites and the grid-level wedge diagnostics use.  ``MultiVector`` is a thin
immutable wrapper for single elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

MAX_DIM = 8


class GradeError(ValueError):
    """Incompatible grades or ambient dimensions."""


def _check_dim(m: int) -> None:
    if not 0 < m <= MAX_DIM:
        raise GradeError(f"ambient dimension must be in 1..{MAX_DIM}, got {m}")


def merge_sign(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """Merge two increasing index tuples, counting transpositions.

    Returns ``(sign, merged)``; ``sign`` is 0 when the tuples share an index.
    """
    i = j = 0
    swaps = 0
    merged = []
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            return 0, ()
        if a[i] < b[j]:
            merged.append(a[i])
            i += 1
        else:
            # b[j] jumps over every remaining entry of a
            swaps += len(a) - i
            merged.append(b[j])
            j += 1
    merged.extend(a[i:])
    merged.extend(b[j:])
    return (-1 if swaps % 2 else 1), tuple(merged)


@lru_cache(maxsize=None)
def basis(m: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Lexicographic 0-based index tuples spanning Lambda_k(R^m)."""
    _check_dim(m)
    if not 0 <= k <= m:
        raise GradeError(f"grade {k} outside 0..{m}")
    return tuple(combinations(range(m), k))


@lru_cache(maxsize=None)
def _index_of(m: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: n for n, idx in enumerate(basis(m, k))}


@lru_cache(maxsize=None)
def wedge_table(m: int, k: int, l: int) -> np.ndarray:
    """Structure tensor T with (a ^ b)_r = sum_ij T[i, j, r] a_i b_j."""
    if k + l > m:
        raise GradeError(f"grade overflow: {k} + {l} > {m}")
    out_index = _index_of(m, k + l)
    table = np.zeros((comb(m, k), comb(m, l), comb(m, k + l)))
    for i, a in enumerate(basis(m, k)):
        for j, b in enumerate(basis(m, l)):
            sign, merged = merge_sign(a, b)
            if sign:
                table[i, j, out_index[merged]] = sign
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def hodge_table(m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Permutation and signs of the Hodge star on the grade-k basis.

    ``*e_a = s_a e_{a^c}`` where ``s_a`` is the signature of the permutation
    ``(a, a^c)`` of ``(1, ..., m)``.
    """
    out_index = _index_of(m, m - k)
    target = np.empty(comb(m, k), dtype=np.intp)
    signs = np.empty(comb(m, k))
    full = tuple(range(m))
    for i, a in enumerate(basis(m, k)):
        rest = tuple(x for x in full if x not in a)
        sign, merged = merge_sign(a, rest)
        assert merged == full
        target[i] = out_index[rest]
        signs[i] = sign
    return target, signs


def wedge_coeffs(a: np.ndarray, b: np.ndarray, m: int, k: int, l: int) -> np.ndarray:
    """Batched wedge product on coefficient arrays (last axis = basis)."""
    table = wedge_table(m, k, l)
    return np.einsum("...i,...j,ijr->...r", a, b, table)


def hodge_coeffs(a: np.ndarray, m: int, k: int) -> np.ndarray:
    target, signs = hodge_table(m, k)
    out = np.empty(a.shape[:-1] + (comb(m, m - k),))
    out[..., target] = a * signs
    return out


def vector_wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Grade-2 coefficients of a ^ b for batched vectors in R^m."""
    m = a.shape[-1]
    i, j = np.triu_indices(m, k=1)
    return a[..., i] * b[..., j] - a[..., j] * b[..., i]


@dataclass(frozen=True)
class KIndex:
    """Strictly increasing 1-based multi-index in I(k, m)."""

    indices: tuple[int, ...]
    m: int

    def __post_init__(self):
        _check_dim(self.m)
        idx = tuple(int(x) for x in self.indices)
        if any(x < 1 or x > self.m for x in idx):
            raise GradeError(f"index out of range 1..{self.m}: {idx}")
        if any(x >= y for x, y in zip(idx, idx[1:])):
            raise GradeError(f"indices must be strictly increasing: {idx}")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self) -> int:
        return len(self.indices)

    def position(self) -> int:
        """Position of this index in the lexicographic basis order."""
        return _index_of(self.m, self.k)[tuple(x - 1 for x in self.indices)]


@dataclass(frozen=True, eq=False)
class MultiVector:
    m: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.m)
        if not 0 <= self.k <= self.m:
            raise GradeError(f"grade {self.k} outside 0..{self.m}")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != comb(self.m, self.k):
            raise GradeError(
                f"expected {comb(self.m, self.k)} coefficients for grade {self.k} in R^{self.m}, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def scalar(cls, value: float, m: int) -> "MultiVector":
        return cls(m, 0, [value])

    @classmethod
    def vector(cls, v) -> "MultiVector":
        v = np.asarray(v, dtype=float)
        return cls(v.size, 1, v)

    @classmethod
    def basis_element(cls, indices, m: int) -> "MultiVector":
        """``e_{i1} ^ ... ^ e_{ik}`` for a strictly increasing 1-based tuple."""
        ki = KIndex(tuple(indices), m)
        c = np.zeros(comb(m, ki.k))
        c[ki.position()] = 1.0
        return cls(m, ki.k, c)

    @classmethod
    def generator(cls, *vectors) -> "MultiVector":
        """``v1 ^ v2 ^ ... ^ vk`` for vectors of equal length."""
        out = cls.vector(vectors[0])
        for v in vectors[1:]:
            out = wedge(out, cls.vector(v))
        return out

    def __add__(self, other: "MultiVector") -> "MultiVector":
        _same_space(self, other)
        return MultiVector(self.m, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        _same_space(self, other)
        return MultiVector(self.m, self.k, self.coeffs - other.coeffs)

    def __mul__(self, s: float) -> "MultiVector":
        return MultiVector(self.m, self.k, self.coeffs * float(s))

    __rmul__ = __mul__

    def __neg__(self) -> "MultiVector":
        return MultiVector(self.m, self.k, -self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiVector):
            return NotImplemented
        return self.m == other.m and self.k == other.k and np.array_equal(self.coeffs, other.coeffs)

    def allclose(self, other: "MultiVector", atol: float = 1e-12) -> bool:
        return self.m == other.m and self.k == other.k and np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol)

    def __repr__(self) -> str:
        return f"MultiVector(m={self.m}, k={self.k}, coeffs={self.coeffs.tolist()})"


def _same_space(a: MultiVector, b: MultiVector) -> None:
    if a.m != b.m:
        raise GradeError(f"ambient dimensions differ: {a.m} vs {b.m}")
    if a.k != b.k:
        raise GradeError(f"grades differ: {a.k} vs {b.k}")


def wedge(a: MultiVector, b: MultiVector) -> MultiVector:
    if a.m != b.m:
        raise GradeError(f"ambient dimensions differ: {a.m} vs {b.m}")
    if a.k + b.k > a.m:
        raise GradeError(f"grade overflow: {a.k} + {b.k} > {a.m}")
    return MultiVector(a.m, a.k + b.k, wedge_coeffs(a.coeffs, b.coeffs, a.m, a.k, b.k))


def hodge(a: MultiVector) -> MultiVector:
    return MultiVector(a.m, a.m - a.k, hodge_coeffs(a.coeffs, a.m, a.k))


def inner_k(a: MultiVector, b: MultiVector) -> float:
    _same_space(a, b)
    return float(a.coeffs @ b.coeffs)


def norm_k(a: MultiVector) -> float:
    return float(np.sqrt(a.coeffs @ a.coeffs))


def triple_identity_residual(a, b, c) -> float:
    """Norm of a ^ *(b ^ c) - ((a.c) *b - (a.b) *c) for vectors a, b, c."""
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    return float(np.linalg.norm(_triple_residual_batch(a, b, c)))


def muuibn_residual(a, b) -> float:
    """Norm of |b|^2 a - (a.b) b + *(*(a ^ b) ^ b)."""
    a, b = (np.asarray(x, dtype=float) for x in (a, b))
    return float(np.linalg.norm(_star_projection_batch(a, b)))


def _triple_residual_batch(a, b, c):
    m = a.shape[-1]
    lhs = wedge_coeffs(a, hodge_coeffs(vector_wedge(b, c), m, 2), m, 1, m - 2)
    ac = np.sum(a * c, axis=-1)[..., None]
    ab = np.sum(a * b, axis=-1)[..., None]
    rhs = ac * hodge_coeffs(b, m, 1) - ab * hodge_coeffs(c, m, 1)
    return lhs - rhs


def _star_projection_batch(a, b):
    m = a.shape[-1]
    star_ab = hodge_coeffs(vector_wedge(a, b), m, 2)
    inner = hodge_coeffs(wedge_coeffs(star_ab, b, m, m - 2, 1), m, m - 1)
    bb = np.sum(b * b, axis=-1)[..., None]
    ab = np.sum(a * b, axis=-1)[..., None]
    return bb * a - ab * b + inner
