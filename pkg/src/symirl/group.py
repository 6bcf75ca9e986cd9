"""Exact dihedral-group algebra and its action on structured feature vectors.

Elements of the order-2n dihedral group are kept in the canonical form
``S^b R^k`` (reflect after rotating), where ``R`` is the rotation by 2*pi/n
and ``S`` is the reflection about the x-axis.  The reflection axis is a
documented convention: any other axis gives an isomorphic group.

For n that divides 4*k the rotation matrix is built from exact {0, +-1}
entries, so the default n=4 action is a signed coordinate permutation and
distances/inner products are preserved bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GroupOrderError(ValueError):
    """Raised when two elements from different D_n groups are combined."""


class StructureError(ValueError):
    """Raised when a structured vector has a malformed equivariant block."""


@dataclass(frozen=True)
class GroupElement:
    """One member of D_n, canonically S^reflected * R^rotation_index."""

    rotation_index: int
    reflected: bool
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise GroupOrderError(f"group order parameter must be >= 1, got {self.n}")
        object.__setattr__(self, "rotation_index", self.rotation_index % self.n)

    @property
    def token(self) -> str:
        """Serialization token: 'r<k>' for rotations, 'sr<k>' for reflections."""
        prefix = "sr" if self.reflected else "r"
        return f"{prefix}{self.rotation_index}"

    def __repr__(self):
        return f"GroupElement({self.token}, n={self.n})"


def identity(n: int) -> GroupElement:
    return GroupElement(0, False, n)


def rotation(n: int, k: int) -> GroupElement:
    return GroupElement(k, False, n)


def reflection(n: int, k: int = 0) -> GroupElement:
    """The reflection S * R^k (k=0 is the x-axis flip itself)."""
    return GroupElement(k, True, n)


def elements(n: int) -> list[GroupElement]:
    """All 2n elements: rotations r0..r(n-1), then reflections sr0..sr(n-1)."""
    rots = [GroupElement(k, False, n) for k in range(n)]
    refls = [GroupElement(k, True, n) for k in range(n)]
    return rots + refls


def element_index(g: GroupElement) -> int:
    """Position of g in the elements(n) ordering."""
    return g.rotation_index + (g.n if g.reflected else 0)


def parse_token(token: str, n: int) -> GroupElement:
    """Inverse of GroupElement.token."""
    t = token.strip()
    if t.startswith("sr"):
        return GroupElement(int(t[2:]), True, n)
    if t.startswith("r"):
        return GroupElement(int(t[1:]), False, n)
    raise ValueError(f"not a group element token: {token!r}")


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """Group product g*h, i.e. apply h first: matrix(g) @ matrix(h).

    Derived from R^j S = S R^(-j):
      (S^b1 R^k1)(R^k2)   = S^b1 R^(k1+k2)
      (S^b1 R^k1)(S R^k2) = S^(b1^1) R^(k2-k1)
    """
    if g.n != h.n:
        raise GroupOrderError(f"cannot compose elements of D_{g.n} and D_{h.n}")
    if h.reflected:
        return GroupElement(h.rotation_index - g.rotation_index, not g.reflected, g.n)
    return GroupElement(g.rotation_index + h.rotation_index, g.reflected, g.n)


def inverse(g: GroupElement) -> GroupElement:
    """Rotations invert by negating k; every reflection is an involution."""
    if g.reflected:
        return g
    return GroupElement(-g.rotation_index, False, g.n)


# Quarter-turn rotation matrices with exact integer entries, indexed by the
# number of quarter turns.  Used whenever 2*pi*k/n is a multiple of pi/2.
_EXACT_QUARTERS = (
    np.array([[1.0, 0.0], [0.0, 1.0]]),
    np.array([[0.0, -1.0], [1.0, 0.0]]),
    np.array([[-1.0, 0.0], [0.0, -1.0]]),
    np.array([[0.0, 1.0], [-1.0, 0.0]]),
)
_REFLECT_X = np.array([[1.0, 0.0], [0.0, -1.0]])


def matrix(g: GroupElement) -> np.ndarray:
    """2x2 orthogonal representation of g (reflection applied after rotation)."""
    if (4 * g.rotation_index) % g.n == 0:
        rot = _EXACT_QUARTERS[(4 * g.rotation_index) // g.n % 4]
    else:
        theta = 2.0 * np.pi * g.rotation_index / g.n
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
    if g.reflected:
        return _REFLECT_X @ rot
    return rot.copy()


@dataclass
class StructuredVector:
    """Feature vector split into equivariant 2D sub-vectors and invariant scalars."""

    equ: np.ndarray
    inv: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.equ = np.asarray(self.equ, dtype=np.float64)
        self.inv = np.asarray(self.inv, dtype=np.float64)
        if self.equ.ndim != 1 or self.inv.ndim != 1:
            raise StructureError("equ and inv must be flat 1-D arrays")
        if self.equ.size % 2 != 0:
            raise StructureError(
                f"equivariant block length must be even, got {self.equ.size}"
            )

    @property
    def flat(self) -> np.ndarray:
        """Packed layout [equ, inv] used by file formats and networks."""
        return np.concatenate([self.equ, self.inv])

    def __eq__(self, other):
        if not isinstance(other, StructuredVector):
            return NotImplemented
        return np.array_equal(self.equ, other.equ) and np.array_equal(self.inv, other.inv)


def act(g: GroupElement, v: StructuredVector) -> StructuredVector:
    """Apply g to every 2D sub-vector of equ; inv passes through bit-identical."""
    pairs = v.equ.reshape(-1, 2)
    rotated = pairs @ matrix(g).T
    return StructuredVector(rotated.reshape(-1), v.inv.copy())


def act_flat(g: GroupElement, arr: np.ndarray, n_equ_pairs: int) -> np.ndarray:
    """Vectorized action on packed [equ, inv] rows of shape (..., d).

    The first 2*n_equ_pairs entries of the last axis are treated as 2D
    sub-vectors; the remainder is invariant and copied unchanged.
    """
    arr = np.asarray(arr, dtype=np.float64)
    d_equ = 2 * n_equ_pairs
    if arr.shape[-1] < d_equ:
        raise StructureError(
            f"last axis {arr.shape[-1]} shorter than equivariant block {d_equ}"
        )
    out = arr.copy()
    lead = arr.shape[:-1]
    equ = arr[..., :d_equ].reshape(*lead, n_equ_pairs, 2)
    out[..., :d_equ] = (equ @ matrix(g).T).reshape(*lead, d_equ)
    return out
