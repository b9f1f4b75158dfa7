"""Ising chain Hamiltonians, Trotter gate schedules, and replica couplings.

The model is an open chain of N spins,

    H = -J sum_i sx_i sx_{i+1} + sum_i (g sz_i + h sx_i),

integrable (free-fermion) at h = 0.  Two-site terms carry the on-site
fields with half weight on each adjacent bond and full weight at the chain
edges, so the sum of embedded bond terms reproduces H exactly.

For replica evolutions, ``n_copies`` chains are interleaved into one
physical chain (copy index fastest), which keeps intra-copy bonds within a
three-site window and cross-copy cut bonds within a four-site window.  The
``mixed`` replica Hamiltonian rewires only the interaction of the cut bond
across copies; on-site field weights stay with their original sites.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensors import UNITARITY_TOL, as_tensor, hermitian_exp

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
ID2 = np.eye(2, dtype=np.complex128)

# Projector onto |0> (the +1 eigenstate of sz); the default probe operator.
PROJ0 = 0.5 * (ID2 + SZ)

MAX_DENSE_SITES = 14  # guard for dense 2^N x 2^N construction


@dataclass(frozen=True)
class IsingParams:
    """Couplings of the open Ising chain (energy units of J)."""

    J: float
    g: float
    h: float
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        for name in ("J", "g", "h"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class ChainTerm:
    """A two-site Hamiltonian term with its Trotter layer label.

    ``sites`` need not be adjacent (replica cut terms are not);
    ``layer`` is the parity of the source bond, so all terms in a layer
    act on disjoint sites and commute.
    """

    sites: tuple[int, int]
    matrix: np.ndarray
    layer: int


def field_matrix(p: IsingParams) -> np.ndarray:
    """On-site field g*sz + h*sx."""
    return p.g * SZ + p.h * SX


def _bond_weights(p: IsingParams,
                  field_free_bond: int | None = None) -> np.ndarray:
    """Per-bond field weights w[i] = (w_left, w_right).

    Default: half weight on interior bonds, full weight at the edges.
    With ``field_free_bond=c`` the fields of sites c and c+1 are moved
    entirely onto the neighboring bonds so bond c carries the bare
    interaction only (its two-site gate then has operator Schmidt rank 2).
    """
    n_bonds = p.N - 1
    w = np.full((n_bonds, 2), 0.5)
    w[0, 0] = 1.0
    w[-1, 1] = 1.0
    if field_free_bond is not None:
        c = field_free_bond
        if not 1 <= c <= n_bonds - 2:
            raise ValueError(
                f"field-free bond {c} needs interior neighbors on both "
                f"sides (valid range 1..{n_bonds - 2})")
        w[c - 1, 1] += w[c, 0]
        w[c + 1, 0] += w[c, 1]
        w[c, :] = 0.0
    return w


def bond_term(p: IsingParams, i: int,
              field_free_bond: int | None = None) -> np.ndarray:
    """4x4 Hermitian term of bond i (sites i and i+1)."""
    if p.N < 2:
        raise ValueError("bond terms require N >= 2")
    if not 0 <= i <= p.N - 2:
        raise ValueError(f"bond index {i} out of range 0..{p.N - 2}")
    w = _bond_weights(p, field_free_bond)
    f = field_matrix(p)
    term = (-p.J * np.kron(SX, SX)
            + w[i, 0] * np.kron(f, ID2)
            + w[i, 1] * np.kron(ID2, f))
    return as_tensor(term)


def chain_terms(p: IsingParams,
                field_free_bond: int | None = None) -> list[ChainTerm]:
    """All bond terms of the single chain, layer = bond parity."""
    if p.N == 1:
        # Single site: no bonds; the field acts alone.  Represent as a
        # one-site "bond" is not meaningful, so callers handle N=1 via
        # full_matrix.
        return []
    return [ChainTerm(sites=(i, i + 1),
                      matrix=bond_term(p, i, field_free_bond),
                      layer=i % 2)
            for i in range(p.N - 1)]


def embed_term(matrix: np.ndarray, sites: tuple[int, int],
               n_sites: int) -> np.ndarray:
    """Embed a 4x4 two-site term into the full 2^n space (dense)."""
    i, j = sites
    if i == j or not (0 <= i < n_sites and 0 <= j < n_sites):
        raise ValueError(f"invalid site pair {sites} for {n_sites} sites")
    m = as_tensor(matrix).reshape(2, 2, 2, 2)  # (i_out, j_out, i_in, j_in)
    op = np.zeros((2 ** n_sites,) * 2, dtype=np.complex128)
    dims = (2,) * n_sites
    op = op.reshape(dims + dims)
    eye_rest = np.eye(2 ** (n_sites - 2)).reshape(
        tuple(2 for _ in range(2 * (n_sites - 2))))
    rest = [s for s in range(n_sites) if s not in (i, j)]
    # out axes: i_out -> i, j_out -> j, rest in order; same for in axes
    src = np.multiply.outer(m, eye_rest)
    # src axes: (i_out, j_out, i_in, j_in, r1_out, r1_in, r2_out, r2_in, ...)
    # eye_rest axes come as (r1_out, r2_out, ..., r1_in, r2_in, ...)
    n_rest = n_sites - 2
    src_axes_out = {i: 0, j: 1}
    src_axes_in = {i: 2, j: 3}
    for idx, s in enumerate(rest):
        src_axes_out[s] = 4 + idx
        src_axes_in[s] = 4 + n_rest + idx
    perm = [src_axes_out[s] for s in range(n_sites)]
    perm += [src_axes_in[s] for s in range(n_sites)]
    op = src.transpose(perm).reshape(2 ** n_sites, 2 ** n_sites)
    return op


def full_matrix(p: IsingParams) -> np.ndarray:
    """Dense 2^N x 2^N Hamiltonian (N <= 14)."""
    if p.N > MAX_DENSE_SITES:
        raise ValueError(
            f"exact Hamiltonian too large: N={p.N} exceeds {MAX_DENSE_SITES}")
    if p.N == 1:
        return as_tensor(field_matrix(p))
    h = np.zeros((2 ** p.N,) * 2, dtype=np.complex128)
    for term in chain_terms(p):
        h += embed_term(term.matrix, term.sites, p.N)
    return h


@dataclass(frozen=True)
class ReplicaLayout:
    """Interleaved embedding of n_copies chains with a cut at bond r.

    Physical site of (copy, position) is ``position * n_copies + copy``;
    the cut sits on the bond between positions r-1 and r of each copy.
    """

    n_copies: int
    n_sites: int
    cut: int

    def __post_init__(self):
        if self.n_copies < 2:
            raise ValueError("replica layout needs at least 2 copies")
        if not 1 <= self.cut <= self.n_sites - 1:
            raise ValueError(
                f"cut {self.cut} outside 1..{self.n_sites - 1}")

    def site(self, copy: int, position: int) -> int:
        if not (0 <= copy < self.n_copies and 0 <= position < self.n_sites):
            raise ValueError(f"(copy={copy}, position={position}) out of range")
        return position * self.n_copies + copy

    @property
    def total_sites(self) -> int:
        return self.n_copies * self.n_sites


def replica_hamiltonian(p: IsingParams, layout: ReplicaLayout, mode: str,
                        field_free_cut: bool = False) -> list[ChainTerm]:
    """Term list of the decoupled or mixed replica Hamiltonian.

    ``decoupled``: n_copies relabeled copies of the single-chain list.
    ``mixed``: identical except the cut-bond term of copy n couples
    (copy n, r-1) to (copy n+1 mod n_copies, r).  Term count and each
    site's total field weight agree between the two modes.
    """
    if mode not in ("decoupled", "mixed"):
        raise ValueError(f"mode must be 'decoupled' or 'mixed', got {mode!r}")
    if layout.n_sites != p.N:
        raise ValueError("layout size does not match params")
    cut_bond = layout.cut - 1
    base = chain_terms(p, field_free_bond=cut_bond if field_free_cut else None)
    terms = []
    for copy in range(layout.n_copies):
        for t in base:
            i, j = t.sites
            if mode == "mixed" and (i, j) == (cut_bond, cut_bond + 1):
                partner = (copy + 1) % layout.n_copies
                sites = (layout.site(copy, i), layout.site(partner, j))
            else:
                sites = (layout.site(copy, i), layout.site(copy, j))
            terms.append(ChainTerm(sites=sites, matrix=t.matrix, layer=t.layer))
    return terms


@dataclass
class GateSequence:
    """One Trotter step as an ordered list of (site pair, 4x4 unitary)."""

    gates: list[tuple[tuple[int, int], np.ndarray]]
    dt: float
    trotter_order: int

    def validate(self) -> None:
        for sites, u in self.gates:
            dev = float(np.max(np.abs(u.conj().T @ u - np.eye(4))))
            if dev > UNITARITY_TOL:
                raise ValueError(
                    f"gate on sites {sites} not unitary (deviation {dev:.2e})")


def _layered(terms: Iterable[ChainTerm]) -> tuple[list[ChainTerm],
                                                  list[ChainTerm]]:
    even = sorted((t for t in terms if t.layer % 2 == 0),
                  key=lambda t: t.sites)
    odd = sorted((t for t in terms if t.layer % 2 == 1),
                 key=lambda t: t.sites)
    return even, odd


def trotter_step(terms: Iterable[ChainTerm], dt: float,
                 order: int) -> GateSequence:
    """Gate schedule for one step of size dt over an arbitrary term list.

    Order 1 applies exp(-i dt h) on the even-parity layer then the odd
    layer; order 2 uses the symmetric even-half / odd-full / even-half
    split.  Terms within a layer act on disjoint sites.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if order not in (1, 2):
        raise ValueError(f"trotter order must be 1 or 2, got {order}")
    even, odd = _layered(terms)
    gates: list[tuple[tuple[int, int], np.ndarray]] = []
    if order == 1:
        gates += [(t.sites, hermitian_exp(t.matrix, dt)) for t in even]
        gates += [(t.sites, hermitian_exp(t.matrix, dt)) for t in odd]
    else:
        half = [(t.sites, hermitian_exp(t.matrix, dt / 2)) for t in even]
        gates += half
        gates += [(t.sites, hermitian_exp(t.matrix, dt)) for t in odd]
        gates += half
    return GateSequence(gates=gates, dt=dt, trotter_order=order)


def trotter_gates(p: IsingParams, dt: float, order: int,
                  field_free_bond: int | None = None) -> GateSequence:
    """Single-chain Trotter step of the Ising Hamiltonian."""
    return trotter_step(chain_terms(p, field_free_bond), dt, order)


def parity_operator(n_sites: int) -> np.ndarray:
    """Global spin-flip parity prod_i sz_i (dense)."""
    op = np.array([[1.0]], dtype=np.complex128)
    for _ in range(n_sites):
        op = np.kron(op, SZ)
    return op
