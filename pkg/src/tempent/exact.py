"""Brute-force statevector and density-matrix engine for small chains.

Serves as the ground-truth oracle for the tensor-network engine: exact
ground states (Lanczos with a seeded start vector), thermal states via
eigendecomposition, gate-by-gate Trotter evolution, full matrix-exponential
evolution, and the replica double-quench protocol for arbitrary integer
Renyi index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .hamiltonians import (ChainTerm, GateSequence, IsingParams,
                           ReplicaLayout, chain_terms, embed_term,
                           full_matrix, replica_hamiltonian, trotter_step)
from .tensors import as_tensor

MAX_VECTOR_SITES = 16    # statevector guard (2^16 amplitudes)
MAX_DENSITY_SITES = 12   # density-matrix guard (4096^2 entries)
MAX_SPECTRAL_SITES = 12  # dense eigendecomposition guard

DEGENERACY_GAP = 1e-12
NORMALIZATION_FLOOR = 1e-12


@dataclass
class StateVector:
    """Pure state on n_sites spins, amplitudes in row-major spin order."""

    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = as_tensor(self.amplitudes).reshape(-1)
        if self.amplitudes.size != 2 ** self.n_sites:
            raise ValueError(
                f"amplitude vector of length {self.amplitudes.size} does not "
                f"match {self.n_sites} sites")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_sites, self.amplitudes.copy())


@dataclass
class DensityMatrix:
    """Mixed state on n_sites spins."""

    n_sites: int
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = as_tensor(self.matrix)
        dim = 2 ** self.n_sites
        if self.matrix.shape != (dim, dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match "
                f"{self.n_sites} sites")

    def validate(self, tol: float = 1e-10) -> None:
        dev = float(np.max(np.abs(self.matrix - self.matrix.conj().T)))
        if dev > tol:
            raise ValueError(f"density matrix not Hermitian (dev {dev:.2e})")
        tr = complex(np.trace(self.matrix))
        if abs(tr - 1.0) > tol:
            raise ValueError(f"density matrix trace {tr} differs from 1")

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.n_sites, self.matrix.copy())


State = StateVector | DensityMatrix


def product_state(local_states: list[np.ndarray]) -> StateVector:
    """Tensor product of normalized single-spin states."""
    psi = np.array([1.0], dtype=np.complex128)
    for v in local_states:
        v = as_tensor(v).reshape(-1)
        if v.size != 2:
            raise ValueError("local states must be 2-vectors")
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ValueError("local state not normalized")
        psi = np.kron(psi, v)
    return StateVector(len(local_states), psi)


def _apply_gate_vector(psi: np.ndarray, gate: np.ndarray,
                       sites: tuple[int, int], n: int) -> np.ndarray:
    """Apply a 4x4 gate to (possibly non-adjacent) sites of a statevector."""
    i, j = sites
    g = gate.reshape(2, 2, 2, 2)  # (i_out, j_out, i_in, j_in)
    t = psi.reshape((2,) * n)
    t = np.tensordot(g, t, axes=([2, 3], [i, j]))  # (i_out, j_out, rest)
    return np.moveaxis(t, [0, 1], [i, j]).reshape(-1)


def _apply_gate_density(rho: np.ndarray, gate: np.ndarray,
                        sites: tuple[int, int], n: int) -> np.ndarray:
    """rho -> U rho U^dag on the given sites."""
    i, j = sites
    g = gate.reshape(2, 2, 2, 2)
    t = rho.reshape((2,) * (2 * n))
    t = np.tensordot(g, t, axes=([2, 3], [i, j]))
    t = np.moveaxis(t, [0, 1], [i, j])
    gc = gate.conj().reshape(2, 2, 2, 2)
    t = np.tensordot(gc, t, axes=([2, 3], [n + i, n + j]))
    t = np.moveaxis(t, [0, 1], [n + i, n + j])
    return t.reshape(rho.shape)


def apply_gate_sequence(state: State, seq: GateSequence,
                        n_steps: int) -> State:
    """Apply n_steps repetitions of a Trotter step, returning a new state."""
    n = state.n_sites
    for sites, _ in seq.gates:
        if max(sites) >= n:
            raise ValueError(
                f"gate on sites {sites} does not fit a {n}-site state")
    if isinstance(state, StateVector):
        psi = state.amplitudes.copy()
        for _ in range(n_steps):
            for sites, u in seq.gates:
                psi = _apply_gate_vector(psi, u, sites, n)
        return StateVector(n, psi)
    rho = state.matrix.copy()
    for _ in range(n_steps):
        for sites, u in seq.gates:
            rho = _apply_gate_density(rho, u, sites, n)
    return DensityMatrix(n, rho)


def _term_matvec(terms: list[ChainTerm], n: int):
    """H @ v action from a two-site term list (no dense H)."""
    gs = [(t.sites, t.matrix.reshape(2, 2, 2, 2)) for t in terms]

    def matvec(v: np.ndarray) -> np.ndarray:
        t = v.reshape((2,) * n)
        out = np.zeros_like(t)
        for (i, j), g in gs:
            w = np.tensordot(g, t, axes=([2, 3], [i, j]))
            out += np.moveaxis(w, [0, 1], [i, j])
        return out.reshape(-1)

    return matvec


@dataclass
class GroundStateResult:
    state: StateVector
    energy: float
    degenerate: bool
    gap: float


def ground_state_exact(p: IsingParams, seed: int = 0) -> GroundStateResult:
    """Lowest eigenpair of the chain Hamiltonian (N <= 14).

    Uses implicitly restarted Lanczos with a seeded start vector so reruns
    are deterministic.  A degeneracy flag is set when the gap to the next
    state falls below DEGENERACY_GAP.
    """
    if p.N > 14:
        raise ValueError(f"exact ground state limited to N <= 14, got {p.N}")
    dim = 2 ** p.N
    if p.N <= 4:
        evals, evecs = np.linalg.eigh(full_matrix(p))
        e0, e1 = float(evals[0]), float(evals[min(1, dim - 1)])
        psi = evecs[:, 0]
    else:
        matvec = _term_matvec(chain_terms(p), p.N)
        op = LinearOperator((dim, dim), matvec=matvec, dtype=np.complex128)
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        evals, evecs = eigsh(op, k=2, which="SA", v0=v0, tol=0)
        order = np.argsort(evals)
        e0, e1 = float(evals[order[0]]), float(evals[order[1]])
        psi = evecs[:, order[0]]
    psi = psi / np.linalg.norm(psi)
    # Fix the arbitrary global phase for reproducibility.
    k = int(np.argmax(np.abs(psi)))
    psi = psi * (abs(psi[k]) / psi[k])
    state = StateVector(p.N, psi)
    if p.N == 1:
        residual = float(np.linalg.norm(full_matrix(p) @ psi - e0 * psi))
    else:
        residual = float(np.linalg.norm(
            _term_matvec(chain_terms(p), p.N)(psi) - e0 * psi))
    if residual > 1e-9:
        raise RuntimeError(
            f"ground-state residual {residual:.2e} exceeds 1e-9")
    gap = e1 - e0
    return GroundStateResult(state=state, energy=e0,
                             degenerate=gap < DEGENERACY_GAP, gap=gap)


def thermal_state_exact(p: IsingParams, beta: float) -> DensityMatrix:
    """Gibbs state exp(-beta H)/Z via eigendecomposition (N <= 10)."""
    if p.N > 10:
        raise ValueError(f"thermal state limited to N <= 10, got {p.N}")
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    evals, evecs = np.linalg.eigh(full_matrix(p))
    weights = np.exp(-beta * (evals - evals[0]))
    weights /= weights.sum()
    rho = (evecs * weights) @ evecs.conj().T
    return DensityMatrix(p.N, rho)


def dense_hamiltonian(terms: list[ChainTerm], n_sites: int) -> np.ndarray:
    """Sum of embedded two-site terms as a dense matrix."""
    if n_sites > MAX_SPECTRAL_SITES:
        raise ValueError(
            f"dense Hamiltonian limited to {MAX_SPECTRAL_SITES} sites, "
            f"got {n_sites}")
    dim = 2 ** n_sites
    h = np.zeros((dim, dim), dtype=np.complex128)
    for t in terms:
        h += embed_term(t.matrix, t.sites, n_sites)
    return h


def state_stationary_under(h_dense: np.ndarray, state: State,
                           tol: float = 1e-9) -> bool:
    """Whether evolution by h_dense leaves the state invariant.

    Pure states: invariant up to a global phase iff they are eigenstates;
    mixed states: invariant iff [H, rho] = 0.
    """
    scale = max(1.0, float(np.max(np.abs(h_dense))))
    if isinstance(state, StateVector):
        psi = state.amplitudes
        hpsi = h_dense @ psi
        e = np.vdot(psi, hpsi) / np.vdot(psi, psi)
        return float(np.linalg.norm(hpsi - e * psi)) < tol * scale
    comm = h_dense @ state.matrix - state.matrix @ h_dense
    return float(np.max(np.abs(comm))) < tol * scale


class SpectralEvolver:
    """Exact propagator from the eigendecomposition of a term list.

    Diagonalizes the dense Hamiltonian once; subsequent evolutions and
    expectation series cost a basis change plus elementwise phases.
    """

    def __init__(self, terms: list[ChainTerm], n_sites: int):
        self.n_sites = n_sites
        h = dense_hamiltonian(terms, n_sites)
        self.eigvals, self.eigvecs = np.linalg.eigh(h)

    def evolve(self, state: State, time: float) -> State:
        phases = np.exp(-1j * self.eigvals * time)
        v = self.eigvecs
        if isinstance(state, StateVector):
            psi = v @ (phases * (v.conj().T @ state.amplitudes))
            return StateVector(state.n_sites, psi)
        rho_e = v.conj().T @ state.matrix @ v
        rho_e *= np.outer(phases, phases.conj())
        return DensityMatrix(state.n_sites, v @ rho_e @ v.conj().T)

    def expectation_series(self, state: State, ops_dense: list[np.ndarray],
                           times: np.ndarray) -> np.ndarray:
        """tr(Oexp(-iHt) rho exp(iHt)) for each op and time; shape (n_ops, n_t)."""
        v = self.eigvecs
        ops_e = [v.conj().T @ op @ v for op in ops_dense]
        out = np.empty((len(ops_dense), len(times)), dtype=np.complex128)
        if isinstance(state, StateVector):
            psi_e = v.conj().T @ state.amplitudes
            for ti, t in enumerate(times):
                psi_t = np.exp(-1j * self.eigvals * t) * psi_e
                for oi, op_e in enumerate(ops_e):
                    out[oi, ti] = np.vdot(psi_t, op_e @ psi_t)
            return out
        rho_e = v.conj().T @ state.matrix @ v
        for ti, t in enumerate(times):
            phases = np.exp(-1j * self.eigvals * t)
            rho_t = rho_e * np.outer(phases, phases.conj())
            for oi, op_e in enumerate(ops_e):
                out[oi, ti] = np.sum(op_e * rho_t.T)
        return out


def evolve_exact(state: State, terms: list[ChainTerm], time: float,
                 method: str = "exact", dt: float = 0.05,
                 order: int = 2) -> State:
    """Evolve by the summed terms for the given time.

    ``method='exact'`` applies the matrix exponential via
    eigendecomposition; ``method='trotter'`` applies the gate schedule
    step by step (density matrices are conjugated gate-wise).
    """
    n = state.n_sites
    limit = MAX_VECTOR_SITES if isinstance(state, StateVector) \
        else MAX_DENSITY_SITES
    if n > limit:
        raise ValueError(f"state of {n} sites exceeds the engine limit {limit}")
    for t in terms:
        if max(t.sites) >= n:
            raise ValueError(
                f"term on sites {t.sites} does not fit a {n}-site state")
    if time == 0:
        return state.copy()
    if method == "exact":
        return SpectralEvolver(terms, n).evolve(state, time)
    if method == "trotter":
        n_steps = int(round(time / dt))
        if abs(n_steps * dt - time) > 1e-9:
            raise ValueError(
                f"time {time} is not an integer multiple of dt {dt}")
        seq = trotter_step(terms, dt, order)
        return apply_gate_sequence(state, seq, n_steps)
    raise ValueError(f"unknown method {method!r}")


def embed_local_ops(ops: list[tuple[int, np.ndarray]], n: int) -> np.ndarray:
    """Dense operator for a product of single-site 2x2 operators."""
    locals_ = {site: as_tensor(op) for site, op in ops}
    if any(not 0 <= s < n for s in locals_):
        raise ValueError(f"operator site out of range for {n} sites")
    if len(locals_) != len(ops):
        raise ValueError("duplicate sites in operator product")
    full = np.array([[1.0]], dtype=np.complex128)
    for s in range(n):
        full = np.kron(full, locals_.get(s, np.eye(2)))
    return full


def expectation(state: State, ops: list[tuple[int, np.ndarray]]) -> complex:
    """Expectation of a product of single-site operators.

    Statevectors give <psi|O|psi> without normalization; density matrices
    give tr(O rho).
    """
    n = state.n_sites
    if isinstance(state, StateVector):
        t = state.amplitudes.reshape((2,) * n)
        for site, op in ops:
            w = np.tensordot(as_tensor(op), t, axes=([1], [site]))
            t = np.moveaxis(w, 0, site)
        return complex(np.vdot(state.amplitudes, t.reshape(-1)))
    t = state.matrix.reshape((2,) * (2 * n))
    for site, op in ops:
        w = np.tensordot(as_tensor(op), t, axes=([1], [site]))
        t = np.moveaxis(w, 0, site)
    mat = t.reshape(2 ** n, 2 ** n)
    return complex(np.trace(mat))


def replicate_state(state: State, layout: ReplicaLayout) -> State:
    """Interleaved tensor product of n_copies identical single-chain states."""
    n, alpha = layout.n_sites, layout.n_copies
    total = layout.total_sites
    # Blocked-to-interleaved axis permutation.
    perm = [0] * total
    for copy in range(alpha):
        for pos in range(n):
            perm[layout.site(copy, pos)] = copy * n + pos
    if isinstance(state, StateVector):
        if total > MAX_VECTOR_SITES:
            raise ValueError(
                f"replicated statevector of {total} sites exceeds "
                f"{MAX_VECTOR_SITES}")
        psi = state.amplitudes
        full = psi
        for _ in range(alpha - 1):
            full = np.kron(full, psi)
        full = full.reshape((2,) * total).transpose(perm).reshape(-1)
        return StateVector(total, np.ascontiguousarray(full))
    if total > MAX_DENSITY_SITES:
        raise ValueError(
            f"replicated density matrix of {total} sites exceeds "
            f"{MAX_DENSITY_SITES}")
    rho = state.matrix
    full = rho
    for _ in range(alpha - 1):
        full = np.kron(full, rho)
    big = full.reshape((2,) * (2 * total))
    big = big.transpose(perm + [total + ax for ax in perm])
    dim = 2 ** total
    return DensityMatrix(total, np.ascontiguousarray(big.reshape(dim, dim)))


def prepare_initial(p: IsingParams, initial, seed: int = 0) -> State:
    """Resolve an initial-state descriptor on the single chain.

    Accepts 'ground', ('product', local_2vector_or_None),
    ('thermal', beta), or an already-prepared state.
    """
    if isinstance(initial, (StateVector, DensityMatrix)):
        return initial
    if initial == "ground":
        return ground_state_exact(p, seed=seed).state
    if isinstance(initial, tuple) and initial[0] == "product":
        local = initial[1]
        if local is None:
            local = np.array([1.0, 0.0])
        return product_state([local] * p.N)
    if isinstance(initial, tuple) and initial[0] == "thermal":
        return thermal_state_exact(p, float(initial[1]))
    raise ValueError(f"unknown initial-state descriptor {initial!r}")


def replica_T_alpha_exact(p: IsingParams, initial, probe: np.ndarray,
                          j: int, T: float, t: float, alpha: int,
                          dt: float, order: int, cut: int | None = None,
                          field_free_cut: bool = False,
                          seed: int = 0) -> complex:
    """tr(tau^alpha) from the replica double quench on the exact engine.

    alpha copies of the initial state evolve for T-t under the decoupled
    replica Hamiltonian, then for t under the mixed one; the product of
    the probe over all copies is measured and divided by <O_j(T)>^alpha
    from a single-chain run with the identical Trotter schedule.
    """
    if not 0 <= t <= T + 1e-12:
        raise ValueError(f"cut time t={t} outside [0, T={T}]")
    if alpha < 2:
        raise ValueError(f"alpha must be >= 2, got {alpha}")
    cut = p.N // 2 if cut is None else cut
    layout = ReplicaLayout(n_copies=alpha, n_sites=p.N, cut=cut)
    probe = as_tensor(probe)

    n_mix = int(round(t / dt))
    n_dec = int(round((T - t) / dt))
    if abs(n_mix * dt - t) > 1e-9 or abs(n_dec * dt - (T - t)) > 1e-9:
        raise ValueError("t and T-t must be integer multiples of dt")

    single = prepare_initial(p, initial, seed=seed)

    # Denominator: single-chain run of duration T, same schedule.
    chain = chain_terms(
        p, field_free_bond=cut - 1 if field_free_cut else None)
    seq_single = trotter_step(chain, dt, order)
    evolved = apply_gate_sequence(single, seq_single, n_dec + n_mix)
    norm = expectation(evolved, [(j, probe)])
    if isinstance(evolved, StateVector):
        norm = norm / (evolved.norm() ** 2)
    if abs(norm) < NORMALIZATION_FLOOR:
        raise ValueError(
            "probe has vanishing single-copy expectation; "
            "normalization undefined")

    # Numerator: replicated double quench.
    state = replicate_state(single, layout)
    dec = replica_hamiltonian(p, layout, "decoupled",
                              field_free_cut=field_free_cut)
    mix = replica_hamiltonian(p, layout, "mixed",
                              field_free_cut=field_free_cut)
    if n_dec:
        state = apply_gate_sequence(state, trotter_step(dec, dt, order), n_dec)
    if n_mix:
        state = apply_gate_sequence(state, trotter_step(mix, dt, order), n_mix)
    ops = [(layout.site(c, j), probe) for c in range(alpha)]
    num = expectation(state, ops)
    if isinstance(state, StateVector):
        num = num / (state.norm() ** 2)
    return complex(num / norm ** alpha)
