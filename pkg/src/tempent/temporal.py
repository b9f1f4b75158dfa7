"""Temporal boundary vectors and reduced transition matrices.

The time-dependent expectation value <O_j(T)> of a Trotterized quench is
the contraction of a space-time gate network.  Cutting that network along
a spatial bond r yields two multi-time vectors: the contraction of the
left half (probe and final-time trace closure included) and of the right
half.  Their overlap reproduces <O_j(T)> exactly on the discretized
network, and a partial contraction over the earliest steps yields the
reduced transition matrix tau(t), whose powers give the generalized
temporal Renyi entropies.

This module is an oracle: first-order Trotter only, the cut-bond gate is
kept interaction-only (operator Schmidt rank exactly 2, one crossing per
step per branch), and the cut-gate split is exact.  The temporal leg
ordering is earliest step first, forward branch before backward branch
within a step, which makes "trace out the earliest steps" a contiguous
reshape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exact import (DensityMatrix, StateVector, ground_state_exact,
                    product_state)
from .hamiltonians import GateSequence, IsingParams, trotter_gates
from .tensors import as_tensor

LEG_SPACE_LIMIT = 2 ** 20   # refuse to allocate larger temporal vectors
CUT_LEG_DIM = 2             # Schmidt rank of the interaction-only cut gate
NORM_FLOOR = 1e-12
SCHMIDT_KEEP = 1e-14        # relative threshold for initial-state Schmidt legs


@dataclass
class TemporalVector:
    """One half of the space-time network as a flat multi-time vector.

    Legs are ordered (nu, nu', mu_1, mubar_1, ..., mu_NT, mubar_NT): two
    initial-state Schmidt legs of dimension ``state_rank`` followed by one
    forward and one backward cut leg of dimension 2 per Trotter step,
    earliest step first.
    """

    amplitudes: np.ndarray
    n_steps: int
    state_rank: int

    def __post_init__(self):
        expected = self.state_rank ** 2 * 4 ** self.n_steps
        if self.amplitudes.size != expected:
            raise ValueError(
                f"amplitude length {self.amplitudes.size} does not match "
                f"rank {self.state_rank} and {self.n_steps} steps")


def temporal_overlap(left: TemporalVector, right: TemporalVector) -> complex:
    """<L|R>: the full contraction (bra conjugations are baked into L)."""
    if left.n_steps != right.n_steps or left.state_rank != right.state_rank:
        raise ValueError("temporal vectors have mismatched leg structure")
    return complex(np.dot(left.amplitudes, right.amplitudes))


@dataclass
class TransitionMatrix:
    """Reduced transition matrix tau(t) in factored form.

    tau[open_R, open_L] = (right_factor.T @ left_factor) / norm, where the
    factors are the temporal vectors reshaped to (early legs, open legs).
    Generally non-Hermitian and non-positive; its trace is 1 by
    construction.  The dense form is materialized on demand only, since
    the open-leg dimension grows as 4^(t/dt).
    """

    left_factor: np.ndarray
    right_factor: np.ndarray
    norm: complex
    n_open_steps: int

    @property
    def open_dim(self) -> int:
        return self.left_factor.shape[1]

    @property
    def early_dim(self) -> int:
        return self.left_factor.shape[0]

    def trace(self) -> complex:
        return complex(
            np.sum(self.right_factor * self.left_factor) / self.norm)

    def dense(self, max_dim: int = 4096) -> np.ndarray:
        if self.open_dim > max_dim:
            raise ValueError(
                f"dense transition matrix of dimension {self.open_dim} "
                f"exceeds the cap {max_dim}")
        return self.right_factor.T @ self.left_factor / self.norm

    def nonhermiticity(self, max_dim: int = 4096) -> float:
        tau = self.dense(max_dim)
        return float(np.linalg.norm(tau - tau.conj().T))

    @classmethod
    def from_dense(cls, tau: np.ndarray) -> "TransitionMatrix":
        """Wrap an explicit square matrix (testing convenience)."""
        tau = as_tensor(tau)
        d = tau.shape[0]
        return cls(left_factor=tau.copy(), right_factor=np.eye(d,
                   dtype=np.complex128), norm=1.0 + 0j, n_open_steps=0)


def _split_cut_gate(gate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """SVD-split a two-site gate across its sites; no truncation.

    Returns (A, B) with A[mu] on the left site and B[mu] on the right so
    that gate = sum_mu kron(A[mu], B[mu]).  The interaction-only cut gate
    has rank exactly CUT_LEG_DIM, asserted structurally.
    """
    g = gate.reshape(2, 2, 2, 2)           # (sl, sr, sl', sr')
    m = g.transpose(0, 2, 1, 3).reshape(4, 4)   # (sl sl'), (sr sr')
    u, s, vh = np.linalg.svd(m)
    rank = int(np.sum(s > s[0] * 1e-13))
    if rank != CUT_LEG_DIM:
        raise ValueError(
            f"cut gate has operator Schmidt rank {rank}, expected "
            f"{CUT_LEG_DIM}; the cut bond must carry the interaction only")
    root = np.sqrt(s[:rank])
    a = (u[:, :rank] * root).T.reshape(rank, 2, 2)
    b = (root[:, None] * vh[:rank]).reshape(rank, 2, 2)
    return a, b


def _embed_block_gate(gate: np.ndarray, pos: int, n_block: int) -> np.ndarray:
    """Embed a 4x4 gate at block positions (pos, pos+1) into 2^n_block."""
    left = np.eye(2 ** pos, dtype=np.complex128)
    right = np.eye(2 ** (n_block - pos - 2), dtype=np.complex128)
    return np.kron(np.kron(left, gate), right)


def _embed_block_site(op: np.ndarray, pos: int, n_block: int) -> np.ndarray:
    left = np.eye(2 ** pos, dtype=np.complex128)
    right = np.eye(2 ** (n_block - pos - 1), dtype=np.complex128)
    return np.kron(np.kron(left, op), right)


def _half_vector(step_ops: list[np.ndarray], m0: np.ndarray,
                 closure_op: np.ndarray, n_steps: int,
                 state_rank: int) -> np.ndarray:
    """Contract one half of the network into its temporal vector.

    ``step_ops[mu]`` is the block evolution operator of one Trotter step
    with cut-gate factor mu inserted; ``m0`` is the stacked initial block
    carrier of shape (state_rank^2, d, d); ``closure_op`` multiplies at
    the final time before the trace (probe or identity).
    """
    d = step_ops[0].shape[0]
    n_legs = len(step_ops)
    # Superoperators on row-major vec(M): vec(W M W'^dag) = kron(W, W'*) vec(M).
    supers = [np.kron(step_ops[mu], step_ops[mubar].conj())
              for mu in range(n_legs) for mubar in range(n_legs)]
    # Final step fused with the trace: tr(O W M W'^dag) = vec(M) . vec(X^T),
    # X = W'^dag O W.
    closers = np.stack([
        (step_ops[mubar].conj().T @ closure_op @ step_ops[mu]).T.reshape(-1)
        for mu in range(n_legs) for mubar in range(n_legs)])
    arr = m0.reshape(state_rank ** 2, d * d)
    for _ in range(n_steps - 1):
        arr = np.stack([arr @ s.T for s in supers], axis=1)
        arr = arr.reshape(-1, d * d)
    out = arr @ closers.T           # (legs_so_far, leg_dim^2)
    return out.reshape(-1)


def build_temporal_vectors(p: IsingParams, initial, probe_site: int,
                           probe_op: np.ndarray, T: float, dt: float,
                           cut: int, seed: int = 0
                           ) -> tuple[TemporalVector, TemporalVector,
                                      GateSequence]:
    """Left and right temporal vectors of the discretized quench network.

    ``initial`` is 'ground', ('product', local or None), or a prepared
    StateVector.  The probe is folded into the half that contains its
    site.  Also returns the exact single-chain gate schedule realized, so
    oracle comparisons can replay the identical circuit.
    """
    if p.N > 8:
        raise ValueError(f"temporal contraction limited to N <= 8, got {p.N}")
    if not 0 <= probe_site < p.N:
        raise ValueError(f"probe site {probe_site} out of range")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9:
        raise ValueError(f"T={T} must be a positive integer multiple of dt")

    cut_bond = cut - 1
    schedule = trotter_gates(p, dt, order=1, field_free_bond=cut_bond)

    # Resolve the initial pure state and its Schmidt split across the cut.
    if isinstance(initial, DensityMatrix):
        raise ValueError("temporal vectors require a pure initial state")
    if isinstance(initial, StateVector):
        psi = initial
    elif initial == "ground":
        psi = ground_state_exact(p, seed=seed).state
    elif isinstance(initial, tuple) and initial[0] == "product":
        local = initial[1] if initial[1] is not None else np.array([1.0, 0.0])
        psi = product_state([local] * p.N)
    else:
        raise ValueError(f"unknown initial-state descriptor {initial!r}")

    d_left, d_right = 2 ** cut, 2 ** (p.N - cut)
    mat = psi.amplitudes.reshape(d_left, d_right)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > s[0] * SCHMIDT_KEEP))
    lam = s[:rank]
    l_vecs = u[:, :rank]      # (d_left, rank)
    r_vecs = vh[:rank]        # (rank, d_right)

    size = rank ** 2 * 4 ** n_steps
    if size > LEG_SPACE_LIMIT:
        raise ValueError(
            f"temporal leg space of dimension {size} exceeds "
            f"{LEG_SPACE_LIMIT}; reduce T/dt or the initial-state rank")

    # Split the schedule around the cut gate and compose per-mu step
    # operators for each block.
    cut_pos = [k for k, (sites, _) in enumerate(schedule.gates)
               if sites == (cut_bond, cut_bond + 1)]
    if len(cut_pos) != 1:
        raise RuntimeError("first-order schedule must cross the cut once")
    k_cut = cut_pos[0]
    a_fac, b_fac = _split_cut_gate(schedule.gates[k_cut][1])

    def block_ops(side: str) -> list[np.ndarray]:
        if side == "left":
            n_block, offset = cut, 0
            factors = a_fac
            fac_pos = cut_bond  # block-local position cut-1 ... = cut_bond
        else:
            n_block, offset = p.N - cut, cut
            factors = b_fac
            fac_pos = 0
        before = np.eye(2 ** n_block, dtype=np.complex128)
        after = np.eye(2 ** n_block, dtype=np.complex128)
        for k, (sites, gate) in enumerate(schedule.gates):
            if k == k_cut:
                continue
            lo, hi = sites
            if side == "left" and hi <= cut - 1:
                target = "in"
            elif side == "right" and lo >= cut:
                target = "in"
            else:
                target = "out"
            if target == "in":
                emb = _embed_block_gate(gate, lo - offset, n_block)
                if k < k_cut:
                    before = emb @ before
                else:
                    after = emb @ after
        return [after @ _embed_block_site(f, fac_pos, n_block) @ before
                for f in factors]

    left_steps = block_ops("left")
    right_steps = block_ops("right")

    probe_op = as_tensor(probe_op)
    if probe_site < cut:
        left_close = _embed_block_site(probe_op, probe_site, cut)
        right_close = np.eye(d_right, dtype=np.complex128)
    else:
        left_close = np.eye(d_left, dtype=np.complex128)
        right_close = _embed_block_site(probe_op, probe_site - cut,
                                        p.N - cut)

    # Initial block carriers; the Schmidt weights ride on the left side.
    m0_left = np.einsum("n,m,an,bm->nmab", lam.astype(np.complex128),
                        lam.astype(np.complex128), l_vecs, l_vecs.conj())
    m0_right = np.einsum("na,mb->nmab", r_vecs, r_vecs.conj())

    left = _half_vector(left_steps, m0_left, left_close, n_steps, rank)
    right = _half_vector(right_steps, m0_right, right_close, n_steps, rank)
    return (TemporalVector(left, n_steps, rank),
            TemporalVector(right, n_steps, rank),
            schedule)


def reduced_transition_matrix(left: TemporalVector, right: TemporalVector,
                              t: float, dt: float) -> TransitionMatrix:
    """Partial trace of |R><L| over the earliest steps, trace-normalized.

    The open legs are the last t/dt steps of both branches; the earliest
    steps (and the initial-state legs) are contracted between the two
    vectors.
    """
    n_t = int(round(t / dt))
    if abs(n_t * dt - t) > 1e-9 or n_t < 0:
        raise ValueError(f"t={t} must be a non-negative multiple of dt={dt}")
    if n_t > left.n_steps:
        raise ValueError(f"t={t} exceeds the total evolution time")
    norm = temporal_overlap(left, right)
    if abs(norm) < NORM_FLOOR:
        raise ValueError("normalization vanishes: |<L|R>| below 1e-12")
    d_open = 4 ** n_t
    d_early = left.state_rank ** 2 * 4 ** (left.n_steps - n_t)
    lmat = left.amplitudes.reshape(d_early, d_open)
    rmat = right.amplitudes.reshape(d_early, d_open)
    return TransitionMatrix(left_factor=lmat, right_factor=rmat,
                            norm=norm, n_open_steps=n_t)


def generalized_entropy(tau: TransitionMatrix,
                        alpha: int) -> tuple[complex, complex]:
    """(T_alpha, S_alpha) = (tr(tau^alpha), -log(T_alpha)/(1-alpha)).

    The trace of the matrix power is evaluated on the smaller of the
    open-leg and early-leg spaces: tr((X Y)^alpha) = tr((Y X)^alpha).
    """
    if alpha < 2:
        raise ValueError(f"alpha must be >= 2, got {alpha}")
    if tau.open_dim <= tau.early_dim:
        m = tau.right_factor.T @ tau.left_factor / tau.norm
    else:
        m = tau.left_factor @ tau.right_factor.T / tau.norm
    power = m
    for _ in range(alpha - 1):
        power = power @ m
    t_alpha = complex(np.trace(power))
    if t_alpha == 0:
        raise ValueError("tr(tau^alpha) vanished; entropy undefined")
    s_alpha = -np.log(t_alpha) / (1 - alpha)
    return t_alpha, complex(s_alpha)


def temporal_entropy_series(p: IsingParams, initial, probe_site: int,
                            probe_op: np.ndarray, T: float, dt: float,
                            cut: int, t_values, alpha: int = 2,
                            seed: int = 0) -> np.ndarray:
    """tr(tau(t)^alpha) over a grid of cut times from one vector pair."""
    left, right, _ = build_temporal_vectors(
        p, initial, probe_site, probe_op, T, dt, cut, seed=seed)
    out = np.empty(len(t_values), dtype=np.complex128)
    for k, t in enumerate(t_values):
        tau = reduced_transition_matrix(left, right, t, dt)
        out[k], _ = generalized_entropy(tau, alpha)
    return out
