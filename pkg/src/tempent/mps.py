"""Matrix product state engine: DMRG ground search and TEBD evolution.

Site tensors have legs (left bond, physical, right bond).  The state keeps
a mixed-canonical form: tensors left of the orthogonality center are
left-isometric, tensors right of it are right-isometric, and the center
tensor carries the norm.  Truncations never renormalize, so the norm
honestly tracks the accumulated discarded weight.

Non-adjacent two-site terms (the interleaved replica couplings) are routed
through explicit swap-gate networks and swapped back within the same
Trotter sub-step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from .hamiltonians import (ChainTerm, IsingParams, SX, SZ, field_matrix,
                           trotter_step)
from .tensors import as_tensor, hermitian_exp

ISOMETRY_TOL = 1e-10

SWAP = np.array([[1, 0, 0, 0],
                 [0, 0, 1, 0],
                 [0, 1, 0, 0],
                 [0, 0, 0, 1]], dtype=np.complex128)


class TebdTruncationError(RuntimeError):
    """Raised when a step discards more weight than the abort threshold."""


@dataclass
class TruncationSummary:
    """Aggregate truncation diagnostics of an evolution."""

    total_discarded: float = 0.0
    max_step_discarded: float = 0.0
    max_bond: int = 1
    n_steps: int = 0


class MpsState:
    """Finite MPS with an orthogonality center.

    tensors[i] has legs (Dl, 2, Dr); ``center`` is the index of the
    non-isometric tensor.
    """

    def __init__(self, tensors: list[np.ndarray], center: int,
                 chi_max: int = 128, cutoff: float = 1e-10):
        self.tensors = [as_tensor(t) for t in tensors]
        self.center = center
        self.chi_max = chi_max
        self.cutoff = cutoff
        self.discarded_total = 0.0

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensors[self.center]))

    def copy(self) -> "MpsState":
        out = MpsState([t.copy() for t in self.tensors], self.center,
                       self.chi_max, self.cutoff)
        out.discarded_total = self.discarded_total
        return out

    def move_center_to(self, i: int) -> None:
        """QR-shift the orthogonality center without truncation."""
        while self.center < i:
            c = self.center
            t = self.tensors[c]
            dl, d, dr = t.shape
            q, r = np.linalg.qr(t.reshape(dl * d, dr))
            k = q.shape[1]
            self.tensors[c] = q.reshape(dl, d, k)
            self.tensors[c + 1] = np.tensordot(
                r, self.tensors[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > i:
            c = self.center
            t = self.tensors[c]
            dl, d, dr = t.shape
            q, r = np.linalg.qr(t.reshape(dl, d * dr).T)
            k = q.shape[1]
            self.tensors[c] = q.T.reshape(k, d, dr)
            self.tensors[c - 1] = np.tensordot(
                self.tensors[c - 1], r.T, axes=(2, 0))
            self.center -= 1

    def check_canonical(self, tol: float = ISOMETRY_TOL) -> None:
        """Verify the isometry pattern around the center."""
        for i, t in enumerate(self.tensors):
            dl, d, dr = t.shape
            if i < self.center:
                m = t.reshape(dl * d, dr)
                dev = np.max(np.abs(m.conj().T @ m - np.eye(dr)))
                if dev > tol:
                    raise AssertionError(
                        f"site {i} not left-isometric (dev {dev:.2e})")
            elif i > self.center:
                m = t.reshape(dl, d * dr)
                dev = np.max(np.abs(m @ m.conj().T - np.eye(dl)))
                if dev > tol:
                    raise AssertionError(
                        f"site {i} not right-isometric (dev {dev:.2e})")

    def apply_two_site(self, bond: int, gate: np.ndarray) -> float:
        """Apply a 4x4 gate at (bond, bond+1); returns discarded weight."""
        if not bond <= self.center <= bond + 1:
            self.move_center_to(bond)
        a, b = self.tensors[bond], self.tensors[bond + 1]
        dl, d, _ = a.shape
        dr = b.shape[2]
        theta = np.tensordot(a, b, axes=(2, 0))        # vL i j vR
        g4 = gate.reshape(2, 2, 2, 2)
        theta = np.tensordot(g4, theta, axes=([2, 3], [1, 2]))
        theta = theta.transpose(2, 0, 1, 3)            # vL i j vR
        mat = theta.reshape(dl * d, d * dr)
        u, s, vh = _svd_safely(mat)
        if s[0] == 0.0:
            raise ValueError("state collapsed to zero during gate application")
        keep = int(np.sum(s / s[0] > self.cutoff))
        keep = max(1, min(self.chi_max, keep))
        total = float(np.sum(s ** 2))
        discarded = float(np.sum(s[keep:] ** 2)) / total
        self.tensors[bond] = u[:, :keep].reshape(dl, d, keep)
        self.tensors[bond + 1] = (s[:keep, None] * vh[:keep]).reshape(
            keep, d, dr)
        self.center = bond + 1
        self.discarded_total += discarded
        return discarded

    def apply_term(self, sites: tuple[int, int], gate: np.ndarray) -> float:
        """Apply a gate on (possibly distant) sites via swap routing."""
        i, j = sites
        if not 0 <= i < j < self.n_sites:
            raise ValueError(f"invalid site pair {sites}")
        if j == i + 1:
            return self.apply_two_site(i, gate)
        discarded = 0.0
        # Walk site j down next to i, apply, and walk it back.
        for k in range(j - 1, i, -1):
            discarded += self.apply_two_site(k, SWAP)
        discarded += self.apply_two_site(i, gate)
        for k in range(i + 1, j):
            discarded += self.apply_two_site(k, SWAP)
        return discarded

    def compress(self) -> None:
        """Two-pass sweep dropping singular values below the cutoff."""
        self.move_center_to(0)
        for bond in range(self.n_sites - 1):
            self.apply_two_site(bond, np.eye(4, dtype=np.complex128))
        self.move_center_to(0)


def _svd_safely(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        from scipy.linalg import svd as scipy_svd
        return scipy_svd(mat, full_matrices=False, lapack_driver="gesvd")


def product_mps(local_states: list[np.ndarray], chi_max: int = 128,
                cutoff: float = 1e-10) -> MpsState:
    """Bond-dimension-1 MPS from normalized single-spin states."""
    tensors = []
    for v in local_states:
        v = as_tensor(v).reshape(-1)
        if v.size != 2:
            raise ValueError("local states must be 2-vectors")
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ValueError("local state not normalized")
        tensors.append(v.reshape(1, 2, 1))
    return MpsState(tensors, center=0, chi_max=chi_max, cutoff=cutoff)


def interleave_copies(states: list[MpsState], chi_max: int,
                      cutoff: float) -> MpsState:
    """Interleaved tensor product of identical-length chains.

    Site (position p, copy c) of the combined chain hosts copy c's tensor
    at position p; the other copies pass through as identities on their
    bond spaces.  The result is compressed to drop product Schmidt values
    below the cutoff.
    """
    n = states[0].n_sites
    if any(s.n_sites != n for s in states):
        raise ValueError("all copies must have the same length")
    alpha = len(states)
    tensors = []
    for p in range(n):
        for c in range(alpha):
            a = states[c].tensors[p]
            mats = []
            for cp in range(alpha):
                if cp == c:
                    continue
                # copies before c have advanced past position p
                bond = states[cp].tensors[p].shape[2] if cp < c \
                    else states[cp].tensors[p].shape[0]
                mats.append(np.eye(bond, dtype=np.complex128))
            site_mats = []
            for s in range(2):
                factors = []
                for cp in range(alpha):
                    if cp == c:
                        factors.append(a[:, s, :])
                    else:
                        idx = cp if cp < c else cp - 1
                        factors.append(mats[idx])
                site_mats.append(reduce(np.kron, factors))
            tensors.append(np.stack(site_mats, axis=1))
    out = MpsState(tensors, center=0, chi_max=chi_max, cutoff=cutoff)
    out.move_center_to(out.n_sites - 1)  # establish canonical form
    out.move_center_to(0)
    out.compress()
    return out


def mps_expectation(state: MpsState,
                    ops: list[tuple[int, np.ndarray]]) -> complex:
    """Exact sandwich <psi| prod_i O_i |psi> (no normalization)."""
    site_ops = {}
    for site, op in ops:
        if site in site_ops:
            raise ValueError(f"duplicate operator site {site}")
        if not 0 <= site < state.n_sites:
            raise ValueError(f"operator site {site} out of range")
        site_ops[site] = as_tensor(op)
    env = np.ones((1, 1), dtype=np.complex128)   # (bra bond, ket bond)
    for i, a in enumerate(state.tensors):
        t = np.tensordot(env, a, axes=(1, 0))    # (bra_l, s, ket_r)
        if i in site_ops:
            t = np.tensordot(site_ops[i], t, axes=(1, 1))  # (s', bra_l, ket_r)
            t = t.transpose(1, 0, 2)
        env = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def tebd_evolve(state: MpsState, terms: list[ChainTerm], time: float,
                dt: float, order: int, chi_max: int | None = None,
                cutoff: float | None = None,
                abort_threshold: float = 1e-6) -> TruncationSummary:
    """Trotter-evolve the state in place; returns truncation diagnostics.

    Aborts with TebdTruncationError when a single step discards more
    weight than ``abort_threshold`` (the bond dimension is exhausted).
    """
    if chi_max is not None:
        state.chi_max = chi_max
    if cutoff is not None:
        state.cutoff = cutoff
    summary = TruncationSummary()
    if time == 0:
        return summary
    n_steps = int(round(time / dt))
    if n_steps < 0 or abs(n_steps * dt - time) > 1e-9:
        raise ValueError(f"time {time} is not a multiple of dt {dt}")
    seq = trotter_step(terms, dt, order)
    for _ in range(n_steps):
        step_discarded = 0.0
        for sites, gate in seq.gates:
            step_discarded += state.apply_term(sites, gate)
        summary.n_steps += 1
        summary.total_discarded += step_discarded
        summary.max_step_discarded = max(summary.max_step_discarded,
                                         step_discarded)
        summary.max_bond = max(summary.max_bond, max(state.bond_dims(),
                                                     default=1))
        if step_discarded > abort_threshold:
            raise TebdTruncationError(
                f"step discarded weight {step_discarded:.3e} exceeds the "
                f"abort threshold {abort_threshold:.1e} at chi_max="
                f"{state.chi_max} (bond dims {max(state.bond_dims())})")
    return summary


# ---------------------------------------------------------------- DMRG --

def ising_mpo(p: IsingParams) -> list[np.ndarray]:
    """MPO of the Ising chain; W legs are (Dl, Dr, s_out, s_in)."""
    f = field_matrix(p)
    eye = np.eye(2, dtype=np.complex128)
    w = np.zeros((3, 3, 2, 2), dtype=np.complex128)
    w[0, 0] = eye
    w[1, 0] = SX
    w[2, 0] = f
    w[2, 1] = -p.J * SX
    w[2, 2] = eye
    first = w[2:3, :, :, :].copy()     # row vector (1, 3)
    last = w[:, 0:1, :, :].copy()      # column vector (3, 1)
    if p.N == 1:
        return [f.reshape(1, 1, 2, 2)]
    return [first] + [w.copy() for _ in range(p.N - 2)] + [last]


def mpo_square(mpo: list[np.ndarray]) -> list[np.ndarray]:
    """MPO of O^2 from the MPO of O (bond dimension squares)."""
    out = []
    for w in mpo:
        sq = np.einsum("abom,cdmi->acbdoi", w, w)
        dl = w.shape[0] ** 2
        dr = w.shape[1] ** 2
        out.append(sq.reshape(dl, dr, 2, 2))
    return out


def mpo_expectation(state: MpsState, mpo: list[np.ndarray]) -> complex:
    """<psi|O|psi> for an MPO O (no normalization)."""
    env = np.ones((1, 1, 1), dtype=np.complex128)  # (bra, mpo, ket)
    for a, w in zip(state.tensors, mpo):
        t = np.tensordot(env, a, axes=(2, 0))          # (b, m, s, k)
        t = np.tensordot(t, w, axes=([1, 2], [0, 3]))  # (b, k, m', s')
        env = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))  # (b', k, m')
        env = env.transpose(0, 2, 1)
    return complex(env[0, 0, 0])


@dataclass
class DmrgResult:
    state: MpsState
    energy: float
    sweep_energies: list[float] = field(default_factory=list)
    converged: bool = False


def _heff_matvec(lenv, w1, w2, renv):
    def matvec(theta):
        dl = lenv.shape[2]
        dr = renv.shape[2]
        t = theta.reshape(dl, 2, 2, dr)
        t1 = np.tensordot(lenv, t, axes=(2, 0))          # b wl s1 s2 kr
        t2 = np.tensordot(t1, w1, axes=([1, 2], [0, 3]))  # b s2 kr wm s1'
        t3 = np.tensordot(t2, w2, axes=([3, 1], [0, 3]))  # b kr s1' wr s2'
        t4 = np.tensordot(t3, renv, axes=([1, 3], [2, 1]))  # b s1' s2' br
        return t4.reshape(-1)
    return matvec


def dmrg(p: IsingParams, chi_max: int, sweeps: int, tol: float,
         initial_local: np.ndarray | None = None,
         cutoff: float = 1e-12) -> DmrgResult:
    """Two-site DMRG ground-state search for the Ising chain.

    The start state is a product state (default all |0>, which at h=0
    selects the even spin-flip-parity sector; pass e.g. (1,-1)/sqrt(2)
    to target a symmetry-broken branch).  Local problems are solved with
    implicitly restarted Lanczos warm-started from the current tensor,
    so runs are deterministic.
    """
    if chi_max < 2:
        raise ValueError("chi_max must be >= 2")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    local = np.array([1.0, 0.0]) if initial_local is None else initial_local
    state = product_mps([local] * p.N, chi_max=chi_max, cutoff=cutoff)
    if p.N == 1:
        evals, evecs = np.linalg.eigh(field_matrix(p))
        state.tensors[0] = evecs[:, 0].reshape(1, 2, 1)
        return DmrgResult(state, float(evals[0]), [float(evals[0])], True)
    mpo = ising_mpo(p)

    renvs = [None] * (p.N + 1)
    renvs[p.N] = np.ones((1, 1, 1), dtype=np.complex128)
    state.move_center_to(0)
    for i in range(p.N - 1, 0, -1):
        renvs[i] = _update_renv(renvs[i + 1], state.tensors[i], mpo[i])
    lenvs = [None] * (p.N + 1)
    lenvs[0] = np.ones((1, 1, 1), dtype=np.complex128)

    energy = np.inf
    energies: list[float] = []
    converged = False
    for _ in range(sweeps):
        for i in range(p.N - 1):      # left-to-right
            energy = _optimize_bond(state, mpo, lenvs, renvs, i, "right",
                                    chi_max, cutoff)
        for i in range(p.N - 2, -1, -1):   # right-to-left
            energy = _optimize_bond(state, mpo, lenvs, renvs, i, "left",
                                    chi_max, cutoff)
        energies.append(energy)
        if len(energies) >= 2 and abs(energies[-2] - energies[-1]) < tol:
            converged = True
            break
    return DmrgResult(state, energies[-1], energies, converged)


def _update_renv(renv, a, w):
    t = np.tensordot(a, renv, axes=(2, 2))             # (l, s, b, m)
    t = np.tensordot(t, w, axes=([3, 1], [1, 3]))      # (l, b, m', s')
    out = np.tensordot(t, a.conj(), axes=([1, 3], [2, 1]))  # (l, m', b')
    return out.transpose(2, 1, 0)                      # (bra, mpo, ket)


def _update_lenv(lenv, a, w):
    t = np.tensordot(lenv, a, axes=(2, 0))             # (b, m, s, k)
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))      # (b, k, m', s')
    out = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))  # (b', k, m')
    return out.transpose(0, 2, 1)


def _optimize_bond(state: MpsState, mpo, lenvs, renvs, i: int,
                   direction: str, chi_max: int, cutoff: float) -> float:
    state.move_center_to(i if direction == "right" else i + 1)
    theta0 = np.tensordot(state.tensors[i], state.tensors[i + 1],
                          axes=(2, 0))
    dl, _, _, dr = theta0.shape
    dim = dl * 4 * dr
    matvec = _heff_matvec(lenvs[i], mpo[i], mpo[i + 1], renvs[i + 2])
    v0 = theta0.reshape(-1)
    nrm = np.linalg.norm(v0)
    if nrm == 0:
        raise RuntimeError("zero local tensor in DMRG")
    v0 = v0 / nrm
    if dim <= 64:
        dense = np.empty((dim, dim), dtype=np.complex128)
        eye = np.eye(dim)
        for k in range(dim):
            dense[:, k] = matvec(eye[:, k])
        evals, evecs = np.linalg.eigh(dense)
        energy, theta = float(evals[0]), evecs[:, 0]
    else:
        op = LinearOperator((dim, dim), matvec=matvec, dtype=np.complex128)
        try:
            evals, evecs = eigsh(op, k=1, which="SA", v0=v0, tol=1e-14,
                                 maxiter=max(200, dim))
        except ArpackNoConvergence as err:
            if err.eigenvalues.size:
                evals, evecs = err.eigenvalues, err.eigenvectors
            else:
                raise
        energy, theta = float(evals[0]), evecs[:, 0]
    theta = theta.reshape(dl * 2, 2 * dr)
    u, s, vh = _svd_safely(theta)
    keep = int(np.sum(s / s[0] > cutoff))
    keep = max(1, min(chi_max, keep))
    s_k = s[:keep]
    s_k = s_k / np.linalg.norm(s_k)
    if direction == "right":
        state.tensors[i] = u[:, :keep].reshape(dl, 2, keep)
        state.tensors[i + 1] = (s_k[:, None] * vh[:keep]).reshape(keep, 2, dr)
        state.center = i + 1
        lenvs[i + 1] = _update_lenv(lenvs[i], state.tensors[i], mpo[i])
    else:
        state.tensors[i] = (u[:, :keep] * s_k).reshape(dl, 2, keep)
        state.tensors[i + 1] = vh[:keep].reshape(keep, 2, dr)
        state.center = i
        renvs[i + 1] = _update_renv(renvs[i + 2], state.tensors[i + 1],
                                    mpo[i + 1])
    return energy
