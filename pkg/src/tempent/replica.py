"""Double-quench orchestration: entropy grids over cut times and probes.

A plan fixes the chain, the initial state, the replica count alpha, and a
grid of cut times t in [0, T].  For every t, alpha copies evolve for T-t
under the decoupled replica Hamiltonian and for t under the mixed one;
the probe product over copies, normalized by the single-chain <O_j(T)>
to the power alpha, gives tr(tau(t)^alpha) per probe site.

Because the decoupled epoch of a longer cell is a prefix of the shorter
ones, the grid is walked in descending t and the decoupled state is
advanced incrementally; this is bit-identical to evolving every cell from
scratch (the gate sequence is the same) but avoids redundant work.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np

from . import exact as ex
from . import mps as mp
from .hamiltonians import (ChainTerm, IsingParams, ReplicaLayout, chain_terms,
                           replica_hamiltonian, trotter_step)
from .tensors import as_tensor

NORMALIZATION_FLOOR = 1e-12


@dataclass
class InitialState:
    """Descriptor of the single-copy initial state.

    kind: 'product' (all sites in ``local_state``, default |0>),
    'ground_dmrg' / 'ground_exact' (ground state of the chain itself;
    ``dmrg_start`` selects the symmetry sector of the DMRG start state),
    or 'thermal' (Gibbs state at inverse temperature ``beta``; exact
    engine only).
    """

    kind: str
    beta: float | None = None
    local_state: np.ndarray | None = None
    dmrg_start: np.ndarray | None = None

    def __post_init__(self):
        kinds = ("product", "ground_dmrg", "ground_exact", "thermal")
        if self.kind not in kinds:
            raise ValueError(f"initial kind must be one of {kinds}")
        if self.kind == "thermal" and (self.beta is None or self.beta < 0):
            raise ValueError("thermal initial state needs beta >= 0")


@dataclass
class QuenchPlan:
    """Everything needed to reproduce one double-quench experiment."""

    params: IsingParams
    initial: InitialState
    T: float
    t_grid: Sequence[float]
    probes: Sequence[tuple[int, np.ndarray]]
    cut: int | None = None
    alpha: int = 2
    engine: str = "mps"
    method: str = "trotter"     # 'exact' available on the exact engine
    dt: float = 0.05
    order: int = 2
    chi_max: int = 128
    cutoff: float = 1e-10
    abort_threshold: float = 1e-6
    field_free_cut: bool = False
    dmrg_sweeps: int = 12
    dmrg_tol: float = 1e-11
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        p = self.params
        if self.cut is None:
            self.cut = p.N // 2
        if not 1 <= self.cut <= p.N - 1:
            raise ValueError(f"cut {self.cut} outside 1..{p.N - 1}")
        if self.alpha < 2:
            raise ValueError("alpha must be >= 2")
        if self.engine not in ("mps", "exact"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.method not in ("trotter", "exact"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.engine == "mps":
            if self.alpha != 2:
                raise ValueError("the MPS engine supports alpha=2 only")
            if self.method != "trotter":
                raise ValueError("the MPS engine is Trotter-based")
            if self.initial.kind == "thermal":
                raise ValueError(
                    "thermal initial states run on the exact engine")
        if self.order not in (1, 2):
            raise ValueError("trotter order must be 1 or 2")
        n_total = int(round(self.T / self.dt))
        if abs(n_total * self.dt - self.T) > 1e-9 or n_total < 1:
            raise ValueError(
                f"T={self.T} must be a positive integer multiple of dt")
        ts = list(self.t_grid)
        if sorted(ts) != ts or len(set(ts)) != len(ts):
            raise ValueError("t_grid must be strictly increasing")
        for t in ts:
            n = int(round(t / self.dt))
            if abs(n * self.dt - t) > 1e-9:
                raise ValueError(
                    f"t={t} is not an integer multiple of dt={self.dt}")
            if not -1e-12 <= t <= self.T + 1e-12:
                raise ValueError(f"t={t} outside [0, T={self.T}]")
        self.t_grid = ts
        sites = [s for s, _ in self.probes]
        if len(set(sites)) != len(sites):
            raise ValueError("duplicate probe sites")
        for s, op in self.probes:
            if not 0 <= s < p.N:
                raise ValueError(f"probe site {s} out of range")
            op = as_tensor(op)
            if np.max(np.abs(op - op.conj().T)) > 1e-12:
                raise ValueError(f"probe at site {s} is not Hermitian")

    @property
    def layout(self) -> ReplicaLayout:
        return ReplicaLayout(self.alpha, self.params.N, self.cut)


@dataclass
class EntropyGrid:
    """Values tr(tau(t)^alpha) on the (probe site, cut time) grid."""

    sites: list[int]
    times: list[float]
    values: np.ndarray          # (n_sites, n_times) complex
    valid: np.ndarray           # bool mask, same shape
    normalizations: np.ndarray  # <O_j(T)> per probe site
    diagnostics: dict
    plan: QuenchPlan

    def series(self, site: int) -> np.ndarray:
        """The time series of one probe site."""
        return self.values[self.sites.index(site)]


def entropy_from_grid(grid: EntropyGrid) -> np.ndarray:
    """S_alpha = -log(T_alpha)/(1-alpha) per cell (principal branch).

    Invalid or vanishing cells yield NaN.  The imaginary part is retained
    so callers can verify it is negligible for Hermitian probes.
    """
    alpha = grid.plan.alpha
    vals = grid.values.copy()
    bad = ~grid.valid | (vals == 0)
    vals[bad] = 1.0  # placeholder; masked below
    s = -np.log(vals) / (1 - alpha)
    s[bad] = np.nan
    return s


def _single_chain_terms(plan: QuenchPlan) -> list[ChainTerm]:
    ff = plan.cut - 1 if plan.field_free_cut else None
    return chain_terms(plan.params, field_free_bond=ff)


def _prepare_single_mps(plan: QuenchPlan) -> mp.MpsState:
    init = plan.initial
    if init.kind == "product":
        local = init.local_state if init.local_state is not None \
            else np.array([1.0, 0.0])
        return mp.product_mps([local] * plan.params.N,
                              chi_max=plan.chi_max, cutoff=plan.cutoff)
    if init.kind == "ground_dmrg":
        result = mp.dmrg(plan.params, chi_max=plan.chi_max,
                         sweeps=plan.dmrg_sweeps, tol=plan.dmrg_tol,
                         initial_local=init.dmrg_start)
        state = result.state
        state.chi_max = plan.chi_max
        state.cutoff = plan.cutoff
        return state
    if init.kind == "ground_exact":
        psi = ex.ground_state_exact(plan.params, seed=plan.seed).state
        return mps_from_dense(psi.amplitudes, plan.params.N,
                              chi_max=plan.chi_max, cutoff=plan.cutoff)
    raise ValueError(f"initial kind {init.kind!r} not supported on MPS")


def mps_from_dense(amplitudes: np.ndarray, n_sites: int, chi_max: int,
                   cutoff: float) -> mp.MpsState:
    """Exact MPS factorization of a dense statevector (small N)."""
    tensors = []
    rest = as_tensor(amplitudes).reshape(1, -1)
    for _ in range(n_sites - 1):
        dl = rest.shape[0]
        mat = rest.reshape(dl * 2, -1)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, min(chi_max, int(np.sum(s / s[0] > cutoff))))
        tensors.append(u[:, :keep].reshape(dl, 2, keep))
        rest = (s[:keep, None] * vh[:keep])
    tensors.append(rest.reshape(-1, 2, 1))
    return mp.MpsState(tensors, center=n_sites - 1, chi_max=chi_max,
                       cutoff=cutoff)


def _prepare_single_exact(plan: QuenchPlan) -> ex.State:
    init = plan.initial
    if init.kind == "product":
        local = init.local_state if init.local_state is not None \
            else np.array([1.0, 0.0])
        return ex.product_state([local] * plan.params.N)
    if init.kind in ("ground_dmrg", "ground_exact"):
        return ex.ground_state_exact(plan.params, seed=plan.seed).state
    if init.kind == "thermal":
        return ex.thermal_state_exact(plan.params, init.beta)
    raise ValueError(f"unknown initial kind {init.kind!r}")


# Small cache for dense eigendecompositions reused across plans that share
# a Hamiltonian (e.g. temperature sweeps at fixed couplings).
_EVOLVER_CACHE: dict[tuple, ex.SpectralEvolver] = {}
_EVOLVER_CACHE_MAX = 4


def _spectral_evolver(terms: list[ChainTerm], n: int) -> ex.SpectralEvolver:
    key = (n, tuple((t.sites, t.matrix.tobytes()) for t in terms))
    if key not in _EVOLVER_CACHE:
        if len(_EVOLVER_CACHE) >= _EVOLVER_CACHE_MAX:
            _EVOLVER_CACHE.pop(next(iter(_EVOLVER_CACHE)))
        _EVOLVER_CACHE[key] = ex.SpectralEvolver(terms, n)
    return _EVOLVER_CACHE[key]


def run_double_quench(plan: QuenchPlan) -> EntropyGrid:
    """Execute the plan and assemble the entropy grid.

    Deterministic given the plan; cells are flagged invalid (NaN value)
    when the single-copy normalization <O_j(T)> falls below 1e-12.
    """
    if plan.engine == "mps":
        return _run_mps(plan)
    return _run_exact(plan)


def _grid_skeleton(plan: QuenchPlan):
    n_j, n_t = len(plan.probes), len(plan.t_grid)
    values = np.full((n_j, n_t), np.nan, dtype=np.complex128)
    valid = np.zeros((n_j, n_t), dtype=bool)
    return values, valid


def _run_mps(plan: QuenchPlan) -> EntropyGrid:
    p = plan.params
    layout = plan.layout
    single = _prepare_single_mps(plan)
    chain = _single_chain_terms(plan)

    # Single-copy normalization run of duration T.
    norm_state = single.copy()
    try:
        mp.tebd_evolve(norm_state, chain, plan.T, plan.dt, plan.order,
                       chi_max=plan.chi_max, cutoff=plan.cutoff,
                       abort_threshold=plan.abort_threshold)
    except mp.TebdTruncationError as err:
        raise mp.TebdTruncationError(
            f"normalization run failed: {err}") from err
    nrm2 = norm_state.norm() ** 2
    normalizations = np.array(
        [mp.mps_expectation(norm_state, [(j, op)]) / nrm2
         for j, op in plan.probes])

    dec = replica_hamiltonian(p, layout, "decoupled",
                              field_free_cut=plan.field_free_cut)
    mix = replica_hamiltonian(p, layout, "mixed",
                              field_free_cut=plan.field_free_cut)
    base = mp.interleave_copies([single] * plan.alpha,
                                chi_max=plan.chi_max, cutoff=plan.cutoff)

    values, valid = _grid_skeleton(plan)
    diagnostics = {"engine": "mps", "max_bond": 1, "total_discarded": 0.0,
                   "max_step_discarded": 0.0,
                   "normalization_run_discarded": norm_state.discarded_total}

    # Descending t: the decoupled epoch grows as t shrinks.
    order_desc = np.argsort(plan.t_grid)[::-1]
    dec_elapsed = 0.0
    for idx in order_desc:
        t = plan.t_grid[idx]
        dec_target = plan.T - t
        if dec_target - dec_elapsed > 1e-12:
            try:
                summary = mp.tebd_evolve(
                    base, dec, dec_target - dec_elapsed, plan.dt, plan.order,
                    chi_max=plan.chi_max, cutoff=plan.cutoff,
                    abort_threshold=plan.abort_threshold)
            except mp.TebdTruncationError as err:
                raise mp.TebdTruncationError(
                    f"decoupled epoch failed at t={t}: {err}") from err
            _merge_diag(diagnostics, summary)
            dec_elapsed = dec_target
        work = base.copy()
        if t > 0:
            try:
                summary = mp.tebd_evolve(
                    work, mix, t, plan.dt, plan.order,
                    chi_max=plan.chi_max, cutoff=plan.cutoff,
                    abort_threshold=plan.abort_threshold)
            except mp.TebdTruncationError as err:
                raise mp.TebdTruncationError(
                    f"mixed epoch failed at t={t}: {err}") from err
            _merge_diag(diagnostics, summary)
        wn2 = work.norm() ** 2
        for pi, (j, op) in enumerate(plan.probes):
            if abs(normalizations[pi]) < NORMALIZATION_FLOOR:
                continue
            ops = [(layout.site(c, j), op) for c in range(plan.alpha)]
            num = mp.mps_expectation(work, ops) / wn2
            values[pi, idx] = num / normalizations[pi] ** plan.alpha
            valid[pi, idx] = True

    return EntropyGrid(sites=[j for j, _ in plan.probes],
                       times=list(plan.t_grid), values=values, valid=valid,
                       normalizations=normalizations,
                       diagnostics=diagnostics, plan=plan)


def _merge_diag(diag: dict, summary: mp.TruncationSummary) -> None:
    diag["max_bond"] = max(diag["max_bond"], summary.max_bond)
    diag["total_discarded"] += summary.total_discarded
    diag["max_step_discarded"] = max(diag["max_step_discarded"],
                                     summary.max_step_discarded)


def _run_exact(plan: QuenchPlan) -> EntropyGrid:
    p = plan.params
    layout = plan.layout
    single = _prepare_single_exact(plan)
    chain = _single_chain_terms(plan)
    dec = replica_hamiltonian(p, layout, "decoupled",
                              field_free_cut=plan.field_free_cut)
    mix = replica_hamiltonian(p, layout, "mixed",
                              field_free_cut=plan.field_free_cut)
    rep0 = ex.replicate_state(single, layout)
    n_rep = layout.total_sites

    # Normalization: single-chain run of duration T, same schedule.
    if plan.method == "exact":
        ev = _spectral_evolver(chain, p.N)
        evolved = ev.evolve(single, plan.T)
    else:
        seq = trotter_step(chain, plan.dt, plan.order)
        evolved = ex.apply_gate_sequence(
            single, seq, int(round(plan.T / plan.dt)))
    norm_div = evolved.norm() ** 2 if isinstance(evolved, ex.StateVector) \
        else 1.0
    normalizations = np.array(
        [ex.expectation(evolved, [(j, op)]) / norm_div
         for j, op in plan.probes])

    values, valid = _grid_skeleton(plan)
    diagnostics = {"engine": f"exact/{plan.method}"}
    probe_ops = [[(layout.site(c, j), op) for c in range(plan.alpha)]
                 for j, op in plan.probes]

    if plan.method == "exact":
        _exact_spectral_cells(plan, rep0, dec, mix, n_rep, probe_ops,
                              normalizations, values, valid, diagnostics)
    else:
        _exact_trotter_cells(plan, rep0, dec, mix, probe_ops,
                             normalizations, values, valid)

    return EntropyGrid(sites=[j for j, _ in plan.probes],
                       times=list(plan.t_grid), values=values, valid=valid,
                       normalizations=normalizations,
                       diagnostics=diagnostics, plan=plan)


def _fill_cell(plan, state, probe_ops, normalizations, values, valid, idx):
    div = state.norm() ** 2 if isinstance(state, ex.StateVector) else 1.0
    for pi, ops in enumerate(probe_ops):
        if abs(normalizations[pi]) < NORMALIZATION_FLOOR:
            continue
        num = ex.expectation(state, ops) / div
        values[pi, idx] = num / normalizations[pi] ** plan.alpha
        valid[pi, idx] = True


def _exact_trotter_cells(plan, rep0, dec, mix, probe_ops, normalizations,
                         values, valid):
    seq_dec = trotter_step(dec, plan.dt, plan.order)
    seq_mix = trotter_step(mix, plan.dt, plan.order)
    order_desc = np.argsort(plan.t_grid)[::-1]
    base = rep0
    dec_steps_done = 0
    for idx in order_desc:
        t = plan.t_grid[idx]
        dec_steps = int(round((plan.T - t) / plan.dt))
        if dec_steps > dec_steps_done:
            base = ex.apply_gate_sequence(base, seq_dec,
                                          dec_steps - dec_steps_done)
            dec_steps_done = dec_steps
        n_mix = int(round(t / plan.dt))
        work = ex.apply_gate_sequence(base, seq_mix, n_mix) if n_mix \
            else base
        _fill_cell(plan, work, probe_ops, normalizations, values, valid, idx)


def _exact_spectral_cells(plan, rep0, dec, mix, n_rep, probe_ops,
                          normalizations, values, valid, diagnostics):
    ev_mix = _spectral_evolver(mix, n_rep)
    dec_invariant = ex.state_stationary_under(
        ex.dense_hamiltonian(dec, n_rep), rep0)
    diagnostics["decoupled_epoch_invariant"] = bool(dec_invariant)
    ops_dense = [
        ex.embed_local_ops(ops, n_rep) for ops in probe_ops]
    times = np.array(plan.t_grid)
    if dec_invariant:
        # The initial state is stationary under the decoupled Hamiltonian
        # (up to a global phase for pure states), so only the mixed epoch
        # matters and all cells share one eigenbasis transform.
        series = ev_mix.expectation_series(rep0, ops_dense, times)
        for idx in range(len(times)):
            div = 1.0
            if isinstance(rep0, ex.StateVector):
                div = rep0.norm() ** 2
            for pi in range(len(probe_ops)):
                if abs(normalizations[pi]) < NORMALIZATION_FLOOR:
                    continue
                num = series[pi, idx] / div
                values[pi, idx] = num / normalizations[pi] ** plan.alpha
                valid[pi, idx] = True
        return
    ev_dec = _spectral_evolver(dec, n_rep)
    for idx, t in enumerate(plan.t_grid):
        state = ev_dec.evolve(rep0, plan.T - t)
        state = ev_mix.evolve(state, t)
        _fill_cell(plan, state, probe_ops, normalizations, values, valid,
                   idx)
