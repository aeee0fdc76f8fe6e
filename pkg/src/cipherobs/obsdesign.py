"""Observer synthesis: per-sensor canonical decompositions, deadbeat gains,
the stacked bank with subset pseudo-inverses, the residue map, and the
real-arithmetic reference observer used as an oracle for the quantized and
encrypted pipelines.

Each sensor i contributes an observable subsystem z_i = Phi_i x with a
companion-form state matrix whose last column carries the characteristic
polynomial coefficients.  Choosing the observer gain equal to that column
makes the error matrix a pure lower shift: integer valued, nilpotent, and
hence deadbeat.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .plantsim import PlantModel, Trajectory, run_closed_loop, AttackScenario

__all__ = [
    "DesignError",
    "ConsistencyFailure",
    "RedundancyViolation",
    "PartialObserver",
    "ObserverBank",
    "ResidueMaps",
    "observability_index",
    "canonical_decomposition",
    "build_bank",
    "residue_map",
    "run_reference_observer",
    "ReferenceRun",
    "calibrate_M",
    "design_report",
    "round_half_up",
]

RANK_TOL = 1e-9
CONSISTENCY_TOL = 1e-6


class DesignError(Exception):
    pass


class ConsistencyFailure(DesignError):
    pass


class RedundancyViolation(DesignError):
    pass


def round_half_up(x: float) -> int:
    """Deterministic rounding: halves go toward +infinity."""
    return math.floor(x + 0.5)


def _round_matrix(M: np.ndarray) -> Tuple[Tuple[int, ...], ...]:
    return tuple(tuple(round_half_up(v) for v in row) for row in np.atleast_2d(M))


def observability_index(A: np.ndarray, Ci: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Rank of the stacked observability matrix of (A, Ci).

    Rank is decided by singular values above rel_tol times the largest one.
    """
    A = np.asarray(A, dtype=float)
    Ci = np.asarray(Ci, dtype=float).reshape(1, -1)
    n = A.shape[0]
    rows = [Ci]
    for _ in range(n - 1):
        rows.append(rows[-1] @ A)
    O = np.vstack(rows)
    s = np.linalg.svd(O, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


@dataclass(frozen=True)
class PartialObserver:
    """Observable canonical decomposition of one sensor plus its deadbeat gain.

    Fbar is the integer lower-shift error matrix (F - L J), nilpotent of
    order l_i.
    """

    index: int
    l_i: int
    f: np.ndarray          # characteristic coefficients f_1..f_{l_i}
    F: np.ndarray          # companion form, last column = f
    J: np.ndarray          # [0 ... 0 1]
    L: np.ndarray          # observer gain, equals f as a column
    Fbar: np.ndarray       # integer lower shift
    Phi: np.ndarray        # l_i x n, full row rank, Phi A = F Phi

    def __post_init__(self):
        for name in ("f", "F", "J", "L", "Fbar", "Phi"):
            getattr(self, name).setflags(write=False)


def canonical_decomposition(A: np.ndarray, Ci: np.ndarray,
                            index: int = 0) -> PartialObserver:
    """Observable canonical form of (A, Ci) and the matching state map Phi.

    The map is pinned by the canonical output row: the last row of Phi is Ci
    and the remaining rows follow from the backward recursion
    phi_{h-1} = phi_h A - f_h Ci.  The leftover identity phi_1 A = f_1 Ci is
    a Cayley-Hamilton consequence and is used as a consistency check.
    """
    A = np.asarray(A, dtype=float)
    Ci = np.asarray(Ci, dtype=float).reshape(1, -1)
    li = observability_index(A, Ci)
    if li < 1:
        raise ConsistencyFailure(f"sensor {index}: zero observability index")
    rows = [Ci]
    for _ in range(A.shape[0] - 1):
        rows.append(rows[-1] @ A)
    O = np.vstack(rows)
    _, _, Vt = np.linalg.svd(O)
    W = Vt[:li]
    restricted = W @ A @ W.T
    coeffs = np.real(np.poly(restricted))
    # monic poly lam^l + c_1 lam^{l-1} + ... + c_l  ->  f_h = -c_{l-h+1}
    f = -coeffs[1:][::-1]
    phi_rows = [np.zeros_like(Ci)] * li
    phi_rows[li - 1] = Ci.copy()
    for h in range(li, 1, -1):
        phi_rows[h - 2] = phi_rows[h - 1] @ A - f[h - 1] * Ci
    leftover = phi_rows[0] @ A - f[0] * Ci
    scale = max(np.linalg.norm(A, np.inf), 1.0)
    if np.linalg.norm(leftover, np.inf) > CONSISTENCY_TOL * scale:
        raise ConsistencyFailure(
            f"sensor {index}: canonical recursion residual "
            f"{np.linalg.norm(leftover, np.inf):.3e} exceeds tolerance")
    Phi = np.vstack(phi_rows)
    F = np.zeros((li, li))
    for h in range(1, li):
        F[h, h - 1] = 1.0
    F[:, -1] = f
    J = np.zeros((1, li))
    J[0, -1] = 1.0
    Fbar = np.zeros((li, li), dtype=int)
    for h in range(1, li):
        Fbar[h, h - 1] = 1
    return PartialObserver(index=index, l_i=li, f=f.copy(), F=F, J=J,
                           L=f.reshape(-1, 1).copy(), Fbar=Fbar, Phi=Phi)


def _pinv_full_column(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse (M^T M)^-1 M^T for full-column-rank M."""
    return np.linalg.solve(M.T @ M, M.T)


@dataclass(frozen=True)
class ObserverBank:
    """All per-sensor decompositions plus the stacked observer data.

    `subsets` lists every (p-k)-subset of sensors in lexicographic order;
    kappa is the largest infinity norm over the stored pseudo-inverses and
    kappa_spectral the same maximum in the spectral norm (used only by the
    calibrated scale-factor bound).
    """

    model: PlantModel
    k: int
    partials: Tuple[PartialObserver, ...]
    subsets: Tuple[Tuple[int, ...], ...]
    Phi: np.ndarray
    L_gain: np.ndarray
    G_real: np.ndarray            # [Phi B, L_gain]
    Phi_pinv: np.ndarray
    subset_pinvs: Dict[Tuple[int, ...], np.ndarray]
    kappa: float
    kappa_spectral: float
    block_sizes: Tuple[int, ...]
    offsets: Tuple[int, ...]
    l_total: int
    l_max: int
    n_r: int

    def __post_init__(self):
        for arr in (self.Phi, self.L_gain, self.G_real, self.Phi_pinv):
            arr.setflags(write=False)

    def z_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.block_sizes[i])

    def subset_indices(self, subset: Tuple[int, ...]) -> Tuple[int, ...]:
        idx = []
        for i in subset:
            idx.extend(range(self.offsets[i], self.offsets[i] + self.block_sizes[i]))
        return tuple(idx)

    def selector(self, subset: Tuple[int, ...]) -> np.ndarray:
        """0/1 matrix extracting the subset blocks from a stacked vector."""
        idx = self.subset_indices(subset)
        P = np.zeros((len(idx), self.l_total), dtype=int)
        for r, c in enumerate(idx):
            P[r, c] = 1
        return P

    def apply_shift(self, z: np.ndarray) -> np.ndarray:
        """Fbar @ z for stacked vectors: a downward shift inside each block."""
        out = np.zeros_like(z)
        for i, li in enumerate(self.block_sizes):
            o = self.offsets[i]
            out[o + 1:o + li] = z[o:o + li - 1]
        return out

    def ztilde_ini(self, x_ini: np.ndarray, zhat_ini: np.ndarray) -> float:
        """Largest per-sensor initial estimation error max_i |z_i(0) - zhat_i(0)|."""
        x_ini = np.asarray(x_ini, dtype=float).ravel()
        zhat_ini = np.asarray(zhat_ini, dtype=float).ravel()
        worst = 0.0
        for i, part in enumerate(self.partials):
            err = part.Phi @ x_ini - zhat_ini[self.z_slice(i)]
            worst = max(worst, float(np.max(np.abs(err))) if err.size else 0.0)
        return worst


def build_bank(model: PlantModel, k: int) -> ObserverBank:
    """Assemble the observer bank for sparsity bound k.

    Raises RedundancyViolation naming the first subset whose stacked map
    loses column rank (the redundant-observability requirement).
    """
    p, n = model.p, model.n
    if not 0 <= k < p:
        raise DesignError(f"k must satisfy 0 <= k < p, got k={k}, p={p}")
    partials = tuple(canonical_decomposition(model.A, model.C[i], index=i)
                     for i in range(p))
    block_sizes = tuple(part.l_i for part in partials)
    offsets = tuple(int(v) for v in np.cumsum((0,) + block_sizes[:-1]))
    l_total = sum(block_sizes)
    Phi = np.vstack([part.Phi for part in partials])
    if np.linalg.matrix_rank(Phi, tol=RANK_TOL * max(1.0, np.linalg.norm(Phi, 2))) < n:
        raise RedundancyViolation("full stacked map Phi lost column rank")
    L_gain = np.zeros((l_total, p))
    for i, part in enumerate(partials):
        L_gain[offsets[i]:offsets[i] + part.l_i, i] = part.f
    G_real = np.hstack([Phi @ model.B, L_gain])

    subsets = tuple(itertools.combinations(range(p), p - k))
    Phi_pinv = _pinv_full_column(Phi)
    kappa = float(np.linalg.norm(Phi_pinv, np.inf))
    kappa_spectral = float(np.linalg.norm(Phi_pinv, 2))
    subset_pinvs: Dict[Tuple[int, ...], np.ndarray] = {}
    for subset in subsets:
        PhiL = np.vstack([partials[i].Phi for i in subset])
        rank = np.linalg.matrix_rank(
            PhiL, tol=RANK_TOL * max(1.0, np.linalg.norm(PhiL, 2)))
        if rank < n:
            raise RedundancyViolation(
                f"subset {tuple(i + 1 for i in subset)} has rank {rank} < {n}")
        pinv = _pinv_full_column(PhiL)
        pinv.setflags(write=False)
        subset_pinvs[subset] = pinv
        kappa = max(kappa, float(np.linalg.norm(pinv, np.inf)))
        kappa_spectral = max(kappa_spectral, float(np.linalg.norm(pinv, 2)))

    return ObserverBank(
        model=model, k=k, partials=partials, subsets=subsets, Phi=Phi,
        L_gain=L_gain, G_real=G_real, Phi_pinv=Phi_pinv,
        subset_pinvs=subset_pinvs, kappa=kappa, kappa_spectral=kappa_spectral,
        block_sizes=block_sizes, offsets=offsets, l_total=l_total,
        l_max=max(block_sizes), n_r=n * len(subsets),
    )


@dataclass(frozen=True)
class ResidueMaps:
    """Scaled-and-rounded integer observer matrices, ready for Z_q.

    Hbar stacks one block row per subset: the subset pseudo-inverse routed
    through its 0/1 selector minus the full pseudo-inverse, so that
    Hbar @ zbar reproduces the stacked subset-vs-full estimate differences.
    """

    s1: float
    Gbar: Tuple[Tuple[int, ...], ...]
    Hbar: Tuple[Tuple[int, ...], ...]
    PhiPinvBar: Tuple[Tuple[int, ...], ...]
    subset_pinv_bars: Dict[Tuple[int, ...], Tuple[Tuple[int, ...], ...]]

    def gbar_inf_norm(self) -> int:
        return max(sum(abs(a) for a in row) for row in self.Gbar)


def residue_map(bank: ObserverBank, s1: float) -> ResidueMaps:
    """Scale the real observer matrices by 1/s1 and round to integers."""
    if not 0 < s1 <= 1:
        raise DesignError(f"s1 must lie in (0, 1], got {s1}")
    Gbar = _round_matrix(bank.G_real / s1)
    PhiPinvBar = _round_matrix(bank.Phi_pinv / s1)
    subset_bars: Dict[Tuple[int, ...], Tuple[Tuple[int, ...], ...]] = {}
    hrows = []
    full = np.array(PhiPinvBar, dtype=object)
    for subset in bank.subsets:
        bar = _round_matrix(bank.subset_pinvs[subset] / s1)
        subset_bars[subset] = bar
        idx = bank.subset_indices(subset)
        block = [[-int(v) for v in row] for row in full]
        for r, row in enumerate(bar):
            for c_local, c_global in enumerate(idx):
                block[r][c_global] += int(row[c_local])
        hrows.extend(tuple(row) for row in block)
    return ResidueMaps(s1=s1, Gbar=Gbar, Hbar=tuple(hrows),
                       PhiPinvBar=PhiPinvBar, subset_pinv_bars=subset_bars)


@dataclass
class ReferenceRun:
    """Real-arithmetic observer trajectory; the oracle for the Z_q pipelines."""

    zhat: list
    xhat: list
    rhat: list
    subset_estimates: list  # per step: dict subset -> xhat_subset


def run_reference_observer(bank: ObserverBank, trajectory: Trajectory,
                           zhat_ini: np.ndarray) -> ReferenceRun:
    """Iterate the stacked deadbeat observer on a recorded trajectory."""
    zhat = np.asarray(zhat_ini, dtype=float).ravel().copy()
    if zhat.shape != (bank.l_total,):
        raise DesignError(f"zhat_ini must have length {bank.l_total}")
    run = ReferenceRun(zhat=[], xhat=[], rhat=[], subset_estimates=[])
    for t in range(len(trajectory)):
        xh = bank.Phi_pinv @ zhat
        per_subset = {}
        stacked = []
        for subset in bank.subsets:
            zL = zhat[list(bank.subset_indices(subset))]
            xL = bank.subset_pinvs[subset] @ zL
            per_subset[subset] = xL
            stacked.append(xL - xh)
        run.zhat.append(zhat.copy())
        run.xhat.append(xh)
        run.rhat.append(np.concatenate(stacked))
        run.subset_estimates.append(per_subset)
        v = np.concatenate([trajectory.u[t], trajectory.y[t]])
        zhat = bank.apply_shift(zhat) + bank.G_real @ v
    return run


def calibrate_M(bank: ObserverBank, model: PlantModel, horizon: int,
                zhat_ini: np.ndarray | None = None,
                safety: float = 1.2) -> float:
    """Attack-free supremum of the residue and observer-state norms.

    Runs the closed loop without attacks and returns `safety` times the
    largest observed infinity norm; `horizon` must cover the transient
    (at least ten times the deadbeat settling length).
    """
    if horizon < 10 * bank.l_max:
        raise DesignError(f"horizon {horizon} < 10 * l_max = {10 * bank.l_max}")
    if zhat_ini is None:
        zhat_ini = np.zeros(bank.l_total)
    traj = run_closed_loop(model, AttackScenario(), horizon)
    run = run_reference_observer(bank, traj, zhat_ini)
    worst = 0.0
    for rh, zh in zip(run.rhat, run.zhat):
        worst = max(worst,
                    float(np.max(np.abs(rh))) if rh.size else 0.0,
                    float(np.max(np.abs(zh))) if zh.size else 0.0)
    return safety * worst


def design_report(bank: ObserverBank) -> str:
    """Human-readable synthesis summary."""
    lines = []
    lines.append(f"plant: n={bank.model.n} m={bank.model.m} p={bank.model.p} "
                 f"k={bank.k}")
    for part in bank.partials:
        coeffs = ", ".join(f"{v:.6g}" for v in part.f)
        lines.append(f"sensor {part.index + 1}: l_i={part.l_i}  f=[{coeffs}]")
    lines.append(f"l={bank.l_total}  l_max={bank.l_max}  "
                 f"subsets={len(bank.subsets)}  n_r={bank.n_r}")
    lines.append(f"kappa(inf)={bank.kappa:.9g}  kappa(2)={bank.kappa_spectral:.9g}")
    subsets = " ".join("{" + ",".join(str(i + 1) for i in s) + "}"
                       for s in bank.subsets)
    lines.append(f"subset order: {subsets}")
    return "\n".join(lines)
