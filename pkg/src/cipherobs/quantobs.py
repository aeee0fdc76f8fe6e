"""Quantized observer over Z_q: scaling, state recursion, residue, the
detection criterion, plaintext state recovery and parameter validation.

The observer state lives in the centered range of a large prime q.  All
parameter inequalities are evaluated with exact rational arithmetic so that
pass/fail verdicts do not depend on floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Dict, Sequence, Tuple

import numpy as np

from .modring import ModMatrix, Modulus
from .obsdesign import ObserverBank, ResidueMaps, round_half_up, calibrate_M
from .plantsim import AttackScenario, run_closed_loop
from .obsdesign import run_reference_observer

__all__ = [
    "QuantError",
    "QuantParams",
    "QuantState",
    "ModularMaps",
    "quantize_initial",
    "quantize_input",
    "step_quantized",
    "residue_quantized",
    "detect",
    "DetectResult",
    "recover_plain_estimate",
    "validate_params",
    "ParamReport",
    "BoundCheck",
    "make_params",
    "calibrate_quantization",
    "CalibrationReport",
]


class QuantError(Exception):
    pass


@dataclass(frozen=True)
class QuantParams:
    """Scales, modulus and the synthesis constants entering the bounds.

    kappa / init_error / signal_bound are the largest pseudo-inverse gain,
    the worst per-sensor initial estimation error, and the attack-free
    supremum of the observer signals; kappa_spectral is the same gain in
    the 2-norm, used only by the calibrated lift bound.
    """

    s1: float
    s2: float
    lift: int
    q: Modulus
    N: int
    Delta: float
    eps: float
    kappa: float
    kappa_spectral: float
    init_error: float
    signal_bound: float
    l_max: int
    l_total: int

    @property
    def resolution(self) -> float:
        """Plaintext value represented by one integer step: s1^2 * s2."""
        return self.s1 * self.s1 * self.s2


@dataclass(frozen=True)
class QuantState:
    zbar: ModMatrix  # l x 1 column
    step: int


@dataclass(frozen=True)
class ModularMaps:
    """Integer observer maps wrapped into Z_q matrices."""

    Gbar: ModMatrix
    Hbar: ModMatrix
    PhiPinvBar: ModMatrix
    subset_pinv_bars: Dict[Tuple[int, ...], ModMatrix]
    block_sizes: Tuple[int, ...]

    @classmethod
    def from_integer(cls, maps: ResidueMaps, bank: ObserverBank,
                     q: Modulus) -> "ModularMaps":
        return cls(
            Gbar=ModMatrix(maps.Gbar, q),
            Hbar=ModMatrix(maps.Hbar, q),
            PhiPinvBar=ModMatrix(maps.PhiPinvBar, q),
            subset_pinv_bars={s: ModMatrix(m, q)
                              for s, m in maps.subset_pinv_bars.items()},
            block_sizes=bank.block_sizes,
        )


def quantize_initial(zhat_ini: Sequence[float], params: QuantParams) -> ModMatrix:
    """Scale the observer initial value by 1/(s1 s2), round, and reduce."""
    scale = params.s1 * params.s2
    entries = [round_half_up(float(v) / scale) for v in np.ravel(zhat_ini)]
    return ModMatrix.column(entries, params.q)


def quantize_input(u: Sequence[float], y: Sequence[float],
                   params: QuantParams) -> ModMatrix:
    """Scale the stacked input [u; y] by 1/s2, round, and reduce."""
    stacked = list(np.ravel(u)) + list(np.ravel(y))
    entries = [round_half_up(float(v) / params.s2) for v in stacked]
    return ModMatrix.column(entries, params.q)


def _shift_column(entries: Tuple[int, ...],
                  block_sizes: Sequence[int]) -> list:
    """Downward shift inside each block: the action of the error matrix."""
    out = [0] * len(entries)
    o = 0
    for li in block_sizes:
        out[o + 1:o + li] = entries[o:o + li - 1]
        o += li
    return out


def step_quantized(state: QuantState, vbar: ModMatrix,
                   block_sizes: Sequence[int], Gbar: ModMatrix) -> QuantState:
    """One observer update over Z_q.

    The state matrix is a block lower shift, so its action is a row shift
    inside each block; the result is identical to a dense product.
    """
    if Gbar.nrows != state.zbar.nrows or Gbar.ncols != vbar.nrows:
        raise QuantError("dimension mismatch in quantized step")
    q = state.zbar.modulus
    shifted = _shift_column(state.zbar.column_entries(), block_sizes)
    drive = Gbar @ vbar
    entries = [q.cmod(a + b) for a, b in zip(shifted, drive.column_entries())]
    return QuantState(zbar=ModMatrix.column(entries, q), step=state.step + 1)


def residue_quantized(state: QuantState, Hbar: ModMatrix) -> ModMatrix:
    """Stacked subset-vs-full estimate differences, reduced to Z_q."""
    return Hbar @ state.zbar


@dataclass(frozen=True)
class DetectResult:
    flag: bool
    lhs: float
    threshold: float


def detect(rbar: ModMatrix, t: int, params: QuantParams) -> DetectResult:
    """Attack test: flag when the scaled residue norm exceeds the threshold.

    The threshold keeps a transient allowance of 2 * kappa * init_error
    while the deadbeat observer is still flushing (t < l_max) and drops to
    eps afterwards.  Equality does not flag; only strict violation does.
    """
    lhs = params.resolution * rbar.max_abs()
    threshold = params.eps
    if t < params.l_max:
        threshold += 2.0 * params.kappa * params.init_error
    return DetectResult(flag=lhs > threshold, lhs=lhs, threshold=threshold)


def recover_plain_estimate(state: QuantState, PhiPinvBar: ModMatrix,
                           params: QuantParams) -> np.ndarray:
    """Physical-scale state estimate s1^2 s2 * (PhiPinvBar @ zbar mod q)."""
    xbar = PhiPinvBar @ state.zbar
    return np.array([params.resolution * v for v in xbar.column_entries()])


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: Fraction
    rhs: Fraction
    passed: bool

    @property
    def margin(self) -> float:
        """lhs / rhs; > 1 means the strict inequality holds with slack."""
        if self.rhs == 0:
            return float("inf")
        return float(Fraction(self.lhs, self.rhs))


@dataclass(frozen=True)
class ParamReport:
    modulus_bound: BoundCheck          # q vs overflow bound
    lift_bound: BoundCheck             # lift vs calibrated noise budget
    lift_bound_strict: BoundCheck      # lift vs worst-case noise budget
    modulus_lift_bound: BoundCheck     # q vs lift * (overflow bound + 1/2)
    lift_coprime: bool
    gbar_norm: int

    @property
    def all_pass(self) -> bool:
        return (self.modulus_bound.passed and self.lift_bound.passed
                and self.modulus_lift_bound.passed and self.lift_coprime)

    @property
    def strict_all_pass(self) -> bool:
        return self.all_pass and self.lift_bound_strict.passed

    def lines(self):
        out = []
        for chk in (self.modulus_bound, self.lift_bound,
                    self.lift_bound_strict, self.modulus_lift_bound):
            verdict = "pass" if chk.passed else "FAIL"
            out.append(f"{chk.name}: {verdict} (margin {chk.margin:.4g})")
        out.append("lift coprime to q: " + ("yes" if self.lift_coprime else "NO"))
        out.append(f"gbar inf norm: {self.gbar_norm}")
        return out


def _overflow_rhs(params: QuantParams, kappa: Fraction) -> Fraction:
    s1 = Fraction(params.s1)
    s2 = Fraction(params.s2)
    M = Fraction(params.signal_bound)
    zt = Fraction(params.init_error)
    eps = Fraction(params.eps)
    return 2 * (kappa * (M + 2 * zt) + 2 * eps) / (s1 * s1 * s2)


def _lift_rhs(params: QuantParams, kappa: Fraction, noise: Fraction,
              gbar_norm: int) -> Fraction:
    s1 = Fraction(params.s1)
    return (2 * (kappa / s1 + Fraction(params.l_total, 2))
            * (1 + params.l_max * gbar_norm) * noise)


def validate_params(params: QuantParams, Gbar) -> ParamReport:
    """Exact rational evaluation of the three parameter inequalities.

    The modulus bounds use the worst-case pseudo-inverse gain (infinity
    norm).  The lift bound is reported twice: the strict worst-case form
    (infinity-norm gain, full error bound) is informational, while the
    calibrated form (spectral gain, one-sigma error scale) is the one the
    benchmark parameters were selected against and the one that gates runs.
    """
    if isinstance(Gbar, ModMatrix):
        gnorm = Gbar.inf_norm()
    else:
        gnorm = max(sum(abs(int(a)) for a in row) for row in Gbar)
    kappa_inf = Fraction(params.kappa)
    kappa_2 = Fraction(params.kappa_spectral)
    delta = Fraction(params.Delta)
    sigma = delta / 6

    q = Fraction(params.q.q)
    lift = Fraction(params.lift)

    overflow = _overflow_rhs(params, kappa_inf)
    chk_q = BoundCheck("modulus overflow bound", q, overflow, q > overflow)

    strict_rhs = _lift_rhs(params, kappa_inf, delta, gnorm)
    chk_lift_strict = BoundCheck("lift noise budget (worst case)",
                                 lift, strict_rhs, lift > strict_rhs)
    calib_rhs = _lift_rhs(params, kappa_2, sigma, gnorm)
    chk_lift = BoundCheck("lift noise budget (calibrated)",
                          lift, calib_rhs, lift > calib_rhs)

    combined = lift * (overflow + Fraction(1, 2))
    chk_ql = BoundCheck("modulus-lift bound", q, combined, q > combined)

    return ParamReport(
        modulus_bound=chk_q,
        lift_bound=chk_lift,
        lift_bound_strict=chk_lift_strict,
        modulus_lift_bound=chk_ql,
        lift_coprime=gcd(params.lift, params.q.q) == 1,
        gbar_norm=int(gnorm),
    )


def make_params(bank: ObserverBank, *, s1: float, s2: float, lift: int,
                q: Modulus, N: int, Delta: float, eps: float,
                zhat_ini: np.ndarray | None = None,
                horizon: int | None = None,
                signal_bound: float | None = None,
                init_error: float | None = None) -> QuantParams:
    """Fill a QuantParams from a bank, calibrating the signal bound if needed.

    In simulation the initial estimation error is computed exactly from the
    known plant initial state; a deployment passes `init_error` as a supplied
    bound instead.
    """
    if zhat_ini is None:
        zhat_ini = np.zeros(bank.l_total)
    if signal_bound is None:
        if horizon is None:
            horizon = 10 * bank.l_max
        signal_bound = calibrate_M(bank, bank.model, horizon, zhat_ini=zhat_ini)
    if init_error is None:
        init_error = bank.ztilde_ini(bank.model.x_ini, zhat_ini)
    return QuantParams(
        s1=s1, s2=s2, lift=lift, q=q, N=N, Delta=Delta, eps=eps,
        kappa=bank.kappa, kappa_spectral=bank.kappa_spectral,
        init_error=init_error,
        signal_bound=signal_bound, l_max=bank.l_max, l_total=bank.l_total,
    )


@dataclass(frozen=True)
class CalibrationReport:
    max_residue_dev: float
    max_subset_dev: float
    eps: float

    @property
    def ok(self) -> bool:
        return self.max_residue_dev <= self.eps and self.max_subset_dev <= self.eps


def calibrate_quantization(bank: ObserverBank, maps: ModularMaps,
                           params: QuantParams,
                           zhat_ini: np.ndarray | None = None,
                           horizon: int | None = None) -> CalibrationReport:
    """Empirical adequacy check for the scale factors.

    Runs the attack-free loop in both arithmetics and measures how far the
    rescaled Z_q residue and subset estimates drift from the real-valued
    reference.  If either deviation exceeds eps, the scales are too coarse:
    decrease s1/s2 (and re-check the modulus bounds).
    """
    if zhat_ini is None:
        zhat_ini = np.zeros(bank.l_total)
    if horizon is None:
        horizon = 10 * bank.l_max
    traj = run_closed_loop(bank.model, AttackScenario(), horizon)
    ref = run_reference_observer(bank, traj, zhat_ini)
    state = QuantState(zbar=quantize_initial(zhat_ini, params), step=0)
    res = params.resolution
    max_res_dev = 0.0
    max_sub_dev = 0.0
    for t in range(horizon):
        rbar = residue_quantized(state, maps.Hbar)
        dev = max(
            (abs(res * v - rv) for v, rv in
             zip(rbar.column_entries(), ref.rhat[t])),
            default=0.0)
        max_res_dev = max(max_res_dev, dev)
        for subset in bank.subsets:
            idx = bank.subset_indices(subset)
            zsub = ModMatrix.column(
                [state.zbar.rows[i][0] for i in idx], params.q)
            xsub = maps.subset_pinv_bars[subset] @ zsub
            ref_sub = ref.subset_estimates[t][subset]
            dev = max(abs(res * v - rv) for v, rv in
                      zip(xsub.column_entries(), ref_sub))
            max_sub_dev = max(max_sub_dev, dev)
        vbar = quantize_input(traj.u[t], traj.y[t], params)
        state = step_quantized(state, vbar, maps.block_sizes, maps.Gbar)
    return CalibrationReport(max_residue_dev=max_res_dev,
                             max_subset_dev=max_sub_dev, eps=params.eps)
