"""End-to-end orchestration: scenario loading, the three execution modes
(reference, quantized, encrypted), CSV emission, and the white-box error
bookkeeping used by the verification suites.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import encobs, quantobs, secviews
from .lwe import SecretKey, SecureRng, TestRng, keygen
from .modring import ModMatrix, Modulus
from .obsdesign import ObserverBank, ResidueMaps, build_bank, residue_map, \
    run_reference_observer
from .plantsim import ScenarioBundle, Trajectory, load_scenario, run_closed_loop
from .quantobs import ModularMaps, QuantParams, QuantState, make_params

__all__ = [
    "BENCH_Q",
    "BENCH_LIFT",
    "DEFAULTS",
    "bundled_scenario_path",
    "SystemSetup",
    "StepRecord",
    "records_to_csv",
    "run_reference_mode",
    "run_quantized_mode",
    "QuantizedRun",
    "run_encrypted_mode",
    "EncryptedRun",
]

BENCH_Q = 2 ** 109 - 31
BENCH_LIFT = 2 ** 44

DEFAULTS = {
    "s1": 1e-5,
    "s2": 1e-5,
    "lift": BENCH_LIFT,
    "q": BENCH_Q,
    "N": 4096,
    "Delta": 19.2,
    "eps": 0.3,
    "lwe_dim": 64,   # run-time LWE dimension unless --full-lwe
}


def bundled_scenario_path():
    """Path of the shipped three-inertia benchmark scenario."""
    return importlib.resources.files("cipherobs") / "scenarios" / "three_inertia.json"


@dataclass
class SystemSetup:
    """Scenario plus everything derived from it for one parameter set."""

    bundle: ScenarioBundle
    bank: ObserverBank
    maps: ResidueMaps
    params: QuantParams
    mod_maps: ModularMaps
    zhat_ini: np.ndarray

    @classmethod
    def from_scenario(cls, path, *, s1: float = DEFAULTS["s1"],
                      s2: float = DEFAULTS["s2"],
                      lift: int = DEFAULTS["lift"],
                      q: int = DEFAULTS["q"], N: int = DEFAULTS["N"],
                      Delta: float = DEFAULTS["Delta"],
                      eps: float = DEFAULTS["eps"],
                      zhat_ini=None,
                      signal_bound: Optional[float] = None) -> "SystemSetup":
        bundle = load_scenario(path)
        return cls.from_bundle(bundle, s1=s1, s2=s2, lift=lift, q=q, N=N,
                               Delta=Delta, eps=eps, zhat_ini=zhat_ini,
                               signal_bound=signal_bound)

    @classmethod
    def from_bundle(cls, bundle: ScenarioBundle, *, s1, s2, lift, q, N,
                    Delta, eps, zhat_ini=None,
                    signal_bound: Optional[float] = None) -> "SystemSetup":
        bank = build_bank(bundle.model, bundle.k)
        maps = residue_map(bank, s1)
        modulus = Modulus(q)
        if zhat_ini is None:
            zhat_ini = np.zeros(bank.l_total)
        params = make_params(bank, s1=s1, s2=s2, lift=lift, q=modulus, N=N,
                             Delta=Delta, eps=eps, zhat_ini=zhat_ini,
                             signal_bound=signal_bound)
        mod_maps = ModularMaps.from_integer(maps, bank, modulus)
        return cls(bundle=bundle, bank=bank, maps=maps, params=params,
                   mod_maps=mod_maps, zhat_ini=np.asarray(zhat_ini, dtype=float))

@dataclass(frozen=True)
class StepRecord:
    step: int
    time_s: float
    residue_norm: float
    threshold: float
    detected: bool
    est_error_norm: float
    mode: str


CSV_HEADER = "step,time_s,residue_norm,threshold,detected,est_error_norm,mode"


def records_to_csv(records: List[StepRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.step},{r.time_s:.6g},{r.residue_norm:.12g},"
            f"{r.threshold:.12g},{int(r.detected)},{r.est_error_norm:.12g},"
            f"{r.mode}")
    return "\n".join(lines) + "\n"


def _threshold(params: QuantParams, t: int) -> float:
    thr = params.eps
    if t < params.l_max:
        thr += 2.0 * params.kappa * params.init_error
    return thr


def run_reference_mode(setup: SystemSetup, steps: int) -> List[StepRecord]:
    """Real-arithmetic observer run (the oracle mode)."""
    traj = run_closed_loop(setup.bundle.model, setup.bundle.attacks, steps)
    ref = run_reference_observer(setup.bank, traj, setup.zhat_ini)
    Ts = setup.bundle.model.Ts
    out = []
    for t in range(steps):
        rn = float(np.max(np.abs(ref.rhat[t]))) if ref.rhat[t].size else 0.0
        err = float(np.max(np.abs(traj.x[t] - ref.xhat[t])))
        thr = _threshold(setup.params, t)
        out.append(StepRecord(step=t, time_s=t * Ts, residue_norm=rn,
                              threshold=thr, detected=rn > thr,
                              est_error_norm=err, mode="reference"))
    return out


@dataclass
class QuantizedRun:
    records: List[StepRecord]
    trajectory: Trajectory
    zbars: List[ModMatrix]
    rbars: List[ModMatrix]
    xbars: List[ModMatrix]
    vbars: List[ModMatrix]


def run_quantized_mode(setup: SystemSetup, steps: int) -> QuantizedRun:
    """Plaintext observer over Z_q."""
    traj = run_closed_loop(setup.bundle.model, setup.bundle.attacks, steps)
    params = setup.params
    maps = setup.mod_maps
    state = QuantState(zbar=quantobs.quantize_initial(setup.zhat_ini, params),
                       step=0)
    Ts = setup.bundle.model.Ts
    run = QuantizedRun(records=[], trajectory=traj, zbars=[], rbars=[],
                       xbars=[], vbars=[])
    for t in range(steps):
        rbar = quantobs.residue_quantized(state, maps.Hbar)
        det = quantobs.detect(rbar, t, params)
        xbar = maps.PhiPinvBar @ state.zbar
        est = np.array([params.resolution * v for v in xbar.column_entries()])
        err = float(np.max(np.abs(traj.x[t] - est)))
        run.records.append(StepRecord(
            step=t, time_s=t * Ts, residue_norm=det.lhs,
            threshold=det.threshold, detected=det.flag,
            est_error_norm=err, mode="quantized"))
        run.zbars.append(state.zbar)
        run.rbars.append(rbar)
        run.xbars.append(xbar)
        vbar = quantobs.quantize_input(traj.u[t], traj.y[t], params)
        run.vbars.append(vbar)
        state = quantobs.step_quantized(state, vbar, maps.block_sizes,
                                        maps.Gbar)
    return run


@dataclass
class EncryptedRun:
    records: List[StepRecord]
    trajectory: Trajectory
    public: encobs.ObserverPublic
    sk: SecretKey
    states: List[encobs.EncObserverState]
    r1s: List[ModMatrix]
    disclosed: List[ModMatrix]
    recovered: List[ModMatrix]          # channel-0 recovery per step
    session: encobs.EncryptorSession
    view1: Optional[secviews.View1] = None
    view2: Optional[secviews.View2] = None
    final_residues: List[ModMatrix] = field(default_factory=list)


def run_encrypted_mode(setup: SystemSetup, steps: int, *,
                       seed: Optional[int] = None,
                       lwe_dim: Optional[int] = None,
                       record_views: bool = False,
                       record_artifacts: bool = False,
                       keep_states: bool = False,
                       cross_check: bool = True,
                       pool=None) -> EncryptedRun:
    """Full encrypted observer run.

    With cross_check enabled the run aborts on the first step where the
    disclosed residue deviates from the plaintext quantized observer (this
    never happens when the implementation is correct; the check guards the
    pipeline against regressions).
    """
    qrun = run_quantized_mode(setup, steps)
    traj = qrun.trajectory
    params = setup.params
    if lwe_dim is not None and lwe_dim != params.N:
        params = replace(params, N=lwe_dim)
    rng = TestRng(seed) if seed is not None else SecureRng()
    sk = keygen(params.N, params.q, rng)
    public = encobs.ObserverPublic.build(setup.mod_maps, params)
    record = record_artifacts or record_views
    session = encobs.EncryptorSession(sk, params, public, rng=rng,
                                      record_artifacts=record)

    zbar_ini = quantobs.quantize_initial(setup.zhat_ini, params)
    batch = session.enc_initial(zbar_ini)
    state = encobs.EncObserverState.from_initial(batch)
    input_batches = []

    Ts = setup.bundle.model.Ts
    run = EncryptedRun(records=[], trajectory=traj, public=public, sk=sk,
                       states=[], r1s=[], disclosed=[], recovered=[],
                       session=session)
    for t in range(steps):
        if keep_states:
            run.states.append(state)
        r1 = encobs.residue_first_column(state, public)
        disclosed = encobs.disclose_residue(r1, params)
        if cross_check and disclosed != qrun.rbars[t]:
            raise encobs.EncObsError(
                f"disclosed residue mismatch at step {t}; aborting")
        det = quantobs.detect(disclosed, t, params)
        xrec = encobs.recover_encrypted_state(state, 0, sk, params,
                                              setup.mod_maps.PhiPinvBar)
        est = np.array([params.resolution * v for v in xrec.column_entries()])
        err = float(np.max(np.abs(traj.x[t] - est)))
        run.records.append(StepRecord(
            step=t, time_s=t * Ts, residue_norm=det.lhs,
            threshold=det.threshold, detected=det.flag,
            est_error_norm=err, mode="encrypted"))
        run.r1s.append(r1)
        run.disclosed.append(disclosed)
        run.recovered.append(xrec)
        in_batch = session.enc_input(qrun.vbars[t])
        if record_views:
            input_batches.append(in_batch)
        state = encobs.step_encrypted(state, in_batch, public, pool=pool)
    if keep_states:
        run.states.append(state)
    # residues one step past the final input, for transcript completeness
    final_r1 = encobs.residue_first_column(state, public)
    run.final_residues = [encobs.disclose_residue(final_r1, params)]

    if record_views:
        init_art = session.artifacts[0]
        view1 = secviews.View1(
            init_ct=init_art.standard_ct,
            input_cts=tuple(a.standard_ct for a in session.artifacts[1:]),
            residues=tuple(run.disclosed + run.final_residues),
        )
        view2 = secviews.View2(
            init_cts=_initial_batch_cts(batch),
            input_cts=tuple(tuple(b.ciphertext(j)
                                  for j in range(b.n_channels))
                            for b in input_batches),
        )
        run.view1 = view1
        run.view2 = view2
    return run


def _initial_batch_cts(batch: encobs.EncryptedBatch):
    return tuple(batch.ciphertext(j) for j in range(batch.n_channels))
