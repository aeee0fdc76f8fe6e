"""Command-line interface: design report, simulation modes, verification
suites and the encrypted-observer benchmark.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import encobs, quantobs, secviews, zerodyn
from .lwe import NoiseParams, TestRng, ct_add, ct_matmul, decrypt, encrypt, keygen
from .modring import ModMatrix, Modulus, PrimalityError
from .obsdesign import DesignError, design_report
from .pipeline import (
    DEFAULTS,
    SystemSetup,
    bundled_scenario_path,
    records_to_csv,
    run_encrypted_mode,
    run_quantized_mode,
    run_reference_mode,
)
from .plantsim import PlantError, SchurStabilityError
from .quantobs import validate_params

__all__ = ["main"]


def _load_config(path):
    """A config file is either a scenario (has "A") or a wrapper with a
    "scenario" path plus parameter overrides."""
    if path is None:
        return bundled_scenario_path(), {}
    raw = json.loads(Path(path).read_text())
    if "A" in raw:
        return path, {}
    if "scenario" not in raw:
        raise PlantError("config file needs either plant matrices or a "
                         "'scenario' path")
    scenario = Path(path).parent / raw["scenario"]
    overrides = {k: raw[k] for k in
                 ("s1", "s2", "lift", "q", "N", "Delta", "eps") if k in raw}
    return scenario, overrides


def _setup_from_args(args) -> SystemSetup:
    scenario, overrides = _load_config(args.config)
    kw = dict(DEFAULTS)
    kw.pop("lwe_dim")
    kw.update(overrides)
    for name in ("s1", "s2", "eps"):
        val = getattr(args, name, None)
        if val is not None:
            kw[name] = val
    if getattr(args, "lift", None) is not None:
        kw["lift"] = args.lift
    if getattr(args, "q", None) is not None:
        kw["q"] = args.q
    if getattr(args, "delta", None) is not None:
        kw["Delta"] = args.delta
    return SystemSetup.from_scenario(scenario, **kw)


def _run_lwe_dim(args) -> int:
    if getattr(args, "full_lwe", False):
        return DEFAULTS["N"]
    if getattr(args, "lwe_dim", None) is not None:
        return args.lwe_dim
    return DEFAULTS["lwe_dim"]


def cmd_design(args) -> int:
    setup = _setup_from_args(args)
    print(design_report(setup.bank))
    degrees = []
    fbar = encobs.build_fbar(setup.mod_maps.block_sizes, setup.params.q)
    for j in range(setup.mod_maps.Hbar.nrows):
        degrees.append(zerodyn.relative_degree(
            setup.mod_maps.Hbar.row(j), fbar, setup.mod_maps.Gbar))
    counts = {}
    for nu in degrees:
        counts[nu] = counts.get(nu, 0) + 1
    summary = ", ".join(f"nu={k}: {v} channels" for k, v in sorted(counts.items()))
    print(f"relative degrees: {summary}")
    print(f"init_error={setup.params.init_error:.9g}  "
          f"signal_bound={setup.params.signal_bound:.9g}")
    report = validate_params(setup.params, setup.maps.Gbar)
    for line in report.lines():
        print(line)
    return 0 if report.all_pass else 1


def cmd_simulate(args) -> int:
    setup = _setup_from_args(args)
    report = validate_params(setup.params, setup.maps.Gbar)
    if args.mode == "encrypted" and not report.all_pass:
        print("parameter bounds failed; refusing encrypted run", file=sys.stderr)
        for line in report.lines():
            print(line, file=sys.stderr)
        return 2
    if args.mode == "reference":
        records = run_reference_mode(setup, args.steps)
    elif args.mode == "quantized":
        records = run_quantized_mode(setup, args.steps).records
    else:
        run = run_encrypted_mode(setup, args.steps, seed=args.seed,
                                 lwe_dim=_run_lwe_dim(args))
        records = run.records
    csv_text = records_to_csv(records)
    if args.out:
        Path(args.out).write_text(csv_text)
        print(f"wrote {len(records)} steps to {args.out}")
    else:
        print(csv_text, end="")
    flagged = [r.step for r in records if r.detected]
    if flagged:
        print(f"attack flagged at steps: {flagged}", file=sys.stderr)
    return 0


# -- verification suites ----------------------------------------------------

def _suite_lwe(rng_seed: int, q: Modulus) -> list:
    failures = []
    rng = TestRng(rng_seed)
    noise = NoiseParams(DEFAULTS["Delta"])
    sk = keygen(16, q, rng)
    for trial in range(60):
        h = 1 + trial % 4
        m1 = ModMatrix.column([rng.uniform_centered(q) for _ in range(h)], q)
        m2 = ModMatrix.column([rng.uniform_centered(q) for _ in range(h)], q)
        c1, c2 = encrypt(m1, sk, noise, rng), encrypt(m2, sk, noise, rng)
        if decrypt(ct_add(c1, c2), sk) != decrypt(c1, sk) + decrypt(c2, sk):
            failures.append(f"additive identity broke on trial {trial}")
        Kmat = ModMatrix([[rng.uniform_centered(Modulus(97)) for _ in range(h)]
                          for _ in range(2)], q)
        if decrypt(ct_matmul(Kmat, c1), sk) != Kmat @ decrypt(c1, sk):
            failures.append(f"matmul identity broke on trial {trial}")
        err = decrypt(c1, sk) - m1
        if err.max_abs() > noise.bound:
            failures.append(f"error bound exceeded on trial {trial}")
    return failures


def _suite_deadbeat(setup: SystemSetup) -> list:
    from .obsdesign import run_reference_observer
    from .plantsim import AttackScenario, run_closed_loop
    failures = []
    rng = np.random.default_rng(7)
    zhat_ini = rng.normal(size=setup.bank.l_total)
    traj = run_closed_loop(setup.bundle.model, AttackScenario(), 30)
    ref = run_reference_observer(setup.bank, traj, zhat_ini)
    for t in range(30):
        for i, part in enumerate(setup.bank.partials):
            z_true = part.Phi @ traj.x[t]
            err = np.max(np.abs(z_true - ref.zhat[t][setup.bank.z_slice(i)]))
            if t >= part.l_i and err > 1e-8:
                failures.append(
                    f"sensor {i + 1} error {err:.2e} at step {t} >= l_i")
    return failures


def _suite_zeroing(seed: int, gbar_corrupt: bool, setup: SystemSetup) -> list:
    import random as pyrandom
    failures = []
    q = Modulus(101)
    rng = pyrandom.Random(seed)
    for trial in range(20):
        l = rng.choice([2, 3, 4, 5, 6])
        mp = rng.choice([2, 3])
        F = ModMatrix([[rng.randrange(101) for _ in range(l)]
                       for _ in range(l)], q)
        G = ModMatrix([[rng.randrange(101) for _ in range(mp)]
                       for _ in range(l)], q)
        H = ModMatrix([[rng.randrange(101) for _ in range(l)]], q)
        try:
            ct = zerodyn.build_transform(H, F, G)
        except zerodyn.RelativeDegreeUndefined:
            continue
        if gbar_corrupt:
            rows = [list(r) for r in G.rows]
            rows[0][0] = q.cmod(rows[0][0] + 1)
            G_run = ModMatrix(rows, q)
        else:
            G_run = G
        b_ini = ModMatrix.column([rng.randrange(101) for _ in range(l)], q)
        b_vs = [ModMatrix.column([rng.randrange(101) for _ in range(mp)], q)
                for _ in range(4 * l)]
        tilde_ini, state = zerodyn.cancellation_init(ct, b_ini)
        mod_ini = b_ini - ct.V2 @ tilde_ini
        mod_vs = []
        for v in b_vs:
            tilde, state = zerodyn.cancellation_step(ct, state, v)
            mod_vs.append(v - ct.SigmaDag.scale(tilde))
        outputs = zerodyn.simulate_channel(H, F, G_run, mod_ini, mod_vs)
        if any(o != 0 for o in outputs):
            failures.append(f"cancellation left a nonzero output (trial {trial})")
    # one channel of the real system
    fbar = encobs.build_fbar(setup.mod_maps.block_sizes, setup.params.q)
    ct = zerodyn.build_transform(setup.mod_maps.Hbar.row(0), fbar,
                                 setup.mod_maps.Gbar)
    qq = setup.params.q
    rng2 = pyrandom.Random(seed + 1)
    b_ini = ModMatrix.column(
        [qq.cmod(rng2.randrange(qq.q)) for _ in range(setup.bank.l_total)], qq)
    b_vs = [ModMatrix.column(
        [qq.cmod(rng2.randrange(qq.q)) for _ in range(setup.mod_maps.Gbar.ncols)],
        qq) for _ in range(12)]
    tilde_ini, state = zerodyn.cancellation_init(ct, b_ini)
    mod_ini = b_ini - ct.V2 @ tilde_ini
    mod_vs = []
    for v in b_vs:
        tilde, state = zerodyn.cancellation_step(ct, state, v)
        mod_vs.append(v - ct.SigmaDag.scale(tilde))
    outputs = zerodyn.simulate_channel(setup.mod_maps.Hbar.row(0), fbar,
                                       setup.mod_maps.Gbar, mod_ini, mod_vs)
    if any(o != 0 for o in outputs):
        failures.append("cancellation failed on the benchmark channel")
    return failures


def _suite_encrypted(setup: SystemSetup, seed: int) -> list:
    failures = []
    steps = 12
    run = run_encrypted_mode(setup, steps, seed=seed, lwe_dim=32,
                             record_views=True, keep_states=True,
                             cross_check=False)
    qrun = run_quantized_mode(setup, steps)
    for t in range(steps):
        if run.disclosed[t] != qrun.rbars[t]:
            failures.append(f"disclosure mismatch at step {t}")
            break
    for t in (0, steps // 2, steps - 1):
        for j in (0, run.public.n_channels - 1):
            rec = encobs.recover_encrypted_state(
                run.states[t], j, run.sk, setup.params,
                setup.mod_maps.PhiPinvBar)
            if rec != qrun.xbars[t]:
                failures.append(f"recovery mismatch at step {t} channel {j}")
    v1 = secviews.f2_view2_to_view1(run.view2, run.public, setup.params)
    if v1.init_ct.body != run.view1.init_ct.body:
        failures.append("view roundtrip: initial ciphertext differs")
    if any(a.body != b.body for a, b in zip(v1.input_cts, run.view1.input_cts)):
        failures.append("view roundtrip: input ciphertexts differ")
    if any(a != b for a, b in zip(v1.residues, run.view1.residues)):
        failures.append("view roundtrip: residues differ")
    v2 = secviews.f1_view1_to_view2(run.view1, run.public, setup.params)
    if any(a.body != b.body for a, b in zip(v2.init_cts, run.view2.init_cts)):
        failures.append("view roundtrip: modified initial ciphertexts differ")
    for sa, sb in zip(v2.input_cts, run.view2.input_cts):
        if any(a.body != b.body for a, b in zip(sa, sb)):
            failures.append("view roundtrip: modified input ciphertexts differ")
            break
    return failures


def cmd_verify(args) -> int:
    setup = _setup_from_args(args)
    corrupt = args.mutate == "corrupt-gbar"
    suites = [
        ("lwe homomorphism", lambda: _suite_lwe(args.seed, setup.params.q)),
        ("deadbeat nilpotency", lambda: _suite_deadbeat(setup)),
        ("output zeroing", lambda: _suite_zeroing(args.seed, corrupt, setup)),
        ("disclosure/recovery/views", lambda: _suite_encrypted(setup, args.seed)),
    ]
    any_failed = False
    for name, fn in suites:
        t0 = time.perf_counter()
        failures = fn()
        dt = time.perf_counter() - t0
        status = "ok" if not failures else "FAIL"
        print(f"[{status}] {name} ({dt:.2f}s)")
        for msg in failures:
            print(f"    {msg}")
            any_failed = True
    return 1 if any_failed else 0


def cmd_bench(args) -> int:
    setup = _setup_from_args(args)
    dims = [int(d) for d in args.dims.split(",")]
    thread_counts = [1]
    if args.max_threads > 1:
        thread_counts.append(args.max_threads)
    print(f"channels: {setup.bank.n_r}, steps per measurement: {args.steps}")
    base = {}
    for N in dims:
        for workers in thread_counts:
            pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
            t0 = time.perf_counter()
            run_encrypted_mode(setup, args.steps, seed=args.seed, lwe_dim=N,
                               cross_check=False, pool=pool)
            dt = (time.perf_counter() - t0) / args.steps
            if pool is not None:
                pool.shutdown()
            label = f"N={N} threads={workers}"
            if workers == 1:
                base[N] = dt
                print(f"{label}: {dt * 1000:.1f} ms/step")
            else:
                print(f"{label}: {dt * 1000:.1f} ms/step "
                      f"(speedup {base[N] / dt:.2f}x)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cipherobs",
        description="Encrypted state observer with attack detection on ciphertexts")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", default=None,
                        help="scenario JSON or run-config JSON (default: "
                             "bundled three-inertia benchmark)")
        sp.add_argument("--s1", type=float, default=None)
        sp.add_argument("--s2", type=float, default=None)
        sp.add_argument("--lift", type=int, default=None)
        sp.add_argument("--q", type=int, default=None)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)

    p_design = sub.add_parser("design", help="print the observer design report")
    add_common(p_design)
    p_design.set_defaults(fn=cmd_design)

    p_sim = sub.add_parser("simulate", help="run one mode and emit CSV")
    add_common(p_sim)
    p_sim.add_argument("--mode", choices=["reference", "quantized", "encrypted"],
                       default="quantized")
    p_sim.add_argument("--steps", type=int, default=50)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--full-lwe", action="store_true",
                       help="use the full security dimension instead of the "
                            "fast test dimension")
    p_sim.add_argument("--lwe-dim", type=int, default=None)
    p_sim.set_defaults(fn=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run the property suites")
    add_common(p_ver)
    p_ver.add_argument("--mutate", choices=["none", "corrupt-gbar"],
                       default="none",
                       help="fault-injection hook used to test the suites")
    p_ver.set_defaults(fn=cmd_verify)

    p_bench = sub.add_parser("bench", help="time the encrypted observer")
    add_common(p_bench)
    p_bench.add_argument("--dims", default="64,1024,4096")
    p_bench.add_argument("--steps", type=int, default=5)
    p_bench.add_argument("--max-threads", type=int, default=4)
    p_bench.set_defaults(fn=cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (PlantError, SchurStabilityError, DesignError, PrimalityError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (quantobs.QuantError, encobs.EncObsError,
            zerodyn.ZeroDynError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
