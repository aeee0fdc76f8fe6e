"""Shared test oracles: independent implementations used to cross-check the
library, plus random problem generators."""

import random

import numpy as np

from cipherobs.modring import ModMatrix, Modulus
from cipherobs.plantsim import PlantModel


def egcd_inverse(a: int, q: int) -> int:
    """Modular inverse via the extended Euclidean algorithm (test oracle)."""
    old_r, r = a % q, q
    old_s, s = 1, 0
    while r:
        quot = old_r // r
        old_r, r = r, old_r - quot * r
        old_s, s = s, old_s - quot * s
    if old_r != 1:
        raise ValueError(f"{a} is not invertible mod {q}")
    return old_s % q


def dense_int_matmul(arows, brows, q: int):
    """Naive exact product followed by symmetric reduction (test oracle)."""

    def red(v):
        return v - ((2 * v + q) // (2 * q)) * q

    out = []
    for ar in arows:
        row = []
        for c in range(len(brows[0])):
            row.append(red(sum(ar[k] * brows[k][c] for k in range(len(brows)))))
        out.append(tuple(row))
    return tuple(out)


def random_mod_matrix(rng: random.Random, rows: int, cols: int,
                      q: Modulus) -> ModMatrix:
    return ModMatrix([[rng.randrange(q.q) for _ in range(cols)]
                      for _ in range(rows)], q)


def random_channel(rng: random.Random, q: Modulus, l: int, mp: int):
    """Random (H, F, G) triple over Z_q; may have undefined relative degree."""
    F = random_mod_matrix(rng, l, l, q)
    G = random_mod_matrix(rng, l, mp, q)
    H = random_mod_matrix(rng, 1, l, q)
    return H, F, G


def random_stable_plant(rng: np.random.Generator, n: int, m: int, p: int,
                        rho: float = 0.8) -> PlantModel:
    """Random plant with a stable A and zero feedback gain."""
    while True:
        A = rng.normal(size=(n, n))
        radius = max(abs(np.linalg.eigvals(A)))
        if radius < 1e-9:
            continue
        A = A * (rho / radius)
        B = rng.normal(size=(n, m))
        C = rng.normal(size=(p, n))
        x_ini = rng.normal(size=n)
        try:
            return PlantModel(A=A, B=B, C=C, K=np.zeros((m, n)), x_ini=x_ini)
        except Exception:
            continue


def error_trajectory(artifacts, gbar_rows, block_sizes, steps: int):
    """Accumulated encryption-error states over the plain integers.

    The error of the initial encryption seeds the recursion; each input
    encryption's error enters through the integer gain matrix.  No modular
    reduction is applied, matching the plain-integer error dynamics the
    recovery argument relies on.
    """
    e = list(artifacts[0].error.column_entries())
    out = [tuple(e)]
    for t in range(1, steps + 1):
        ev = artifacts[t].error.column_entries()
        shifted = [0] * len(e)
        o = 0
        for li in block_sizes:
            shifted[o + 1:o + li] = e[o:o + li - 1]
            o += li
        e = [s + sum(g * v for g, v in zip(grow, ev))
             for s, grow in zip(shifted, gbar_rows)]
        out.append(tuple(e))
    return out
