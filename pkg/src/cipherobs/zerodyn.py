"""Zero-dynamics machinery for single-output channels over Z_q.

For a channel (H, F, G) with relative degree nu, the state splits into an
output chain of length nu and an internal part.  Holding the output at zero
pins the chain and leaves the internal part evolving autonomously (the
zero-dynamics).  From that recursion one can compute, for any initial
condition and input sequence, exactly which portions must be subtracted so
the channel output vanishes identically; the encrypted observer uses those
cancellation terms to null the masking contribution of its residue.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .modring import (
    DimensionMismatch,
    ModMatrix,
    Modulus,
    complete_basis,
    inverse_mod,
    right_inverse_row,
)

__all__ = [
    "ZeroDynError",
    "RelativeDegreeUndefined",
    "ChannelTransform",
    "CancellationState",
    "relative_degree",
    "build_transform",
    "simulate_channel",
    "cancellation_init",
    "cancellation_step",
]


class ZeroDynError(Exception):
    pass


class RelativeDegreeUndefined(ZeroDynError):
    """Raised when every Markov parameter of the channel vanishes."""


def relative_degree(Hj: ModMatrix, Fbar: ModMatrix, Gbar: ModMatrix,
                    q: Modulus | None = None) -> int:
    """Smallest nu >= 1 with H F^(nu-1) G nonzero and all earlier ones zero.

    The search stops at the state dimension: by Cayley-Hamilton, once the
    first l Markov parameters vanish they vanish forever.
    """
    if Hj.nrows != 1:
        raise DimensionMismatch("channel output map must be a single row")
    l = Fbar.nrows
    row = Hj
    for h in range(l):
        if not (row @ Gbar).is_zero():
            return h + 1
        row = row @ Fbar
    raise RelativeDegreeUndefined(
        "all Markov parameters vanish; the channel never sees the input")


@dataclass(frozen=True)
class CancellationState:
    """Zero-dynamics state of one channel's mask cancellation."""

    j: int
    b_xi: ModMatrix  # (l - nu) x 1
    step: int


@dataclass(frozen=True)
class ChannelTransform:
    """Per-channel normal-form data over Z_q.

    T2 stacks H, HF, ..., HF^(nu-1); T1 completes it to a basis, and
    [V1, V2] is the inverse of the stacked transform.  The S/Psi/Gamma/Sigma
    blocks are the normal-form coefficients, SigmaDag a right inverse of
    Sigma, and S the zero-dynamics state matrix S1 - S3 SigmaDag Psi.
    """

    j: int
    nu: int
    T1: ModMatrix
    T2: ModMatrix
    V1: ModMatrix
    V2: ModMatrix
    S1: ModMatrix
    S2: ModMatrix
    S3: ModMatrix
    Psi: ModMatrix
    Gamma: ModMatrix
    Sigma: ModMatrix
    SigmaDag: ModMatrix
    S: ModMatrix
    input_projector: ModMatrix  # I - SigmaDag Sigma

    @property
    def l(self) -> int:
        return self.T2.ncols

    def initial_state(self, b_ini: ModMatrix) -> CancellationState:
        return CancellationState(j=self.j, b_xi=self.T1 @ b_ini, step=0)


def build_transform(Hj: ModMatrix, Fbar: ModMatrix, Gbar: ModMatrix,
                    q: Modulus | None = None, j: int = 0) -> ChannelTransform:
    """Construct the channel transform; requires a defined relative degree."""
    nu = relative_degree(Hj, Fbar, Gbar)
    l = Fbar.nrows
    rows = [Hj]
    for _ in range(nu - 1):
        rows.append(rows[-1] @ Fbar)
    T2 = rows[0]
    for r in rows[1:]:
        T2 = T2.vstack(r)
    T1 = complete_basis(T2)
    V = inverse_mod(T1.vstack(T2))
    V1 = ModMatrix(tuple(r[:l - nu] for r in V.rows), V.modulus,
                   ncols=l - nu, _reduced=True)
    V2 = ModMatrix(tuple(r[l - nu:] for r in V.rows), V.modulus,
                   ncols=nu, _reduced=True)
    T1F = T1 @ Fbar
    HFnu = rows[-1] @ Fbar
    S1 = T1F @ V1
    S2 = T1F @ V2
    S3 = T1 @ Gbar
    Psi = HFnu @ V1
    Gamma = HFnu @ V2
    Sigma = rows[-1] @ Gbar
    SigmaDag = right_inverse_row(Sigma)
    S = S1 - S3 @ SigmaDag @ Psi
    eye = ModMatrix.identity(Gbar.ncols, Gbar.modulus)
    return ChannelTransform(
        j=j, nu=nu, T1=T1, T2=T2, V1=V1, V2=V2, S1=S1, S2=S2, S3=S3,
        Psi=Psi, Gamma=Gamma, Sigma=Sigma, SigmaDag=SigmaDag, S=S,
        input_projector=eye - SigmaDag @ Sigma,
    )


def simulate_channel(Hj: ModMatrix, Fbar: ModMatrix, Gbar: ModMatrix,
                     b_ini: ModMatrix,
                     b_v: Sequence[ModMatrix]) -> List[int]:
    """Reference channel simulation; returns the output at steps 0..len(b_v).

    Used as the independent oracle for every zero-dynamics test.
    """
    state = b_ini
    outputs = [(Hj @ state).rows[0][0]]
    for v in b_v:
        state = Fbar @ state + Gbar @ v
        outputs.append((Hj @ state).rows[0][0])
    return outputs


def cancellation_init(ct: ChannelTransform,
                      b_ini: ModMatrix) -> Tuple[ModMatrix, CancellationState]:
    """Initial cancellation: the chain part of b_ini plus the starting
    zero-dynamics state."""
    if not b_ini.is_column() or b_ini.nrows != ct.l:
        raise DimensionMismatch(f"b_ini must be a {ct.l}-vector column")
    return ct.T2 @ b_ini, ct.initial_state(b_ini)


def cancellation_step(ct: ChannelTransform, state: CancellationState,
                      b_v: ModMatrix) -> Tuple[int, CancellationState]:
    """One cancellation update.

    Emits the scalar input-cancellation term for the current step and
    advances the zero-dynamics state driven by the same input.
    """
    if not b_v.is_column() or b_v.nrows != ct.Sigma.ncols:
        raise DimensionMismatch("input vector has wrong length")
    tilde = (ct.Sigma @ b_v + ct.Psi @ state.b_xi).rows[0][0]
    nxt = ct.S @ state.b_xi + ct.S3 @ (ct.input_projector @ b_v)
    return tilde, CancellationState(j=state.j, b_xi=nxt, step=state.step + 1)
