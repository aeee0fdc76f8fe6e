"""Adversary views and the deterministic transformations between them.

View 1 is what an eavesdropper on the standard scheme plus the residue
disclosure sees; view 2 is what an eavesdropper on the modified scheme
sees.  Both transformations below use only public transforms, ciphertexts
and disclosed residues (never the secret key), and reproduce the other
view bit for bit, which is the operational content of the equivalence
claim: neither party learns more than the other.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from operator import mul
from typing import List, Sequence, Tuple

from .encobs import ObserverPublic
from .lwe import Ciphertext, CiphertextKind
from .modring import ModMatrix
from .quantobs import QuantParams, _shift_column

__all__ = [
    "ViewError",
    "InconsistentChannels",
    "HorizonTooShort",
    "View1",
    "View2",
    "f2_view2_to_view1",
    "f1_view1_to_view2",
]


class ViewError(Exception):
    pass


class InconsistentChannels(ViewError):
    pass


class HorizonTooShort(ViewError):
    pass


@dataclass(frozen=True)
class View1:
    """Standard ciphertexts plus the disclosed residues.

    Residues run one step past the inputs: with T input ciphertexts there
    are T + 1 residue vectors (steps 0..T).
    """

    init_ct: Ciphertext
    input_cts: Tuple[Ciphertext, ...]
    residues: Tuple[ModMatrix, ...]

    def to_bytes(self) -> bytes:
        parts = [b"VIEW1", struct.pack("<II", len(self.input_cts),
                                       len(self.residues))]
        for blob in [self.init_ct.to_bytes()] + [c.to_bytes()
                                                 for c in self.input_cts]:
            parts.append(struct.pack("<I", len(blob)))
            parts.append(blob)
        from .lwe import _pack_ints
        for r in self.residues:
            parts.append(_pack_ints(r.column_entries()))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes, q) -> "View1":
        if buf[:5] != b"VIEW1":
            raise ViewError("not a view-1 transcript")
        n_inputs, n_res = struct.unpack_from("<II", buf, 5)
        offset = 13
        cts = []
        for _ in range(n_inputs + 1):
            (size,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            cts.append(Ciphertext.from_bytes(buf[offset:offset + size]))
            offset += size
        from .lwe import _unpack_ints
        residues = []
        for _ in range(n_res):
            vals, offset = _unpack_ints(buf, offset)
            residues.append(ModMatrix.column(vals, q))
        return cls(init_ct=cts[0], input_cts=tuple(cts[1:]),
                   residues=tuple(residues))


@dataclass(frozen=True)
class View2:
    """Per-channel modified ciphertexts (initial plus one list per step)."""

    init_cts: Tuple[Ciphertext, ...]                 # one per channel
    input_cts: Tuple[Tuple[Ciphertext, ...], ...]    # [step][channel]

    def to_bytes(self) -> bytes:
        n_ch = len(self.init_cts)
        parts = [b"VIEW2", struct.pack("<II", n_ch, len(self.input_cts))]
        blobs = [c.to_bytes() for c in self.init_cts]
        for step in self.input_cts:
            blobs.extend(c.to_bytes() for c in step)
        for blob in blobs:
            parts.append(struct.pack("<I", len(blob)))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "View2":
        if buf[:5] != b"VIEW2":
            raise ViewError("not a view-2 transcript")
        n_ch, n_steps = struct.unpack_from("<II", buf, 5)
        offset = 13
        blobs = []
        for _ in range(n_ch * (n_steps + 1)):
            (size,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            blobs.append(Ciphertext.from_bytes(buf[offset:offset + size]))
            offset += size
        init = tuple(blobs[:n_ch])
        steps = tuple(tuple(blobs[n_ch * (1 + t):n_ch * (2 + t)])
                      for t in range(n_steps))
        return cls(init_cts=init, input_cts=steps)


def _merge_to_standard(ct: Ciphertext) -> Ciphertext:
    """Fold the cancellation column back into the message column."""
    q = ct.body.modulus
    first = ct.first_column()
    cancel = ct.cancel_column()
    merged = tuple(q.cmod(a + b) for a, b in zip(first, cancel))
    rows = tuple((m,) + r[1:1 + ct.N] for m, r in zip(merged, ct.body.rows))
    body = ModMatrix(rows, q, ncols=ct.N + 1, _reduced=True)
    return Ciphertext(body=body, kind=CiphertextKind.STANDARD, N=ct.N)


def f2_view2_to_view1(v2: View2, public: ObserverPublic,
                      params: QuantParams,
                      verify_consistency: bool = True) -> View1:
    """Reconstruct the standard-plus-residue view from modified ciphertexts.

    Standard ciphertexts follow from the construction identity (message and
    cancellation columns re-sum).  Residues come from running the observer
    recursion on each channel's first column and stripping the lift factor.
    """
    n_ch = public.n_channels
    if len(v2.init_cts) != n_ch or any(len(s) != n_ch for s in v2.input_cts):
        raise InconsistentChannels("channel count does not match the public maps")

    def fold_all(cts: Sequence[Ciphertext]) -> Ciphertext:
        std = _merge_to_standard(cts[0])
        if verify_consistency:
            for other in cts[1:]:
                if _merge_to_standard(other).body != std.body:
                    raise InconsistentChannels(
                        "channels disagree on the underlying standard ciphertext")
        return std

    init_std = fold_all(v2.init_cts)
    input_std = tuple(fold_all(step) for step in v2.input_cts)

    q = public.q
    inv_lift = q.inv(params.lift)
    cols = [list(ct.first_column()) for ct in v2.init_cts]
    residues: List[ModMatrix] = []
    steps = len(v2.input_cts)
    for t in range(steps + 1):
        r = [q.cmod(inv_lift * sum(map(mul, public.Hbar.rows[j], cols[j])))
             for j in range(n_ch)]
        residues.append(ModMatrix.column(r, q))
        if t == steps:
            break
        for j in range(n_ch):
            drive = public.Gbar @ ModMatrix.column(
                v2.input_cts[t][j].first_column(), q)
            shifted = _shift_column(tuple(cols[j]), public.block_sizes)
            cols[j] = [q.cmod(a + b) for a, b in
                       zip(shifted, drive.column_entries())]
    return View1(init_ct=init_std, input_cts=input_std,
                 residues=tuple(residues))


def f1_view1_to_view2(v1: View1, public: ObserverPublic,
                      params: QuantParams) -> View2:
    """Reconstruct the modified ciphertexts from the standard view.

    Per channel, the cancellation applied by the encryptor splits into a
    combined part (computable from the observed message+mask columns by the
    same zero-dynamics recursion the encryptor runs) minus a message part.
    The message part is recovered from the disclosed residues: the chain
    coordinates of the message system are lifted residues, the bottom chain
    row exposes the current input term, and a small deviation state tracks
    how far the running trajectory has drifted from the zero-dynamics
    solution so the two stay aligned.
    """
    steps = len(v1.input_cts)
    q = public.q
    lift = params.lift
    nu_max = max(ct.nu for ct in public.transforms)
    if len(v1.residues) < steps + nu_max:
        needed = steps - 1 + nu_max
        raise HorizonTooShort(
            f"need residues through step {needed} to reconstruct all "
            f"{steps} input steps (have {len(v1.residues)})")

    init_first = ModMatrix.column(v1.init_ct.first_column(), q)
    input_firsts = [ModMatrix.column(ct.first_column(), q)
                    for ct in v1.input_cts]

    init_cts: List[Ciphertext] = []
    per_step_cols: List[List[Tuple[Tuple[int, ...], Tuple[int, ...]]]] = [
        [] for _ in range(steps)]

    for j, ct in enumerate(public.transforms):
        lifted = [q.cmod(lift * v1.residues[t].rows[j][0])
                  for t in range(len(v1.residues))]
        # combined cancellation from the observed first columns
        comb_tilde_ini = ct.T2 @ init_first
        c_xi = ct.T1 @ init_first
        # message cancellation: chain start is the first nu lifted residues
        msg_tilde_ini = ModMatrix.column(lifted[:ct.nu], q)
        b_tilde_ini = comb_tilde_ini - msg_tilde_ini
        cancel_col = (ct.V2 @ b_tilde_ini).column_entries()
        first = tuple(q.cmod(a - c) for a, c in
                      zip(init_first.column_entries(), cancel_col))
        rows = tuple((f,) + mid + (c,) for f, mid, c in
                     zip(first, v1.init_ct.randomness_block().rows, cancel_col))
        init_cts.append(Ciphertext(
            body=ModMatrix(rows, q, ncols=public.N + 2, _reduced=True),
            kind=CiphertextKind.MODIFIED, N=public.N))

        delta = ModMatrix.zeros(ct.l - ct.nu, 1, q)
        for t in range(steps):
            w_t = ModMatrix.column(lifted[t:t + ct.nu], q)
            comb_tilde = (ct.Sigma @ input_firsts[t]
                          + ct.Psi @ c_xi).rows[0][0]
            msg_tilde = q.cmod(lifted[t + ct.nu]
                               - (ct.Gamma @ w_t).rows[0][0]
                               - (ct.Psi @ delta).rows[0][0])
            b_tilde = q.cmod(comb_tilde - msg_tilde)
            cancel = (ct.SigmaDag.scale(b_tilde)).column_entries()
            first_col = tuple(
                q.cmod(a - c) for a, c in
                zip(input_firsts[t].column_entries(), cancel))
            per_step_cols[t].append((first_col, cancel))
            # advance both recursions
            c_xi = ct.S @ c_xi + ct.S3 @ (ct.input_projector @ input_firsts[t])
            delta = (ct.S1 @ delta + ct.S2 @ w_t
                     + ct.S3 @ ct.SigmaDag.scale(msg_tilde))

    input_cts = []
    for t in range(steps):
        rand_rows = v1.input_cts[t].randomness_block().rows
        step_cts = []
        for first_col, cancel in per_step_cols[t]:
            rows = tuple((f,) + mid + (c,) for f, mid, c in
                         zip(first_col, rand_rows, cancel))
            step_cts.append(Ciphertext(
                body=ModMatrix(rows, q, ncols=public.N + 2, _reduced=True),
                kind=CiphertextKind.MODIFIED, N=public.N))
        input_cts.append(tuple(step_cts))
    return View2(init_cts=tuple(init_cts), input_cts=tuple(input_cts))
