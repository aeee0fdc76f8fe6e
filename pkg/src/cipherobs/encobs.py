"""Encrypted observer: the modified encryption scheme, the per-channel
ciphertext recursion, residue disclosure, and encrypted state recovery.

One residue channel is run per row of the residue map.  All channels share
each step's randomness block and masking term; they differ only in the
cancellation column derived from their own zero-dynamics, which forces the
mask contribution of every residue's first column to zero.  The observer
state is therefore stored as one shared middle block plus per-channel first
and last columns; materialized ciphertexts keep the full logical width.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from operator import mul
from typing import List, Optional, Sequence, Tuple

from .lwe import (
    Ciphertext,
    CiphertextKind,
    NoiseParams,
    SecretKey,
    SecureRng,
    encrypt_with_artifacts,
)
from .modring import ModMatrix, Modulus
from .quantobs import ModularMaps, QuantParams, _shift_column
from .zerodyn import CancellationState, ChannelTransform, build_transform

__all__ = [
    "EncObsError",
    "SessionNotFresh",
    "ObserverPublic",
    "EncryptedBatch",
    "StepArtifacts",
    "EncryptorSession",
    "EncObserverState",
    "step_encrypted",
    "encrypted_residue",
    "disclose_residue",
    "decrypt_channel_state",
    "decrypt_all_channels",
    "recover_encrypted_state",
    "build_fbar",
]


class EncObsError(Exception):
    pass


class SessionNotFresh(EncObsError):
    pass


def build_fbar(block_sizes: Sequence[int], q: Modulus) -> ModMatrix:
    """Block-diagonal lower-shift state matrix as an explicit Z_q matrix."""
    l = sum(block_sizes)
    rows = [[0] * l for _ in range(l)]
    o = 0
    for li in block_sizes:
        for h in range(1, li):
            rows[o + h][o + h - 1] = 1
        o += li
    return ModMatrix(rows, q, ncols=l, _reduced=True)


def _shift_matrix_rows(rows: Tuple[Tuple[int, ...], ...],
                       block_sizes: Sequence[int],
                       ncols: int) -> Tuple[Tuple[int, ...], ...]:
    """Row shift inside each block: the state matrix acting on a matrix."""
    zero = (0,) * ncols
    out: List[Tuple[int, ...]] = []
    o = 0
    for li in block_sizes:
        out.append(zero)
        out.extend(rows[o:o + li - 1])
        o += li
    return tuple(out)


@dataclass(frozen=True)
class ObserverPublic:
    """Everything public the encrypted observer needs: the observer maps
    over Z_q plus one zero-dynamics transform per residue channel."""

    q: Modulus
    N: int
    lift: int
    block_sizes: Tuple[int, ...]
    Fbar: ModMatrix
    Gbar: ModMatrix
    Hbar: ModMatrix
    transforms: Tuple[ChannelTransform, ...]

    @classmethod
    def build(cls, maps: ModularMaps, params: QuantParams,
              N: Optional[int] = None) -> "ObserverPublic":
        q = maps.Gbar.modulus
        Fbar = build_fbar(maps.block_sizes, q)
        transforms = tuple(
            build_transform(maps.Hbar.row(j), Fbar, maps.Gbar, j=j)
            for j in range(maps.Hbar.nrows)
        )
        return cls(q=q, N=params.N if N is None else N, lift=params.lift,
                   block_sizes=maps.block_sizes, Fbar=Fbar, Gbar=maps.Gbar,
                   Hbar=maps.Hbar, transforms=transforms)

    @property
    def n_channels(self) -> int:
        return len(self.transforms)


@dataclass(frozen=True)
class EncryptedBatch:
    """Per-step modified ciphertexts for all channels.

    The randomness block is shared; channels differ only in the first
    (message + mask - cancellation) and last (cancellation) columns.
    `ciphertext(j)` materializes the full h x (N+2) matrix for channel j.
    """

    shared_block: ModMatrix                 # h x N
    firsts: Tuple[Tuple[int, ...], ...]     # per channel, length-h column
    lasts: Tuple[Tuple[int, ...], ...]

    @property
    def h(self) -> int:
        return self.shared_block.nrows

    @property
    def n_channels(self) -> int:
        return len(self.firsts)

    def ciphertext(self, j: int) -> Ciphertext:
        q = self.shared_block.modulus
        rows = tuple(
            (first,) + mid + (last,)
            for first, mid, last in zip(self.firsts[j], self.shared_block.rows,
                                        self.lasts[j])
        )
        body = ModMatrix(rows, q, ncols=self.shared_block.ncols + 2,
                         _reduced=True)
        return Ciphertext(body=body, kind=CiphertextKind.MODIFIED,
                          N=self.shared_block.ncols)


@dataclass
class StepArtifacts:
    """Trusted-encryptor record of one encryption: mask, error, randomness,
    the standard ciphertext, and the per-channel cancellation terms.
    Only kept when a session is created with record_artifacts=True."""

    mask: ModMatrix
    error: ModMatrix
    randomness: ModMatrix
    standard_ct: Ciphertext
    cancel_terms: Tuple


class EncryptorSession:
    """Stateful trusted encryptor for one observer run.

    Holds the per-channel zero-dynamics cancellation states; losing a step
    invalidates the session, so the state can be checkpointed and restored.
    """

    def __init__(self, sk: SecretKey, params: QuantParams,
                 public: ObserverPublic, rng=None,
                 record_artifacts: bool = False):
        if sk.N != public.N:
            raise EncObsError("secret key length differs from configured N")
        self.sk = sk
        self.params = params
        self.public = public
        self.noise = NoiseParams(params.Delta)
        self.rng = rng if rng is not None else SecureRng()
        self.record_artifacts = record_artifacts
        self.step = -1  # -1 = fresh, >= 0 after enc_initial
        self.cancel_states: List[CancellationState] = []
        self.artifacts: List[StepArtifacts] = []

    # -- checkpointing -----------------------------------------------------

    def checkpoint(self) -> dict:
        return {
            "step": self.step,
            "cancel_states": tuple(self.cancel_states),
        }

    def restore(self, snap: dict):
        self.step = snap["step"]
        self.cancel_states = list(snap["cancel_states"])

    # -- encryption --------------------------------------------------------

    def _lift(self, v: ModMatrix) -> ModMatrix:
        return v.scale(self.params.lift)

    def enc_initial(self, zbar_ini: ModMatrix) -> EncryptedBatch:
        """Encrypt the lifted initial state once for every channel."""
        if self.step != -1:
            raise SessionNotFresh("enc_initial may only be called once")
        message = self._lift(zbar_ini)
        std_ct, mask, err, rand = encrypt_with_artifacts(
            message, self.sk, self.noise, self.rng)
        std_first = std_ct.first_column()
        firsts = []
        lasts = []
        cancel_terms = []
        self.cancel_states = []
        for ct in self.public.transforms:
            tilde_ini, state = ct.T2 @ mask, ct.initial_state(mask)
            cancel_col = ct.V2 @ tilde_ini
            cancel = cancel_col.column_entries()
            q = self.public.q
            firsts.append(tuple(q.cmod(a - c) for a, c in zip(std_first, cancel)))
            lasts.append(cancel)
            cancel_terms.append(tilde_ini)
            self.cancel_states.append(state)
        self.step = 0
        if self.record_artifacts:
            self.artifacts.append(StepArtifacts(
                mask=mask, error=err, randomness=rand, standard_ct=std_ct,
                cancel_terms=tuple(cancel_terms)))
        return EncryptedBatch(shared_block=rand, firsts=tuple(firsts),
                              lasts=tuple(lasts))

    def enc_input(self, vbar: ModMatrix) -> EncryptedBatch:
        """Encrypt the lifted input for every channel and advance the
        cancellation states."""
        if self.step < 0:
            raise EncObsError("call enc_initial before enc_input")
        message = self._lift(vbar)
        std_ct, mask, err, rand = encrypt_with_artifacts(
            message, self.sk, self.noise, self.rng)
        std_first = std_ct.first_column()
        q = self.public.q
        firsts = []
        lasts = []
        tilde_vals = []
        next_states = []
        for ct, state in zip(self.public.transforms, self.cancel_states):
            tilde, nxt = _cancel_step(ct, state, mask)
            cancel = (ct.SigmaDag.scale(tilde)).column_entries()
            firsts.append(tuple(q.cmod(a - c) for a, c in zip(std_first, cancel)))
            lasts.append(cancel)
            tilde_vals.append(tilde)
            next_states.append(nxt)
        self.cancel_states = next_states
        self.step += 1
        if self.record_artifacts:
            self.artifacts.append(StepArtifacts(
                mask=mask, error=err, randomness=rand, standard_ct=std_ct,
                cancel_terms=tuple(tilde_vals)))
        return EncryptedBatch(shared_block=rand, firsts=tuple(firsts),
                              lasts=tuple(lasts))


def _cancel_step(ct: ChannelTransform, state: CancellationState,
                 b_v: ModMatrix) -> Tuple[int, CancellationState]:
    tilde = (ct.Sigma @ b_v + ct.Psi @ state.b_xi).rows[0][0]
    nxt = ct.S @ state.b_xi + ct.S3 @ (ct.input_projector @ b_v)
    return tilde, CancellationState(j=state.j, b_xi=nxt, step=state.step + 1)


@dataclass(frozen=True)
class EncObserverState:
    """Encrypted observer state for all channels at one step.

    The logical per-channel state is l x (N+2); the shared randomness-driven
    middle block is stored once.  `channel_matrix(j)` materializes the full
    shape.
    """

    mid: ModMatrix                          # l x N, common to all channels
    firsts: Tuple[Tuple[int, ...], ...]     # per channel, length-l
    lasts: Tuple[Tuple[int, ...], ...]
    step: int

    @classmethod
    def from_initial(cls, batch: EncryptedBatch) -> "EncObserverState":
        return cls(mid=batch.shared_block, firsts=batch.firsts,
                   lasts=batch.lasts, step=0)

    @property
    def n_channels(self) -> int:
        return len(self.firsts)

    def channel_matrix(self, j: int) -> ModMatrix:
        rows = tuple(
            (f,) + mid + (la,)
            for f, mid, la in zip(self.firsts[j], self.mid.rows, self.lasts[j])
        )
        return ModMatrix(rows, self.mid.modulus, ncols=self.mid.ncols + 2,
                         _reduced=True)


def _advance_column(col: Tuple[int, ...], drive_col: Tuple[int, ...],
                    Gbar: ModMatrix, block_sizes) -> Tuple[int, ...]:
    shifted = _shift_column(col, block_sizes)
    drive = Gbar @ ModMatrix.column(drive_col, Gbar.modulus)
    q = Gbar.modulus
    return tuple(q.cmod(a + b)
                 for a, b in zip(shifted, drive.column_entries()))


def step_encrypted(state: EncObserverState, batch: EncryptedBatch,
                   public: ObserverPublic, pool=None) -> EncObserverState:
    """One encrypted observer update for every channel.

    Channels are independent given the shared middle block; with `pool`
    (any concurrent.futures executor) the per-channel columns are updated
    in parallel.
    """
    if batch.n_channels != state.n_channels:
        raise EncObsError("channel counts differ between state and batch")
    shifted_mid = _shift_matrix_rows(state.mid.rows, public.block_sizes,
                                     state.mid.ncols)
    drive_mid = public.Gbar @ batch.shared_block
    mid = ModMatrix(shifted_mid, public.q, ncols=state.mid.ncols,
                    _reduced=True) + drive_mid

    def one(j: int):
        return (
            _advance_column(state.firsts[j], batch.firsts[j], public.Gbar,
                            public.block_sizes),
            _advance_column(state.lasts[j], batch.lasts[j], public.Gbar,
                            public.block_sizes),
        )

    if pool is None:
        results = [one(j) for j in range(state.n_channels)]
    else:
        results = list(pool.map(one, range(state.n_channels)))
    firsts = tuple(r[0] for r in results)
    lasts = tuple(r[1] for r in results)
    return EncObserverState(mid=mid, firsts=firsts, lasts=lasts,
                            step=state.step + 1)


def encrypted_residue(state: EncObserverState,
                      public: ObserverPublic) -> Tuple[ModMatrix, ModMatrix]:
    """Stacked per-channel residue rows and their first column.

    Row j applies channel j's residue row to that channel's state; the
    middle block is shared, so its contribution is one matrix product.
    """
    q = public.q
    mid_part = public.Hbar @ state.mid  # n_r x N
    rows = []
    r1 = []
    for j in range(state.n_channels):
        hrow = public.Hbar.rows[j]
        first = q.cmod(sum(map(mul, hrow, state.firsts[j])))
        last = q.cmod(sum(map(mul, hrow, state.lasts[j])))
        rows.append((first,) + mid_part.rows[j] + (last,))
        r1.append(first)
    R = ModMatrix(tuple(rows), q, ncols=public.N + 2, _reduced=True)
    return R, ModMatrix.column(r1, q)


def residue_first_column(state: EncObserverState,
                         public: ObserverPublic) -> ModMatrix:
    """First column of the encrypted residue only (cheap per-step path)."""
    q = public.q
    r1 = [q.cmod(sum(map(mul, public.Hbar.rows[j], state.firsts[j])))
          for j in range(state.n_channels)]
    return ModMatrix.column(r1, q)


def disclose_residue(r1: ModMatrix, params: QuantParams) -> ModMatrix:
    """Recover the plaintext residue by multiplying with lift^-1 mod q."""
    q = params.q
    if gcd(params.lift, q.q) != 1:
        raise EncObsError("lift shares a factor with the modulus")
    inv = q.inv(params.lift)
    return r1.scale(inv)


def decrypt_channel_state(state: EncObserverState, j: int,
                          sk: SecretKey) -> ModMatrix:
    """Dec' of channel j's state: first - mid @ sk + last, reduced."""
    mid_sk = state.mid @ sk.as_column()
    q = state.mid.modulus
    entries = [q.cmod(f - ms + la) for f, ms, la in
               zip(state.firsts[j], mid_sk.column_entries(), state.lasts[j])]
    return ModMatrix.column(entries, q)


def decrypt_all_channels(state: EncObserverState,
                         sk: SecretKey) -> List[ModMatrix]:
    """Dec' of every channel, sharing the mid-block key product."""
    mid_sk = (state.mid @ sk.as_column()).column_entries()
    q = state.mid.modulus
    out = []
    for j in range(state.n_channels):
        entries = [q.cmod(f - ms + la) for f, ms, la in
                   zip(state.firsts[j], mid_sk, state.lasts[j])]
        out.append(ModMatrix.column(entries, q))
    return out


def recover_encrypted_state(state: EncObserverState, j: int, sk: SecretKey,
                            params: QuantParams,
                            phi_pinv_bar: ModMatrix) -> ModMatrix:
    """Decrypt channel j and strip the lift factor by exact rounding.

    When the detection criterion held at this step (and the parameter
    bounds are valid) the result equals the plaintext observer's scaled
    estimate bit for bit; otherwise it is still returned and the caller
    decides how much to trust it.
    """
    dec = decrypt_channel_state(state, j, sk)
    scaled = phi_pinv_bar @ dec
    lift = params.lift
    q = params.q
    entries = [q.cmod((2 * v + lift) // (2 * lift))
               for v in scaled.column_entries()]
    return ModMatrix.column(entries, q)
