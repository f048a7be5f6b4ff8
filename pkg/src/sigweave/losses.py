"""All training objectives: reconstruction, exchange, synthesis, adversarial.

Public functions mirror the operation contracts (single-sample passes, so the
exact identity loss_exc(x, x, k) == 2*loss_recon(x) holds bitwise); the
trainer uses quad_step_terms, a batched builder with the same arithmetic.

The adversarial split follows the standard convention: the discriminator
maximizes correct real/fake classification, the generator minimizes
-log Q(synthetic) (non-saturating). Log terms use softplus forms so saturated
scores cannot produce infinities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .data import Sample
from .errors import PairingError, ShapeError
from .mci import MciQuad
from .model import (
    ModelState,
    decode_tensor,
    disc_logit_tensor,
    encode_tensor,
    exchange_tensor,
)
from .nn import tensor as T
from .nn.tensor import Tensor


@dataclass(frozen=True)
class LossWeights:
    """Balance weights: alpha/beta scale the exchange and generation blocks,
    gamma/lam scale the cycle and adversarial terms inside generation."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.2
    lam: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"weight {f.name} must be finite and >= 0, got {v}")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be strictly positive")


@dataclass
class LossReport:
    """One logged step; j_all and j_gen always satisfy the combination identity."""

    step: int
    j_recon: float
    j_exc: float
    j_exc_gen: float
    j_cyc: float
    j_adv: float
    j_gen: float
    j_all: float
    j_disc: float

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_components(cls, step, weights: LossWeights, j_recon, j_exc, j_exc_gen,
                        j_cyc, j_adv, j_disc) -> "LossReport":
        j_gen = combine_gen(j_exc_gen, j_cyc, j_adv, weights)
        j_all = total_loss(j_recon, j_exc, j_exc_gen, j_cyc, j_adv, weights)
        return cls(step=step, j_recon=j_recon, j_exc=j_exc, j_exc_gen=j_exc_gen,
                   j_cyc=j_cyc, j_adv=j_adv, j_gen=j_gen, j_all=j_all, j_disc=j_disc)


def combine_gen(j_exc_gen: float, j_cyc: float, j_adv: float, weights: LossWeights) -> float:
    for name, v in (("j_exc_gen", j_exc_gen), ("j_cyc", j_cyc), ("j_adv", j_adv)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite loss component {name} = {v}")
    return j_exc_gen + weights.gamma * j_cyc + weights.lam * j_adv


def total_loss(j_recon: float, j_exc: float, j_exc_gen: float, j_cyc: float,
               j_adv: float, weights: LossWeights) -> float:
    """Scalar combination of all components under the given weights."""
    for name, v in (("j_recon", j_recon), ("j_exc", j_exc)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite loss component {name} = {v}")
    return j_recon + weights.alpha * j_exc + weights.beta * combine_gen(
        j_exc_gen, j_cyc, j_adv, weights
    )


# -- helpers -------------------------------------------------------------------


def _signal_of(x) -> np.ndarray:
    return x.signal if isinstance(x, Sample) else np.asarray(x)


def _scenario_of(x):
    return x.scenario if isinstance(x, Sample) else None


def _input_tensor(state: ModelState, x) -> Tensor:
    sig = _signal_of(x)
    if sig.shape != (state.config.H, state.config.W):
        raise ShapeError(
            f"signal shape {sig.shape} != model dims ({state.config.H}, {state.config.W})"
        )
    return Tensor(sig.astype(state.config.np_dtype)[None, None])


def _adv_term(logit: Tensor) -> Tensor:
    """Non-saturating generator objective: mean(-log sigmoid(logit))."""
    return T.mean(T.softplus(-logit))


# -- public loss operations ------------------------------------------------------


def loss_recon(state: ModelState, x) -> Tensor:
    """Pixel-mean L1 between a sample and its reconstruction."""
    xt = _input_tensor(state, x)
    return T.l1(xt, decode_tensor(state, encode_tensor(state, xt)))


def loss_exc(state: ModelState, x_i, x_j, k: int) -> Tensor:
    """Exchange segment k between two codes sharing attribute k, decode both,
    sum the two pixel-mean L1 gaps against the originals."""
    y_i, y_j = _scenario_of(x_i), _scenario_of(x_j)
    if y_i is not None and y_j is not None:
        if not 0 <= k < len(y_i):
            raise PairingError(f"attribute index {k} out of range for scenario {y_i}")
        if y_i[k] != y_j[k]:
            raise PairingError(
                f"samples do not share attribute {k}: {y_i} vs {y_j}"
            )
    xt_i = _input_tensor(state, x_i)
    xt_j = _input_tensor(state, x_j)
    z_i = encode_tensor(state, xt_i)
    z_j = encode_tensor(state, xt_j)
    zi2, zj2 = exchange_tensor(z_i, z_j, state.config.partition, k)
    return T.l1(xt_i, decode_tensor(state, zi2)) + T.l1(xt_j, decode_tensor(state, zj2))


def _quad_roles(quad_members: list[Sample]) -> tuple[int, int]:
    """Varying attribute pair of a corner-ordered quad; PairingError if broken."""
    ys = [s.scenario for s in quad_members]
    if len(ys) != 4 or len({len(y) for y in ys}) != 1:
        raise PairingError("a quad needs four scenarios of equal length")
    P = len(ys[0])
    varying = [p for p in range(P) if len({y[p] for y in ys}) > 1]
    if len(varying) != 2:
        raise PairingError(f"quad must vary over exactly two attributes, got {varying}")
    p, q = varying
    ok = (
        ys[0][p] == ys[1][p] and ys[2][p] == ys[3][p]
        and ys[0][q] == ys[2][q] and ys[1][q] == ys[3][q]
        and len({ys[0][p], ys[2][p]}) == 2 and len({ys[0][q], ys[1][q]}) == 2
    )
    if not ok:
        raise PairingError(f"scenarios {ys} are not in corner order (a,x),(a,y),(b,x),(b,y)")
    return p, q


def loss_gen(state: ModelState, quad_members: list[Sample], p: int) -> tuple[Tensor, Tensor, Tensor]:
    """Synthesis objectives for one exchanged attribute over both diagonal pairs.

    Per diagonal pair (x_i, x_t): the exchanged code slot built on x_i's code
    is decoded into a synthetic sample whose scenario names the reference quad
    member x_j; the cycle re-encodes the synthetic, takes segment p back from
    z_i and must reproduce x_i. Returns (j_exc_gen, j_cyc, j_adv), each a mean
    over the two pairs; j_adv scores the synthetic samples through the frozen
    discriminator.
    """
    pv, qv = _quad_roles(quad_members)
    if p not in (pv, qv):
        raise PairingError(f"attribute {p} is not a varying attribute of the quad ({pv}, {qv})")
    ys = [s.scenario for s in quad_members]
    part = state.config.partition

    exc_terms, cyc_terms, adv_terms = [], [], []
    for i, t in ((0, 3), (1, 2)):
        xt_i = _input_tensor(state, quad_members[i])
        xt_t = _input_tensor(state, quad_members[t])
        z_i = encode_tensor(state, xt_i)
        z_t = encode_tensor(state, xt_t)
        slot_i, _ = exchange_tensor(z_i, z_t, part, p)
        y_syn = list(ys[i])
        y_syn[p] = ys[t][p]
        j = ys.index(tuple(y_syn))
        x_syn = decode_tensor(state, slot_i)
        exc_terms.append(T.l1(_input_tensor(state, quad_members[j]), x_syn))

        z_back = encode_tensor(state, x_syn)
        slot_back, _ = exchange_tensor(z_back, z_i, part, p)
        cyc_terms.append(T.l1(xt_i, decode_tensor(state, slot_back)))

        adv_terms.append(_adv_term(disc_logit_tensor(state, x_syn, frozen=True)))

    half = 0.5
    j_exc_gen = (exc_terms[0] + exc_terms[1]) * half
    j_cyc = (cyc_terms[0] + cyc_terms[1]) * half
    j_adv = (adv_terms[0] + adv_terms[1]) * half
    return j_exc_gen, j_cyc, j_adv


def loss_discriminator(state: ModelState, real, synthetic) -> Tensor:
    """Binary objective over stop-gradient synthetic samples; updates theta_q only."""
    if len(real) == 0 or len(synthetic) == 0:
        raise ValueError("discriminator loss needs non-empty real and synthetic batches")
    dt = state.config.np_dtype
    rb = Tensor(np.stack([_signal_of(x) for x in real])[:, None].astype(dt))
    fb = Tensor(np.stack([_signal_of(x) for x in synthetic])[:, None].astype(dt))
    lr = disc_logit_tensor(state, rb)
    lf = disc_logit_tensor(state, fb)
    return T.mean(T.softplus(-lr)) + T.mean(T.softplus(lf))


# -- batched per-step builder (trainer hot path) ----------------------------------


def quad_step_terms(state: ModelState, quad: MciQuad, signals: np.ndarray) -> dict[str, Tensor]:
    """Build every loss term for one quad in a single batched graph.

    signals: (4, H, W) array of the corner-ordered member signals. Returns
    tensors for j_recon, j_exc, j_exc_gen, j_cyc, j_adv (generator graph,
    discriminator frozen in the adversarial term) and j_disc (live
    discriminator on detached synthetics).
    """
    cfg = state.config
    part = cfg.partition
    p, q = quad.varying
    xb = Tensor(signals[:, None].astype(cfg.np_dtype))  # (4,1,H,W)

    z = encode_tensor(state, xb)  # (4,d)

    # feature extraction: reconstruct all four members
    j_recon = T.l1(xb, decode_tensor(state, z))

    # disentanglement: both slots of all four rectangle edges
    owners, donors, segs = [], [], []
    for i, j, k in quad.adjacent_pairs():
        owners += [i, j]
        donors += [j, i]
        segs += [k, k]
    exchanged_groups = []
    for k in (p, q):
        rows = [n for n, s in enumerate(segs) if s == k]
        host = T.gather_rows(z, [owners[n] for n in rows])
        dona = T.gather_rows(z, [donors[n] for n in rows])
        swapped, _ = exchange_tensor(host, dona, part, k)
        exchanged_groups.append(swapped)
    order = [n for k in (p, q) for n, s in enumerate(segs) if s == k]
    exc_targets = T.gather_rows(xb, [owners[n] for n in order])
    j_exc = T.l1(exc_targets, decode_tensor(state, T.concat_rows(exchanged_groups))) * 2.0

    # synthesis: both diagonal pairs x both varying attributes -> each corner once
    ys = list(quad.members)
    own_rows, don_rows, ref_rows, seg_per = [], [], [], []
    for k in (p, q):
        for i, t in ((0, 3), (1, 2)):
            y_syn = list(ys[i])
            y_syn[k] = ys[t][k]
            own_rows.append(i)
            don_rows.append(t)
            ref_rows.append(ys.index(tuple(y_syn)))
            seg_per.append(k)
    syn_groups = []
    for k in (p, q):
        rows = [n for n, s in enumerate(seg_per) if s == k]
        host = T.gather_rows(z, [own_rows[n] for n in rows])
        dona = T.gather_rows(z, [don_rows[n] for n in rows])
        swapped, _ = exchange_tensor(host, dona, part, k)
        syn_groups.append(swapped)
    x_syn = decode_tensor(state, T.concat_rows(syn_groups))  # (4,1,H,W)
    syn_order = [n for k in (p, q) for n, s in enumerate(seg_per) if s == k]
    refs = T.gather_rows(xb, [ref_rows[n] for n in syn_order])
    j_exc_gen = T.l1(refs, x_syn)

    # cycle: re-encode synthetics, take segment back from the owner's code
    z_back = encode_tensor(state, x_syn)
    back_groups = []
    for k in (p, q):
        rows = [n for n in range(4) if seg_per[syn_order[n]] == k]
        host = T.gather_rows(z_back, rows)
        dona = T.gather_rows(z, [own_rows[syn_order[n]] for n in rows])
        swapped, _ = exchange_tensor(host, dona, part, k)
        back_groups.append(swapped)
    cyc_targets = T.gather_rows(xb, [own_rows[syn_order[n]] for n in range(4)])
    j_cyc = T.l1(cyc_targets, decode_tensor(state, T.concat_rows(back_groups)))

    # adversarial: generator sees a frozen discriminator
    j_adv = _adv_term(disc_logit_tensor(state, x_syn, frozen=True))

    # discriminator objective on detached synthetics
    lr = disc_logit_tensor(state, xb.detach())
    lf = disc_logit_tensor(state, x_syn.detach())
    j_disc = T.mean(T.softplus(-lr)) + T.mean(T.softplus(lf))

    return {
        "j_recon": j_recon, "j_exc": j_exc, "j_exc_gen": j_exc_gen,
        "j_cyc": j_cyc, "j_adv": j_adv, "j_disc": j_disc,
    }
