"""Per-agent discriminators and their plain, transformed, and combined losses.

Two discriminator shapes.  The direct variant scores a transition with one
network on (s, a_i, s').  The decomposed variant forms

    f(s, a_i, s') = g(s, a_i) + gamma * h(s') - h(s)

and discriminates against the generator's action log-density:
D = sigmoid(f - log_pi_i).  Both reduce to a logit u, so every loss below is
a binary cross-entropy in u computed through stable softplus.

The transformed loss applies one group element to every tuple in both
batches (states and next states through the equivariant block action, each
agent action through the same planar matrix) and evaluates the identical
cross-entropy there; generator log-densities ride along unchanged.  The
combined objective is the plain plus the transformed loss, gradients summed.

Per-agent loss terms are accumulated into an array and reduced with one
np.sum so that degenerate cases (all probabilities one half) reproduce the
closed-form value bit-for-bit at power-of-two batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import Mlp
from .group import act_flat, matrix

VARIANTS = ("gail", "airl")


class DiscriminatorError(ValueError):
    """Wrong variant usage or malformed batch input."""


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class TransitionBatch:
    """Dense transition minibatch; log_pis optional (needed by airl sides)."""

    states: np.ndarray  # (B, d)
    actions: np.ndarray  # (B, N, 2)
    next_states: np.ndarray  # (B, d)
    n_equ_pairs: int
    log_pis: np.ndarray | None = None  # (B, N)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.next_states = np.asarray(self.next_states, dtype=np.float64)
        if self.states.ndim != 2 or self.next_states.shape != self.states.shape:
            raise DiscriminatorError("states/next_states must match as (B, d)")
        if self.actions.ndim != 3 or self.actions.shape[0] != self.states.shape[0]:
            raise DiscriminatorError("actions must be (B, N, 2)")
        if self.log_pis is not None:
            self.log_pis = np.asarray(self.log_pis, dtype=np.float64)
            if self.log_pis.shape != self.actions.shape[:2]:
                raise DiscriminatorError("log_pis must be (B, N)")

    def __len__(self):
        return self.states.shape[0]


def transform_batch(batch: TransitionBatch, g) -> TransitionBatch:
    """Apply one group element to every tuple; log-densities carry over."""
    return TransitionBatch(
        act_flat(g, batch.states, batch.n_equ_pairs),
        batch.actions @ matrix(g).T,
        act_flat(g, batch.next_states, batch.n_equ_pairs),
        batch.n_equ_pairs,
        None if batch.log_pis is None else batch.log_pis.copy(),
    )


class Discriminator:
    """One agent's transition classifier, direct or decomposed."""

    def __init__(self, variant, state_dim, gamma, rng, hidden=(64, 64),
                 action_dim=2, feature_map=None, feature_dims=None):
        if variant not in VARIANTS:
            raise DiscriminatorError(f"variant must be one of {VARIANTS}")
        self.variant = variant
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.gamma = gamma
        # feature_map optionally preprocesses raw (s, a, s') into net inputs
        # (used to build hand-made invariant discriminators); feature_dims
        # gives the mapped widths as (direct,) or (g_in, h_in)
        self.feature_map = feature_map
        if variant == "gail":
            d_in = feature_dims[0] if feature_dims else 2 * state_dim + action_dim
            self.net = Mlp([d_in, *hidden, 1], rng)
            self._nets = [self.net]
        else:
            g_in = feature_dims[0] if feature_dims else state_dim + action_dim
            h_in = feature_dims[1] if feature_dims else state_dim
            self.g_net = Mlp([g_in, *hidden, 1], rng)
            self.h_net = Mlp([h_in, *hidden, 1], rng)
            self._nets = [self.g_net, self.h_net]

    @property
    def params(self):
        out = []
        for net in self._nets:
            out.extend(net.params)
        return out

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.params]

    def state_dict(self, prefix=""):
        out = {}
        names = ["net"] if self.variant == "gail" else ["g", "h"]
        for name, net in zip(names, self._nets):
            out.update(net.state_dict(f"{prefix}{name}."))
        return out

    def load_state_dict(self, arrays, prefix=""):
        names = ["net"] if self.variant == "gail" else ["g", "h"]
        for name, net in zip(names, self._nets):
            net.load_state_dict(arrays, f"{prefix}{name}.")

    # -- logit machinery ----------------------------------------------------

    def _direct_input(self, s, a, s2):
        if self.feature_map is not None:
            return self.feature_map(s, a, s2)
        return np.concatenate([s, a, s2], axis=1)

    def _ga_input(self, s, a):
        if self.feature_map is not None:
            return self.feature_map(s, a, None)
        return np.concatenate([s, a], axis=1)

    def _h_input(self, s):
        if self.feature_map is not None:
            return self.feature_map(s, None, None)
        return s

    def u_values(self, s, a, s2, log_pi=None):
        """The classifier logit u with D = sigmoid(u)."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        s2 = np.atleast_2d(np.asarray(s2, dtype=np.float64))
        if self.variant == "gail":
            return self.net.forward(self._direct_input(s, a, s2))[:, 0]
        if log_pi is None:
            raise DiscriminatorError(
                "decomposed discriminator needs the generator log-density"
            )
        f = (
            self.g_net.forward(self._ga_input(s, a))[:, 0]
            + self.gamma * self.h_net.forward(self._h_input(s2))[:, 0]
            - self.h_net.forward(self._h_input(s))[:, 0]
        )
        return f - np.asarray(log_pi, dtype=np.float64)

    def u_backward(self, s, a, s2, du):
        """Parameter gradients of sum(du * u); aligned with self.params."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        s2 = np.atleast_2d(np.asarray(s2, dtype=np.float64))
        du = np.asarray(du, dtype=np.float64)[:, None]
        if self.variant == "gail":
            grads, _ = self.net.backward(self._direct_input(s, a, s2), du)
            return grads
        g_grads, _ = self.g_net.backward(self._ga_input(s, a), du)
        h2_grads, _ = self.h_net.backward(self._h_input(s2), self.gamma * du)
        h1_grads, _ = self.h_net.backward(self._h_input(s), -du)
        h_grads = [x + y for x, y in zip(h2_grads, h1_grads)]
        return g_grads + h_grads


def init_discriminators(variant, n_agents, state_dim, gamma, rng, hidden=(64, 64)):
    return [
        Discriminator(variant, state_dim, gamma, rng, hidden) for _ in range(n_agents)
    ]


def d_prob(disc: Discriminator, s, a, s2, log_pi=None):
    """Classifier probability, strictly inside (0,1) (logit clamped at 30)."""
    u = np.clip(disc.u_values(s, a, s2, log_pi), -30.0, 30.0)
    return sigmoid(u)


def reward_signal(disc: Discriminator, s, a, s2, log_pi=None, form="positive"):
    """Generator reward from one discriminator.

    Decomposed variant: the exact log-ratio f - log_pi.  Direct variant:
    'positive' gives -log(1 - D), 'logit' gives log D - log(1 - D), both
    clamped to [-20, 20].
    """
    u = disc.u_values(s, a, s2, log_pi)
    if disc.variant == "airl":
        return u
    if form == "positive":
        return np.clip(softplus(u), -20.0, 20.0)
    if form == "logit":
        return np.clip(u, -20.0, 20.0)
    raise DiscriminatorError(f"unknown reward form {form!r}")


def _expert_log_pis(discs, expert_batch):
    if any(d.variant == "airl" for d in discs) and expert_batch.log_pis is None:
        raise DiscriminatorError(
            "decomposed discriminators need log_pis on the expert batch"
        )


def loss_plain(discs, expert_batch: TransitionBatch, gen_batch: TransitionBatch,
               gen_log_probs=None):
    """Binary cross-entropy pushing D up on expert tuples, down on generated.

    Returns (scalar loss, per-discriminator gradient lists).  gen_log_probs
    is (B, N); expert-side log-densities live on expert_batch.log_pis.
    """
    if len(expert_batch) == 0 or len(gen_batch) == 0:
        raise DiscriminatorError("batches must be nonempty")
    _expert_log_pis(discs, expert_batch)
    if any(d.variant == "airl" for d in discs) and gen_log_probs is None:
        raise DiscriminatorError("decomposed discriminators need gen_log_probs")
    be, bg = len(expert_batch), len(gen_batch)
    terms = np.empty(len(discs))
    grads = []
    for i, disc in enumerate(discs):
        lp_e = None if expert_batch.log_pis is None else expert_batch.log_pis[:, i]
        lp_g = None if gen_log_probs is None else np.asarray(gen_log_probs)[:, i]
        u_e = disc.u_values(expert_batch.states, expert_batch.actions[:, i],
                            expert_batch.next_states, lp_e)
        u_g = disc.u_values(gen_batch.states, gen_batch.actions[:, i],
                            gen_batch.next_states, lp_g)
        terms[i] = np.mean(softplus(-u_e)) + np.mean(softplus(u_g))
        du_e = -sigmoid(-u_e) / be
        du_g = sigmoid(u_g) / bg
        g_e = disc.u_backward(expert_batch.states, expert_batch.actions[:, i],
                              expert_batch.next_states, du_e)
        g_g = disc.u_backward(gen_batch.states, gen_batch.actions[:, i],
                              gen_batch.next_states, du_g)
        grads.append([x + y for x, y in zip(g_e, g_g)])
    return float(np.sum(terms)), grads


def loss_symmetric(discs, expert_batch, gen_batch, gen_log_probs=None, *,
                   group_elements, rng=None, g=None, average=False):
    """The same cross-entropy on group-transformed tuples.

    One element is drawn uniformly per call (cheap, unbiased across updates)
    unless a fixed g is supplied or average=True evaluates the mean over the
    whole element list.
    """
    els = list(group_elements)
    if not els:
        raise DiscriminatorError("need at least one group element")
    if average:
        total = 0.0
        acc = None
        for el in els:
            val, grads = loss_plain(
                discs, transform_batch(expert_batch, el),
                transform_batch(gen_batch, el), gen_log_probs,
            )
            total += val
            if acc is None:
                acc = grads
            else:
                for gi, gj in zip(acc, grads):
                    for x, y in zip(gi, gj):
                        x += y
        scale = 1.0 / len(els)
        for gi in acc:
            for x in gi:
                x *= scale
        return total * scale, acc
    if g is None:
        if rng is None:
            raise DiscriminatorError("supply rng to sample an element, or pass g")
        g = els[rng.integers(len(els))]
    return loss_plain(
        discs, transform_batch(expert_batch, g), transform_batch(gen_batch, g),
        gen_log_probs,
    )


def loss_sgf(discs, expert_batch, gen_batch, gen_log_probs=None, *,
             group_elements, rng=None, g=None, average=False):
    """Plain plus transformed loss; gradients add elementwise."""
    base, base_grads = loss_plain(discs, expert_batch, gen_batch, gen_log_probs)
    sym, sym_grads = loss_symmetric(
        discs, expert_batch, gen_batch, gen_log_probs,
        group_elements=group_elements, rng=rng, g=g, average=average,
    )
    combined = [
        [x + y for x, y in zip(gi, gj)] for gi, gj in zip(base_grads, sym_grads)
    ]
    return base + sym, combined
