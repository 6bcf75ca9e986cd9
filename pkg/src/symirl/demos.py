"""Demonstration storage, orbit augmentation, and minibatch sampling.

A DemoStore keeps transition tuples (s, joint action, s') as packed float64
arrays plus per-tuple provenance: where the tuple came from (expert or
generator) and which group element has been applied to it.  Augmentation
materializes the orbit of every tuple under a supplied element list, so the
store grows by that factor each time; repeated augmentation composes the
provenance elements.

Files use the same named-array container as checkpoints, under a demo magic,
with the source environment's fingerprint in the header so stores cannot be
replayed against mismatched physics.  Byte layout in docs/format.md.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .approx import FormatError, load_arrays, save_arrays
from .envs import (
    EnvSpec,
    executed_action,
    reset,
    scripted_expert,
    state_vector,
    step,
    vector_state,
)
from .group import (
    StructuredVector,
    act_flat,
    compose,
    element_index,
    elements,
    matrix,
)

DEMO_MAGIC = b"SGFDEMO\x00"
SOURCE_EXPERT = 0
SOURCE_GENERATOR = 1


@dataclass
class ContinuousTuple:
    """One demonstration transition in structured form."""

    s: StructuredVector
    joint_a: list  # one StructuredVector per agent
    s_next: StructuredVector
    episode_id: int
    step_index: int


@dataclass
class DemoStore:
    """Packed, immutable-by-convention collection of demonstration tuples."""

    fingerprint: int
    n_equ_pairs: int
    group_n: int  # dihedral order used for provenance element indexing
    states: np.ndarray  # (M, state_dim)
    actions: np.ndarray  # (M, n_agents, 2)
    next_states: np.ndarray  # (M, state_dim)
    episode_ids: np.ndarray  # (M,)
    step_indices: np.ndarray  # (M,)
    sources: np.ndarray  # (M,) SOURCE_* codes
    g_indices: np.ndarray  # (M,) index into group.elements(group_n)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.next_states = np.asarray(self.next_states, dtype=np.float64)
        m = self.states.shape[0]
        if self.states.ndim != 2 or self.next_states.shape != self.states.shape:
            raise ValueError("states and next_states must be matching (M, d) arrays")
        if self.actions.ndim != 3 or self.actions.shape[0] != m or self.actions.shape[2] != 2:
            raise ValueError("actions must be (M, n_agents, 2)")
        if 2 * self.n_equ_pairs > self.states.shape[1]:
            raise ValueError("equivariant block exceeds the state width")
        for name in ("episode_ids", "step_indices", "sources", "g_indices"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (m,):
                raise ValueError(f"{name} must have one entry per tuple")
            setattr(self, name, arr)

    def __len__(self):
        return self.states.shape[0]

    @property
    def n_agents(self):
        return self.actions.shape[1]

    @property
    def state_dim(self):
        return self.states.shape[1]

    def g_token(self, i) -> str:
        return elements(self.group_n)[self.g_indices[i]].token

    def tuple_at(self, i) -> ContinuousTuple:
        d_equ = 2 * self.n_equ_pairs
        split = lambda v: StructuredVector(v[:d_equ], v[d_equ:])  # noqa: E731
        return ContinuousTuple(
            s=split(self.states[i]),
            joint_a=[StructuredVector(a) for a in self.actions[i]],
            s_next=split(self.next_states[i]),
            episode_id=int(self.episode_ids[i]),
            step_index=int(self.step_indices[i]),
        )


def collect_store(spec: EnvSpec, n_tuples: int, seed: int, policy_fn=None,
                  source=SOURCE_EXPERT, group_n=4, episode_len=None) -> DemoStore:
    """Roll episodes until exactly n_tuples transitions are stored.

    policy_fn(spec, state, rng) supplies joint actions; the default is the
    scripted expert (with its noise stream on the alignment task).  Episode
    e resets from the seed sequence [seed, e]; one separate stream drives
    policy noise.  Same seed, same file bytes.  episode_len caps the steps
    taken per episode (default: the task's full episode), so a fixed tuple
    budget can be spread over more initial conditions.

    Actions are stored in executed form (after the dynamics' clamp or
    heading normalization), so replaying a stored action reproduces the
    stored transition and tuples from different controllers share one
    action convention.
    """
    if n_tuples < 1:
        raise ValueError("need at least one tuple")
    if episode_len is None:
        episode_len = spec.max_steps
    if episode_len < 1:
        raise ValueError("episode_len must be positive")
    if policy_fn is None:
        policy_fn = scripted_expert
    noise_rng = np.random.default_rng([seed, 907])
    states, actions, nexts, eps, steps = [], [], [], [], []
    episode = 0
    while len(states) < n_tuples:
        st = reset(spec, np.random.default_rng([seed, episode]))
        for t in range(episode_len):
            a = np.asarray(policy_fn(spec, st, noise_rng), dtype=np.float64)
            nxt, _ = step(spec, st, a)
            states.append(state_vector(spec, st))
            actions.append(executed_action(spec, st, a))
            nexts.append(state_vector(spec, nxt))
            eps.append(episode)
            steps.append(t)
            st = nxt
            if len(states) == n_tuples:
                break
        episode += 1
    m = n_tuples
    return DemoStore(
        fingerprint=spec.fingerprint(),
        n_equ_pairs=spec.n_equ_pairs,
        group_n=group_n,
        states=np.stack(states),
        actions=np.stack(actions),
        next_states=np.stack(nexts),
        episode_ids=np.array(eps, dtype=np.int64),
        step_indices=np.array(steps, dtype=np.int64),
        sources=np.full(m, source, dtype=np.int64),
        g_indices=np.zeros(m, dtype=np.int64),
    )


def augment(store: DemoStore, group_elements) -> DemoStore:
    """Orbit of the store under the supplied elements, element-major order.

    Output size is len(group_elements) * len(store).  Invariant feature
    blocks (anything past the equivariant prefix) pass through untouched.
    Provenance composes: a tuple already carrying h, transformed by g, now
    carries g*h.
    """
    if len(store) == 0:
        raise ValueError("cannot augment an empty store")
    els = list(group_elements)
    if not els:
        raise ValueError("need at least one group element")
    n = els[0].n
    if any(g.n != n for g in els):
        raise ValueError("mixed group orders in augmentation element list")
    if n != store.group_n:
        if np.any(store.g_indices != 0):
            raise ValueError(
                f"store provenance uses order {store.group_n}, cannot re-augment"
                f" with order {n}"
            )
        store = replace(store, group_n=n)
    base_elements = elements(n)
    s_blocks, a_blocks, n_blocks, g_blocks = [], [], [], []
    for g in els:
        s_blocks.append(act_flat(g, store.states, store.n_equ_pairs))
        n_blocks.append(act_flat(g, store.next_states, store.n_equ_pairs))
        a_blocks.append(store.actions @ matrix(g).T)
        composed = np.array(
            [element_index(compose(g, base_elements[h])) for h in store.g_indices],
            dtype=np.int64,
        )
        g_blocks.append(composed)
    k = len(els)
    return DemoStore(
        fingerprint=store.fingerprint,
        n_equ_pairs=store.n_equ_pairs,
        group_n=store.group_n,
        states=np.concatenate(s_blocks),
        actions=np.concatenate(a_blocks),
        next_states=np.concatenate(n_blocks),
        episode_ids=np.tile(store.episode_ids, k),
        step_indices=np.tile(store.step_indices, k),
        sources=np.tile(store.sources, k),
        g_indices=np.concatenate(g_blocks),
    )


def sample_indices(store: DemoStore, batch_size: int, rng, with_replacement=False):
    if len(store) == 0:
        raise ValueError("cannot sample from an empty store")
    if not with_replacement and batch_size > len(store):
        raise ValueError(
            f"batch {batch_size} exceeds store size {len(store)} without replacement"
        )
    return rng.choice(len(store), size=batch_size, replace=with_replacement)


def sample_batch(store: DemoStore, batch_size: int, rng, with_replacement=False):
    """Uniform minibatch as structured tuples; deterministic given rng state."""
    idx = sample_indices(store, batch_size, rng, with_replacement)
    return [store.tuple_at(i) for i in idx]


def replay_error(store: DemoStore, spec: EnvSpec, limit=None) -> float:
    """Worst deviation between stored next states and re-simulated ones.

    Small values certify the tuples are dynamically consistent with spec;
    augmented tuples inherit this from the dynamics commuting with the group.
    """
    if spec.fingerprint() != store.fingerprint:
        raise FormatError("store fingerprint does not match the spec")
    worst = 0.0
    m = len(store) if limit is None else min(limit, len(store))
    for i in range(m):
        st = vector_state(spec, store.states[i])
        nxt, _ = step(spec, st, store.actions[i])
        err = float(np.max(np.abs(state_vector(spec, nxt) - store.next_states[i])))
        worst = max(worst, err)
    return worst


def save(path, store: DemoStore):
    meta = np.array(
        [store.fingerprint, store.n_agents, store.state_dim, store.n_equ_pairs,
         store.group_n],
        dtype=np.int64,
    )
    save_arrays(
        path,
        {
            "meta": meta,
            "states": store.states,
            "actions": store.actions,
            "next_states": store.next_states,
            "episode_ids": store.episode_ids,
            "step_indices": store.step_indices,
            "sources": store.sources,
            "g_indices": store.g_indices,
        },
        magic=DEMO_MAGIC,
    )


def load(path, expect_fingerprint=None) -> DemoStore:
    arrays = load_arrays(path, magic=DEMO_MAGIC)
    try:
        meta = arrays["meta"]
        store = DemoStore(
            fingerprint=int(meta[0]),
            n_equ_pairs=int(meta[3]),
            group_n=int(meta[4]),
            states=arrays["states"],
            actions=arrays["actions"],
            next_states=arrays["next_states"],
            episode_ids=arrays["episode_ids"],
            step_indices=arrays["step_indices"],
            sources=arrays["sources"],
            g_indices=arrays["g_indices"],
        )
    except KeyError as exc:
        raise FormatError(f"demo file {path} is missing entry {exc}") from exc
    if int(meta[1]) != store.n_agents or int(meta[2]) != store.state_dim:
        raise FormatError(f"demo file {path} header disagrees with its arrays")
    if expect_fingerprint is not None and store.fingerprint != expect_fingerprint:
        raise FormatError(
            f"demo file fingerprint {store.fingerprint} != expected {expect_fingerprint}"
        )
    return store
