"""Three planar multi-agent tasks: gather, chase, align.

All state is built from 2D blocks (positions, velocities, headings, prey
coordinates) that transform as vectors under the planar dihedral group, with
no invariant scalars; the arena is a square centered on the origin so the
quarter-turn rotations and axis reflections map it to itself.

The arithmetic is arranged so that under those transformations (signed
coordinate permutations) every squared distance, and hence every true
reward, is preserved bit-exactly: differences, negations, and two-term sums
commute with sign flips and swaps in IEEE doubles.  Dynamics commute with
the group to float rounding, far inside the 1e-9 budget the rest of the
package assumes.

True rewards are team rewards broadcast per agent:
  rendezvous  - mean pairwise distance of the next positions
  pursuit     - mean predator-to-prey distance of the next positions
  vicsek      alignment order parameter of the next headings
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

ENV_NAMES = ("rendezvous", "pursuit", "vicsek")


class EnvError(ValueError):
    """Bad spec, state, or action input."""


@dataclass(frozen=True)
class EnvSpec:
    """Task constants.  Defaults give a 4x4 m arena at 10 Hz for 20 s."""

    name: str
    n_agents: int
    arena_size: float = 4.0
    dt: float = 0.1
    max_steps: int = 200
    max_accel: float = 1.0
    max_speed: float = 1.0
    prey_speed_factor: float = 1.5
    vicsek_speed: float = 0.5
    vicsek_radius: float = 2.0
    vicsek_noise: float = 0.1

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise EnvError(f"unknown environment {self.name!r}, pick one of {ENV_NAMES}")
        if self.n_agents < 2:
            raise EnvError("need at least two agents")
        for fname in ("arena_size", "dt", "max_accel", "max_speed",
                      "prey_speed_factor", "vicsek_speed", "vicsek_radius"):
            if getattr(self, fname) <= 0:
                raise EnvError(f"{fname} must be positive")
        if self.max_steps < 1:
            raise EnvError("max_steps must be positive")
        if self.vicsek_noise < 0:
            raise EnvError("vicsek_noise must be nonnegative")

    @property
    def half(self) -> float:
        return self.arena_size / 2.0

    @property
    def n_equ_pairs(self) -> int:
        """2D blocks in the flat state vector (positions plus velocity-like
        blocks, plus the two prey blocks for pursuit)."""
        if self.name == "pursuit":
            return 2 * self.n_agents + 2
        return 2 * self.n_agents

    @property
    def state_dim(self) -> int:
        return 2 * self.n_equ_pairs

    @property
    def action_dim(self) -> int:
        return 2

    def fingerprint(self) -> int:
        """Stable checksum of the physics constants, for file headers."""
        text = "|".join(
            str(x)
            for x in (
                self.name, self.n_agents, self.arena_size, self.dt, self.max_steps,
                self.max_accel, self.max_speed, self.prey_speed_factor,
                self.vicsek_speed, self.vicsek_radius, self.vicsek_noise,
            )
        )
        return zlib.crc32(text.encode())


@dataclass
class EnvState:
    positions: np.ndarray  # (N, 2)
    velocities: np.ndarray  # (N, 2)
    time_step: int = 0
    prey_pos: np.ndarray | None = None  # (2,)  pursuit only
    prey_vel: np.ndarray | None = None  # (2,)  pursuit only
    headings: np.ndarray | None = None  # (N, 2) unit rows, vicsek only


def make_spec(name, n_agents, **overrides) -> EnvSpec:
    return EnvSpec(name=name, n_agents=n_agents, **overrides)


def reset(spec: EnvSpec, rng_seed) -> EnvState:
    """Uniform placement in the arena; headings uniform on the circle."""
    rng = np.random.default_rng(rng_seed)
    n, h = spec.n_agents, spec.half
    positions = rng.uniform(-h, h, size=(n, 2))
    velocities = np.zeros((n, 2))
    state = EnvState(positions, velocities)
    if spec.name == "pursuit":
        state.prey_pos = rng.uniform(-h, h, size=2)
        state.prey_vel = np.zeros(2)
    elif spec.name == "vicsek":
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        state.headings = np.column_stack([np.cos(theta), np.sin(theta)])
        state.velocities = state.headings * spec.vicsek_speed
    return state


def _clamp_norm(vecs, cap):
    """Scale rows down to at most cap; equivariant because row norms are
    invariant and scaling commutes with the group."""
    norms = np.sqrt(np.einsum("...d,...d->...", vecs, vecs))
    scale = np.where(norms > cap, cap / np.where(norms > 0, norms, 1.0), 1.0)
    return vecs * scale[..., None]


def _wrap(pos, half):
    return (pos + half) % (2.0 * half) - half


def _pairwise_mean_distance(pos):
    i, j = np.triu_indices(pos.shape[0], k=1)
    d = pos[i] - pos[j]
    return float(np.mean(np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)))


def order_parameter(state: EnvState) -> float:
    """Alignment metric: norm of the mean unit heading, 1 aligned, 0 disordered."""
    if state.headings is None:
        raise EnvError("order parameter needs heading state")
    m = state.headings.mean(axis=0)
    return float(np.sqrt(m[0] ** 2 + m[1] ** 2))


def _check_actions(spec, joint_action):
    a = np.asarray(joint_action, dtype=np.float64)
    if a.shape != (spec.n_agents, 2):
        raise EnvError(f"joint action must be ({spec.n_agents}, 2), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise EnvError("joint action contains NaN or inf")
    return a


def executed_action(spec: EnvSpec, state: EnvState, joint_action) -> np.ndarray:
    """The action the dynamics effectively applies: the norm-clamped
    acceleration, or for the alignment task the resulting unit heading.

    Stepping with the executed action reproduces the same transition, so
    stores built from it stay replayable, and action norms carry no
    information about which controller produced a tuple.
    """
    a = _check_actions(spec, joint_action)
    if spec.name == "vicsek":
        if state.headings is None:
            raise EnvError("alignment task state is missing headings")
        out = state.headings.copy()
        norms = np.sqrt(a[:, 0] ** 2 + a[:, 1] ** 2)
        live = norms > 1e-12
        out[live] = a[live] / norms[live, None]
        return out
    return _clamp_norm(a, spec.max_accel)


def step(spec: EnvSpec, state: EnvState, joint_action) -> tuple[EnvState, np.ndarray]:
    """One deterministic tick; returns the next state and per-agent rewards.

    Double-integrator tasks move with the pre-update velocity, then
    accelerate and clamp speed; boundary handling is a hard clip to the
    arena (periodic wrap for the alignment task).
    """
    a = _check_actions(spec, joint_action)
    n, h, dt = spec.n_agents, spec.half, spec.dt
    if spec.name == "vicsek" and state.headings is None:
        raise EnvError("alignment task state is missing headings")
    if spec.name == "pursuit" and state.prey_pos is None:
        raise EnvError("pursuit state is missing the prey")

    if spec.name == "vicsek":
        new_headings = state.headings.copy()
        norms = np.sqrt(a[:, 0] ** 2 + a[:, 1] ** 2)
        live = norms > 1e-12
        new_headings[live] = a[live] / norms[live, None]
        new_pos = _wrap(state.positions + new_headings * (spec.vicsek_speed * dt), h)
        nxt = EnvState(
            new_pos,
            new_headings * spec.vicsek_speed,
            state.time_step + 1,
            headings=new_headings,
        )
        reward = order_parameter(nxt)
        return nxt, np.full(n, reward)

    accel = _clamp_norm(a, spec.max_accel)
    new_pos = np.clip(state.positions + state.velocities * dt, -h, h)
    new_vel = _clamp_norm(state.velocities + accel * dt, spec.max_speed)

    if spec.name == "rendezvous":
        nxt = EnvState(new_pos, new_vel, state.time_step + 1)
        reward = -_pairwise_mean_distance(new_pos)
        return nxt, np.full(n, reward)

    prey_a = prey_policy(spec, state)
    prey_cap = spec.prey_speed_factor * spec.max_speed
    new_prey_pos = np.clip(state.prey_pos + state.prey_vel * dt, -h, h)
    new_prey_vel = _clamp_norm(state.prey_vel + prey_a * dt, prey_cap)
    nxt = EnvState(
        new_pos, new_vel, state.time_step + 1,
        prey_pos=new_prey_pos, prey_vel=new_prey_vel,
    )
    d = new_pos - new_prey_pos[None, :]
    reward = -float(np.mean(np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)))
    return nxt, np.full(n, reward)


# ---------------------------------------------------------------------------
# prey evasion: move toward the centroid of the prey's cell in the partition
# of the arena induced by the predator sites


def _clip_halfplane(poly, normal, offset):
    """Sutherland-Hodgman step keeping {x : normal . x <= offset}."""
    out = []
    k = len(poly)
    for idx in range(k):
        a, b = poly[idx], poly[(idx + 1) % k]
        da = normal[0] * a[0] + normal[1] * a[1] - offset
        db = normal[0] * b[0] + normal[1] * b[1] - offset
        if da <= 0.0:
            out.append(a)
        if (da < 0.0) != (db < 0.0):
            t = da / (da - db)
            out.append(a + t * (b - a))
    return out


def _polygon_centroid(poly):
    area2 = 0.0
    cx = 0.0
    cy = 0.0
    k = len(poly)
    for idx in range(k):
        a, b = poly[idx], poly[(idx + 1) % k]
        cross = a[0] * b[1] - a[1] * b[0]
        area2 += cross
        cx += (a[0] + b[0]) * cross
        cy += (a[1] + b[1]) * cross
    if abs(area2) < 1e-12:
        return None
    return np.array([cx, cy]) / (3.0 * area2)


def prey_policy(spec: EnvSpec, state: EnvState) -> np.ndarray:
    """Accelerate toward the centroid of the prey's cell: the arena rectangle
    clipped by the perpendicular bisector of every predator, i.e. the region
    of points the prey can reach before any predator.  Degenerate cells fall
    back to fleeing the nearest predator (ties by lowest index)."""
    if state.prey_pos is None:
        raise EnvError("prey policy needs prey state")
    q = state.prey_pos
    h = spec.half
    poly = [
        np.array([-h, -h]), np.array([h, -h]), np.array([h, h]), np.array([-h, h]),
    ]
    for p in state.positions:
        normal = p - q
        offset = (p[0] * p[0] + p[1] * p[1] - q[0] * q[0] - q[1] * q[1]) / 2.0
        poly = _clip_halfplane(poly, normal, offset)
        if len(poly) < 3:
            poly = []
            break
    cap = spec.prey_speed_factor * spec.max_accel
    centroid = _polygon_centroid(poly) if len(poly) >= 3 else None
    if centroid is not None:
        away = centroid - q
        dist = np.sqrt(away[0] ** 2 + away[1] ** 2)
        if dist > 1e-9:
            return cap * away / dist
    d = state.positions - q[None, :]
    d2 = d[:, 0] ** 2 + d[:, 1] ** 2
    nearest = int(np.argmin(d2))
    away = q - state.positions[nearest]
    dist = np.sqrt(away[0] ** 2 + away[1] ** 2)
    if dist < 1e-12:
        return np.zeros(2)
    return cap * away / dist


# ---------------------------------------------------------------------------
# scripted experts


def scripted_expert(spec: EnvSpec, state: EnvState, rng=None) -> np.ndarray:
    """Hand-written joint controllers used as demonstration sources.

    gather: proportional pull to the swarm centroid with velocity damping.
    chase: pursue the prey with an index-alternating sideways spread so the
    predators approach from different sides.
    align: each agent heads along the mean heading of neighbors within the
    interaction radius (torus metric), optionally jittered by a uniform
    angle of width vicsek_noise when an rng is supplied.
    """
    n = spec.n_agents
    if spec.name == "rendezvous":
        centroid = state.positions.mean(axis=0)
        return (centroid[None, :] - state.positions) * 1.0 - state.velocities * 2.0

    if spec.name == "pursuit":
        # aim one second ahead of the prey; alternate the sideways spread per
        # index so the pack closes from both flanks instead of a single file
        target = state.prey_pos[None, :] + 1.0 * state.prey_vel[None, :]
        to_prey = target - state.positions
        dist = np.sqrt(to_prey[:, 0] ** 2 + to_prey[:, 1] ** 2)
        unit = to_prey / np.where(dist > 1e-12, dist, 1.0)[:, None]
        perp = np.column_stack([-unit[:, 1], unit[:, 0]])
        sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        spread = np.where(dist > 0.5, 0.8, 0.0)
        return unit + sign[:, None] * spread[:, None] * perp - 0.5 * state.velocities

    # vicsek rule: average neighbors' headings on the torus
    delta = state.positions[None, :, :] - state.positions[:, None, :]
    delta = delta - spec.arena_size * np.round(delta / spec.arena_size)
    within = (delta[:, :, 0] ** 2 + delta[:, :, 1] ** 2) <= spec.vicsek_radius**2
    sums = within @ state.headings
    norms = np.sqrt(sums[:, 0] ** 2 + sums[:, 1] ** 2)
    mean_h = np.where(
        norms[:, None] > 1e-12, sums / np.where(norms > 1e-12, norms, 1.0)[:, None],
        state.headings,
    )
    if rng is not None and spec.vicsek_noise > 0.0:
        theta = rng.uniform(-spec.vicsek_noise / 2.0, spec.vicsek_noise / 2.0, size=n)
        c, s = np.cos(theta), np.sin(theta)
        mean_h = np.column_stack(
            [c * mean_h[:, 0] - s * mean_h[:, 1], s * mean_h[:, 0] + c * mean_h[:, 1]]
        )
    return mean_h


# ---------------------------------------------------------------------------
# flat-vector packing


def state_vector(spec: EnvSpec, state: EnvState) -> np.ndarray:
    """Pack a state into the flat 2D-block layout the learners consume."""
    blocks = [state.positions.reshape(-1), state.velocities.reshape(-1)]
    if spec.name == "pursuit":
        blocks += [state.prey_pos, state.prey_vel]
    if spec.name == "vicsek":
        blocks = [state.positions.reshape(-1), state.headings.reshape(-1)]
    return np.concatenate(blocks)


def vector_state(spec: EnvSpec, vec, time_step=0) -> EnvState:
    """Inverse of state_vector (time step is carried separately)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (spec.state_dim,):
        raise EnvError(f"state vector must be ({spec.state_dim},), got {vec.shape}")
    n = spec.n_agents
    pos = vec[: 2 * n].reshape(n, 2).copy()
    second = vec[2 * n : 4 * n].reshape(n, 2).copy()
    if spec.name == "vicsek":
        return EnvState(pos, second * spec.vicsek_speed, time_step, headings=second)
    state = EnvState(pos, second, time_step)
    if spec.name == "pursuit":
        state.prey_pos = vec[4 * n : 4 * n + 2].copy()
        state.prey_vel = vec[4 * n + 2 :].copy()
    return state


def ego_pair_permutation(spec: EnvSpec, agent_index: int) -> np.ndarray:
    """Permutation of the 2D blocks putting agent_index's blocks first.

    Rolling the agent axis inside each block group keeps a shared policy
    network agent-aware while commuting with the group action (which acts
    inside blocks, not across them).
    """
    n = spec.n_agents
    roll = np.roll(np.arange(n), -agent_index)
    pairs = [roll, n + roll]
    if spec.name == "pursuit":
        pairs.append(np.array([2 * n, 2 * n + 1]))
    return np.concatenate(pairs)


def ego_view(spec: EnvSpec, vecs: np.ndarray, agent_index: int) -> np.ndarray:
    """Reorder flat state rows so agent_index's blocks come first."""
    vecs = np.asarray(vecs, dtype=np.float64)
    perm = ego_pair_permutation(spec, agent_index)
    cols = np.stack([2 * perm, 2 * perm + 1], axis=1).reshape(-1)
    return vecs[..., cols]
