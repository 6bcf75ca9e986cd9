"""Generator learner: Gaussian actors, centralized critic, clipped updates.

One actor network is shared across agents by default (the swarms are
homogeneous); each agent sees the global state rolled so its own blocks come
first, which keeps the shared network agent-aware.  Action noise is a
state-independent diagonal Gaussian with a learned, clamped log standard
deviation.  The critic maps the raw global state to one value; per-agent
advantages are computed against that shared baseline with generalized
advantage estimation and normalized jointly per update.

Rollouts store the raw sampled actions (what the ratio terms and densities
refer to) and feed them unchanged to the environment, which applies its own
clamps.  Alongside them the buffer keeps the executed form of each action,
the clamped or normalized vector the dynamics actually applied, plus the
policy density at that vector; discriminator queries use the executed
columns so generator tuples share the demonstrations' action convention and
action norms cannot give the players away.  Rewards in the buffer come from
the discriminators; the environment's true reward is logged separately and
an explicit tag records which source filled the reward column, so the
training loop can assert that imitation runs never read the true reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversarial import reward_signal
from .approx import AdamState, Mlp, adam_step
from .envs import EnvSpec, ego_view, executed_action, reset, state_vector, step

LOG2PI = float(np.log(2.0 * np.pi))


class MarlError(ValueError):
    pass


class ActorCritic:
    """Shared-by-default Gaussian actors plus one centralized value net."""

    def __init__(self, state_dim, n_agents, rng, action_dim=2, hidden=(64, 64),
                 share_actor=True, log_std_init=float(np.log(0.5)),
                 log_std_bounds=(-1.6, 0.25), lr=3e-4):
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.action_dim = action_dim
        self.share_actor = share_actor
        self.log_std_bounds = log_std_bounds
        n_actors = 1 if share_actor else n_agents
        self.actors = [Mlp([state_dim, *hidden, action_dim], rng) for _ in range(n_actors)]
        self.log_std = np.full(action_dim, log_std_init)
        self.critic = Mlp([state_dim, *hidden, 1], rng)
        self.actor_opt = AdamState.for_params(self.actor_params(), lr=lr)
        self.critic_opt = AdamState.for_params(self.critic.params, lr=lr)

    def actor_for(self, agent_index) -> Mlp:
        return self.actors[0 if self.share_actor else agent_index]

    def actor_params(self):
        out = []
        for net in self.actors:
            out.extend(net.params)
        out.append(self.log_std)
        return out

    def sigma(self):
        return np.exp(np.clip(self.log_std, *self.log_std_bounds))

    def log_std_active(self):
        """1 where the clamp is not binding (gradient passes), else 0."""
        lo, hi = self.log_std_bounds
        return ((self.log_std > lo) & (self.log_std < hi)).astype(np.float64)

    def mean_action(self, agent_index, ego_states):
        return self.actor_for(agent_index).forward(np.atleast_2d(ego_states))

    def log_prob(self, mean, actions):
        s = self.sigma()
        z = (np.atleast_2d(actions) - mean) / s
        return -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(s)) \
            - 0.5 * self.action_dim * LOG2PI

    def entropy(self):
        return float(np.sum(np.log(self.sigma())) + 0.5 * self.action_dim * (1.0 + LOG2PI))

    def sample(self, agent_index, ego_states, rng):
        mean = self.mean_action(agent_index, ego_states)
        noise = rng.standard_normal(mean.shape)
        actions = mean + self.sigma() * noise
        return actions, self.log_prob(mean, actions)

    def values(self, states):
        return self.critic.forward(np.atleast_2d(states))[:, 0]

    def state_dict(self, prefix=""):
        out = {f"{prefix}log_std": self.log_std.copy()}
        for k, net in enumerate(self.actors):
            out.update(net.state_dict(f"{prefix}actor{k}."))
        out.update(self.critic.state_dict(f"{prefix}critic."))
        out.update(self.actor_opt.state_dict(f"{prefix}aopt."))
        out.update(self.critic_opt.state_dict(f"{prefix}copt."))
        return out

    def load_state_dict(self, arrays, prefix=""):
        self.log_std[...] = arrays[f"{prefix}log_std"]
        for k, net in enumerate(self.actors):
            net.load_state_dict(arrays, f"{prefix}actor{k}.")
        self.critic.load_state_dict(arrays, f"{prefix}critic.")
        self.actor_opt.load_state_dict(arrays, f"{prefix}aopt.")
        self.critic_opt.load_state_dict(arrays, f"{prefix}copt.")


@dataclass
class RolloutBuffer:
    """Trajectory columns for one update; advantages filled by gae()."""

    states: np.ndarray  # (T, d) global
    ego_states: np.ndarray  # (T, N, d)
    actions: np.ndarray  # (T, N, 2) raw samples
    log_probs: np.ndarray  # (T, N)
    values: np.ndarray  # (T + 1,) bootstrap value appended
    rewards: np.ndarray  # (T, N) learner-facing signal
    true_rewards: np.ndarray  # (T,) environment metric, evaluation only
    next_states: np.ndarray  # (T, d)
    dones: np.ndarray  # (T,)
    reward_source: str  # "discriminator" | "environment"
    exec_actions: np.ndarray | None = field(default=None)  # (T, N, 2) post-dynamics
    exec_log_probs: np.ndarray | None = field(default=None)  # (T, N)
    advantages: np.ndarray | None = field(default=None)
    returns: np.ndarray | None = field(default=None)

    def __len__(self):
        return self.states.shape[0]


def collect_rollouts(spec: EnvSpec, policy: ActorCritic, discriminators, horizon,
                     rng, reward_form="positive", use_true_reward=False) -> RolloutBuffer:
    """Roll the stochastic policy for horizon steps, episodes back to back.

    Rewards come from the discriminators (one per agent) unless
    use_true_reward is set, in which case the environment reward is copied in
    and the buffer is tagged accordingly.
    """
    n, d = spec.n_agents, spec.state_dim
    states = np.empty((horizon, d))
    ego_states = np.empty((horizon, n, d))
    actions = np.empty((horizon, n, 2))
    exec_actions = np.empty((horizon, n, 2))
    log_probs = np.empty((horizon, n))
    values = np.empty(horizon + 1)
    true_rewards = np.empty(horizon)
    next_states = np.empty((horizon, d))
    dones = np.zeros(horizon)

    env_state = reset(spec, rng)
    for t in range(horizon):
        s_vec = state_vector(spec, env_state)
        states[t] = s_vec
        for i in range(n):
            ego = ego_view(spec, s_vec, i)
            ego_states[t, i] = ego
            a, lp = policy.sample(i, ego[None, :], rng)
            actions[t, i] = a[0]
            log_probs[t, i] = lp[0]
        values[t] = policy.values(s_vec[None, :])[0]
        exec_actions[t] = executed_action(spec, env_state, actions[t])
        env_state, r = step(spec, env_state, actions[t])
        true_rewards[t] = r[0]
        next_states[t] = state_vector(spec, env_state)
        if env_state.time_step >= spec.max_steps:
            dones[t] = 1.0
            env_state = reset(spec, rng)
    if horizon > 0:
        values[horizon] = policy.values(state_vector(spec, env_state)[None, :])[0]

    # Density of the policy at the executed (clamped or normalized) action,
    # the convention demonstration tuples use.
    exec_log_probs = np.empty((horizon, n))
    if horizon > 0:
        for i in range(n):
            mean = policy.mean_action(i, ego_states[:, i, :])
            exec_log_probs[:, i] = policy.log_prob(mean, exec_actions[:, i, :])

    rewards = np.empty((horizon, n))
    if use_true_reward:
        rewards[:] = true_rewards[:, None]
        source = "environment"
    else:
        if len(discriminators) != n:
            raise MarlError("need one discriminator per agent")
        for i, disc in enumerate(discriminators):
            # the density term is the sampling entropy, so it refers to the
            # raw draw, while the learned reward nets see the executed action
            lp = log_probs[:, i] if disc.variant == "airl" else None
            if horizon > 0:
                rewards[:, i] = reward_signal(
                    disc, states, exec_actions[:, i], next_states, lp, form=reward_form
                )
        source = "discriminator"
    return RolloutBuffer(
        states, ego_states, actions, log_probs, values, rewards, true_rewards,
        next_states, dones, source,
        exec_actions=exec_actions, exec_log_probs=exec_log_probs,
    )


def gae(buffer: RolloutBuffer, gamma=0.99, lam=0.95):
    """Standard recursive advantage estimate per agent against the shared
    baseline; returns = advantages + values."""
    t_len, n = buffer.rewards.shape
    adv = np.zeros((t_len, n))
    last = np.zeros(n)
    for t in range(t_len - 1, -1, -1):
        mask = 1.0 - buffer.dones[t]
        delta = buffer.rewards[t] + gamma * buffer.values[t + 1] * mask - buffer.values[t]
        last = delta + gamma * lam * mask * last
        adv[t] = last
    buffer.advantages = adv
    buffer.returns = adv + buffer.values[:t_len, None]
    return adv, buffer.returns


def ppo_update(policy: ActorCritic, buffer: RolloutBuffer, clip_eps=0.2, epochs=10,
               minibatch=256, rng=None, ent_coef=0.01, value_coef=0.5):
    """Clipped-ratio update of actors and critic from one filled buffer.

    Advantages are normalized jointly (all agents, all steps) before the
    epochs run and written back to the buffer.
    """
    if buffer.advantages is None:
        raise MarlError("run gae() before the update")
    if rng is None:
        rng = np.random.default_rng(0)
    t_len, n = buffer.rewards.shape
    adv = buffer.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    buffer.advantages = adv

    flat_ego = buffer.ego_states.reshape(t_len * n, -1)
    flat_act = buffer.actions.reshape(t_len * n, -1)
    flat_old_lp = buffer.log_probs.reshape(-1)
    flat_adv = adv.reshape(-1)
    flat_agent = np.tile(np.arange(n), t_len)  # row-major: step-major, agent-minor
    critic_targets = buffer.returns.mean(axis=1)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": policy.entropy(),
             "approx_kl": 0.0, "clip_fraction": 0.0}
    n_actor_batches = 0
    n_critic_batches = 0
    sigma = None
    for _ in range(epochs):
        order = rng.permutation(t_len * n)
        for start in range(0, t_len * n, minibatch):
            idx = order[start : start + minibatch]
            if idx.size == 0:
                continue
            sigma = policy.sigma()
            active = policy.log_std_active()
            grads = [np.zeros_like(p) for p in policy.actor_params()]
            b = idx.size
            pg_loss = 0.0
            kl_sum = 0.0
            clip_sum = 0.0
            for actor_i, net in enumerate(policy.actors):
                sel = idx if policy.share_actor else idx[flat_agent[idx] == actor_i]
                if sel.size == 0:
                    continue
                ego = flat_ego[sel]
                acts = flat_act[sel]
                mean = net.forward(ego)
                z = (acts - mean) / sigma
                new_lp = (-0.5 * np.sum(z * z, axis=1) - np.sum(np.log(sigma))
                          - 0.5 * policy.action_dim * LOG2PI)
                ratio = np.exp(new_lp - flat_old_lp[sel])
                a_hat = flat_adv[sel]
                term1 = ratio * a_hat
                clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
                term2 = clipped * a_hat
                obj = np.minimum(term1, term2)
                pg_loss += -obj.sum()
                kl_sum += np.sum(flat_old_lp[sel] - new_lp)
                clip_sum += np.sum(term2 < term1)
                # d(-obj)/d ratio, zero where the clamp is flat
                dratio = np.where(
                    term1 <= term2, -a_hat,
                    -a_hat * ((ratio > 1.0 - clip_eps) & (ratio < 1.0 + clip_eps)),
                ) / b
                dlp = dratio * ratio
                dmean = dlp[:, None] * (z / sigma)
                net_grads, _ = net.backward(ego, dmean)
                base = sum(len(a.params) for a in policy.actors[:actor_i])
                for k, gk in enumerate(net_grads):
                    grads[base + k] += gk
                grads[-1] += active * np.sum(dlp[:, None] * (z * z - 1.0), axis=0)
            grads[-1] += -ent_coef * active  # entropy bonus, constant per sample
            adam_step(policy.actor_opt, policy.actor_params(), grads)
            stats["policy_loss"] += pg_loss / b
            stats["approx_kl"] += kl_sum / b
            stats["clip_fraction"] += clip_sum / b
            n_actor_batches += 1
        t_order = rng.permutation(t_len)
        for start in range(0, t_len, minibatch):
            idx = t_order[start : start + minibatch]
            if idx.size == 0:
                continue
            xs = buffer.states[idx]
            v = policy.critic.forward(xs)[:, 0]
            err = v - critic_targets[idx]
            v_loss = float(np.mean(err**2))
            cgrads, _ = policy.critic.backward(
                xs, (value_coef * 2.0 * err / idx.size)[:, None]
            )
            adam_step(policy.critic_opt, policy.critic.params, cgrads)
            stats["value_loss"] += v_loss
            n_critic_batches += 1
    if n_actor_batches:
        for key in ("policy_loss", "approx_kl", "clip_fraction"):
            stats[key] /= n_actor_batches
    if n_critic_batches:
        stats["value_loss"] /= n_critic_batches
    stats["entropy"] = policy.entropy()
    stats["sigma"] = float(np.mean(policy.sigma() if sigma is None else sigma))
    return stats
