"""Experiment harness: configuration, training loops, metrics, and the CLI.

The trainer alternates discriminator and generator updates against a fixed
demonstration store.  Two switches control the symmetry machinery: one
augments the expert store with the whole dihedral orbit before training, the
other adds the transformed-batch term to the discriminator loss.  With both
switches off the flag-gated loop consumes random streams identically to
_baseline_train_seed, a copy with the symmetry code removed, so the two
produce byte-identical artifacts at a fixed seed; tests compare them to
guarantee ablations measure only the switched feature.

Artifacts per run directory: the effective config, an append-only metrics CSV
(one row per update per seed), a JSON summary recomputable from the rows, and
one checkpoint per seed.  Plots are SVG, generated from the CSV only.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
import time

import numpy as np

from .adversarial import (
    TransitionBatch,
    init_discriminators,
    loss_plain,
    loss_sgf,
    reward_signal,
)
from .approx import AdamState, FormatError, adam_step, load_arrays, save_arrays
from .demos import augment, collect_store, load as load_demos, save as save_demos
from .envs import (
    ENV_NAMES,
    ego_view,
    executed_action,
    make_spec,
    order_parameter,
    reset,
    state_vector,
    step,
)
from .group import elements
from .marl import ActorCritic, collect_rollouts, gae, ppo_update
from .tabular import (
    build_feasible_reward,
    is_optimal,
    make_symmetric_instance,
    random_feasible_params,
    random_mg,
    random_policy,
    recover_feasible_params,
    trivial_action,
    verify_prop2,
    vertex_action,
)

CONFIG_VERSION = 1
OUTPUT_ROOT_VAR = "SYMIRL_OUTPUT_ROOT"
ALGORITHMS = ("ma-gail", "ma-airl")
METRIC_FIELDS = (
    "timestamp", "seed", "update", "true_return", "order_param",
    "disc_loss", "policy_loss", "value_loss", "sigma",
)


class ConfigError(ValueError):
    pass


class HarnessError(RuntimeError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    """Flat experiment description; every field round-trips through text."""

    env: str = "rendezvous"
    n_agents: int = 5
    algorithm: str = "ma-gail"
    augment_expert: bool = False
    sad: bool = False
    group_order: int = 4
    n_demos: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    updates: int = 300
    horizon: int = 200
    output_dir: str = "run"
    demo_file: str = ""
    expert_seed: int = 9001
    policy_lr: float = 3e-4
    critic_lr: float = 1e-3
    disc_lr: float = 3e-4
    disc_batch: int = 128
    disc_steps: int = 2
    ppo_epochs: int = 10
    minibatch: int = 256
    gamma: float = 0.99
    lam: float = 0.95
    ent_coef: float = 0.0
    reward_form: str = "positive"
    reward_scale: float = 0.1
    sad_average: bool = False
    eval_episodes: int = 5
    deterministic_time: bool = False

    def validate(self):
        if self.env not in ENV_NAMES:
            raise ConfigError(f"env must be one of {ENV_NAMES}, got {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.n_agents < 2:
            raise ConfigError("n_agents must be at least 2")
        if self.group_order < 1:
            raise ConfigError("group_order must be positive")
        if self.n_demos < 1:
            raise ConfigError("n_demos must be positive")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.updates < 0:
            raise ConfigError("updates must be nonnegative")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.reward_form not in ("positive", "logit"):
            raise ConfigError("reward_form must be 'positive' or 'logit'")
        return self

    @property
    def variant(self):
        return "airl" if self.algorithm == "ma-airl" else "gail"


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(name, text, default):
    text = text.strip()
    if isinstance(default, bool):
        if text not in ("true", "false"):
            raise ConfigError(f"{name} must be true or false, got {text!r}")
        return text == "true"
    if isinstance(default, tuple):
        if not text:
            raise ConfigError(f"{name} must list at least one integer")
        return tuple(int(v) for v in text.split(","))
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = [f"version = {CONFIG_VERSION}"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ExperimentConfig:
    defaults = ExperimentConfig()
    known = {f.name: f for f in dataclasses.fields(defaults)}
    seen = {}
    version = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "version":
            version = int(value)
            continue
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        seen[key] = _parse_value(key, value, getattr(defaults, key))
    if version is None:
        raise ConfigError("config is missing the version key")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    return dataclasses.replace(defaults, **seen).validate()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return config_from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    """Apply 'key=value' strings on top of a config (CLI beats file)."""
    defaults = ExperimentConfig()
    updates = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        key = key.strip()
        if not hasattr(defaults, key):
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _parse_value(key, value, getattr(defaults, key))
    return dataclasses.replace(cfg, **updates).validate()


def resolve_path(path) -> str:
    root = os.environ.get(OUTPUT_ROOT_VAR, ".")
    return path if os.path.isabs(path) else os.path.join(root, path)


def demo_path(cfg: ExperimentConfig) -> str:
    if cfg.demo_file:
        return resolve_path(cfg.demo_file)
    name = f"demos_{cfg.env}_{cfg.n_agents}.bin"
    return os.path.join(resolve_path(cfg.output_dir), name)


def run_dir(cfg: ExperimentConfig) -> str:
    return resolve_path(cfg.output_dir)


# -- metrics ----------------------------------------------------------------


def _phi_from_vector(spec, vec) -> float:
    """Order parameter recomputed from a flat state vector's velocity block."""
    n = spec.n_agents
    v = vec[2 * n : 4 * n].reshape(n, 2)
    norms = np.sqrt(v[:, 0] ** 2 + v[:, 1] ** 2)
    units = v / np.where(norms > 1e-12, norms, 1.0)[:, None]
    mean = units.mean(axis=0)
    return float(np.sqrt(mean[0] ** 2 + mean[1] ** 2))


def episode_metrics(spec, buf):
    """Per-update scalars from one rollout buffer: mean episode true return
    and, for heading tasks, the mean end-of-episode order parameter."""
    ends = np.flatnonzero(buf.dones)
    episodes = max(1, len(ends))
    true_return = float(buf.true_rewards.sum() / episodes)
    phi = ""
    if spec.name == "vicsek" and len(ends):
        phi = float(np.mean([_phi_from_vector(spec, buf.next_states[e]) for e in ends]))
    return true_return, phi


def write_metrics_header(path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerow(METRIC_FIELDS)


def append_metrics_row(path, row):
    with open(path, "a", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerow([row[k] for k in METRIC_FIELDS])


def read_metrics(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRIC_FIELDS:
            raise HarnessError(f"unexpected metrics columns in {path}")
        return list(reader)


def final_window(values, fraction=0.1):
    """Mean over the last fraction of a per-update series (at least one)."""
    span = max(1, int(np.ceil(len(values) * fraction)))
    return float(np.mean(values[-span:]))


def compute_summary(rows, seeds):
    """Aggregate per-seed convergence means; the JSON summary must be exactly
    reproducible from the CSV rows."""
    per_seed = {}
    per_seed_phi = {}
    for seed in seeds:
        mine = [r for r in rows if int(r["seed"]) == seed]
        mine.sort(key=lambda r: int(r["update"]))
        if not mine:
            raise HarnessError(f"no metric rows for seed {seed}")
        per_seed[str(seed)] = final_window([float(r["true_return"]) for r in mine])
        phis = [float(r["order_param"]) for r in mine if r["order_param"] != ""]
        if phis:
            per_seed_phi[str(seed)] = final_window(phis)
    means = np.array(list(per_seed.values()))
    summary = {
        "seeds": list(seeds),
        "n_rows": len(rows),
        "true_return_per_seed": per_seed,
        "true_return_mean": float(means.mean()),
        "true_return_std": float(means.std()),
    }
    if per_seed_phi:
        phim = np.array(list(per_seed_phi.values()))
        summary["order_param_per_seed"] = per_seed_phi
        summary["order_param_mean"] = float(phim.mean())
        summary["order_param_std"] = float(phim.std())
    return summary


# -- training ---------------------------------------------------------------


def _expert_log_pis(policy, spec, states, actions):
    """Current-policy log-density of each stored expert action."""
    out = np.empty(actions.shape[:2])
    for i in range(actions.shape[1]):
        mean = policy.mean_action(i, ego_view(spec, states, i))
        out[:, i] = policy.log_prob(mean, actions[:, i])
    return out


def _refresh_rewards(cfg, spec, buf, discs):
    """Recompute the learner-facing signal with the just-updated nets.

    The density term refers to the raw draw (the sampling entropy); the
    learned reward nets see the executed action, matching the stores.
    """
    for i, disc in enumerate(discs):
        lp = buf.log_probs[:, i] if disc.variant == "airl" else None
        buf.rewards[:, i] = reward_signal(
            disc, buf.states, buf.exec_actions[:, i], buf.next_states, lp,
            form=cfg.reward_form,
        )
    buf.rewards *= cfg.reward_scale


def _metric_row(cfg, spec, seed, update, buf, disc_loss, stats):
    true_return, phi = episode_metrics(spec, buf)
    return {
        "timestamp": 0.0 if cfg.deterministic_time else time.time(),
        "seed": seed,
        "update": update,
        "true_return": true_return,
        "order_param": phi,
        "disc_loss": disc_loss,
        "policy_loss": stats["policy_loss"],
        "value_loss": stats["value_loss"],
        "sigma": stats["sigma"],
    }


def _init_learners(cfg, spec, seed):
    policy = ActorCritic(
        spec.state_dim, spec.n_agents, np.random.default_rng([seed, 11]),
        lr=cfg.policy_lr,
    )
    policy.critic_opt.lr = cfg.critic_lr
    discs = init_discriminators(
        cfg.variant, spec.n_agents, spec.state_dim, cfg.gamma,
        np.random.default_rng([seed, 22]),
    )
    opts = [AdamState.for_params(d.params, lr=cfg.disc_lr) for d in discs]
    return policy, discs, opts


def _sample_batches(cfg, spec, store, buf, policy, rng_disc):
    e_idx = rng_disc.integers(0, len(store), cfg.disc_batch)
    g_idx = rng_disc.integers(0, len(buf), cfg.disc_batch)
    expert_lp = None
    if cfg.variant == "airl":
        expert_lp = _expert_log_pis(policy, spec, store.states[e_idx], store.actions[e_idx])
    expert_batch = TransitionBatch(
        store.states[e_idx], store.actions[e_idx], store.next_states[e_idx],
        spec.n_equ_pairs, expert_lp,
    )
    gen_batch = TransitionBatch(
        buf.states[g_idx], buf.exec_actions[g_idx], buf.next_states[g_idx],
        spec.n_equ_pairs,
    )
    return expert_batch, gen_batch, buf.exec_log_probs[g_idx]


def train_seed(cfg: ExperimentConfig, spec, store, seed, on_row=None):
    """Flag-gated alternating loop for one seed.

    The store must already carry any expert augmentation.  Random streams are
    split per purpose so enabling a switch never shifts the draws of the
    others; with both switches off this consumes streams exactly like
    _baseline_train_seed.
    """
    policy, discs, opts = _init_learners(cfg, spec, seed)
    rng_env = np.random.default_rng([seed, 33])
    rng_disc = np.random.default_rng([seed, 44])
    rng_ppo = np.random.default_rng([seed, 55])
    rng_sad = np.random.default_rng([seed, 66])
    group_elems = elements(cfg.group_order)
    rows = []
    for update in range(cfg.updates):
        buf = collect_rollouts(
            spec, policy, discs, cfg.horizon, rng_env, reward_form=cfg.reward_form
        )
        if buf.reward_source != "discriminator":
            raise HarnessError("imitation buffer must be discriminator-driven")
        disc_loss = float("nan")
        for _ in range(cfg.disc_steps):
            expert_batch, gen_batch, gen_lp = _sample_batches(
                cfg, spec, store, buf, policy, rng_disc
            )
            if cfg.sad:
                disc_loss, grads = loss_sgf(
                    discs, expert_batch, gen_batch, gen_lp,
                    group_elements=group_elems, rng=rng_sad,
                    average=cfg.sad_average,
                )
            else:
                disc_loss, grads = loss_plain(discs, expert_batch, gen_batch, gen_lp)
            for disc, opt, grad in zip(discs, opts, grads):
                adam_step(opt, disc.params, grad)
        _refresh_rewards(cfg, spec, buf, discs)
        gae(buf, cfg.gamma, cfg.lam)
        stats = ppo_update(
            policy, buf, epochs=cfg.ppo_epochs, minibatch=cfg.minibatch,
            rng=rng_ppo, ent_coef=cfg.ent_coef,
        )
        row = _metric_row(cfg, spec, seed, update, buf, disc_loss, stats)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows, policy, discs


def _baseline_train_seed(cfg: ExperimentConfig, spec, store, seed, on_row=None):
    """Reference loop with no symmetry code at all.

    Kept as a literal copy so ablation runs can be checked byte-for-byte
    against an implementation that cannot possibly touch the symmetry paths.
    """
    policy, discs, opts = _init_learners(cfg, spec, seed)
    rng_env = np.random.default_rng([seed, 33])
    rng_disc = np.random.default_rng([seed, 44])
    rng_ppo = np.random.default_rng([seed, 55])
    rows = []
    for update in range(cfg.updates):
        buf = collect_rollouts(
            spec, policy, discs, cfg.horizon, rng_env, reward_form=cfg.reward_form
        )
        if buf.reward_source != "discriminator":
            raise HarnessError("imitation buffer must be discriminator-driven")
        disc_loss = float("nan")
        for _ in range(cfg.disc_steps):
            expert_batch, gen_batch, gen_lp = _sample_batches(
                cfg, spec, store, buf, policy, rng_disc
            )
            disc_loss, grads = loss_plain(discs, expert_batch, gen_batch, gen_lp)
            for disc, opt, grad in zip(discs, opts, grads):
                adam_step(opt, disc.params, grad)
        _refresh_rewards(cfg, spec, buf, discs)
        gae(buf, cfg.gamma, cfg.lam)
        stats = ppo_update(
            policy, buf, epochs=cfg.ppo_epochs, minibatch=cfg.minibatch,
            rng=rng_ppo, ent_coef=cfg.ent_coef,
        )
        row = _metric_row(cfg, spec, seed, update, buf, disc_loss, stats)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows, policy, discs


def checkpoint_path(directory, seed):
    return os.path.join(directory, f"ckpt_seed{seed}.bin")


def save_checkpoint(path, cfg, policy, discs):
    arrays = {"meta": np.array(
        [1 if cfg.variant == "airl" else 0, len(discs), cfg.group_order],
        dtype=np.int64,
    )}
    arrays.update(policy.state_dict("policy."))
    for i, disc in enumerate(discs):
        arrays.update(disc.state_dict(f"disc{i}."))
    save_arrays(path, arrays)


def _hidden_sizes(arrays, prefix):
    """Recover a net's hidden widths from its stored weight shapes."""
    widths = []
    k = 0
    while f"{prefix}w{k}" in arrays:
        widths.append(arrays[f"{prefix}w{k}"].shape[1])
        k += 1
    if not widths:
        raise HarnessError(f"checkpoint has no layers under {prefix!r}")
    return tuple(widths[:-1])


def load_checkpoint(path, cfg, spec):
    arrays = load_arrays(path)
    meta = arrays["meta"]
    variant = "airl" if meta[0] == 1 else "gail"
    if variant != cfg.variant:
        raise HarnessError(
            f"checkpoint holds a {variant} discriminator but the config says {cfg.variant}"
        )
    policy = ActorCritic(
        spec.state_dim, spec.n_agents, np.random.default_rng(0), lr=cfg.policy_lr,
        hidden=_hidden_sizes(arrays, "policy.actor0."),
        share_actor="policy.actor1.w0" not in arrays,
    )
    policy.load_state_dict(arrays, "policy.")
    disc_prefix = "disc0.net." if variant == "gail" else "disc0.g."
    discs = init_discriminators(
        cfg.variant, spec.n_agents, spec.state_dim, cfg.gamma,
        np.random.default_rng(0), hidden=_hidden_sizes(arrays, disc_prefix),
    )
    for i, disc in enumerate(discs):
        disc.load_state_dict(arrays, f"disc{i}.")
    return policy, discs


def run_training(cfg: ExperimentConfig, use_baseline_loop=False):
    """Full multi-seed training: demos in, artifacts out, summary returned."""
    cfg.validate()
    spec = make_spec(cfg.env, cfg.n_agents)
    try:
        store = load_demos(demo_path(cfg), expect_fingerprint=spec.fingerprint())
    except (OSError, FormatError) as exc:
        raise ConfigError(f"cannot load demos for this config: {exc}") from exc
    if cfg.augment_expert and not use_baseline_loop:
        store = augment(store, elements(cfg.group_order))
    directory = run_dir(cfg)
    os.makedirs(directory, exist_ok=True)
    save_config(cfg, os.path.join(directory, "config.txt"))
    metrics_file = os.path.join(directory, "metrics.csv")
    write_metrics_header(metrics_file)
    loop = _baseline_train_seed if use_baseline_loop else train_seed
    rows = []
    for seed in cfg.seeds:
        seed_rows, policy, discs = loop(
            cfg, spec, store, seed,
            on_row=lambda row: append_metrics_row(metrics_file, row),
        )
        rows.extend(seed_rows)
        save_checkpoint(checkpoint_path(directory, seed), cfg, policy, discs)
    if rows:
        summary = compute_summary(read_metrics(metrics_file), cfg.seeds)
    else:
        summary = {"seeds": list(cfg.seeds), "n_rows": 0,
                   "initial_eval": evaluate_run(cfg, episodes=1)}
    with open(os.path.join(directory, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# -- evaluation -------------------------------------------------------------


def greedy_episode_return(spec, policy, seed):
    """One episode with mean actions (no exploration noise)."""
    rng = np.random.default_rng(seed)
    state = reset(spec, rng)
    total = 0.0
    phi = 0.0
    for _ in range(spec.max_steps):
        vec = state_vector(spec, state)
        acts = np.stack(
            [policy.mean_action(i, ego_view(spec, vec, i)[None, :])[0]
             for i in range(spec.n_agents)]
        )
        state, r = step(spec, state, acts)
        total += r[0]
    if spec.name == "vicsek":
        phi = order_parameter(state)
    return total, phi


def evaluate_run(cfg: ExperimentConfig, episodes=None, seeds=None):
    """Deterministic-policy evaluation of every checkpoint in a run dir."""
    episodes = episodes or cfg.eval_episodes
    seeds = seeds or cfg.seeds
    spec = make_spec(cfg.env, cfg.n_agents)
    directory = run_dir(cfg)
    per_seed = {}
    per_seed_phi = {}
    for seed in seeds:
        policy, _ = load_checkpoint(checkpoint_path(directory, seed), cfg, spec)
        rets, phis = zip(*(
            greedy_episode_return(spec, policy, [7000, seed, e])
            for e in range(episodes)
        ))
        per_seed[str(seed)] = float(np.mean(rets))
        per_seed_phi[str(seed)] = float(np.mean(phis))
    means = np.array(list(per_seed.values()))
    out = {
        "episodes": episodes,
        "per_seed": per_seed,
        "mean": float(means.mean()),
        "std": float(means.std()),
    }
    if cfg.env == "vicsek":
        phim = np.array(list(per_seed_phi.values()))
        out["order_param_per_seed"] = per_seed_phi
        out["order_param_mean"] = float(phim.mean())
    return out


# -- theory verification ----------------------------------------------------


def verify_theory(n_instances=200, sample_sizes=(1, 3, 10, 30, 100), seed=0,
                  group="auto", lemma_instances=100, lemma_draws=50):
    """Constructed-reward soundness, small-family completeness, and the
    augmentation error-bound inequality over a randomized instance grid.

    Returns a report dict; 'passed' is False if any constructed reward fails
    the optimality oracle, any reconstruction residual exceeds 1e-8, or any
    bound gap is below -1e-12 (the offending instance is named).
    """
    rng = np.random.default_rng(seed)
    report = {
        "passed": True,
        "failures": [],
        "lemma_checked": 0,
        "lemma_max_residual": 0.0,
        "prop2_instances": 0,
        "prop2_min_delta": np.inf,
        "sample_sizes": list(sample_sizes),
    }

    for k in range(lemma_instances):
        n_states = int(rng.integers(2, 7))
        counts = (int(rng.integers(2, 4)), int(rng.integers(2, 4)))
        mg = random_mg(rng, n_states, counts)
        policy = random_policy(rng, n_states, counts)
        for _ in range(lemma_draws):
            params = random_feasible_params(rng, mg.n_states, mg.n_joint)
            reward = build_feasible_reward(mg, policy, params)
            if not is_optimal(mg, reward, policy, tol=1e-8):
                report["passed"] = False
                report["failures"].append(f"lemma-soundness instance {k}")
                break
        if mg.n_states <= 3:
            params = random_feasible_params(rng, mg.n_states, mg.n_joint)
            reward = build_feasible_reward(mg, policy, params)
            _, residual = recover_feasible_params(mg, reward, policy)
            report["lemma_max_residual"] = max(report["lemma_max_residual"], residual)
            if residual > 1e-8:
                report["passed"] = False
                report["failures"].append(f"lemma-completeness instance {k}")
        report["lemma_checked"] += 1

    for k in range(n_instances):
        if group == "trivial":
            action = trivial_action(int(rng.integers(2, 5)), (2, 2))
        else:
            order = 2 if (group == "d2" or (group == "auto" and k % 2 == 0)) else 4
            action = vertex_action(order, n_agents=2)
        mg, policy = make_symmetric_instance(action, rng)
        inst_seed = int(rng.integers(0, 2**31))
        result = verify_prop2(mg, policy, action, sample_sizes, [inst_seed])
        report["prop2_instances"] += 1
        if result.min_delta < report["prop2_min_delta"]:
            report["prop2_min_delta"] = float(result.min_delta)
        if not result.passed:
            report["passed"] = False
            report["failures"].append(
                f"prop2 instance {k} seed {inst_seed}: delta {result.min_delta:.3e}"
            )
    return report


def write_theory_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theory verification report\n")
        fh.write(f"passed = {str(report['passed']).lower()}\n")
        fh.write(f"lemma_instances_checked = {report['lemma_checked']}\n")
        fh.write(f"lemma_max_residual = {report['lemma_max_residual']:.3e}\n")
        fh.write(f"prop2_instances = {report['prop2_instances']}\n")
        fh.write(f"prop2_min_delta = {report['prop2_min_delta']:.6e}\n")
        fh.write(f"sample_sizes = {report['sample_sizes']}\n")
        for failure in report["failures"]:
            fh.write(f"failure: {failure}\n")


# -- reward maps ------------------------------------------------------------


def probe_reward_map(spec, policy, disc, agent_index, grid_res, state):
    """Recovered-reward surface over a grid of accelerations for one agent.

    The decomposed discriminator is queried with a zero density term so the
    surface shows the learned potential alone.  Other agents act with their
    policy means; each probe action feeds the real dynamics to produce the
    successor state.  Grid rows index a_y, columns a_x.
    """
    if not 0 <= agent_index < spec.n_agents:
        raise HarnessError(f"agent_index must be in [0, {spec.n_agents})")
    if grid_res < 2:
        raise HarnessError("grid_res must be at least 2")
    vec = state_vector(spec, state)
    base_actions = np.stack(
        [policy.mean_action(i, ego_view(spec, vec, i)[None, :])[0]
         for i in range(spec.n_agents)]
    )
    axis = np.linspace(-spec.max_accel, spec.max_accel, grid_res)
    grid = np.empty((grid_res, grid_res))
    for iy, ay in enumerate(axis):
        for ix, ax in enumerate(axis):
            acts = base_actions.copy()
            acts[agent_index] = (ax, ay)
            # query in executed form, the convention training tuples use
            acts = executed_action(spec, state, acts)
            nxt, _ = step(spec, state, acts)
            nxt_vec = state_vector(spec, nxt)
            grid[iy, ix] = reward_signal(
                disc, vec[None, :], acts[agent_index][None, :],
                nxt_vec[None, :], np.zeros(1),
            )[0]
    n = spec.n_agents
    positions = vec[: 2 * n].reshape(n, 2)
    offset = positions[agent_index] - positions.mean(axis=0)
    best = np.unravel_index(np.argmax(grid), grid.shape)
    best_action = np.array([axis[best[1]], axis[best[0]]])
    return {
        "axis": axis,
        "grid": grid,
        "best_action": best_action,
        "offset_from_centroid": offset,
        "inner_product": float(np.dot(best_action, offset)),
    }


def reward_map(cfg: ExperimentConfig, seed, agent_index, grid_res, state_seed=0):
    if cfg.variant != "airl":
        raise HarnessError(
            "reward maps need the decomposed discriminator (ma-airl); the "
            "direct classifier has no action-conditioned reward to plot"
        )
    spec = make_spec(cfg.env, cfg.n_agents)
    if not 0 <= agent_index < spec.n_agents:
        raise HarnessError(f"agent_index must be in [0, {spec.n_agents})")
    directory = run_dir(cfg)
    policy, discs = load_checkpoint(checkpoint_path(directory, seed), cfg, spec)
    state = reset(spec, np.random.default_rng(state_seed))
    return probe_reward_map(spec, policy, discs[agent_index], agent_index,
                            grid_res, state)


def save_reward_map(result, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("reward-map v1\n")
        fh.write(" ".join(repr(float(a)) for a in result["axis"]) + "\n")
        for row in result["grid"]:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write(
            "best_action "
            + " ".join(repr(float(v)) for v in result["best_action"]) + "\n"
        )
        fh.write(
            "offset "
            + " ".join(repr(float(v)) for v in result["offset_from_centroid"]) + "\n"
        )


def plot_reward_map(result, path):
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4))
    extent = [result["axis"][0], result["axis"][-1]] * 2
    im = ax.imshow(result["grid"], origin="lower", extent=extent, aspect="equal")
    ax.plot(*result["best_action"], "w*", markersize=12)
    ax.set_xlabel("a_x")
    ax.set_ylabel("a_y")
    fig.colorbar(im, ax=ax, label="recovered reward")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def plot_metrics(metrics_file, path):
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    rows = read_metrics(metrics_file)
    seeds = sorted({int(r["seed"]) for r in rows})
    has_phi = any(r["order_param"] != "" for r in rows)
    fig, axes = plt.subplots(1, 2 if has_phi else 1, figsize=(9 if has_phi else 5, 3.5))
    axes = np.atleast_1d(axes)
    for seed in seeds:
        mine = sorted((r for r in rows if int(r["seed"]) == seed),
                      key=lambda r: int(r["update"]))
        ups = [int(r["update"]) for r in mine]
        axes[0].plot(ups, [float(r["true_return"]) for r in mine], label=f"seed {seed}")
        if has_phi:
            axes[1].plot(ups, [float(r["order_param"]) for r in mine if r["order_param"] != ""])
    axes[0].set_xlabel("update")
    axes[0].set_ylabel("episode true return")
    axes[0].legend(fontsize=7)
    if has_phi:
        axes[1].set_xlabel("update")
        axes[1].set_ylabel("order parameter")
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)


def verify_record(directory):
    """Recompute the summary from the CSV and compare against summary.json."""
    cfg = load_config(os.path.join(directory, "config.txt"))
    with open(os.path.join(directory, "summary.json"), "r", encoding="utf-8") as fh:
        stored = json.load(fh)
    rows = read_metrics(os.path.join(directory, "metrics.csv"))
    if not rows:
        return stored.get("n_rows") == 0
    fresh = compute_summary(rows, cfg.seeds)

    def close(a, b):
        if isinstance(a, dict):
            return set(a) == set(b) and all(close(a[k], b[k]) for k in a)
        if isinstance(a, float) and isinstance(b, (int, float)):
            return abs(a - b) <= 1e-9
        return a == b

    return close(fresh, stored)


# -- CLI --------------------------------------------------------------------


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return apply_overrides(cfg, args.set or [])


def cmd_gen_experts(args):
    cfg = _config_from_args(args)
    spec = make_spec(cfg.env, cfg.n_agents)
    store = collect_store(
        spec, cfg.n_demos, cfg.expert_seed, group_n=cfg.group_order
    )
    path = demo_path(cfg)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    save_demos(path, store)
    print(f"wrote {len(store)} expert tuples to {path}")
    return 0


def cmd_augment(args):
    cfg = _config_from_args(args)
    src = demo_path(cfg)
    store = load_demos(src)
    out = augment(store, elements(cfg.group_order))
    dst = args.out or src.replace(".bin", "_aug.bin")
    save_demos(dst, out)
    print(f"wrote {len(out)} tuples ({len(store)} x {2 * cfg.group_order}) to {dst}")
    return 0


def cmd_train(args):
    cfg = _config_from_args(args)
    summary = run_training(cfg)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args):
    cfg = _config_from_args(args)
    out = evaluate_run(cfg, episodes=args.episodes)
    directory = run_dir(cfg)
    eval_file = os.path.join(directory, "eval.csv")
    is_new = not os.path.exists(eval_file)
    with open(eval_file, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if is_new:
            writer.writerow(["timestamp", "episodes", "mean", "std"])
        writer.writerow(
            [0.0 if cfg.deterministic_time else time.time(),
             out["episodes"], out["mean"], out["std"]]
        )
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_verify_theory(args):
    report = verify_theory(
        n_instances=args.instances, seed=args.seed, group=args.group
    )
    path = resolve_path(args.report)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    write_theory_report(report, path)
    print(f"wrote {path}; passed={report['passed']} "
          f"min_delta={report['prop2_min_delta']:.3e}")
    return 0 if report["passed"] else 2


def cmd_reward_map(args):
    cfg = _config_from_args(args)
    result = reward_map(
        cfg, args.seed, args.agent, args.grid_res, state_seed=args.state_seed
    )
    directory = run_dir(cfg)
    stem = os.path.join(directory, f"reward_map_seed{args.seed}_agent{args.agent}")
    save_reward_map(result, stem + ".txt")
    plot_reward_map(result, stem + ".svg")
    print(f"wrote {stem}.txt and .svg; "
          f"best action {result['best_action']} inner {result['inner_product']:.4f}")
    return 0


def cmd_plot(args):
    cfg = _config_from_args(args)
    directory = run_dir(cfg)
    out = os.path.join(directory, "metrics.svg")
    plot_metrics(os.path.join(directory, "metrics.csv"), out)
    print(f"wrote {out}")
    return 0


def cmd_verify_record(args):
    cfg = _config_from_args(args)
    ok = verify_record(run_dir(cfg))
    print("record consistent" if ok else "summary does not match rows")
    return 0 if ok else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="symirl",
        description="symmetry-guided adversarial imitation experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file path")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")

    p = sub.add_parser("gen-experts", help="write a scripted-expert demo file")
    common(p)
    p.set_defaults(fn=cmd_gen_experts)

    p = sub.add_parser("augment", help="materialize the dihedral orbit of a demo file")
    common(p)
    p.add_argument("--out", help="destination file")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("train", help="run the alternating training loop")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="deterministic-policy evaluation of checkpoints")
    common(p)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify-theory", help="run the tabular reward-set checks")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", choices=("auto", "d2", "d4", "trivial"), default="auto")
    p.add_argument("--report", default="theory_report.txt")
    p.set_defaults(fn=cmd_verify_theory)

    p = sub.add_parser("reward-map", help="grid the recovered reward over actions")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--grid-res", type=int, default=21)
    p.add_argument("--state-seed", type=int, default=0)
    p.set_defaults(fn=cmd_reward_map)

    p = sub.add_parser("plot", help="render metric curves from a run's CSV")
    common(p)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("verify-record", help="check a summary against its rows")
    common(p)
    p.set_defaults(fn=cmd_verify_record)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
