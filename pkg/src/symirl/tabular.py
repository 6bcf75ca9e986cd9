"""Finite Markov games without reward: feasible-reward sets and error bounds.

The workbench side of the package.  Rewards making a fixed expert joint
policy optimal are constructed in closed form from a nonnegative slack table
zeta and a value profile V:

    r(s,a) = -zeta(s,a) * 1{pi_E(a|s) = 0} + V(s) - gamma * sum_s' P(s'|s,a) V(s')

and the construction is invertible (take V = V^pi_E, zeta = V - Q), which
gives both a soundness and a completeness check.  On top sit empirical
estimates from demonstration triples, the elementwise error bound between a
feasible reward and its empirical counterpart, and a brute-force verifier
showing group-augmented demonstrations never loosen that bound.

Joint actions use mixed-radix indices with agent 0 most significant
(numpy C-order ravel of the per-agent action tuple).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .group import GroupElement, compose, elements, identity, inverse

_ROW_TOL = 1e-12


class TabularError(ValueError):
    """Malformed game, policy, or parameter tables."""


class EstimationError(ValueError):
    """Raised when empirical estimation is impossible (empty dataset)."""


class SymmetryError(ValueError):
    """Raised when a claimed group invariance fails; message names the witness."""


class FormatErrorText(ValueError):
    """Malformed plain-text game or demonstration file."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration ran out of budget; carries the last residual."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"policy evaluation residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


def encode_joint(actions, action_counts) -> int:
    """Mixed-radix joint action index, agent 0 most significant."""
    return int(np.ravel_multi_index(tuple(int(a) for a in actions), tuple(action_counts)))


def decode_joint(index, action_counts):
    """Inverse of encode_joint, returns one action index per agent."""
    return tuple(int(a) for a in np.unravel_index(int(index), tuple(action_counts)))


@dataclass
class TabularMG:
    """Markov game without reward: states, per-agent actions, transitions."""

    action_counts: tuple
    transition: np.ndarray  # (n_states, n_joint, n_states)
    gamma: float

    def __post_init__(self):
        self.action_counts = tuple(int(c) for c in self.action_counts)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        if any(c < 1 for c in self.action_counts):
            raise TabularError("every agent needs at least one action")
        n_joint = int(np.prod(self.action_counts))
        if self.transition.ndim != 3 or self.transition.shape[1] != n_joint:
            raise TabularError(
                f"transition shape {self.transition.shape} does not match joint"
                f" action count {n_joint}"
            )
        if self.transition.shape[0] != self.transition.shape[2]:
            raise TabularError("transition must map states to states")
        if np.any(self.transition < -_ROW_TOL):
            raise TabularError("negative transition probability")
        sums = self.transition.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > _ROW_TOL:
            raise TabularError("transition rows must sum to 1")
        if not 0.0 <= self.gamma < 1.0:
            raise TabularError(f"gamma must be in [0,1), got {self.gamma}")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_agents(self) -> int:
        return len(self.action_counts)

    @property
    def n_joint(self) -> int:
        return self.transition.shape[1]


@dataclass
class JointPolicy:
    """Per-agent probability tables; the joint policy is their product."""

    tables: list  # agent i -> (n_states, action_counts[i])

    def __post_init__(self):
        self.tables = [np.asarray(t, dtype=np.float64) for t in self.tables]
        for i, t in enumerate(self.tables):
            if t.ndim != 2:
                raise TabularError(f"policy table {i} must be 2-D")
            if np.any(t < -_ROW_TOL):
                raise TabularError(f"negative probability in policy table {i}")
            if np.max(np.abs(t.sum(axis=1) - 1.0)) > _ROW_TOL:
                raise TabularError(f"policy table {i} rows must sum to 1")

    def joint_table(self) -> np.ndarray:
        """Dense (n_states, n_joint) product over agents, C-order joint index."""
        out = self.tables[0]
        for t in self.tables[1:]:
            out = out[:, :, None] * t[:, None, :]
            out = out.reshape(out.shape[0], -1)
        return out


@dataclass
class FeasibleRewardParams:
    """The (zeta, V) pair parameterizing one member of the feasible reward set."""

    zeta: np.ndarray  # (n_states, n_joint), >= 0
    V: np.ndarray  # (n_states,)

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if np.any(self.zeta < 0.0):
            raise TabularError("zeta must be nonnegative everywhere")


def policy_evaluation(mg: TabularMG, reward, pi: JointPolicy, tol=1e-10, max_iter=100_000):
    """Fixed-point Q and V of pi for the given reward table.

    Iterates V <- r_pi + gamma * P_pi V to sup-norm residual <= tol, then
    Q = r + gamma * P V.  Raises ConvergenceError if the cap is hit.
    """
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (mg.n_states, mg.n_joint):
        raise TabularError(f"reward shape {reward.shape} does not match the game")
    if not np.all(np.isfinite(reward)):
        raise TabularError("reward must be finite")
    joint = pi.joint_table()
    if joint.shape != reward.shape:
        raise TabularError("policy does not match the game shape")
    r_pi = (joint * reward).sum(axis=1)
    p_pi = np.einsum("sa,sat->st", joint, mg.transition)
    v = np.zeros(mg.n_states)
    for it in range(max_iter):
        v_next = r_pi + mg.gamma * (p_pi @ v)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= tol:
            q = reward + mg.gamma * np.einsum("sat,t->sa", mg.transition, v)
            return q, v
    raise ConvergenceError(residual, max_iter)


def is_optimal(mg: TabularMG, reward, pi_E: JointPolicy, tol=1e-8) -> bool:
    """Whether pi_E is optimal for reward: advantages zero on the support of
    pi_E and nonpositive off it, both within tol."""
    q, v = policy_evaluation(mg, reward, pi_E, tol=min(tol * 1e-2, 1e-10))
    adv = q - v[:, None]
    support = pi_E.joint_table() > 0.0
    if np.any(np.abs(adv[support]) > tol):
        return False
    if np.any(adv[~support] > tol):
        return False
    return True


def build_feasible_reward(mg: TabularMG, pi_E: JointPolicy, params: FeasibleRewardParams):
    """Closed-form member of the feasible set for pi_E.

    The support indicator tests the supplied expert table for exact zeros:
    the table is given, not estimated, so no tolerance is involved.
    """
    if params.zeta.shape != (mg.n_states, mg.n_joint):
        raise TabularError("zeta shape does not match the game")
    if params.V.shape != (mg.n_states,):
        raise TabularError("V shape does not match the game")
    off_support = pi_E.joint_table() == 0.0
    shaped = params.V[:, None] - mg.gamma * np.einsum("sat,t->sa", mg.transition, params.V)
    return -params.zeta * off_support + shaped


def recover_feasible_params(mg: TabularMG, reward, pi_E: JointPolicy):
    """Invert build_feasible_reward for a reward that makes pi_E optimal.

    Takes V = V^pi_E and zeta = V - Q on the off-support entries (clamped at
    zero).  Returns the parameters and the sup-norm reconstruction residual;
    the residual is small iff the reward was feasible.
    """
    q, v = policy_evaluation(mg, reward, pi_E)
    off_support = pi_E.joint_table() == 0.0
    zeta = np.where(off_support, np.maximum(v[:, None] - q, 0.0), 0.0)
    params = FeasibleRewardParams(zeta, v)
    residual = float(np.max(np.abs(build_feasible_reward(mg, pi_E, params) - reward)))
    return params, residual


@dataclass
class DemoDataset:
    """Transition triples (s, joint_a, s') with derived count tables."""

    triples: np.ndarray  # (M, 3) int64
    n_states: int
    action_counts: tuple

    def __post_init__(self):
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        self.action_counts = tuple(int(c) for c in self.action_counts)
        n_joint = int(np.prod(self.action_counts))
        if self.triples.size:
            if self.triples.min() < 0:
                raise TabularError("negative index in demonstration triple")
            if self.triples[:, [0, 2]].max() >= self.n_states:
                raise TabularError("state index out of range in demonstrations")
            if self.triples[:, 1].max() >= n_joint:
                raise TabularError("joint action index out of range in demonstrations")
        self.counts_sas = np.zeros((self.n_states, n_joint, self.n_states), dtype=np.int64)
        np.add.at(self.counts_sas, (self.triples[:, 0], self.triples[:, 1], self.triples[:, 2]), 1)
        self.counts_sa = self.counts_sas.sum(axis=2)
        self.counts_s = self.counts_sa.sum(axis=1)

    def __len__(self):
        return self.triples.shape[0]


def sample_demos(mg: TabularMG, pi: JointPolicy, m: int, rng) -> DemoDataset:
    """m i.i.d. triples: s uniform, a ~ pi(.|s), s' ~ P(.|s,a)."""
    joint = pi.joint_table()
    states = rng.integers(mg.n_states, size=m)
    triples = np.empty((m, 3), dtype=np.int64)
    for j, s in enumerate(states):
        a = rng.choice(mg.n_joint, p=joint[s])
        s2 = rng.choice(mg.n_states, p=mg.transition[s, a])
        triples[j] = (s, a, s2)
    return DemoDataset(triples, mg.n_states, mg.action_counts)


@dataclass
class EmpiricalEstimate:
    """Count-ratio transition and policy estimates plus visitation masks.

    Unvisited (s,a) transition rows are undefined: visited_sa is False there
    and the row is left at zero, never to be read as a distribution.
    """

    p_hat: np.ndarray
    pi_hat: np.ndarray  # joint table (n_states, n_joint)
    visited_sa: np.ndarray  # bool (n_states, n_joint)
    visited_s: np.ndarray  # bool (n_states,)


def estimate_empirical(demos: DemoDataset) -> EmpiricalEstimate:
    if len(demos) == 0:
        raise EstimationError("cannot estimate from an empty dataset")
    visited_sa = demos.counts_sa > 0
    visited_s = demos.counts_s > 0
    denom = np.where(visited_sa, demos.counts_sa, 1)
    p_hat = demos.counts_sas / denom[:, :, None]
    p_hat[~visited_sa] = 0.0
    pi_hat = demos.counts_sa / np.where(visited_s, demos.counts_s, 1)[:, None]
    pi_hat[~visited_s] = 0.0
    return EmpiricalEstimate(p_hat, pi_hat, visited_sa, visited_s)


@dataclass
class GroupActionOnMG:
    """Permutation action of a finite element list on states and joint actions.

    per_agent_perms[g][i] permutes agent i's actions; the joint permutation
    is their mixed-radix product.  Element 0 must be the identity.
    """

    group_elements: list  # GroupElement, closed under composition
    state_perms: np.ndarray  # (n_elements, n_states) int
    per_agent_perms: list  # g -> list of per-agent permutation arrays
    action_counts: tuple
    action_perms: np.ndarray = field(init=False)  # (n_elements, n_joint)

    def __post_init__(self):
        self.state_perms = np.asarray(self.state_perms, dtype=np.int64)
        self.action_counts = tuple(int(c) for c in self.action_counts)
        n_joint = int(np.prod(self.action_counts))
        joint_perms = np.empty((len(self.group_elements), n_joint), dtype=np.int64)
        for gi, agent_perms in enumerate(self.per_agent_perms):
            grids = np.meshgrid(*[np.asarray(p) for p in agent_perms], indexing="ij")
            joint_perms[gi] = np.ravel_multi_index(
                tuple(g.reshape(-1) for g in grids), self.action_counts
            )
        self.action_perms = joint_perms
        self._validate()

    def _validate(self):
        els = self.group_elements
        if not els or els[0] != identity(els[0].n):
            raise TabularError("element 0 must be the group identity")
        index = {g: i for i, g in enumerate(els)}
        n_states = self.state_perms.shape[1]
        for gi, g in enumerate(els):
            if sorted(self.state_perms[gi]) != list(range(n_states)):
                raise TabularError(f"state map for {g.token} is not a permutation")
            if sorted(self.action_perms[gi]) != list(range(self.action_perms.shape[1])):
                raise TabularError(f"action map for {g.token} is not a permutation")
        if np.any(self.state_perms[0] != np.arange(n_states)):
            raise TabularError("identity element must act as the identity on states")
        for gi, g in enumerate(els):
            for hi, h in enumerate(els):
                gh = compose(g, h)
                if gh not in index:
                    raise TabularError("element list is not closed under composition")
                ki = index[gh]
                # acting by gh equals acting by h then by g
                if np.any(self.state_perms[ki] != self.state_perms[gi][self.state_perms[hi]]):
                    raise TabularError(
                        f"state maps break the composition rule at ({g.token},{h.token})"
                    )
                if np.any(self.action_perms[ki] != self.action_perms[gi][self.action_perms[hi]]):
                    raise TabularError(
                        f"action maps break the composition rule at ({g.token},{h.token})"
                    )

    @property
    def n_elements(self) -> int:
        return len(self.group_elements)

    def element_index(self, g: GroupElement) -> int:
        return self.group_elements.index(g)


def trivial_action(n_states, action_counts) -> GroupActionOnMG:
    """The identity-only action: augmentation with it is a no-op."""
    e = identity(1)
    return GroupActionOnMG(
        [e],
        np.arange(n_states, dtype=np.int64)[None, :],
        [[np.arange(c, dtype=np.int64) for c in action_counts]],
        tuple(action_counts),
    )


def _vertex_map(g: GroupElement, n: int) -> np.ndarray:
    """Action of g on the n cyclic vertex labels: rotation shifts, reflection
    negates (then shifts)."""
    v = np.arange(n, dtype=np.int64)
    if g.reflected:
        return (-v - g.rotation_index) % n
    return (v + g.rotation_index) % n


def vertex_action(n: int, n_agents: int) -> GroupActionOnMG:
    """Full dihedral action on n vertex-labeled states, each agent picking a
    vertex-labeled action transformed the same way."""
    els = elements(n)
    state_perms = np.stack([_vertex_map(g, n) for g in els])
    per_agent = [[_vertex_map(g, n) for _ in range(n_agents)] for g in els]
    return GroupActionOnMG(els, state_perms, per_agent, (n,) * n_agents)


def make_symmetric_instance(action: GroupActionOnMG, rng, gamma=0.9):
    """Random game and expert policy made exactly invariant by orbit averaging."""
    n_states = action.state_perms.shape[1]
    n_joint = action.action_perms.shape[1]
    raw_p = rng.dirichlet(np.ones(n_states), size=(n_states, n_joint))
    p = np.zeros_like(raw_p)
    for gi in range(action.n_elements):
        sp, ap = action.state_perms[gi], action.action_perms[gi]
        p += raw_p[np.ix_(sp, ap, sp)]
    p /= action.n_elements
    tables = []
    for i, c in enumerate(action.action_counts):
        raw = rng.dirichlet(np.ones(c), size=n_states)
        t = np.zeros_like(raw)
        for gi in range(action.n_elements):
            sp = action.state_perms[gi]
            api = np.asarray(action.per_agent_perms[gi][i])
            t += raw[np.ix_(sp, api)]
        t /= action.n_elements
        tables.append(t)
    return TabularMG(action.action_counts, p, gamma), JointPolicy(tables)


def find_invariance_violation(mg: TabularMG, pi: JointPolicy, action: GroupActionOnMG, tol=1e-12):
    """First witness that the game or policy is not invariant, else None."""
    joint = pi.joint_table()
    for gi, g in enumerate(action.group_elements):
        sp, ap = action.state_perms[gi], action.action_perms[gi]
        diff = np.abs(mg.transition[np.ix_(sp, ap, sp)] - mg.transition)
        if diff.max() > tol:
            s, a, s2 = np.unravel_index(int(diff.argmax()), diff.shape)
            return ("transition", g.token, int(s), int(a), int(s2))
        pdiff = np.abs(joint[np.ix_(sp, ap)] - joint)
        if pdiff.max() > tol:
            s, a = np.unravel_index(int(pdiff.argmax()), pdiff.shape)
            return ("policy", g.token, int(s), int(a), None)
    return None


def check_g_invariance(mg: TabularMG, pi: JointPolicy, action: GroupActionOnMG, tol=1e-12) -> bool:
    """True iff transitions and the joint policy commute with every element."""
    return find_invariance_violation(mg, pi, action, tol) is None


def augment_demos(demos: DemoDataset, action: GroupActionOnMG) -> DemoDataset:
    """Orbit of every triple under every element; size multiplies by the
    element count, duplicates kept (they carry count weight)."""
    if demos.action_counts != action.action_counts:
        raise TabularError("demonstrations and group action disagree on action spaces")
    blocks = []
    for gi in range(action.n_elements):
        sp, ap = action.state_perms[gi], action.action_perms[gi]
        t = demos.triples
        blocks.append(np.column_stack([sp[t[:, 0]], ap[t[:, 1]], sp[t[:, 2]]]))
    return DemoDataset(np.concatenate(blocks, axis=0), demos.n_states, demos.action_counts)


def error_bound(mg_true: TabularMG, pi_E_true: JointPolicy, est: EmpiricalEstimate,
                params: FeasibleRewardParams):
    """Elementwise upper bound on |r - r_hat| over matching feasible pairs.

    Two terms: the zeta slack wherever the empirical support wrongly includes
    an off-expert action, plus gamma times the V-weighted transition
    estimation error.  Unvisited (s,a) rows have no estimate, so each
    |P - P_hat| factor is replaced by its worst case 1.
    """
    off_support = pi_E_true.joint_table() == 0.0
    term1 = params.zeta * off_support * (est.pi_hat > 0.0)
    absv = np.abs(params.V)
    term2_seen = mg_true.gamma * np.einsum(
        "sat,t->sa", np.abs(mg_true.transition - est.p_hat), absv
    )
    term2_unseen = mg_true.gamma * absv.sum()
    term2 = np.where(est.visited_sa, term2_seen, term2_unseen)
    return term1 + term2


def concentration_bound(demos: DemoDataset, mg: TabularMG, pi_E: JointPolicy,
                        params: FeasibleRewardParams, const=1.0):
    """Worst-case form of the bound with the transition error replaced by its
    visitation-count concentration envelope min(1, const/sqrt(count)).

    This is the convention the augmentation comparison uses: the envelope
    depends on the dataset only through the counts, and pooled orbit counts
    can only grow, so augmented bounds can only shrink.
    """
    off_support = pi_E.joint_table() == 0.0
    counts = demos.counts_sa
    pi_hat_pos = counts > 0
    term1 = params.zeta * off_support * pi_hat_pos
    envelope = np.ones_like(counts, dtype=np.float64)
    seen = counts > 0
    envelope[seen] = np.minimum(1.0, const / np.sqrt(counts[seen]))
    term2 = mg.gamma * np.abs(params.V).sum() * envelope
    return term1 + term2


@dataclass
class Prop2Record:
    """One (seed, sample size) cell of the augmentation comparison."""

    seed: int
    sample_size: int
    min_delta: float
    max_delta: float
    mean_delta: float
    n_cells: int
    n_negative: int


@dataclass
class Prop2Report:
    """Aggregate of all cells; passed means no delta fell below -1e-12."""

    records: list
    min_delta: float
    passed: bool

    def row_lines(self):
        yield "seed sample_size min_delta max_delta mean_delta cells negative"
        for r in self.records:
            yield (
                f"{r.seed} {r.sample_size} {r.min_delta:.6e} {r.max_delta:.6e}"
                f" {r.mean_delta:.6e} {r.n_cells} {r.n_negative}"
            )


def verify_prop2(mg: TabularMG, pi_E: JointPolicy, action: GroupActionOnMG,
                 sample_sizes, seeds, const=1.0, tol=-1e-12) -> Prop2Report:
    """Compare plain and augmented worst-case bounds over seeded datasets.

    Per (seed, sample size): sample demos from pi_E, draw one shared
    (zeta, V), evaluate the concentration bound on the plain and the
    orbit-augmented counts, record delta = plain - augmented elementwise.
    The invariance of (mg, pi_E) under the action is checked first.
    """
    witness = find_invariance_violation(mg, pi_E, action)
    if witness is not None:
        kind, token, s, a, s2 = witness
        where = f"(s={s}, a={a}" + (f", s'={s2})" if s2 is not None else ")")
        raise SymmetryError(f"{kind} not invariant under {token} at {where}")
    records = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        zeta = rng.uniform(0.0, 2.0, size=(mg.n_states, mg.n_joint))
        v = rng.normal(size=mg.n_states)
        params = FeasibleRewardParams(zeta, v)
        for m in sample_sizes:
            demos = sample_demos(mg, pi_E, m, rng)
            plain = concentration_bound(demos, mg, pi_E, params, const)
            aug = concentration_bound(augment_demos(demos, action), mg, pi_E, params, const)
            delta = plain - aug
            records.append(
                Prop2Record(
                    seed=int(seed),
                    sample_size=int(m),
                    min_delta=float(delta.min()),
                    max_delta=float(delta.max()),
                    mean_delta=float(delta.mean()),
                    n_cells=int(delta.size),
                    n_negative=int(np.sum(delta < tol)),
                )
            )
    min_delta = min(r.min_delta for r in records)
    return Prop2Report(records, min_delta, all(r.n_negative == 0 for r in records))


def random_mg(rng, n_states, action_counts, gamma=0.9) -> TabularMG:
    p = rng.dirichlet(np.ones(n_states), size=(n_states, int(np.prod(action_counts))))
    return TabularMG(tuple(action_counts), p, gamma)


def random_policy(rng, n_states, action_counts, zero_prob=0.35) -> JointPolicy:
    """Random per-agent tables; some entries forced to exact zero so the
    off-support indicator has something to bite on."""
    tables = []
    for c in action_counts:
        t = rng.dirichlet(np.ones(c), size=n_states)
        if c > 1:
            kill = rng.random(t.shape) < zero_prob
            keep = np.argmax(t, axis=1)
            kill[np.arange(n_states), keep] = False
            t[kill] = 0.0
        t /= t.sum(axis=1, keepdims=True)
        tables.append(t)
    return JointPolicy(tables)


def random_feasible_params(rng, n_states, n_joint) -> FeasibleRewardParams:
    return FeasibleRewardParams(
        rng.uniform(0.0, 2.0, size=(n_states, n_joint)), rng.normal(size=n_states)
    )


# ---------------------------------------------------------------------------
# plain-text serialization, bit-exact via float hex


def _hex_row(values):
    return " ".join(float(x).hex() for x in values)


def _parse_hex_row(line):
    return np.array([float.fromhex(tok) for tok in line.split()], dtype=np.float64)


def save_mg(path, mg: TabularMG):
    lines = ["tabular-mg v1"]
    lines.append(f"gamma {float(mg.gamma).hex()}")
    lines.append(f"states {mg.n_states}")
    lines.append("actions " + " ".join(str(c) for c in mg.action_counts))
    for s in range(mg.n_states):
        for a in range(mg.n_joint):
            lines.append(f"P {s} {a} " + _hex_row(mg.transition[s, a]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mg(path) -> TabularMG:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "tabular-mg v1":
        raise FormatErrorText(f"not a tabular-mg v1 file: {path}")
    gamma = float.fromhex(lines[1].split()[1])
    n_states = int(lines[2].split()[1])
    action_counts = tuple(int(t) for t in lines[3].split()[1:])
    n_joint = int(np.prod(action_counts))
    p = np.zeros((n_states, n_joint, n_states))
    for ln in lines[4:]:
        toks = ln.split(maxsplit=3)
        if toks[0] != "P":
            raise FormatErrorText(f"unexpected line in {path}: {ln[:40]}")
        p[int(toks[1]), int(toks[2])] = _parse_hex_row(toks[3])
    return TabularMG(action_counts, p, gamma)


def save_demos(path, demos: DemoDataset):
    lines = ["tabular-demos v1"]
    lines.append(f"states {demos.n_states}")
    lines.append("actions " + " ".join(str(c) for c in demos.action_counts))
    lines.append(f"count {len(demos)}")
    for s, a, s2 in demos.triples:
        lines.append(f"{s} {a} {s2}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_demos(path) -> DemoDataset:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != "tabular-demos v1":
        raise FormatErrorText(f"not a tabular-demos v1 file: {path}")
    n_states = int(lines[1].split()[1])
    action_counts = tuple(int(t) for t in lines[2].split()[1:])
    m = int(lines[3].split()[1])
    triples = np.zeros((0, 3), dtype=np.int64)
    if m:
        triples = np.array(
            [[int(t) for t in ln.split()] for ln in lines[4 : 4 + m]], dtype=np.int64
        )
    if triples.shape != (m, 3):
        raise FormatErrorText(f"triple count mismatch in {path}")
    return DemoDataset(triples, n_states, action_counts)
