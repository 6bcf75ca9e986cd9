"""Feasible rewards, empirical estimates, and the augmentation bound comparison."""

import numpy as np
import pytest

from symirl.group import elements, identity
from symirl.tabular import (
    ConvergenceError,
    DemoDataset,
    EstimationError,
    FeasibleRewardParams,
    FormatErrorText,
    JointPolicy,
    SymmetryError,
    TabularError,
    TabularMG,
    augment_demos,
    build_feasible_reward,
    check_g_invariance,
    concentration_bound,
    decode_joint,
    encode_joint,
    error_bound,
    estimate_empirical,
    is_optimal,
    load_demos,
    load_mg,
    make_symmetric_instance,
    policy_evaluation,
    random_feasible_params,
    random_mg,
    random_policy,
    recover_feasible_params,
    sample_demos,
    save_demos,
    save_mg,
    trivial_action,
    verify_prop2,
    vertex_action,
)


def dense_solve_oracle(mg, reward, pi):
    # direct (I - gamma P_pi)^-1 r_pi, no iteration shared with the library
    joint = pi.joint_table()
    r_pi = (joint * reward).sum(axis=1)
    p_pi = np.einsum("sa,sat->st", joint, mg.transition)
    v = np.linalg.solve(np.eye(mg.n_states) - mg.gamma * p_pi, r_pi)
    q = reward + mg.gamma * np.einsum("sat,t->sa", mg.transition, v)
    return q, v


def value_iteration_oracle(mg, reward, tol=1e-12):
    # optimal joint-control value, for cross-checking is_optimal verdicts
    v = np.zeros(mg.n_states)
    for _ in range(200_000):
        q = reward + mg.gamma * np.einsum("sat,t->sa", mg.transition, v)
        v_next = q.max(axis=1)
        if np.max(np.abs(v_next - v)) <= tol:
            return v_next
        v = v_next
    raise AssertionError("oracle did not converge")


def uniform_policy(n_states, action_counts):
    return JointPolicy([np.full((n_states, c), 1.0 / c) for c in action_counts])


def test_joint_encoding_round_trip_and_significance():
    counts = (3, 2, 4)
    seen = set()
    for a0 in range(3):
        for a1 in range(2):
            for a2 in range(4):
                idx = encode_joint((a0, a1, a2), counts)
                assert decode_joint(idx, counts) == (a0, a1, a2)
                seen.add(idx)
    assert seen == set(range(24))
    # agent 0 most significant: bumping a0 moves the index by 2*4
    assert encode_joint((1, 0, 0), counts) - encode_joint((0, 0, 0), counts) == 8


def test_mg_validation():
    p = np.full((2, 2, 2), 0.5)
    TabularMG((2,), p, 0.9)
    with pytest.raises(TabularError):
        TabularMG((2,), p, 1.0)
    bad = p.copy()
    bad[0, 0] = [0.6, 0.6]
    with pytest.raises(TabularError):
        TabularMG((2,), bad, 0.9)
    with pytest.raises(TabularError):
        JointPolicy([np.array([[0.7, 0.2]])])


def test_policy_evaluation_zero_reward():
    rng = np.random.default_rng(0)
    mg = random_mg(rng, 3, (2, 2))
    pi = uniform_policy(3, (2, 2))
    q, v = policy_evaluation(mg, np.zeros((3, 4)), pi)
    np.testing.assert_allclose(q, 0.0, atol=1e-12)
    np.testing.assert_allclose(v, 0.0, atol=1e-12)


def test_policy_evaluation_geometric_series():
    mg = TabularMG((1,), np.ones((1, 1, 1)), 0.5)
    pi = JointPolicy([np.ones((1, 1))])
    q, v = policy_evaluation(mg, np.ones((1, 1)), pi)
    assert abs(v[0] - 2.0) < 1e-9
    assert abs(q[0, 0] - 2.0) < 1e-9


def test_policy_evaluation_matches_dense_solve():
    rng = np.random.default_rng(1)
    for trial in range(20):
        mg = random_mg(rng, 4, (2, 3), gamma=0.9)
        pi = random_policy(rng, 4, (2, 3))
        reward = rng.normal(size=(4, 6))
        q, v = policy_evaluation(mg, reward, pi)
        q_ref, v_ref = dense_solve_oracle(mg, reward, pi)
        np.testing.assert_allclose(v, v_ref, atol=1e-9)
        np.testing.assert_allclose(q, q_ref, atol=1e-9)
        # V is the policy average of Q
        np.testing.assert_allclose(v, (pi.joint_table() * q).sum(axis=1), atol=1e-9)


def test_policy_evaluation_iteration_cap():
    rng = np.random.default_rng(2)
    mg = random_mg(rng, 3, (2,), gamma=0.99)
    pi = uniform_policy(3, (2,))
    with pytest.raises(ConvergenceError) as exc:
        policy_evaluation(mg, np.ones((3, 2)), pi, max_iter=5)
    assert exc.value.residual > 0


def test_policy_evaluation_rejects_bad_reward():
    rng = np.random.default_rng(3)
    mg = random_mg(rng, 3, (2,))
    pi = uniform_policy(3, (2,))
    with pytest.raises(TabularError):
        policy_evaluation(mg, np.ones((3, 3)), pi)
    with pytest.raises(TabularError):
        policy_evaluation(mg, np.full((3, 2), np.nan), pi)


def test_zero_reward_makes_every_policy_optimal():
    rng = np.random.default_rng(4)
    mg = random_mg(rng, 4, (2, 2))
    for _ in range(5):
        pi = random_policy(rng, 4, (2, 2))
        assert is_optimal(mg, np.zeros((4, 4)), pi)


def test_off_support_bonus_detected_as_suboptimal():
    # deterministic 2-state chain; expert always plays action 0, but action 1
    # at state 0 pays +1 and loops, so deviating is strictly better
    p = np.zeros((2, 2, 2))
    p[0, 0, 1] = 1.0
    p[0, 1, 0] = 1.0
    p[1, 0, 1] = 1.0
    p[1, 1, 1] = 1.0
    mg = TabularMG((2,), p, 0.9)
    pi_e = JointPolicy([np.array([[1.0, 0.0], [1.0, 0.0]])])
    reward = np.zeros((2, 2))
    reward[0, 1] = 1.0
    assert not is_optimal(mg, reward, pi_e)
    # the independent best-response oracle agrees there is a strictly better value
    v_star = value_iteration_oracle(mg, reward)
    _, v_e = policy_evaluation(mg, reward, pi_e)
    assert np.max(v_star - v_e) > 1e-3


def test_build_feasible_reward_trivial_cases():
    rng = np.random.default_rng(5)
    mg = random_mg(rng, 3, (2, 2))
    pi = random_policy(rng, 3, (2, 2))
    params = FeasibleRewardParams(np.zeros((3, 4)), np.zeros(3))
    np.testing.assert_array_equal(build_feasible_reward(mg, pi, params), np.zeros((3, 4)))
    with pytest.raises(TabularError):
        FeasibleRewardParams(-np.ones((3, 4)), np.zeros(3))


def test_shaping_only_reward_keeps_expert_optimal():
    rng = np.random.default_rng(6)
    for _ in range(10):
        mg = random_mg(rng, 4, (2, 2))
        pi = random_policy(rng, 4, (2, 2))
        params = FeasibleRewardParams(np.zeros((4, 4)), rng.normal(size=4))
        r = build_feasible_reward(mg, pi, params)
        assert is_optimal(mg, r, pi)


def test_constructed_rewards_are_sound():
    rng = np.random.default_rng(7)
    for _ in range(15):
        mg = random_mg(rng, 5, (2, 3), gamma=0.85)
        pi = random_policy(rng, 5, (2, 3))
        for _ in range(5):
            params = random_feasible_params(rng, 5, 6)
            r = build_feasible_reward(mg, pi, params)
            assert is_optimal(mg, r, pi)
            # cross-check with the best-response oracle: no strictly better value
            v_star = value_iteration_oracle(mg, r)
            _, v_e = policy_evaluation(mg, r, pi)
            assert np.max(np.abs(v_star - v_e)) < 1e-6


def test_recover_feasible_params_reconstructs():
    rng = np.random.default_rng(8)
    for _ in range(20):
        mg = random_mg(rng, 3, (2, 2), gamma=0.9)
        pi = random_policy(rng, 3, (2, 2))
        params = random_feasible_params(rng, 3, 4)
        r = build_feasible_reward(mg, pi, params)
        rec, residual = recover_feasible_params(mg, r, pi)
        assert residual <= 1e-8
        assert np.all(rec.zeta >= 0.0)
        # reconstruction reproduces the reward through the constructor too
        r2 = build_feasible_reward(mg, pi, rec)
        np.testing.assert_allclose(r2, r, atol=1e-8)


def test_recover_flags_infeasible_reward():
    rng = np.random.default_rng(9)
    mg = random_mg(rng, 3, (2,), gamma=0.9)
    pi = JointPolicy([np.tile([1.0, 0.0], (3, 1))])
    reward = np.zeros((3, 2))
    reward[:, 1] = 5.0  # off-support action strictly better
    assert not is_optimal(mg, reward, pi)
    _, residual = recover_feasible_params(mg, reward, pi)
    assert residual > 1e-3


def test_estimate_empirical_exact_frequencies():
    # dataset whose frequencies exactly match a rational transition table
    triples = []
    # state 0, action 0: goes to 0 once, to 1 once  -> [0.5, 0.5]
    triples += [(0, 0, 0), (0, 0, 1)]
    # state 0, action 1: always to 1
    triples += [(0, 1, 1), (0, 1, 1)]
    # state 1, action 0: 3 of 4 to 0
    triples += [(1, 0, 0), (1, 0, 0), (1, 0, 0), (1, 0, 1)]
    demos = DemoDataset(np.array(triples), 2, (2,))
    est = estimate_empirical(demos)
    np.testing.assert_array_equal(est.p_hat[0, 0], [0.5, 0.5])
    np.testing.assert_array_equal(est.p_hat[0, 1], [0.0, 1.0])
    np.testing.assert_array_equal(est.p_hat[1, 0], [0.75, 0.25])
    assert not est.visited_sa[1, 1]
    np.testing.assert_array_equal(est.p_hat[1, 1], [0.0, 0.0])
    np.testing.assert_allclose(est.pi_hat[0], [0.5, 0.5])
    np.testing.assert_allclose(est.pi_hat[1], [1.0, 0.0])


def test_estimate_empirical_single_tuple_and_empty():
    demos = DemoDataset(np.array([[0, 0, 1]]), 2, (2,))
    est = estimate_empirical(demos)
    assert est.p_hat[0, 0, 1] == 1.0
    with pytest.raises(EstimationError):
        estimate_empirical(DemoDataset(np.zeros((0, 3)), 2, (2,)))


def test_estimate_empirical_concentrates():
    rng = np.random.default_rng(10)
    mg = random_mg(rng, 3, (2,), gamma=0.9)
    pi = uniform_policy(3, (2,))
    demos = sample_demos(mg, pi, 10_000, rng)
    est = estimate_empirical(demos)
    assert est.visited_sa.all()
    assert np.max(np.abs(est.p_hat - mg.transition)) <= 0.05
    # defined rows are genuine distributions
    np.testing.assert_allclose(est.p_hat.sum(axis=2), 1.0, atol=1e-12)


def test_vertex_action_shapes_and_validation():
    act = vertex_action(4, 2)
    assert act.n_elements == 8
    assert act.state_perms.shape == (8, 4)
    assert act.action_perms.shape == (8, 16)
    act2 = trivial_action(5, (2, 3))
    assert act2.n_elements == 1
    np.testing.assert_array_equal(act2.state_perms[0], np.arange(5))
    bad_perms = act.state_perms.copy()
    bad_perms[3] = bad_perms[0]  # breaks the composition table
    with pytest.raises(TabularError):
        type(act)(act.group_elements, bad_perms, act.per_agent_perms, act.action_counts)


def test_symmetric_instance_is_invariant():
    rng = np.random.default_rng(11)
    for n in (2, 4):
        act = vertex_action(n, 2)
        mg, pi = make_symmetric_instance(act, rng, gamma=0.9)
        assert check_g_invariance(mg, pi, act)


def test_invariance_check_catches_perturbation():
    rng = np.random.default_rng(12)
    act = vertex_action(4, 1)
    mg, pi = make_symmetric_instance(act, rng)
    assert check_g_invariance(mg, pi, act)
    p = mg.transition.copy()
    p[1, 0] = np.roll(p[1, 0], 1)  # still a distribution, breaks symmetry
    mg_bad = TabularMG(mg.action_counts, p, mg.gamma)
    assert not check_g_invariance(mg_bad, pi, act)
    # identity-only action accepts anything
    assert check_g_invariance(mg_bad, pi, trivial_action(4, (4,)))


def test_augment_demos_cardinality_and_identity():
    rng = np.random.default_rng(13)
    act4 = vertex_action(4, 1)
    demos = DemoDataset(rng.integers(0, 4, size=(10, 3)), 4, (4,))
    out = augment_demos(demos, act4)
    assert len(out) == 80
    ident = augment_demos(demos, trivial_action(4, (4,)))
    np.testing.assert_array_equal(ident.triples, demos.triples)
    # first block is the identity copy
    np.testing.assert_array_equal(out.triples[:10], demos.triples)


def test_augmented_counts_are_exactly_symmetric():
    rng = np.random.default_rng(14)
    act = vertex_action(4, 2)
    mg, pi = make_symmetric_instance(act, rng)
    demos = sample_demos(mg, pi, 60, rng)
    aug = augment_demos(demos, act)
    for gi in range(act.n_elements):
        sp, ap = act.state_perms[gi], act.action_perms[gi]
        np.testing.assert_array_equal(aug.counts_sa[np.ix_(sp, ap)], aug.counts_sa)
        np.testing.assert_array_equal(
            aug.counts_sas[np.ix_(sp, ap, sp)], aug.counts_sas
        )
    # hence the augmented policy estimate is exactly invariant where defined
    est = estimate_empirical(aug)
    for gi in range(act.n_elements):
        sp, ap = act.state_perms[gi], act.action_perms[gi]
        np.testing.assert_array_equal(est.pi_hat[np.ix_(sp, ap)], est.pi_hat)


def test_error_bound_reductions():
    rng = np.random.default_rng(15)
    mg = random_mg(rng, 3, (2, 2))
    pi = random_policy(rng, 3, (2, 2))
    params = random_feasible_params(rng, 3, 4)
    # exact empirical model: bound collapses to the zeta indicator term
    from symirl.tabular import EmpiricalEstimate

    exact = EmpiricalEstimate(
        mg.transition.copy(),
        pi.joint_table(),
        np.ones((3, 4), dtype=bool),
        np.ones(3, dtype=bool),
    )
    b = error_bound(mg, pi, exact, params)
    off = pi.joint_table() == 0.0
    np.testing.assert_allclose(b, params.zeta * off * (pi.joint_table() > 0), atol=1e-12)
    np.testing.assert_allclose(b, 0.0, atol=1e-12)  # indicators are disjoint
    # V = 0 kills the transition term entirely
    params0 = FeasibleRewardParams(params.zeta, np.zeros(3))
    demos = sample_demos(mg, pi, 30, rng)
    est = estimate_empirical(demos)
    b0 = error_bound(mg, pi, est, params0)
    np.testing.assert_allclose(b0, params.zeta * off * (est.pi_hat > 0), atol=1e-12)


def test_error_bound_dominates_constructive_pair():
    # |r - r_hat| for the adapted empirical reward never exceeds the bound
    rng = np.random.default_rng(16)
    for _ in range(20):
        mg = random_mg(rng, 4, (2, 2), gamma=0.9)
        pi = random_policy(rng, 4, (2, 2))
        params = random_feasible_params(rng, 4, 4)
        r = build_feasible_reward(mg, pi, params)
        demos = sample_demos(mg, pi, 40, rng)
        est = estimate_empirical(demos)
        # adapted counterpart: same V, zeta restricted to the true off-support,
        # empirical transitions (uniform placeholder where undefined)
        p_hat = est.p_hat.copy()
        p_hat[~est.visited_sa] = 1.0 / mg.n_states
        off_true = pi.joint_table() == 0.0
        off_hat = est.pi_hat == 0.0
        shaped = params.V[:, None] - mg.gamma * np.einsum("sat,t->sa", p_hat, params.V)
        r_hat = -(params.zeta * off_true) * off_hat + shaped
        bound = error_bound(mg, pi, est, params)
        assert np.all(np.abs(r - r_hat) <= bound + 1e-12)


def test_concentration_bound_unvisited_rows_saturate():
    rng = np.random.default_rng(17)
    mg = random_mg(rng, 3, (2,))
    pi = uniform_policy(3, (2,))
    params = FeasibleRewardParams(np.zeros((3, 2)), rng.normal(size=3))
    demos = DemoDataset(np.array([[0, 0, 1]]), 3, (2,))
    b = concentration_bound(demos, mg, pi, params)
    v1 = np.abs(params.V).sum()
    # the single visited cell has count 1 -> envelope min(1, 1/1) = 1 too
    np.testing.assert_allclose(b, mg.gamma * v1, atol=1e-12)
    demos4 = DemoDataset(np.array([[0, 0, 1]] * 4), 3, (2,))
    b4 = concentration_bound(demos4, mg, pi, params)
    assert abs(b4[0, 0] - mg.gamma * v1 * 0.5) < 1e-12


def test_verify_prop2_trivial_group_gives_zero_delta():
    rng = np.random.default_rng(18)
    mg = random_mg(rng, 4, (2, 2))
    pi = random_policy(rng, 4, (2, 2))
    report = verify_prop2(mg, pi, trivial_action(4, (2, 2)), [5, 20], [0, 1])
    assert report.passed
    assert report.min_delta == 0.0
    assert all(r.max_delta == 0.0 for r in report.records)


def test_verify_prop2_small_instance_exhaustive():
    rng = np.random.default_rng(19)
    act = vertex_action(2, 2)  # 4-element D_2 on 2 vertex states
    mg, pi = make_symmetric_instance(act, rng, gamma=0.9)
    report = verify_prop2(mg, pi, act, sample_sizes=[1, 2, 5, 50], seeds=range(25))
    assert report.passed
    assert report.min_delta >= -1e-12


def test_verify_prop2_rejects_broken_symmetry():
    rng = np.random.default_rng(20)
    act = vertex_action(4, 1)
    mg, pi = make_symmetric_instance(act, rng)
    p = mg.transition.copy()
    p[2, 1] = np.roll(p[2, 1], 1)
    mg_bad = TabularMG(mg.action_counts, p, mg.gamma)
    with pytest.raises(SymmetryError) as exc:
        verify_prop2(mg_bad, pi, act, [5], [0])
    assert "not invariant" in str(exc.value)


def test_augmented_counts_dominate_plain_counts():
    # the count monotonicity that drives the bound comparison
    rng = np.random.default_rng(21)
    act = vertex_action(4, 2)
    mg, pi = make_symmetric_instance(act, rng)
    demos = sample_demos(mg, pi, 25, rng)
    aug = augment_demos(demos, act)
    assert np.all(aug.counts_sa >= demos.counts_sa)


def test_mg_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(22)
    mg = random_mg(rng, 4, (2, 3), gamma=0.9375)
    path = tmp_path / "game.mg"
    save_mg(path, mg)
    back = load_mg(path)
    assert back.gamma == mg.gamma
    assert back.action_counts == mg.action_counts
    np.testing.assert_array_equal(back.transition, mg.transition)


def test_demos_round_trip_and_bad_header(tmp_path):
    rng = np.random.default_rng(23)
    demos = DemoDataset(rng.integers(0, 3, size=(12, 3)), 3, (3,))
    path = tmp_path / "demos.txt"
    save_demos(path, demos)
    back = load_demos(path)
    np.testing.assert_array_equal(back.triples, demos.triples)
    assert back.action_counts == demos.action_counts
    bad = tmp_path / "bad.txt"
    bad.write_text("something else\n")
    with pytest.raises(FormatErrorText):
        load_demos(bad)
    with pytest.raises(FormatErrorText):
        load_mg(bad)


def test_group_element_bookkeeping():
    act = vertex_action(3, 1)
    assert act.group_elements == elements(3)
    assert act.element_index(identity(3)) == 0
