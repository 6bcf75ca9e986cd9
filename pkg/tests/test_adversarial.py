"""Discriminator probabilities, loss algebra, and gradient checks."""

import numpy as np
import pytest

from symirl.adversarial import (
    Discriminator,
    DiscriminatorError,
    TransitionBatch,
    d_prob,
    init_discriminators,
    loss_plain,
    loss_sgf,
    loss_symmetric,
    reward_signal,
    softplus,
    transform_batch,
)
from symirl.group import StructuredVector, act, elements, identity, matrix, rotation

D = 8  # state width used throughout: 4 equivariant pairs
PAIRS = 4
N = 4  # agents


def make_batch(rng, b, with_log_pis=False):
    return TransitionBatch(
        rng.normal(size=(b, D)),
        rng.normal(size=(b, N, 2)),
        rng.normal(size=(b, D)),
        PAIRS,
        rng.normal(size=(b, N)) if with_log_pis else None,
    )


def zero_gail_discs(hidden=(8,)):
    rng = np.random.default_rng(0)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden)
    for disc in discs:
        for p in disc.params:
            p[...] = 0.0
    return discs


def test_gail_zero_net_probability_is_half():
    disc = zero_gail_discs()[0]
    rng = np.random.default_rng(1)
    p = d_prob(disc, rng.normal(size=(5, D)), rng.normal(size=(5, 2)), rng.normal(size=(5, D)))
    np.testing.assert_array_equal(p, np.full(5, 0.5))


def test_airl_probability_half_when_f_matches_log_pi():
    rng = np.random.default_rng(2)
    disc = Discriminator("airl", D, 0.9, rng, hidden=(8,))
    s = rng.normal(size=(6, D))
    a = rng.normal(size=(6, 2))
    s2 = rng.normal(size=(6, D))
    f = disc.u_values(s, a, s2, np.zeros(6))  # log_pi = 0 leaves u = f
    p = d_prob(disc, s, a, s2, log_pi=f)  # now log_pi equals f exactly
    np.testing.assert_allclose(p, 0.5, atol=1e-12)


def test_airl_log_ratio_identity():
    rng = np.random.default_rng(3)
    disc = Discriminator("airl", D, 0.95, rng, hidden=(8,))
    s = rng.normal(size=(10, D))
    a = rng.normal(size=(10, 2))
    s2 = rng.normal(size=(10, D))
    lp = rng.normal(size=10)
    p = d_prob(disc, s, a, s2, lp)
    u = disc.u_values(s, a, s2, lp)
    np.testing.assert_allclose(np.log(p) - np.log(1.0 - p), u, atol=1e-10)


def test_airl_requires_log_pi():
    disc = Discriminator("airl", D, 0.9, np.random.default_rng(4), hidden=(8,))
    with pytest.raises(DiscriminatorError):
        disc.u_values(np.zeros((2, D)), np.zeros((2, 2)), np.zeros((2, D)))


def test_loss_plain_half_probability_closed_form():
    # all-zero nets give D = 1/2 everywhere; at power-of-two batch sizes the
    # accumulation reproduces 2 N ln 2 bit-for-bit
    rng = np.random.default_rng(5)
    discs = zero_gail_discs()
    loss, _ = loss_plain(discs, make_batch(rng, 64), make_batch(rng, 64))
    assert loss == 2 * N * np.log(2.0)


def test_loss_plain_perfect_discriminator_vanishes():
    rng = np.random.default_rng(6)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=())
    for disc in discs:
        disc.net.weights[0][...] = 0.0
        disc.net.weights[0][0, 0] = 40.0  # logit = 40 * first state coordinate
        disc.net.biases[0][...] = 0.0
    expert = make_batch(rng, 8)
    gen = make_batch(rng, 8)
    expert.states[:, 0] = 1.0
    gen.states[:, 0] = -1.0
    loss, _ = loss_plain(discs, expert, gen)
    assert loss < 1e-12


def test_loss_plain_rejects_empty_and_missing_densities():
    rng = np.random.default_rng(7)
    discs = zero_gail_discs()
    empty = TransitionBatch(np.zeros((0, D)), np.zeros((0, N, 2)), np.zeros((0, D)), PAIRS)
    with pytest.raises(DiscriminatorError):
        loss_plain(discs, empty, make_batch(rng, 4))
    airl = init_discriminators("airl", N, D, 0.9, rng, hidden=(8,))
    with pytest.raises(DiscriminatorError):
        loss_plain(airl, make_batch(rng, 4), make_batch(rng, 4), rng.normal(size=(4, N)))
    with pytest.raises(DiscriminatorError):
        loss_plain(airl, make_batch(rng, 4, with_log_pis=True), make_batch(rng, 4))


def finite_difference_check(discs, loss_fn, h=1e-6, rel=1e-4):
    _, grads = loss_fn()
    for disc, disc_grads in zip(discs, grads):
        for p, g in zip(disc.params, disc_grads):
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            for idx in range(flat_p.size):
                orig = flat_p[idx]
                flat_p[idx] = orig + h
                up, _ = loss_fn()
                flat_p[idx] = orig - h
                down, _ = loss_fn()
                flat_p[idx] = orig
                fd = (up - down) / (2 * h)
                assert abs(fd - flat_g[idx]) <= rel * max(1.0, abs(fd))


def test_loss_plain_gradients_both_variants():
    rng = np.random.default_rng(8)
    expert = make_batch(rng, 5, with_log_pis=True)
    gen = make_batch(rng, 6)
    glp = rng.normal(size=(6, N))
    for variant in ("gail", "airl"):
        discs = init_discriminators(variant, N, D, 0.9, rng, hidden=(6,))
        finite_difference_check(
            discs, lambda: loss_plain(discs, expert, gen, glp)
        )


def test_symmetric_loss_identity_element_matches_plain():
    rng = np.random.default_rng(9)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=(8,))
    expert = make_batch(rng, 7)
    gen = make_batch(rng, 7)
    plain, pg = loss_plain(discs, expert, gen)
    sym, sg = loss_symmetric(discs, expert, gen, group_elements=[identity(4)],
                             g=identity(4))
    assert sym == plain
    for a, b in zip(pg, sg):
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def tuple_level_transform(batch, g):
    # independent path: transform each tuple through the structured action
    states = np.empty_like(batch.states)
    nexts = np.empty_like(batch.next_states)
    actions = np.empty_like(batch.actions)
    m = matrix(g)
    for j in range(len(batch)):
        states[j] = act(g, StructuredVector(batch.states[j])).equ
        nexts[j] = act(g, StructuredVector(batch.next_states[j])).equ
        for i in range(batch.actions.shape[1]):
            actions[j, i] = m @ batch.actions[j, i]
    return TransitionBatch(states, actions, nexts, batch.n_equ_pairs,
                           None if batch.log_pis is None else batch.log_pis)


def test_symmetric_loss_equals_plain_on_transformed_batch():
    rng = np.random.default_rng(10)
    for variant in ("gail", "airl"):
        discs = init_discriminators(variant, N, D, 0.9, rng, hidden=(8,))
        expert = make_batch(rng, 6, with_log_pis=True)
        gen = make_batch(rng, 5)
        glp = rng.normal(size=(5, N))
        for g in [rotation(4, 1), elements(4)[5], elements(4)[7]]:
            sym, _ = loss_symmetric(discs, expert, gen, glp,
                                    group_elements=elements(4), g=g)
            oracle, _ = loss_plain(discs, tuple_level_transform(expert, g),
                                   tuple_level_transform(gen, g), glp)
            assert abs(sym - oracle) <= 1e-12


def test_invariant_features_make_transform_free():
    # a discriminator whose inputs are squared block norms cannot see the
    # transformation at all, so both losses agree to the bit
    def invariants(s, a, s2):
        feats = [np.sum(s.reshape(len(s), -1, 2) ** 2, axis=2)]
        feats.append((a**2).sum(axis=1, keepdims=True))
        if s2 is not None:
            feats.append(np.sum(s2.reshape(len(s2), -1, 2) ** 2, axis=2))
        return np.concatenate(feats, axis=1)

    rng = np.random.default_rng(11)
    discs = [
        Discriminator("gail", D, 0.9, rng, hidden=(8,), feature_map=invariants,
                      feature_dims=(2 * PAIRS + 1,))
        for _ in range(N)
    ]
    expert = make_batch(rng, 6)
    gen = make_batch(rng, 6)
    plain, _ = loss_plain(discs, expert, gen)
    for g in elements(4):
        sym, _ = loss_symmetric(discs, expert, gen, group_elements=[g], g=g)
        assert sym == plain


def test_symmetric_loss_sampling_is_seeded():
    rng = np.random.default_rng(12)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=(8,))
    expert = make_batch(rng, 5)
    gen = make_batch(rng, 5)
    a, _ = loss_symmetric(discs, expert, gen, group_elements=elements(4),
                          rng=np.random.default_rng(3))
    b, _ = loss_symmetric(discs, expert, gen, group_elements=elements(4),
                          rng=np.random.default_rng(3))
    assert a == b
    with pytest.raises(DiscriminatorError):
        loss_symmetric(discs, expert, gen, group_elements=elements(4))


def test_symmetric_loss_average_mode():
    rng = np.random.default_rng(13)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=(8,))
    expert = make_batch(rng, 4)
    gen = make_batch(rng, 4)
    avg, avg_grads = loss_symmetric(discs, expert, gen,
                                    group_elements=elements(4), average=True)
    per = []
    sums = [[np.zeros_like(p) for p in d.params] for d in discs]
    for g in elements(4):
        val, grads = loss_symmetric(discs, expert, gen,
                                    group_elements=elements(4), g=g)
        per.append(val)
        for si, gi in zip(sums, grads):
            for x, y in zip(si, gi):
                x += y
    assert abs(avg - np.mean(per)) <= 1e-12
    for si, ai in zip(sums, avg_grads):
        for x, y in zip(si, ai):
            np.testing.assert_allclose(y, x / 8.0, atol=1e-12)


def test_sgf_loss_additivity():
    rng = np.random.default_rng(14)
    discs = init_discriminators("airl", N, D, 0.9, rng, hidden=(6,))
    expert = make_batch(rng, 5, with_log_pis=True)
    gen = make_batch(rng, 5)
    glp = rng.normal(size=(5, N))
    g = rotation(4, 2)
    total, total_grads = loss_sgf(discs, expert, gen, glp,
                                  group_elements=elements(4), g=g)
    plain, pg = loss_plain(discs, expert, gen, glp)
    sym, sg = loss_symmetric(discs, expert, gen, glp,
                             group_elements=elements(4), g=g)
    assert abs(total - (plain + sym)) <= 1e-12
    for ti, pi, si in zip(total_grads, pg, sg):
        for t, p, s in zip(ti, pi, si):
            np.testing.assert_allclose(t, p + s, atol=1e-12)
    # identity group doubles the plain loss
    total_id, _ = loss_sgf(discs, expert, gen, glp,
                           group_elements=[identity(4)], g=identity(4))
    assert abs(total_id - 2 * plain) <= 1e-12


def test_sgf_loss_gradients():
    rng = np.random.default_rng(15)
    expert = make_batch(rng, 4, with_log_pis=True)
    gen = make_batch(rng, 4)
    glp = rng.normal(size=(4, N))
    g = elements(4)[6]
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=(5,))
    finite_difference_check(
        discs,
        lambda: loss_sgf(discs, expert, gen, glp, group_elements=elements(4), g=g),
    )


def test_reward_signal_forms():
    rng = np.random.default_rng(16)
    disc = zero_gail_discs()[0]
    s = rng.normal(size=(3, D))
    a = rng.normal(size=(3, 2))
    s2 = rng.normal(size=(3, D))
    # D = 1/2: positive form gives ln 2, logit form gives 0
    np.testing.assert_allclose(reward_signal(disc, s, a, s2), np.log(2.0), atol=1e-12)
    np.testing.assert_array_equal(reward_signal(disc, s, a, s2, form="logit"), np.zeros(3))
    with pytest.raises(DiscriminatorError):
        reward_signal(disc, s, a, s2, form="huber")
    # saturated discriminator hits the clamp
    hot = Discriminator("gail", D, 0.9, rng, hidden=())
    hot.net.weights[0][...] = 0.0
    hot.net.biases[0][...] = 50.0
    np.testing.assert_array_equal(reward_signal(hot, s, a, s2), np.full(3, 20.0))


def test_airl_reward_identities():
    rng = np.random.default_rng(17)
    disc = Discriminator("airl", D, 0.9, rng, hidden=(8,))
    s = rng.normal(size=(6, D))
    a = rng.normal(size=(6, 2))
    s2 = rng.normal(size=(6, D))
    lp = rng.normal(size=6)
    r = reward_signal(disc, s, a, s2, lp)
    p = d_prob(disc, s, a, s2, lp)
    np.testing.assert_allclose(r, np.log(p) - np.log(1 - p), atol=1e-10)
    # zero nets and zero log density: reward is exactly zero
    zero = Discriminator("airl", D, 0.9, rng, hidden=(8,))
    for par in zero.params:
        par[...] = 0.0
    np.testing.assert_array_equal(reward_signal(zero, s, a, s2, np.zeros(6)), np.zeros(6))


def test_airl_reward_shift_invariance():
    # adding a constant to the g head and to the log-density cancels in u
    rng = np.random.default_rng(18)
    disc = Discriminator("airl", D, 0.9, rng, hidden=(8,))
    s = rng.normal(size=(5, D))
    a = rng.normal(size=(5, 2))
    s2 = rng.normal(size=(5, D))
    lp = rng.normal(size=5)
    base = reward_signal(disc, s, a, s2, lp)
    shift = 3.7
    disc.g_net.biases[-1][...] += shift
    shifted = reward_signal(disc, s, a, s2, lp + shift)
    np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_losses_finite_on_wild_inputs():
    rng = np.random.default_rng(19)
    discs = init_discriminators("gail", N, D, 0.9, rng, hidden=(8,))
    big = TransitionBatch(
        1e6 * rng.normal(size=(4, D)), 1e6 * rng.normal(size=(4, N, 2)),
        1e6 * rng.normal(size=(4, D)), PAIRS,
    )
    loss, grads = loss_plain(discs, big, big)
    assert np.isfinite(loss)
    assert all(np.all(np.isfinite(g)) for gs in grads for g in gs)
    p = d_prob(discs[0], big.states, big.actions[:, 0], big.next_states)
    assert np.all((p > 0) & (p < 1))


def test_transform_batch_keeps_log_pis():
    rng = np.random.default_rng(20)
    batch = make_batch(rng, 5, with_log_pis=True)
    out = transform_batch(batch, rotation(4, 3))
    np.testing.assert_array_equal(out.log_pis, batch.log_pis)
    assert out.log_pis is not batch.log_pis


def test_softplus_stability():
    assert softplus(1000.0) == 1000.0
    assert softplus(-1000.0) == 0.0
    np.testing.assert_allclose(softplus(0.0), np.log(2.0), atol=0)
