import numpy as np
import pytest

from psmp.agent.a2c import (Adam, Rollout, TrainConfig, a2c_update, clip_grads, discounted_returns, global_norm,
                            gradient_check, loss_and_grads)
from psmp.agent.network import NetConfig, init_params

SMALL = NetConfig(embed=16, heads=4, layers=2)


def rollout(steps=3, nodes=2, seed=0, rewards=None, done_last=False):
    rng = np.random.default_rng(seed)
    masks = rng.random((steps, nodes)) < 0.8
    masks[0, 0] = True
    r = rng.uniform(-1, 0, steps) if rewards is None else np.asarray(rewards, float)
    dones = np.zeros(steps, bool)
    dones[-1] = done_last
    return Rollout(rng.uniform(0, 2, (steps, nodes, 11)), rng.integers(0, 2, (steps, nodes)), masks, r, dones,
                   None if done_last else rng.uniform(0, 2, (nodes, 11)))


def test_returns_gamma_zero():
    r = np.array([-0.1, -0.4, -0.2])
    assert np.array_equal(discounted_returns(r, [0, 0, 0], 5.0, 0.0), r)


def test_returns_bootstrap_and_done():
    G = discounted_returns([1.0, 1.0], [False, False], 10.0, 0.5)
    assert np.allclose(G, [1 + 0.5 * (1 + 0.5 * 10), 1 + 0.5 * 10])
    G = discounted_returns([1.0, 1.0], [True, False], 10.0, 0.5)
    assert np.allclose(G, [1.0, 6.0])


def test_zero_rewards_zero_critic():
    p = init_params(0, SMALL)
    p["w_critic"][:] = 0
    p["b_critic"][:] = 0
    ro = rollout(rewards=[0, 0, 0])
    _, actor_loss, critic_loss, grads, _, A = loss_and_grads(p, ro, TrainConfig())
    assert critic_loss == 0 and actor_loss == 0 and np.all(A == 0)
    assert global_norm(grads) == 0


def test_masked_nodes_do_not_matter():
    p = init_params(0, SMALL)
    ro = rollout(steps=4, nodes=3, seed=2)
    ro.masks[:, 2] = False
    flipped = Rollout(ro.features, ro.actions.copy(), ro.masks, ro.rewards, ro.dones, ro.bootstrap_features)
    flipped.actions[:, 2] ^= 1
    a = loss_and_grads(p, ro, TrainConfig())
    b = loss_and_grads(p, flipped, TrainConfig())
    assert a[0] == b[0] and all(np.array_equal(a[3][k], b[3][k]) for k in a[3])


class TestGradientCheck:
    def test_full_network(self):
        p = init_params(0)
        err = gradient_check(p, rollout(), epsilon=1e-4, n_coords=1000)
        assert err <= 1e-4

    def test_mutation_detected(self):
        p = init_params(0, SMALL)

        def flip(g):
            g = dict(g)
            g["L0.Wq"] = -g["L0.Wq"]
            return g
        assert gradient_check(p, rollout(), n_coords=p.n_params(), grad_override=flip) > 0.1

    def test_second_order(self):
        p = init_params(0)
        ro = rollout(seed=4)
        e1 = gradient_check(p, ro, epsilon=1e-4, n_coords=400)
        e2 = gradient_check(p, ro, epsilon=5e-5, n_coords=400)
        assert e2 <= 4 * e1

    def test_truncation_error_quarters(self):
        # where truncation dominates round-off the central difference is O(eps^2)
        p = init_params(0, SMALL)
        ro = rollout(seed=4)
        e1 = gradient_check(p, ro, epsilon=1e-2, n_coords=400)
        e2 = gradient_check(p, ro, epsilon=5e-3, n_coords=400)
        assert e2 / e1 == pytest.approx(0.25, abs=0.03)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            gradient_check(init_params(0, SMALL), rollout(), epsilon=0)


def test_clip():
    g = {"a": np.full(4, 3.0), "b": np.array([4.0])}
    out, norm = clip_grads(g, 2.0)
    assert norm == pytest.approx(np.sqrt(52)) and global_norm(out) == pytest.approx(2.0)
    small = {"a": np.array([0.5])}
    assert clip_grads(small, 2.0)[0] is small


def test_update_step_clips_and_moves():
    p = init_params(0, SMALL)
    before = p.copy()
    cfg = TrainConfig(learning_rate=1e-2)
    st = a2c_update(p, rollout(seed=1, rewards=[-5, -5, -5]), cfg)
    assert st.clipped_norm <= 2.0 + 1e-12
    delta = np.sqrt(sum(((p[k] - before[k]) ** 2).sum() for k in p))
    assert delta == pytest.approx(1e-2 * st.clipped_norm, rel=1e-9)


def test_adam_runs():
    p = init_params(0, SMALL)
    opt = Adam(1e-3)
    for s in range(3):
        a2c_update(p, rollout(seed=s), TrainConfig(), opt)
    assert all(np.isfinite(v).all() for v in p.values())


def test_empty_rollout():
    ro = Rollout(np.zeros((0, 2, 11)), np.zeros((0, 2)), np.zeros((0, 2), bool), np.zeros(0), np.zeros(0, bool))
    with pytest.raises(ValueError):
        a2c_update(init_params(0, SMALL), ro, TrainConfig())


@pytest.mark.parametrize("kw", [{"gamma": 1.5}, {"learning_rate": 0}, {"rollout_length": 0}, {"optimizer": "rms"},
                                {"epochs_per_stage": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_table_defaults():
    c = TrainConfig()
    assert (c.learning_rate, c.gamma, c.grad_clip_norm, c.rollout_length, c.dt, c.alpha, c.beta,
            c.epochs_per_stage) == (1e-5, 0.99, 2.0, 64, 1800.0, 0.5, 0.5, 10)
