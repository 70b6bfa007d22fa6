import numpy as np
import pytest

from gradcheck import check_param_grads
from seads.sac import Batch, SacAgent, SacConfig, TransitionBuffer, one_hot, with_skill

OBS, ACT = 4, 2


def small_agent(seed=0, **kw):
    cfg = SacConfig(hidden=(16, 16), **kw)
    return SacAgent(OBS, ACT, cfg, np.random.default_rng(seed))


def random_batch(rng, n=4):
    return Batch(
        obs=rng.normal(size=(n, OBS)),
        actions=np.tanh(rng.normal(size=(n, ACT))),
        rewards=rng.normal(size=n),
        next_obs=rng.normal(size=(n, OBS)),
        terminals=np.array([True, False, False, False][:n]),
        timeouts=np.array([False, True, False, False][:n]),
    )


class TestSkillInput:
    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot(np.array([2, 0]), 3), [[0, 0, 1], [1, 0, 0]])

    def test_with_skill_appends_code(self):
        out = with_skill(np.zeros((2, 3)), 1, 4)
        assert out.shape == (2, 7)
        np.testing.assert_array_equal(out[:, 3:], [[0, 1, 0, 0]] * 2)


class TestLosses:
    def test_critic_gradients(self, rng):
        agent = small_agent()
        batch = random_batch(rng)
        noise = rng.normal(size=(4, ACT))
        _, g1, g2 = agent.critic_loss_and_grads(batch, noise)

        def loss():
            return agent.critic_loss_and_grads(batch, noise)[0]

        check_param_grads(loss, agent.q1.params, g1, tol=1e-4)
        check_param_grads(loss, agent.q2.params, g2, tol=1e-4)

    def test_actor_gradients(self, rng):
        agent = small_agent(alpha=0.3)
        batch = random_batch(rng)
        noise = rng.normal(size=(4, ACT))
        _, grads = agent.actor_loss_and_grads(batch, noise)
        check_param_grads(lambda: agent.actor_loss_and_grads(batch, noise)[0], agent.actor.params, grads, tol=1e-4)

    def test_terminal_stops_bootstrap_but_timeout_does_not(self, rng):
        agent = small_agent(gamma=0.5)
        batch = random_batch(rng)
        noise = rng.normal(size=(4, ACT))
        y = agent.critic_target(batch, noise)
        assert y[0] == pytest.approx(batch.rewards[0])
        assert y[1] != pytest.approx(batch.rewards[1])

    def test_timeout_bootstrap_can_be_disabled(self, rng):
        agent = small_agent(gamma=0.5, bootstrap_timeouts=False)
        batch = random_batch(rng)
        y = agent.critic_target(batch, rng.normal(size=(4, ACT)))
        np.testing.assert_allclose(y[:2], batch.rewards[:2])
        assert y[2] != pytest.approx(batch.rewards[2])


class TestUpdates:
    def test_soft_update_interpolates(self):
        agent = small_agent()
        agent.q1.params[0][...] = 1.0
        agent.q1_target.params[0][...] = 0.0
        agent.soft_update(0.25)
        np.testing.assert_allclose(agent.q1_target.params[0], 0.25)

    def test_targets_start_equal_and_lag(self, rng):
        agent = small_agent(tau=0.005)
        assert all(np.array_equal(a, b) for a, b in zip(agent.q1.params, agent.q1_target.params))
        agent.update(random_batch(rng), rng)
        online, target = agent.q1.params[0], agent.q1_target.params[0]
        assert not np.array_equal(online, target)

    def test_deterministic_action_in_bounds(self, rng):
        agent = small_agent()
        a = agent.act(rng.normal(size=(10, OBS)) * 100, deterministic=True)
        assert a.shape == (10, ACT) and np.all(np.abs(a) <= 1)

    def test_learns_one_step_bandit(self):
        # reward peaks at action (0.5, -0.5); terminal after one step
        rng = np.random.default_rng(0)
        agent = SacAgent(1, ACT, SacConfig(hidden=(32, 32), lr=3e-3, alpha=0.01), rng)
        target = np.array([0.5, -0.5])
        obs = np.ones((64, 1))
        for _ in range(600):
            a = agent.act(obs, rng)
            r = -np.sum((a - target) ** 2, axis=1)
            agent.update(Batch(obs, a, r, obs, np.ones(64, dtype=bool), np.zeros(64, dtype=bool)), rng)
        np.testing.assert_allclose(agent.act(obs[:1], deterministic=True)[0], target, atol=0.1)


class TestTransitionBuffer:
    def fill(self, buf, n, start=0):
        for i in range(start, start + n):
            buf.add(np.full(OBS, i), np.zeros(ACT), float(i), np.full(OBS, i + 1))

    def test_fifo_eviction(self):
        buf = TransitionBuffer(5, OBS, ACT, initial=2)
        self.fill(buf, 8)
        assert len(buf) == 5
        np.testing.assert_array_equal(buf.state_arrays()["rewards"], [3, 4, 5, 6, 7])

    def test_grows_until_capacity(self):
        buf = TransitionBuffer(1000, OBS, ACT, initial=4)
        self.fill(buf, 9)
        assert 9 <= len(buf.rewards) < 1000
        np.testing.assert_array_equal(buf.state_arrays()["rewards"], np.arange(9))

    def test_round_trip(self):
        buf = TransitionBuffer(5, OBS, ACT)
        self.fill(buf, 7)
        other = TransitionBuffer(5, OBS, ACT, initial=1)
        other.load_arrays(buf.state_arrays())
        for k, v in buf.state_arrays().items():
            np.testing.assert_array_equal(other.state_arrays()[k], v)

    def test_sample_shapes(self, rng):
        buf = TransitionBuffer(10, OBS, ACT)
        self.fill(buf, 3)
        b = buf.sample(7, rng)
        assert b.obs.shape == (7, OBS) and set(b.rewards) <= {0.0, 1.0, 2.0}

    def test_invalid_transitions_rejected(self):
        buf = TransitionBuffer(3, OBS, ACT)
        with pytest.raises(ValueError):
            buf.add(np.zeros(OBS), np.zeros(ACT), 0.0, np.zeros(OBS), terminal=True, timeout=True)
        with pytest.raises(FloatingPointError):
            buf.add(np.zeros(OBS), np.zeros(ACT), np.nan, np.zeros(OBS))
        with pytest.raises(ValueError):
            buf.sample(1, np.random.default_rng(0))
