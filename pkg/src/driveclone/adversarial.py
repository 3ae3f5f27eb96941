"""Adversarial trainers: conditional GAN, GAIL and collision-penalized GAIL.

The GAIL loop alternates rollout collection, discriminator ascent on
expert-vs-policy (state, action) pairs, reward labeling through the
discriminator (r = -log(1 - D), computed as softplus of the logit) and a
clipped-ratio PPO update of a diagonal-Gaussian policy. The penalized variant
additionally subtracts a fixed penalty from collision transitions and feeds
the pairs that preceded each collision back into the discriminator's
policy-side batches through a FIFO negative buffer. With a zero penalty and a
zero negative fraction the two trainers share one code path, so they produce
bit-identical results for the same seed.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .bc import Policy, TrainReport, gaussian_log_prob, validation_mask
from .bc import _bounds_from_header, _bounds_header, _obs_spec_from_header, _obs_spec_header
from .sim import ActionBounds, ObservationSpec, as_action_array

ACTION_DIM = 2
REWARD_MAX = 20.0

GAIL_REPORT_COLUMNS = [
    "iter", "disc_loss", "mean_surrogate_reward",
    "mean_episode_len", "collision_rate", "entropy",
]


class DivergedLoss(RuntimeError):
    pass


class EmptyBatch(ValueError):
    pass


@dataclass
class PpoHyper:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    epochs: int = 4
    minibatch: int = 64
    lr_policy: float = 3e-4        # alpha_theta
    lr_disc: float = 3e-4          # alpha_w
    rollout_steps: int = 2048
    disc_steps: int = 4
    max_episode_steps: int = 512
    workers: int = 1
    policy_hidden: tuple[int, ...] = (64, 64)
    disc_hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = float(np.log(0.6))


@dataclass
class PenaltyConfig:
    penalty: float = -10.0        # added to the reward of collision transitions
    k_preceding: int = 10         # pairs per collision fed to the negative buffer
    negative_fraction: float = 0.25  # share of the disc policy batch from the buffer
    capacity: int = 10_000


@dataclass
class Transition:
    observation: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    done: bool
    value_estimate: float
    collision: bool = False


@dataclass
class Discriminator:
    """Expert-vs-policy classifier over concatenated (observation, action)."""
    net: nn.Mlp
    action_scale: np.ndarray  # per-axis normalizer for the action inputs

    @property
    def obs_dim(self) -> int:
        return self.net.in_dim - ACTION_DIM


@dataclass
class Generator:
    """Conditional action generator G(observation, noise)."""
    net: nn.Mlp
    z_dim: int
    obs_spec: ObservationSpec
    bounds: ActionBounds
    seed: int = 0
    kind: str = "gan_generator"

    @property
    def obs_dim(self) -> int:
        return self.net.in_dim - self.z_dim


class NegativeBuffer:
    """FIFO store of (observation, action) pairs that preceded collisions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)
        self.inserted = 0

    def add(self, observation, action) -> None:
        self._items.append((np.asarray(observation, dtype=float),
                            np.asarray(action, dtype=float)))
        self.inserted += 1

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        if not self._items:
            raise EmptyBatch("negative buffer is empty")
        idx = rng.integers(0, len(self._items), size=n)
        obs = np.stack([self._items[i][0] for i in idx])
        act = np.stack([self._items[i][1] for i in idx])
        return obs, act


# ---------------------------------------------------------------------------
# Discriminator math
# ---------------------------------------------------------------------------

def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    # log(1 + exp(x)) without overflow
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


def default_action_scale(bounds: ActionBounds) -> np.ndarray:
    # actions are already bounded to a few m/s^2; feeding them unscaled keeps
    # the expert-vs-policy action signal strong relative to the observation
    return np.ones(ACTION_DIM)


def init_discriminator(obs_dim: int, rng, hidden=(64, 64),
                       bounds: ActionBounds | None = None) -> Discriminator:
    net = nn.init_mlp([obs_dim + ACTION_DIM, *hidden, 1], rng)
    return Discriminator(net=net, action_scale=default_action_scale(bounds or ActionBounds()))


def _disc_features(d: Discriminator, obs, act) -> np.ndarray:
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    act = np.atleast_2d(np.asarray(act, dtype=float))
    if obs.shape[0] != act.shape[0] or obs.shape[1] != d.obs_dim or act.shape[1] != ACTION_DIM:
        raise nn.ShapeMismatch(
            f"discriminator inputs {obs.shape}/{act.shape} do not match obs_dim={d.obs_dim}")
    return np.concatenate([obs, act / d.action_scale], axis=1)


def discriminator_logits(d: Discriminator, obs, act) -> np.ndarray:
    out, _ = nn.forward(d.net, _disc_features(d, obs, act))
    return out[:, 0]


def disc_loss(d: Discriminator, expert_batch, policy_batch) -> float:
    """Binary cross-entropy with labels expert=1, policy=0 (mean per side)."""
    le = discriminator_logits(d, *expert_batch)
    lp = discriminator_logits(d, *policy_batch)
    return float(np.mean(_softplus(-le)) + np.mean(_softplus(lp)))


def disc_accuracy(d: Discriminator, expert_batch, policy_batch) -> float:
    le = discriminator_logits(d, *expert_batch)
    lp = discriminator_logits(d, *policy_batch)
    return float(0.5 * (np.mean(le > 0.0) + np.mean(lp <= 0.0)))


def discriminator_gradients(d: Discriminator, expert_batch, policy_batch):
    """(bce_loss, param gradients of the loss) for the two labeled batches."""
    fe = _disc_features(d, *expert_batch)
    fp = _disc_features(d, *policy_batch)
    oe, ce = nn.forward(d.net, fe)
    op, cp = nn.forward(d.net, fp)
    le, lp = oe[:, 0], op[:, 0]
    loss = float(np.mean(_softplus(-le)) + np.mean(_softplus(lp)))
    # d loss / d logit: expert side -sigmoid(-l)/Be, policy side sigmoid(l)/Bp
    ge = (-_sigmoid(-le) / le.shape[0])[:, None]
    gp = (_sigmoid(lp) / lp.shape[0])[:, None]
    grads_e, _ = nn.backward(d.net, ce, ge)
    grads_p, _ = nn.backward(d.net, cp, gp)
    grads = [a + b for a, b in zip(grads_e, grads_p)]
    return loss, grads


def discriminator_update(d: Discriminator, expert_batch, policy_batch,
                         lr: float) -> Discriminator:
    """One plain gradient-ascent step on the expert-vs-policy value.

    Equivalent to one gradient-descent step on the binary cross-entropy with
    labels expert=1, policy=0. Pure: returns a new Discriminator.
    """
    if len(expert_batch[0]) == 0 or len(policy_batch[0]) == 0:
        raise EmptyBatch("both discriminator batches must be non-empty")
    loss, grads = discriminator_gradients(d, expert_batch, policy_batch)
    if not np.isfinite(loss):
        raise DivergedLoss("non-finite discriminator loss")
    params = nn.parameters(d.net)
    new_params = [p - lr * g for p, g in zip(params, grads)]
    return Discriminator(net=nn.with_parameters(d.net, new_params),
                         action_scale=d.action_scale.copy())


def surrogate_reward(d: Discriminator, observation, action) -> float:
    """r = -log(1 - D(s, a)), computed as softplus(logit), clamped to [0, 20]."""
    logit = discriminator_logits(d, observation, as_action_array(action))[0]
    return float(np.clip(_softplus(logit), 0.0, REWARD_MAX))


def surrogate_rewards(d: Discriminator, obs_batch, act_batch) -> np.ndarray:
    logits = discriminator_logits(d, obs_batch, act_batch)
    return np.clip(_softplus(logits), 0.0, REWARD_MAX)


# ---------------------------------------------------------------------------
# PPO
# ---------------------------------------------------------------------------

def compute_gae(transitions, gamma: float, gae_lambda: float,
                normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over episode-ordered transitions.

    Episode boundaries are the `done` flags; every collected episode ends with
    done=True so no bootstrap value is needed at batch edges. Returns
    (advantages, returns) where returns = raw_advantages + values. With
    `normalize`, advantages are shifted/scaled to zero mean and unit variance.
    """
    if not transitions:
        raise EmptyBatch("no transitions")
    rewards = np.array([t.reward for t in transitions])
    values = np.array([t.value_estimate for t in transitions])
    dones = np.array([t.done for t in transitions])
    n = len(transitions)
    advantages = np.zeros(n)
    gae = 0.0
    next_value = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            gae = 0.0
            next_value = 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * gae_lambda * gae
        advantages[t] = gae
        next_value = values[t]
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


def clipped_objective(ratio, advantage, clip_eps: float):
    """Per-sample PPO objective min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    return np.minimum(ratio * advantage,
                      np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)


def entropy(policy: Policy, obs_batch=None) -> float:
    """Closed-form diagonal-Gaussian entropy, sum over action axes.

    The policy's scale is state-independent, so the batch average equals the
    per-state value; obs_batch is accepted for interface symmetry.
    """
    if policy.kind != "gaussian_stochastic" or policy.log_std is None:
        raise ValueError("entropy is defined for gaussian_stochastic policies")
    return float(np.sum(0.5 * (nn.LOG_2PI + 1.0) + policy.log_std))


def init_gaussian_policy(obs_dim: int, rng, hyper: PpoHyper,
                         obs_spec: ObservationSpec | None = None,
                         bounds: ActionBounds | None = None, seed: int = 0) -> Policy:
    backbone = nn.init_mlp([obs_dim, *hyper.policy_hidden, ACTION_DIM], rng)
    critic = nn.init_mlp([obs_dim, *hyper.policy_hidden, 1], rng)
    return Policy(kind="gaussian_stochastic", backbone=backbone,
                  obs_spec=obs_spec or ObservationSpec(),
                  bounds=bounds or ActionBounds(),
                  log_std=np.full(ACTION_DIM, hyper.log_std_init),
                  critic=critic, seed=seed)


def ppo_update(policy: Policy, rollouts, hyper: PpoHyper, rng=None,
               opt_state=None) -> tuple[Policy, dict]:
    """Clipped-ratio policy update plus value regression and entropy bonus.

    `rollouts` carry log-probs from the pre-update policy. Pass `opt_state`
    (from the previous call's stats) to keep Adam moments across iterations.
    """
    if policy.kind != "gaussian_stochastic":
        raise ValueError("ppo_update needs a gaussian_stochastic policy")
    if rng is None:
        rng = np.random.default_rng(0)
    advantages, returns = compute_gae(rollouts, hyper.gamma, hyper.gae_lambda)
    obs = np.stack([t.observation for t in rollouts])
    act = np.stack([t.action for t in rollouts])
    old_logp = np.array([t.log_prob for t in rollouts])
    n = obs.shape[0]

    backbone, critic = policy.backbone, policy.critic
    log_std = policy.log_std.copy()
    pi_params = nn.parameters(backbone) + [log_std]
    v_params = nn.parameters(critic)
    if opt_state is None:
        pi_opt = nn.adam_init(pi_params, lr=hyper.lr_policy)
        v_opt = nn.adam_init(v_params, lr=hyper.lr_policy)
    else:
        pi_opt, v_opt = opt_state

    ratio_sum, clip_count, sample_count = 0.0, 0, 0
    policy_loss = value_loss = 0.0
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.minibatch):
            idx = order[start:start + hyper.minibatch]
            o, a = obs[idx], act[idx]
            adv, ret, lp_old = advantages[idx], returns[idx], old_logp[idx]
            b = idx.size

            mean, cache = nn.forward(backbone, o)
            std = np.exp(log_std)
            z = (a - mean) / std
            logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * ACTION_DIM * nn.LOG_2PI
            ratio = np.exp(np.clip(logp - lp_old, -50.0, 50.0))
            surr = clipped_objective(ratio, adv, hyper.clip_eps)
            use_unclipped = (ratio * adv) <= surr + 1e-300  # where min picked r*A
            ent = float(np.sum(0.5 * (nn.LOG_2PI + 1.0) + log_std))
            policy_loss = float(-np.mean(surr) - hyper.entropy_coef * ent)
            if not np.isfinite(policy_loss):
                raise DivergedLoss("non-finite PPO policy loss")

            # d(-objective)/d logp per sample, zero where the clip binds
            dlogp = -(use_unclipped * adv * ratio) / b
            gmean = dlogp[:, None] * z / std          # d logp / d mean = z / std
            dls = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
            dls -= hyper.entropy_coef * np.ones(ACTION_DIM)  # entropy bonus
            net_grads, _ = nn.backward(backbone, cache, gmean)
            pi_params, pi_opt = nn.adam_step(pi_params, net_grads + [dls], pi_opt)
            backbone = nn.with_parameters(backbone, pi_params[:-1])
            log_std = pi_params[-1]

            v_out, v_cache = nn.forward(critic, o)
            v_err = v_out[:, 0] - ret
            value_loss = float(hyper.value_coef * np.mean(v_err * v_err))
            if not np.isfinite(value_loss):
                raise DivergedLoss("non-finite PPO value loss")
            gv = (hyper.value_coef * 2.0 * v_err / b)[:, None]
            v_grads, _ = nn.backward(critic, v_cache, gv)
            v_params, v_opt = nn.adam_step(v_params, v_grads, v_opt)
            critic = nn.with_parameters(critic, v_params)

            ratio_sum += float(ratio.sum())
            clip_count += int(np.sum(np.abs(ratio - 1.0) > hyper.clip_eps))
            sample_count += b

    new_policy = replace(policy, backbone=backbone, critic=critic, log_std=log_std)
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy(new_policy),
        "mean_ratio": ratio_sum / max(sample_count, 1),
        "clip_fraction": clip_count / max(sample_count, 1),
        "opt_state": (pi_opt, v_opt),
    }
    return new_policy, stats


# ---------------------------------------------------------------------------
# Rollout collection
# ---------------------------------------------------------------------------

def sample_policy_action(policy: Policy, obs, rng):
    """Draw an action from the Gaussian policy; returns (action, log_prob, value)."""
    mean, _ = nn.forward(policy.backbone, obs)
    action = mean + np.exp(policy.log_std) * rng.standard_normal(ACTION_DIM)
    logp = float(gaussian_log_prob(action, mean, policy.log_std)[0])
    value, _ = nn.forward(policy.critic, obs)
    return action, logp, float(value[0])


def collect_episode(env, rng, policy: Policy, max_steps: int) -> list[Transition]:
    """Roll one episode; the final transition is marked done for GAE even when
    the step cap truncates it."""
    obs = env.reset_random(rng)
    episode: list[Transition] = []
    for _ in range(max_steps):
        action, logp, value = sample_policy_action(policy, obs, rng)
        next_obs, info = env.step(action)
        episode.append(Transition(observation=obs, action=action, log_prob=logp,
                                  reward=0.0, done=info.done, value_estimate=value,
                                  collision=info.collision))
        if info.done:
            break
        obs = next_obs
    episode[-1].done = True
    return episode


def label_rewards(d: Discriminator, transitions, penalty: float = 0.0) -> float:
    """Assign surrogate rewards (plus the collision penalty) in place.

    Returns the mean surrogate reward before any penalty.
    """
    obs = np.stack([t.observation for t in transitions])
    act = np.stack([t.action for t in transitions])
    surr = surrogate_rewards(d, obs, act)
    for t, r in zip(transitions, surr):
        t.reward = float(r)
    if penalty != 0.0:
        for t in transitions:
            if t.collision:
                t.reward = t.reward + penalty
    return float(surr.mean())


# ---------------------------------------------------------------------------
# GAIL / AIR-GAIL
# ---------------------------------------------------------------------------

def _adversarial_loop(env_factory, expert_demos, hyper: PpoHyper, budget: int,
                      seed: int, penalty: PenaltyConfig):
    if not expert_demos:
        raise EmptyBatch("no expert demonstrations")
    started = time.perf_counter()
    exp_obs = np.stack([d.observation for d in expert_demos])
    exp_act = np.stack([d.action for d in expert_demos])
    obs_dim = exp_obs.shape[1]

    root = np.random.SeedSequence(seed)
    children = root.spawn(3 + hyper.workers)
    init_rng = np.random.default_rng(children[0])
    disc_rng = np.random.default_rng(children[1])
    ppo_rng = np.random.default_rng(children[2])
    worker_rngs = [np.random.default_rng(c) for c in children[3:]]

    envs = [env_factory() for _ in range(hyper.workers)]
    obs_spec = getattr(envs[0], "obs_spec", ObservationSpec())
    bounds = getattr(envs[0], "bounds", ActionBounds())
    policy = init_gaussian_policy(obs_dim, init_rng, hyper, obs_spec, bounds, seed=seed)
    disc = init_discriminator(obs_dim, init_rng, hyper.disc_hidden, bounds)
    buffer = NegativeBuffer(penalty.capacity)

    quota = max(1, -(-hyper.rollout_steps // hyper.workers))  # ceil division
    opt_state = None
    steps_used = 0
    iteration = 0
    rows = []
    while steps_used < budget:
        iteration += 1
        episodes: list[list[Transition]] = []
        for env, wrng in zip(envs, worker_rngs):
            collected = 0
            while collected < quota:
                ep = collect_episode(env, wrng, policy, hyper.max_episode_steps)
                episodes.append(ep)
                collected += len(ep)
        transitions = [t for ep in episodes for t in ep]
        steps_used += len(transitions)

        mean_surrogate = label_rewards(disc, transitions, penalty.penalty)

        for ep in episodes:
            if ep[-1].collision and penalty.k_preceding > 0:
                for t in ep[-penalty.k_preceding:]:
                    buffer.add(t.observation, t.action)

        roll_obs = np.stack([t.observation for t in transitions])
        roll_act = np.stack([t.action for t in transitions])
        d_loss = float("nan")
        for _ in range(hyper.disc_steps):
            e_idx = disc_rng.integers(0, exp_obs.shape[0], size=hyper.minibatch)
            p_idx = disc_rng.integers(0, roll_obs.shape[0], size=hyper.minibatch)
            pol_obs, pol_act = roll_obs[p_idx], roll_act[p_idx]
            if penalty.negative_fraction > 0.0 and len(buffer) > 0:
                n_neg = int(round(penalty.negative_fraction * hyper.minibatch))
                if n_neg > 0:
                    neg_obs, neg_act = buffer.sample(n_neg, disc_rng)
                    pol_obs = np.concatenate([pol_obs[:-n_neg], neg_obs])
                    pol_act = np.concatenate([pol_act[:-n_neg], neg_act])
            expert_batch = (exp_obs[e_idx], exp_act[e_idx])
            policy_batch = (pol_obs, pol_act)
            disc = discriminator_update(disc, expert_batch, policy_batch, hyper.lr_disc)
            d_loss = disc_loss(disc, expert_batch, policy_batch)

        policy, stats = ppo_update(policy, transitions, hyper, rng=ppo_rng,
                                   opt_state=opt_state)
        opt_state = stats["opt_state"]

        ep_lens = [len(ep) for ep in episodes]
        collision_rate = float(np.mean([ep[-1].collision for ep in episodes]))
        rows.append((iteration, d_loss, mean_surrogate,
                     float(np.mean(ep_lens)), collision_rate, stats["entropy"]))

    hyper_dict = {k: getattr(hyper, k) for k in (
        "gamma", "gae_lambda", "clip_eps", "entropy_coef", "value_coef",
        "epochs", "minibatch", "lr_policy", "lr_disc", "rollout_steps",
        "disc_steps", "max_episode_steps", "workers")}
    hyper_dict.update({"budget": budget, "penalty": penalty.penalty,
                       "negative_fraction": penalty.negative_fraction,
                       "k_preceding": penalty.k_preceding})
    report = TrainReport(columns=list(GAIL_REPORT_COLUMNS), rows=rows, seed=seed,
                         hyper=hyper_dict, wall_clock=time.perf_counter() - started)
    return policy, disc, report


def gail_train(env_factory, expert_demos, hyper: PpoHyper, budget: int,
               seed: int) -> tuple[Policy, Discriminator, TrainReport]:
    """Plain GAIL: discriminator ascent + PPO on the surrogate reward."""
    no_penalty = PenaltyConfig(penalty=0.0, k_preceding=0, negative_fraction=0.0)
    return _adversarial_loop(env_factory, expert_demos, hyper, budget, seed, no_penalty)


def air_gail_train(env_factory, expert_demos, hyper: PpoHyper, budget: int,
                   seed: int, penalty_cfg: PenaltyConfig | None = None
                   ) -> tuple[Policy, Discriminator, TrainReport]:
    """GAIL plus a collision penalty and negative pairs in the discriminator data.

    Reduces exactly to gail_train when penalty=0 and negative_fraction=0 (and
    the buffer bookkeeping then has no effect on any output).
    """
    penalty_cfg = penalty_cfg or PenaltyConfig()
    return _adversarial_loop(env_factory, expert_demos, hyper, budget, seed, penalty_cfg)


# ---------------------------------------------------------------------------
# Conditional GAN
# ---------------------------------------------------------------------------

@dataclass
class GanConfig:
    z_dim: int = 8
    steps: int = 2000
    minibatch: int = 64
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    seed: int = 0
    non_saturating: bool = False
    hidden: tuple[int, ...] = (64, 64)
    report_every: int = 50


def _squash_actions(raw_out, bounds: ActionBounds):
    t = np.tanh(raw_out)
    low, high = bounds.low, bounds.high
    return low + (t + 1.0) * 0.5 * (high - low), t


def generator_actions(gen: Generator, obs, z):
    """Batched G(s, z) -> actions inside the bounds (tanh squashing)."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    z = np.atleast_2d(np.asarray(z, dtype=float))
    out, cache = nn.forward(gen.net, np.concatenate([obs, z], axis=1))
    actions, t = _squash_actions(out, gen.bounds)
    return actions, (cache, t)


def generator_predict(gen: Generator, obs, mode: str = "deterministic", rng=None):
    """Single-observation action; deterministic mode uses z = 0."""
    from .sim import Action

    obs = np.asarray(obs, dtype=float)
    if mode == "deterministic":
        z = np.zeros(gen.z_dim)
    else:
        if rng is None:
            raise ValueError("sampling mode needs an rng")
        z = rng.standard_normal(gen.z_dim)
    actions, _ = generator_actions(gen, obs[None, :], z[None, :])
    return Action.from_array(actions[0])


def gan_train(demos, cfg: GanConfig, obs_spec: ObservationSpec | None = None,
              bounds: ActionBounds | None = None
              ) -> tuple[Generator, Discriminator, TrainReport]:
    """Alternating conditional-GAN training on expert (state, action) pairs.

    The discriminator maximizes log D(s, a_expert) + log(1 - D(s, G(s, z)));
    the generator minimizes log(1 - D(s, G(s, z))) (or maximizes log D with
    `non_saturating`). A hash-held-out expert slice tracks discriminator
    accuracy against freshly generated pairs.
    """
    if not demos:
        raise EmptyBatch("no demonstrations")
    if len(demos) < cfg.minibatch:
        raise EmptyBatch(f"need at least minibatch={cfg.minibatch} demonstrations")
    started = time.perf_counter()
    bounds = bounds or ActionBounds()
    obs_spec = obs_spec or ObservationSpec()
    X = np.stack([d.observation for d in demos])
    A = np.stack([d.action for d in demos])
    obs_dim = X.shape[1]
    val = validation_mask(X.shape[0])
    train_idx = np.flatnonzero(~val)
    val_idx = np.flatnonzero(val)
    if val_idx.size == 0:
        val_idx = train_idx[:1]

    rng = np.random.default_rng(cfg.seed)
    gen = Generator(net=nn.init_mlp([obs_dim + cfg.z_dim, *cfg.hidden, ACTION_DIM], rng),
                    z_dim=cfg.z_dim, obs_spec=obs_spec, bounds=bounds, seed=cfg.seed)
    disc = init_discriminator(obs_dim, rng, cfg.hidden, bounds)
    g_params = nn.parameters(gen.net)
    d_params = nn.parameters(disc.net)
    g_opt = nn.adam_init(g_params, lr=cfg.lr_g)
    d_opt = nn.adam_init(d_params, lr=cfg.lr_d)

    rows = []
    d_loss_val = g_loss_val = float("nan")
    for step in range(1, cfg.steps + 1):
        idx = train_idx[rng.integers(0, train_idx.size, size=cfg.minibatch)]
        obs_b, act_b = X[idx], A[idx]

        # discriminator step (generated actions treated as constants)
        z = rng.standard_normal((cfg.minibatch, cfg.z_dim))
        fake, _ = generator_actions(gen, obs_b, z)
        d_loss_val, d_grads = discriminator_gradients(disc, (obs_b, act_b), (obs_b, fake))
        if not np.isfinite(d_loss_val):
            raise DivergedLoss("non-finite GAN discriminator loss")
        d_params, d_opt = nn.adam_step(d_params, d_grads, d_opt)
        disc = Discriminator(nn.with_parameters(disc.net, d_params), disc.action_scale)

        # generator step, gradient through D's action input
        z = rng.standard_normal((cfg.minibatch, cfg.z_dim))
        fake, (g_cache, t) = generator_actions(gen, obs_b, z)
        feats = _disc_features(disc, obs_b, fake)
        logits_out, d_cache = nn.forward(disc.net, feats)
        lp = logits_out[:, 0]
        if cfg.non_saturating:
            g_loss_val = float(np.mean(_softplus(-lp)))   # -mean log D
            dlogit = -_sigmoid(-lp) / cfg.minibatch
        else:
            g_loss_val = float(np.mean(-_softplus(lp)))   # mean log(1 - D)
            dlogit = -_sigmoid(lp) / cfg.minibatch
        if not np.isfinite(g_loss_val):
            raise DivergedLoss("non-finite GAN generator loss")
        _, d_input = nn.backward(disc.net, d_cache, dlogit[:, None])
        d_fake = d_input[:, obs_dim:] / disc.action_scale
        d_raw = d_fake * (gen.bounds.high - gen.bounds.low) * 0.5 * (1.0 - t * t)
        g_grads, _ = nn.backward(gen.net, g_cache, d_raw)
        g_params, g_opt = nn.adam_step(g_params, g_grads, g_opt)
        gen = replace(gen, net=nn.with_parameters(gen.net, g_params))

        if step % cfg.report_every == 0 or step == cfg.steps:
            zv = rng.standard_normal((val_idx.size, cfg.z_dim))
            fake_val, _ = generator_actions(gen, X[val_idx], zv)
            acc = disc_accuracy(disc, (X[val_idx], A[val_idx]), (X[val_idx], fake_val))
            rows.append((step, d_loss_val, g_loss_val, acc))

    hyper = {"z_dim": cfg.z_dim, "steps": cfg.steps, "minibatch": cfg.minibatch,
             "lr_g": cfg.lr_g, "lr_d": cfg.lr_d,
             "non_saturating": cfg.non_saturating, "hidden": list(cfg.hidden)}
    report = TrainReport(columns=["iter", "d_loss", "g_loss", "held_out_accuracy"],
                         rows=rows, seed=cfg.seed, hyper=hyper,
                         wall_clock=time.perf_counter() - started)
    return gen, disc, report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_generator(gen: Generator, path) -> Path:
    header = {
        "type": "policy",
        "kind": "gan_generator",
        "obs_dim": gen.obs_dim,
        "z_dim": gen.z_dim,
        "seed": gen.seed,
        "activations": ",".join(l.activation for l in gen.net.layers),
    }
    header.update(_obs_spec_header(gen.obs_spec))
    header.update(_bounds_header(gen.bounds))
    nn.save_checkpoint(path, header, nn.mlp_to_arrays(gen.net))
    return Path(path)


def load_generator(path) -> Generator:
    header, arrays = nn.load_checkpoint(path)
    if header.get("kind") != "gan_generator":
        raise ValueError(f"{path}: not a generator checkpoint")
    return Generator(
        net=nn.mlp_from_arrays(arrays, header["activations"].split(",")),
        z_dim=int(header["z_dim"]),
        obs_spec=_obs_spec_from_header(header),
        bounds=_bounds_from_header(header),
        seed=int(header.get("seed", 0)),
    )


def save_discriminator(d: Discriminator, path) -> Path:
    header = {
        "type": "discriminator",
        "obs_dim": d.obs_dim,
        "activations": ",".join(l.activation for l in d.net.layers),
        "action_scale": ",".join(repr(float(v)) for v in d.action_scale),
    }
    nn.save_checkpoint(path, header, nn.mlp_to_arrays(d.net))
    return Path(path)


def load_discriminator(path) -> Discriminator:
    header, arrays = nn.load_checkpoint(path)
    if header.get("type") != "discriminator":
        raise ValueError(f"{path}: not a discriminator checkpoint")
    return Discriminator(
        net=nn.mlp_from_arrays(arrays, header["activations"].split(",")),
        action_scale=np.array([float(v) for v in header["action_scale"].split(",")]),
    )
