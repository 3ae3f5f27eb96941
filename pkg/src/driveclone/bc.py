"""Supervised policies: feed-forward BC (squared error) and MDN-BC (likelihood).

Both trainers are pure functions of (demonstrations, config, seed): they
shuffle with the run seed, hold out a fixed ~10% validation slice chosen by a
deterministic index hash, and report per-epoch losses. Policies are saved in
the shared text checkpoint format.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .mdn import mdn_head, mdn_mode, mdn_sample, nll_and_grad, raw_width
from .sim import Action, ActionBounds, ObservationSpec

ACTION_DIM = 2


class EmptyDataset(ValueError):
    pass


class DivergedLoss(RuntimeError):
    pass


@dataclass
class BcConfig:
    epochs: int = 50
    batch: int = 64
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)


@dataclass
class TrainReport:
    columns: list[str]
    rows: list[tuple]
    seed: int
    hyper: dict
    wall_clock: float = 0.0

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_format_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8", newline="\n")
        return path

    def column(self, name) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]


def _format_cell(v) -> str:
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


@dataclass
class Policy:
    kind: str                      # ffn | mdn | gaussian_stochastic
    backbone: nn.Mlp
    obs_spec: ObservationSpec
    bounds: ActionBounds
    n_components: int = 0          # mdn head size
    log_std: np.ndarray | None = None  # gaussian_stochastic
    critic: nn.Mlp | None = None       # gaussian_stochastic value head
    seed: int = 0

    @property
    def obs_dim(self) -> int:
        return self.backbone.in_dim


def _index_hash(i: int) -> int:
    # Knuth multiplicative hash; independent of PYTHONHASHSEED
    return (i * 2654435761) % (2 ** 32)


def validation_mask(n: int) -> np.ndarray:
    """Fixed ~10% validation split selected by index hash (seed-independent)."""
    return np.array([_index_hash(i) % 10 == 0 for i in range(n)])


def _stack_demos(demos):
    obs = np.stack([d.observation for d in demos]).astype(float)
    act = np.stack([d.action for d in demos]).astype(float)
    return obs, act


def _check_dataset(demos, cfg):
    if not demos:
        raise EmptyDataset("no demonstrations")
    if len(demos) < cfg.batch:
        raise EmptyDataset(f"need at least batch={cfg.batch} demonstrations, have {len(demos)}")
    act = np.stack([d.action for d in demos])
    if not np.isfinite(act).all():
        raise EmptyDataset("demonstrations contain non-finite actions")


def _epoch_batches(indices, batch, rng):
    order = rng.permutation(indices)
    for start in range(0, len(order), batch):
        yield order[start:start + batch]


def train_bc(demos, cfg: BcConfig, obs_spec: ObservationSpec | None = None,
             bounds: ActionBounds | None = None) -> tuple[Policy, TrainReport]:
    """Fit a feed-forward policy with joint MSE on (a_long, a_lat)."""
    _check_dataset(demos, cfg)
    obs, act = _stack_demos(demos)
    obs_dim = obs.shape[1]
    rng = np.random.default_rng(cfg.seed)
    net = nn.init_mlp([obs_dim, *cfg.hidden, ACTION_DIM], rng)

    def loss_grad(net_, xb, yb):
        pred, cache = nn.forward(net_, xb)
        diff = pred - yb
        loss = float(np.mean(diff * diff))
        grad_out = 2.0 * diff / diff.size
        return loss, cache, grad_out

    def val_loss(net_, xb, yb):
        pred, _ = nn.forward(net_, xb)
        return float(np.mean((pred - yb) ** 2))

    net, report = _run_supervised(net, obs, act, cfg, rng, loss_grad, val_loss)
    policy = Policy(kind="ffn", backbone=net,
                    obs_spec=obs_spec or ObservationSpec(),
                    bounds=bounds or ActionBounds(), seed=cfg.seed)
    return policy, report


def train_bc_mdn(demos, cfg: BcConfig, n_components: int = 5,
                 obs_spec: ObservationSpec | None = None,
                 bounds: ActionBounds | None = None) -> tuple[Policy, TrainReport]:
    """Fit a mixture-density policy by maximum likelihood (mean NLL loss)."""
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    _check_dataset(demos, cfg)
    obs, act = _stack_demos(demos)
    obs_dim = obs.shape[1]
    rng = np.random.default_rng(cfg.seed)
    net = nn.init_mlp([obs_dim, *cfg.hidden, raw_width(n_components, ACTION_DIM)], rng)
    # seed the head's mean biases with random expert actions so components
    # start apart; identical means would lock the mixture into one mode
    mean_bias = act[rng.integers(0, act.shape[0], size=n_components)].ravel()
    net.layers[-1].biases[n_components:n_components * (1 + ACTION_DIM)] = mean_bias

    def loss_grad(net_, xb, yb):
        raw, cache = nn.forward(net_, xb)
        loss, grad_out = nll_and_grad(raw, yb, n_components, ACTION_DIM)
        return loss, cache, grad_out

    def val_loss(net_, xb, yb):
        raw, _ = nn.forward(net_, xb)
        loss, _ = nll_and_grad(raw, yb, n_components, ACTION_DIM)
        return loss

    net, report = _run_supervised(net, obs, act, cfg, rng, loss_grad, val_loss,
                                  extra_hyper={"n_components": n_components})
    policy = Policy(kind="mdn", backbone=net, n_components=n_components,
                    obs_spec=obs_spec or ObservationSpec(),
                    bounds=bounds or ActionBounds(), seed=cfg.seed)
    return policy, report


def _run_supervised(net, obs, act, cfg, rng, loss_grad, val_loss, extra_hyper=None):
    started = time.perf_counter()
    n = obs.shape[0]
    val = validation_mask(n)
    train_idx = np.flatnonzero(~val)
    val_idx = np.flatnonzero(val)
    if train_idx.size == 0:
        raise EmptyDataset("validation split left no training data")

    params = nn.parameters(net)
    state = nn.adam_init(params, lr=cfg.lr)
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for batch_idx in _epoch_batches(train_idx, cfg.batch, rng):
            loss, cache, grad_out = loss_grad(net, obs[batch_idx], act[batch_idx])
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite training loss at epoch {epoch}")
            grads, _ = nn.backward(net, cache, grad_out)
            params, state = nn.adam_step(params, grads, state)
            net = nn.with_parameters(net, params)
            total += loss * batch_idx.size
            count += batch_idx.size
        train_loss = total / count
        vloss = val_loss(net, obs[val_idx], act[val_idx]) if val_idx.size else float("nan")
        rows.append((epoch, train_loss, vloss))

    hyper = {"epochs": cfg.epochs, "batch": cfg.batch, "lr": cfg.lr,
             "hidden": list(cfg.hidden)}
    hyper.update(extra_hyper or {})
    report = TrainReport(columns=["epoch", "train_loss", "val_loss"], rows=rows,
                         seed=cfg.seed, hyper=hyper,
                         wall_clock=time.perf_counter() - started)
    return net, report


# ---------------------------------------------------------------------------
# Acting
# ---------------------------------------------------------------------------

def gaussian_log_prob(actions, means, log_std) -> np.ndarray:
    """Diagonal-Gaussian log density; batched over the leading axis."""
    actions = np.atleast_2d(actions)
    means = np.atleast_2d(means)
    z = (actions - means) / np.exp(log_std)
    return (-0.5 * np.sum(z * z, axis=1)
            - np.sum(log_std)
            - 0.5 * actions.shape[1] * nn.LOG_2PI)


def predict(policy: Policy, obs, mode: str = "deterministic", rng=None) -> Action:
    """Map one observation to a bounded Action.

    Deterministic mode never touches the rng: ffn output, mixture mode, or
    Gaussian mean. Sampling draws from the policy's own distribution.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (policy.obs_dim,):
        raise nn.ShapeMismatch(f"observation shape {obs.shape} != ({policy.obs_dim},)")
    if mode not in ("deterministic", "sample"):
        raise ValueError(f"unknown predict mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling mode needs an rng")
    out, _ = nn.forward(policy.backbone, obs)
    if policy.kind == "ffn":
        action = out
    elif policy.kind == "mdn":
        params = mdn_head(out, policy.n_components, ACTION_DIM)
        action = mdn_mode(params) if mode == "deterministic" else mdn_sample(params, rng)
    elif policy.kind == "gaussian_stochastic":
        if mode == "deterministic":
            action = out
        else:
            action = out + np.exp(policy.log_std) * rng.standard_normal(ACTION_DIM)
    else:
        raise ValueError(f"unknown policy kind {policy.kind!r}")
    return Action.from_array(policy.bounds.clamp(action))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _obs_spec_header(spec: ObservationSpec) -> dict:
    return {
        "obs.sensing_range": repr(spec.sensing_range),
        "obs.gap_scale": repr(spec.gap_scale),
        "obs.velocity_scale": repr(spec.velocity_scale),
        "obs.clip": repr(spec.clip),
    }


def _obs_spec_from_header(header: dict) -> ObservationSpec:
    return ObservationSpec(
        sensing_range=float(header.get("obs.sensing_range", 200.0)),
        gap_scale=float(header.get("obs.gap_scale", 200.0)),
        velocity_scale=float(header.get("obs.velocity_scale", 50.0)),
        clip=float(header.get("obs.clip", 1.5)),
    )


def _bounds_header(bounds: ActionBounds) -> dict:
    return {
        "action_low": ",".join(repr(float(v)) for v in bounds.low),
        "action_high": ",".join(repr(float(v)) for v in bounds.high),
    }


def _bounds_from_header(header: dict) -> ActionBounds:
    low = [float(v) for v in header["action_low"].split(",")]
    high = [float(v) for v in header["action_high"].split(",")]
    return ActionBounds(a_long_min=low[0], a_long_max=high[0],
                        a_lat_min=low[1], a_lat_max=high[1])


def save_policy(policy: Policy, path) -> Path:
    header = {
        "type": "policy",
        "kind": policy.kind,
        "obs_dim": policy.obs_dim,
        "n_components": policy.n_components,
        "seed": policy.seed,
        "activations": ",".join(l.activation for l in policy.backbone.layers),
    }
    header.update(_obs_spec_header(policy.obs_spec))
    header.update(_bounds_header(policy.bounds))
    arrays = nn.mlp_to_arrays(policy.backbone)
    if policy.log_std is not None:
        arrays.append(("log_std", policy.log_std))
    if policy.critic is not None:
        header["critic_activations"] = ",".join(l.activation for l in policy.critic.layers)
        arrays.extend(nn.mlp_to_arrays(policy.critic, prefix="critic_"))
    nn.save_checkpoint(path, header, arrays)
    return Path(path)


def load_policy(path) -> Policy:
    header, arrays = nn.load_checkpoint(path)
    if header.get("type") != "policy":
        raise ValueError(f"{path}: not a policy checkpoint")
    backbone = nn.mlp_from_arrays(arrays, header["activations"].split(","))
    critic = None
    if "critic_activations" in header:
        critic = nn.mlp_from_arrays(arrays, header["critic_activations"].split(","),
                                    prefix="critic_")
    log_std = np.array(arrays["log_std"]) if "log_std" in arrays else None
    return Policy(
        kind=header["kind"],
        backbone=backbone,
        obs_spec=_obs_spec_from_header(header),
        bounds=_bounds_from_header(header),
        n_components=int(header.get("n_components", 0)),
        log_std=log_std,
        critic=critic,
        seed=int(header.get("seed", 0)),
    )
