"""PPO trainer over a 128/64/32 actor-critic and deterministic evaluation.

The policy is a shared trunk with a softmax action head and a linear value
head.  Updates use the clipped-ratio surrogate with generalized advantage
estimation; evaluation replays the test set once, argmax action per record,
no episode mechanics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics, nn

__all__ = [
    "PolicyNet",
    "PpoConfig",
    "RolloutBuffer",
    "TrainLog",
    "compute_gae",
    "ppo_loss_and_grads",
    "ppo_update",
    "train",
    "evaluate",
]

_LOGP_FLOOR = 1e-12  # probability clamp for logs; float64 keeps this benign

TRUNK_SIZES = (128, 64, 32)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 2.5e-4
    rollout_length: int = 2048
    minibatch: int = 64
    update_epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_timesteps: int = 100_000
    eval_every: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_epsilon <= 0.0:
            raise ValueError("clip_epsilon must be positive")


class PolicyNet:
    """Shared trunk, softmax policy head, linear value head."""

    def __init__(self, obs_dim, action_count, trunk_activation="relu", seed=0):
        if trunk_activation not in ("relu", "sigmoid"):
            raise ValueError("trunk activation must be relu or sigmoid")
        self.action_count = action_count
        self.trunk = nn.init_net(
            [obs_dim, *TRUNK_SIZES], [trunk_activation] * 3, seed=seed
        )
        self.policy_head = nn.init_net([TRUNK_SIZES[-1], action_count], ["softmax"], seed=seed + 1)
        self.value_head = nn.init_net([TRUNK_SIZES[-1], 1], ["linear"], seed=seed + 2)

    @property
    def obs_dim(self):
        return self.trunk.in_dim

    def nets(self):
        return [self.trunk, self.policy_head, self.value_head]

    def copy(self):
        clone = object.__new__(PolicyNet)
        clone.action_count = self.action_count
        clone.trunk = self.trunk.copy()
        clone.policy_head = self.policy_head.copy()
        clone.value_head = self.value_head.copy()
        return clone

    def forward(self, obs_batch):
        """Returns (probs, values, tapes) for a batch of observations."""
        h, trunk_tape = nn.forward(self.trunk, np.atleast_2d(obs_batch))
        probs, policy_tape = nn.forward(self.policy_head, h)
        values, value_tape = nn.forward(self.value_head, h)
        return probs, values[:, 0], (trunk_tape, policy_tape, value_tape)

    def action_probs(self, obs_batch):
        probs, _, _ = self.forward(obs_batch)
        return probs

    def act(self, obs, rng):
        """Sample one action; returns (action, log_prob, value)."""
        probs, values, _ = self.forward(obs)
        p = probs[0]
        action = int(rng.choice(self.action_count, p=p / p.sum()))
        logp = float(np.log(max(p[action], _LOGP_FLOOR)))
        return action, logp, float(values[0])

    def save(self, path):
        arrays = {}
        for prefix, net in zip(("trunk", "policy", "value"), self.nets()):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays[f"{prefix}_w{i}"] = w
                arrays[f"{prefix}_b{i}"] = b
        import json

        header = json.dumps(
            {
                "version": 1,
                "action_count": self.action_count,
                "activations": {
                    "trunk": self.trunk.activations,
                    "policy": self.policy_head.activations,
                    "value": self.value_head.activations,
                },
            }
        )
        np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path):
        import json

        with np.load(path) as z:
            header = json.loads(bytes(z["header"]).decode())
            if header.get("version") != 1:
                raise ValueError("unsupported policy checkpoint version")
            policy = object.__new__(cls)
            policy.action_count = header["action_count"]
            for attr, prefix in (("trunk", "trunk"), ("policy_head", "policy"), ("value_head", "value")):
                acts = header["activations"][prefix]
                n = len(acts)
                net = nn.DenseNet(
                    weights=[z[f"{prefix}_w{i}"].copy() for i in range(n)],
                    biases=[z[f"{prefix}_b{i}"].copy() for i in range(n)],
                    activations=list(acts),
                )
                setattr(policy, attr, net)
        return policy


@dataclass
class RolloutBuffer:
    states: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    next_value: float  # V of the state after the last step (bootstrap)
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)

    def __len__(self):
        return self.rewards.size


def compute_gae(buffer, gamma, lam):
    """Generalized advantage estimation with done masking.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    """
    T = len(buffer)
    advantages = np.zeros(T)
    next_values = np.append(buffer.values[1:], buffer.next_value)
    not_done = 1.0 - buffer.dones.astype(np.float64)
    # V_{t+1} is the value of the next stored state unless t ended an episode
    gae = 0.0
    for t in range(T - 1, -1, -1):
        delta = buffer.rewards[t] + gamma * next_values[t] * not_done[t] - buffer.values[t]
        gae = delta + gamma * lam * not_done[t] * gae
        advantages[t] = gae
    returns = advantages + buffer.values
    buffer.advantages = advantages
    buffer.returns = returns
    return advantages, returns


def ppo_loss_and_grads(policy, batch, config):
    """Mean PPO loss over a minibatch and gradients for all three nets.

    loss = -min(ratio * A, clip(ratio) * A) + value_coef * (V - R)^2
           - entropy_coef * H
    """
    states = batch["states"]
    actions = batch["actions"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    returns = batch["returns"]
    m = actions.size

    probs, values, (trunk_tape, policy_tape, value_tape) = policy.forward(states)
    p_clamped = np.maximum(probs, _LOGP_FLOOR)
    logp_all = np.log(p_clamped)
    logp = logp_all[np.arange(m), actions]
    ratio = np.exp(logp - old_logp)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon) * adv
    surrogate = np.minimum(unclipped, clipped)
    entropy = -(probs * logp_all).sum(axis=1)
    value_err = values - returns

    policy_loss = -float(surrogate.mean())
    value_loss = float((value_err**2).mean())
    entropy_mean = float(entropy.mean())
    loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy_mean

    # gradient w.r.t. action probabilities
    g_probs = config.entropy_coef * (logp_all + 1.0) / m  # from -coef * mean(H)
    use_unclipped = unclipped <= clipped  # subgradient choice at equality
    coeff = -(use_unclipped * ratio * adv) / m  # d(policy_loss)/d(logp_a)
    g_probs = np.array(g_probs)
    g_probs[np.arange(m), actions] += coeff / p_clamped[np.arange(m), actions]

    g_values = (2.0 * config.value_coef * value_err / m)[:, None]

    policy_grads, g_h_policy = nn.backward(policy.policy_head, policy_tape, g_probs)
    value_grads, g_h_value = nn.backward(policy.value_head, value_tape, g_values)
    trunk_grads, _ = nn.backward(policy.trunk, trunk_tape, g_h_policy + g_h_value)

    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy_mean,
        "clip_fraction": float((~use_unclipped).mean()),
    }
    return loss, (trunk_grads, policy_grads, value_grads), stats


def ppo_update(policy, buffer, config, optimizers=None, rng=None):
    """update_epochs passes of shuffled minibatch updates; returns stats."""
    if optimizers is None:
        optimizers = make_optimizers(policy, config)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    adv = buffer.advantages
    std = adv.std()
    norm_adv = (adv - adv.mean()) / (std + 1e-8)
    T = len(buffer)
    all_stats = []
    for _ in range(config.update_epochs):
        order = rng.permutation(T)
        for start in range(0, T, config.minibatch):
            idx = order[start : start + config.minibatch]
            batch = {
                "states": buffer.states[idx],
                "actions": buffer.actions[idx],
                "log_probs": buffer.log_probs[idx],
                "advantages": norm_adv[idx],
                "returns": buffer.returns[idx],
            }
            _, grads, stats = ppo_loss_and_grads(policy, batch, config)
            nn.clip_global_norm(grads, config.max_grad_norm)
            for net, g, opt in zip(policy.nets(), grads, optimizers):
                nn.opt_step(net, g, opt)
            all_stats.append(stats)
    return {
        key: float(np.mean([s[key] for s in all_stats])) if all_stats else 0.0
        for key in ("loss", "policy_loss", "value_loss", "entropy", "clip_fraction")
    }


def make_optimizers(policy, config):
    return [nn.OptState.for_net(net, "adam", config.learning_rate) for net in policy.nets()]


@dataclass
class TrainLog:
    """Evaluation curve rows: (timestep, accuracy, f1_macro, f1_weighted, per-class f1)."""

    rows: list = field(default_factory=list)

    def append(self, timestep, cm):
        per_class = [metrics.per_class_prf(cm, c).f1 for c in range(cm.k)]
        self.rows.append(
            (
                timestep,
                metrics.accuracy(cm),
                metrics.aggregate_f1(cm, "macro"),
                metrics.aggregate_f1(cm, "weighted"),
                *per_class,
            )
        )

    def to_csv(self, k):
        header = "timestep,accuracy,f1_macro,f1_weighted," + ",".join(
            f"f1_class{c}" for c in range(k)
        )
        lines = [header]
        for row in self.rows:
            lines.append(
                ",".join([str(row[0])] + [f"{v:.6f}" for v in row[1:]])
            )
        return "\n".join(lines) + "\n"


def _collect_rollout(env_, policy, config, rng, carry_obs):
    T = config.rollout_length
    obs_dim = env_.observation_dim
    states = np.empty((T, obs_dim))
    actions = np.empty(T, dtype=np.int64)
    log_probs = np.empty(T)
    rewards = np.empty(T)
    dones = np.empty(T, dtype=bool)
    values = np.empty(T)
    obs = carry_obs if carry_obs is not None else env_.reset()
    for t in range(T):
        action, logp, value = policy.act(obs, rng)
        result = env_.step(action)
        states[t] = obs
        actions[t] = action
        log_probs[t] = logp
        rewards[t] = result.reward
        dones[t] = result.done
        values[t] = value
        obs = env_.reset() if result.done else result.next_state
    _, next_values, _ = policy.forward(obs)
    return (
        RolloutBuffer(
            states=states,
            actions=actions,
            log_probs=log_probs,
            rewards=rewards,
            dones=dones,
            values=values,
            next_value=float(next_values[0]),
        ),
        obs,
    )


def train(env_, policy, config, eval_data=None):
    """Alternate rollouts and PPO updates; returns the evaluation TrainLog."""
    log = TrainLog()
    optimizers = make_optimizers(policy, config)
    rng = np.random.default_rng(config.seed)
    timesteps = 0
    next_eval = config.eval_every
    carry_obs = None
    while timesteps < config.total_timesteps:
        buffer, carry_obs = _collect_rollout(env_, policy, config, rng, carry_obs)
        compute_gae(buffer, config.gamma, config.gae_lambda)
        ppo_update(policy, buffer, config, optimizers=optimizers, rng=rng)
        timesteps += len(buffer)
        if eval_data is not None and timesteps >= next_eval:
            cm = evaluate(policy, eval_data, env_.config.mode)
            log.append(timesteps, cm)
            next_eval += config.eval_every
    if eval_data is not None and config.total_timesteps > 0 and (
        not log.rows or log.rows[-1][0] != timesteps
    ):
        log.append(timesteps, evaluate(policy, eval_data, env_.config.mode))
    return log


def evaluate(policy, encoded_data, mode):
    """Score every record once with the argmax action; no episode mechanics."""
    if encoded_data.matrix.shape[1] != policy.obs_dim:
        raise ValueError(
            f"data dim {encoded_data.matrix.shape[1]} != policy obs dim {policy.obs_dim}"
        )
    probs = policy.action_probs(encoded_data.matrix)
    pred = np.argmax(probs, axis=1)
    if mode == "binary":
        truth = (encoded_data.labels != 0).astype(np.int64)
        k = 2
    else:
        truth = encoded_data.labels
        k = 5
    return metrics.confusion(pred, truth, k)
