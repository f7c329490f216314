"""Advantage actor-critic learner with invalid-action masking.

A fully connected trunk with rectified-linear activations feeds a policy
head (one logit per action) and a scalar value head. Gradients are
computed analytically in numpy and applied with an adaptive-moment
optimizer; the experience buffer triggers one training pass whenever it
fills. Everything runs in float64 so gradient checks are exact to
round-off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import RmbsaEnv, blocking_probability


@dataclass
class TrainConfig:
    gamma: float = 0.95
    learning_rate: float = 5e-5
    buffer_size: int = 1000
    minibatch_size: int = 500
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    grad_clip: float = 0.5
    hidden_layers: tuple = (128, 128, 128, 128, 128)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_seed: int = 0

    def validate(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("discount must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.buffer_size < 1 or self.minibatch_size < 1:
            raise ValueError("buffer and mini-batch sizes must be positive")
        if self.minibatch_size > self.buffer_size:
            raise ValueError("mini-batch larger than buffer")


class PolicyValueNet:
    """Shared MLP trunk with policy-logit and value heads."""

    def __init__(self, input_dim: int, n_actions: int, hidden=(128,) * 5, seed: int = 0) -> None:
        self.input_dim = input_dim
        self.n_actions = n_actions
        self.hidden = tuple(int(h) for h in hidden)
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        fan_in = input_dim
        for i, width in enumerate(self.hidden):
            scale = 1.0 / np.sqrt(fan_in)
            self.params[f"W{i}"] = rng.uniform(-scale, scale, size=(fan_in, width))
            self.params[f"b{i}"] = np.zeros(width)
            fan_in = width
        scale = 1.0 / np.sqrt(fan_in)
        self.params["Wp"] = rng.uniform(-scale, scale, size=(fan_in, n_actions))
        self.params["bp"] = np.zeros(n_actions)
        self.params["Wv"] = rng.uniform(-scale, scale, size=(fan_in, 1))
        self.params["bv"] = np.zeros(1)

    def forward(self, x: np.ndarray):
        """Batched forward pass; returns (logits, values, cache)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hs = [x]
        zs = []
        for i in range(len(self.hidden)):
            z = hs[-1] @ self.params[f"W{i}"] + self.params[f"b{i}"]
            zs.append(z)
            hs.append(np.maximum(z, 0.0))
        logits = hs[-1] @ self.params["Wp"] + self.params["bp"]
        values = (hs[-1] @ self.params["Wv"] + self.params["bv"]).ravel()
        return logits, values, (hs, zs)

    def backward(self, cache, dlogits: np.ndarray, dvalues: np.ndarray) -> dict[str, np.ndarray]:
        hs, zs = cache
        grads: dict[str, np.ndarray] = {}
        grads["Wp"] = hs[-1].T @ dlogits
        grads["bp"] = dlogits.sum(axis=0)
        dv = dvalues[:, None]
        grads["Wv"] = hs[-1].T @ dv
        grads["bv"] = dv.sum(axis=0)
        dh = dlogits @ self.params["Wp"].T + dv @ self.params["Wv"].T
        for i in reversed(range(len(self.hidden))):
            dz = dh * (zs[i] > 0.0)
            grads[f"W{i}"] = hs[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"W{i}"].T
        return grads

    def value(self, obs: np.ndarray) -> float:
        _, values, _ = self.forward(obs)
        return float(values[0])

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for k, v in params.items():
            self.params[k] = np.asarray(v, dtype=float).reshape(self.params[k].shape)

    # --- checkpoint I/O -------------------------------------------------

    def save(self, path) -> None:
        """Version-1 checkpoint: JSON with row-major nested weight lists."""
        payload = {
            "format_version": 1,
            "input_dim": self.input_dim,
            "n_actions": self.n_actions,
            "hidden": list(self.hidden),
            "arrays": {k: v.tolist() for k, v in self.params.items()},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "PolicyValueNet":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format_version") != 1:
            raise ValueError(f"unsupported checkpoint version in {path}")
        net = cls(payload["input_dim"], payload["n_actions"], payload["hidden"])
        net.load_params({k: np.array(v) for k, v in payload["arrays"].items()})
        return net


def masked_distribution(logits: np.ndarray, masks: np.ndarray):
    """Probabilities and log-probabilities with invalid entries forced to 0.

    Works on batches; masked entries get probability exactly 0 and
    log-probability -inf. Each mask row must have at least one valid entry.
    """
    logits = np.atleast_2d(logits)
    masks = np.atleast_2d(masks).astype(bool)
    if not masks.any(axis=1).all():
        raise ValueError("mask with no valid action")
    z = np.where(masks, logits, -np.inf)
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    se = ez.sum(axis=1, keepdims=True)
    probs = ez / se
    with np.errstate(divide="ignore"):
        logprobs = z - (np.log(se) + m)
    return probs, logprobs


def masked_policy(net: PolicyValueNet, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Action probabilities for one observation under the mask."""
    logits, _, _ = net.forward(obs)
    probs, _ = masked_distribution(logits, mask)
    return probs[0]


def select_action(net: PolicyValueNet, obs, mask, mode: str = "sample", rng=None) -> int:
    probs = masked_policy(net, obs, mask)
    return draw_action(probs, mode, rng)


def draw_action(probs: np.ndarray, mode: str, rng=None) -> int:
    if mode == "greedy":
        return int(np.argmax(probs))
    if mode != "sample":
        raise ValueError(f"unknown selection mode {mode!r}")
    if rng is None:
        rng = np.random.default_rng()
    # Inverse-CDF draw; scaling by the final cumsum absorbs round-off and
    # side="right" skips zero-probability plateaus, so masked actions are
    # unreachable.
    cum = np.cumsum(probs)
    u = rng.random() * cum[-1]
    return int(np.searchsorted(cum, u, side="right"))


class ExperienceBuffer:
    """Fixed-capacity store of one transition tuple per step."""

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._obs: list[np.ndarray] = []
        self._actions: list[int] = []
        self._rewards: list[float] = []
        self._masks: list[np.ndarray] = []
        self._values: list[float] = []
        self._dones: list[bool] = []

    def push(self, obs, action, reward, mask, value, done) -> None:
        if self.full:
            raise ValueError("buffer full; run a training pass first")
        self._obs.append(np.asarray(obs, dtype=float))
        self._actions.append(int(action))
        self._rewards.append(float(reward))
        self._masks.append(np.asarray(mask, dtype=bool))
        self._values.append(float(value))
        self._dones.append(bool(done))

    def __len__(self) -> int:
        return len(self._obs)

    @property
    def full(self) -> bool:
        return len(self._obs) >= self.capacity

    def arrays(self):
        return (
            np.stack(self._obs),
            np.array(self._actions),
            np.array(self._rewards),
            np.stack(self._masks),
            np.array(self._values),
            np.array(self._dones),
        )

    def clear(self) -> None:
        self._obs.clear()
        self._actions.clear()
        self._rewards.clear()
        self._masks.clear()
        self._values.clear()
        self._dones.clear()


def compute_returns(rewards: np.ndarray, dones: np.ndarray, gamma: float, bootstrap: float) -> np.ndarray:
    """Discounted returns G_t = r_t + gamma * G_{t+1}, reset at terminals.

    The tail return past the buffer is the provided bootstrap value.
    """
    returns = np.empty(len(rewards))
    g = float(bootstrap)
    for t in reversed(range(len(rewards))):
        g = rewards[t] + gamma * (0.0 if dones[t] else g)
        returns[t] = g
    return returns


@dataclass
class LossReport:
    policy_loss: float
    value_loss: float
    entropy: float
    total_loss: float
    grad_norm: float


def a2c_loss_and_grads(
    net: PolicyValueNet,
    obs: np.ndarray,
    actions: np.ndarray,
    masks: np.ndarray,
    returns: np.ndarray,
    config: TrainConfig,
    advantages: np.ndarray | None = None,
):
    """Total A2C loss and its analytic parameter gradients for one batch.

    Loss = policy gradient term + value_coeff * value MSE
         - entropy_coeff * mean entropy,
    with the advantage treated as a constant in the policy term. When
    ``advantages`` is omitted it is the current return - value residual;
    passing it explicitly keeps the loss a plain function of the
    parameters, which numerical gradient checks rely on.
    """
    n = len(actions)
    logits, values, cache = net.forward(obs)
    probs, logprobs = masked_distribution(logits, masks)
    rows = np.arange(n)
    logp_a = logprobs[rows, actions]
    adv = returns - values if advantages is None else advantages

    safe_logp = np.where(probs > 0.0, logprobs, 0.0)
    entropy = -(probs * safe_logp).sum(axis=1)

    policy_loss = float(-(logp_a * adv).mean())
    value_loss = float(((values - returns) ** 2).mean())
    mean_entropy = float(entropy.mean())
    total = policy_loss + config.value_coeff * value_loss - config.entropy_coeff * mean_entropy

    one_hot = np.zeros_like(probs)
    one_hot[rows, actions] = 1.0
    dlogits = (adv[:, None] / n) * (probs - one_hot)
    dlogits += (config.entropy_coeff / n) * probs * (safe_logp + entropy[:, None])
    dvalues = (2.0 * config.value_coeff / n) * (values - returns)

    grads = net.backward(cache, dlogits, dvalues)
    report = LossReport(policy_loss, value_loss, mean_entropy, total, _global_norm(grads))
    return total, grads, report


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = _global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale


class AdamOptimizer:
    """Adaptive moment estimation with bias correction."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def a2c_update(
    net: PolicyValueNet,
    buffer: ExperienceBuffer,
    config: TrainConfig,
    optimizer: AdamOptimizer,
    bootstrap_value: float,
    rng=None,
) -> LossReport:
    """One training pass over the full buffer, then clear it."""
    if not buffer.full:
        raise ValueError("training triggers only on a full buffer")
    if rng is None:
        rng = np.random.default_rng()
    obs, actions, rewards, masks, _, dones = buffer.arrays()
    returns = compute_returns(rewards, dones, config.gamma, bootstrap_value)

    order = rng.permutation(len(actions))
    reports: list[LossReport] = []
    for start in range(0, len(order), config.minibatch_size):
        idx = order[start : start + config.minibatch_size]
        _, grads, report = a2c_loss_and_grads(
            net, obs[idx], actions[idx], masks[idx], returns[idx], config
        )
        clip_gradients(grads, config.grad_clip)
        optimizer.step(net.params, grads)
        reports.append(report)
    buffer.clear()
    return LossReport(
        policy_loss=float(np.mean([r.policy_loss for r in reports])),
        value_loss=float(np.mean([r.value_loss for r in reports])),
        entropy=float(np.mean([r.entropy for r in reports])),
        total_loss=float(np.mean([r.total_loss for r in reports])),
        grad_norm=float(np.mean([r.grad_norm for r in reports])),
    )


class DrlPolicy:
    """Policy adapter so a trained net plugs into the episode runner."""

    def __init__(self, net: PolicyValueNet, mode: str = "greedy") -> None:
        self.net = net
        self.mode = mode

    def __call__(self, ctx, rng=None) -> int:
        return select_action(self.net, ctx.observation, ctx.mask, self.mode, rng)


@dataclass
class TrainResult:
    episodes: list = field(default_factory=list)  # rows: (episode, bp, pl, vl, ent)
    best_params: dict | None = None
    best_smoothed_bp: float = float("inf")
    net: PolicyValueNet | None = None

    def bp_series(self) -> np.ndarray:
        return np.array([row[1] for row in self.episodes])


SMOOTHING_WINDOW = 75


def smoothed(series, window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing-window mean; early entries average what exists so far."""
    out = np.empty(len(series))
    for i in range(len(series)):
        lo = max(0, i - window + 1)
        out[i] = float(np.mean(series[lo : i + 1]))
    return out


def train(
    env: RmbsaEnv,
    config: TrainConfig,
    episodes: int,
    base_seed: int = 0,
    progress_cb=None,
) -> TrainResult:
    """Run the provisioning/training loop for a number of episodes.

    Episode e uses traffic seed base_seed + e. The best parameter snapshot
    is kept by smoothed blocking probability. Fully deterministic for
    fixed seeds and config.
    """
    config.validate()
    net = PolicyValueNet(
        env.observation_size, env.n_actions, config.hidden_layers, seed=config.init_seed
    )
    optimizer = AdamOptimizer(
        net.params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps
    )
    buffer = ExperienceBuffer(config.buffer_size)
    action_rng = np.random.default_rng(base_seed + 7_919)
    shuffle_rng = np.random.default_rng(base_seed + 104_729)

    result = TrainResult(net=net)
    bp_history: list[float] = []
    for ep in range(episodes):
        obs = env.reset(base_seed + ep)
        ep_reports: list[LossReport] = []
        while not env.done:
            mask = env.action_mask()
            logits, values, _ = net.forward(obs)
            probs, _ = masked_distribution(logits, mask)
            action = draw_action(probs[0], "sample", action_rng)
            outcome = env.step(action)
            buffer.push(obs, action, outcome.reward, mask, float(values[0]), outcome.done)
            if buffer.full:
                bootstrap = 0.0 if outcome.done else net.value(outcome.observation)
                ep_reports.append(
                    a2c_update(net, buffer, config, optimizer, bootstrap, shuffle_rng)
                )
            obs = outcome.observation
        bp = blocking_probability(env.episode_log)
        bp_history.append(bp)
        if ep_reports:
            row = (
                ep,
                bp,
                float(np.mean([r.policy_loss for r in ep_reports])),
                float(np.mean([r.value_loss for r in ep_reports])),
                float(np.mean([r.entropy for r in ep_reports])),
            )
        else:
            row = (ep, bp, float("nan"), float("nan"), float("nan"))
        result.episodes.append(row)

        window = bp_history[-SMOOTHING_WINDOW:]
        smooth_bp = float(np.mean(window))
        if smooth_bp < result.best_smoothed_bp:
            result.best_smoothed_bp = smooth_bp
            result.best_params = net.snapshot()
        if progress_cb is not None:
            progress_cb(ep, bp, smooth_bp)
    return result
