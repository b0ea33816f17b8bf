"""Dense actor-critic with hand-written reverse-mode gradients.

Separate tanh MLP trunks for actor and critic, a Gaussian policy head with a
state-independent learnable log-std, and a scalar value head. Parameters live
in one flat float64 vector so self-play weight sync and checkpointing are
byte-exact copies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch

LOG_2PI = math.log(2.0 * math.pi)
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    obs_dim: int
    action_dim: int = 3
    hidden_sizes: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    def trunk_shapes(self, out_dim: int) -> list[tuple[int, int]]:
        dims = [self.obs_dim, *self.hidden_sizes, out_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


@dataclass
class PolicyParams:
    flat: np.ndarray
    spec: NetworkSpec

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.flat.copy(), self.spec)


@dataclass
class ActorCriticOutput:
    action_mean: np.ndarray
    action_log_std: np.ndarray
    value: float


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diagonal(r))
    d[d == 0] = 1.0
    q = q * d
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


class ActorCritic:
    """Parameter layout + forward/backward for one NetworkSpec."""

    def __init__(self, spec: NetworkSpec):
        self.spec = spec
        self.actor_shapes = spec.trunk_shapes(spec.action_dim)
        self.critic_shapes = spec.trunk_shapes(1)
        n = 0
        self._slices: dict[str, list[tuple[slice, slice]]] = {}
        for name, shapes in (("actor", self.actor_shapes), ("critic", self.critic_shapes)):
            lst = []
            for din, dout in shapes:
                w = slice(n, n + din * dout)
                n += din * dout
                b = slice(n, n + dout)
                n += dout
                lst.append((w, b))
            self._slices[name] = lst
        self._log_std_slice = slice(n, n + spec.action_dim)
        self.num_params = n + spec.action_dim

    # -- parameter access -------------------------------------------------

    def _layers(self, flat: np.ndarray, which: str):
        shapes = self.actor_shapes if which == "actor" else self.critic_shapes
        out = []
        for (ws, bs), (din, dout) in zip(self._slices[which], shapes):
            out.append((flat[ws].reshape(din, dout), flat[bs]))
        return out

    def log_std(self, flat: np.ndarray) -> np.ndarray:
        return flat[self._log_std_slice]

    def init_params(self, seed: int = 0, log_std_init: float = math.log(0.5)) -> PolicyParams:
        rng = np.random.default_rng(seed)
        flat = np.zeros(self.num_params)
        for which, shapes in (("actor", self.actor_shapes), ("critic", self.critic_shapes)):
            for li, ((ws, bs), (din, dout)) in enumerate(zip(self._slices[which], shapes)):
                last = li == len(shapes) - 1
                if not last:
                    gain = math.sqrt(2.0)
                elif which == "actor":
                    gain = 0.01
                else:
                    gain = 1.0
                flat[ws] = _orthogonal(rng, (din, dout), gain).ravel()
        flat[self._log_std_slice] = log_std_init
        return PolicyParams(flat, self.spec)

    # -- forward ----------------------------------------------------------

    def _trunk_forward(self, layers, X: np.ndarray):
        acts = [X]
        h = X
        for li, (W, b) in enumerate(layers):
            z = h @ W + b
            h = z if li == len(layers) - 1 else np.tanh(z)
            acts.append(h)
        return h, acts

    def forward_batch(self, flat: np.ndarray, X: np.ndarray):
        if X.shape[-1] != self.spec.obs_dim:
            raise ShapeMismatch(
                f"observation dim {X.shape[-1]} != network input {self.spec.obs_dim}"
            )
        means, _ = self._trunk_forward(self._layers(flat, "actor"), X)
        values, _ = self._trunk_forward(self._layers(flat, "critic"), X)
        return means, values[:, 0], self.log_std(flat).copy()

    # -- backward ---------------------------------------------------------

    def _trunk_backward(self, layers, acts, G: np.ndarray, grad: np.ndarray, slices):
        d = G
        for li in range(len(layers) - 1, -1, -1):
            W, _ = layers[li]
            ws, bs = slices[li]
            grad[ws] += (acts[li].T @ d).ravel()
            grad[bs] += d.sum(axis=0)
            if li > 0:
                d = (d @ W.T) * (1.0 - acts[li] ** 2)

    def backward_batch(
        self,
        flat: np.ndarray,
        X: np.ndarray,
        actions: np.ndarray,
        c_pg: np.ndarray,
        c_v: np.ndarray,
        c_ent: np.ndarray,
    ) -> np.ndarray:
        """Gradient of sum_i (c_pg_i*logp_i + c_v_i*value_i + c_ent_i*entropy)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape != (X.shape[0], self.spec.action_dim):
            raise ShapeMismatch("actions must be (batch, action_dim)")
        B = X.shape[0]
        c_pg = np.broadcast_to(np.asarray(c_pg, dtype=float), (B,))
        c_v = np.broadcast_to(np.asarray(c_v, dtype=float), (B,))
        c_ent = np.broadcast_to(np.asarray(c_ent, dtype=float), (B,))

        actor_layers = self._layers(flat, "actor")
        critic_layers = self._layers(flat, "critic")
        means, a_acts = self._trunk_forward(actor_layers, X)
        _, c_acts = self._trunk_forward(critic_layers, X)
        log_std = self.log_std(flat)
        inv_var = np.exp(-2.0 * log_std)

        grad = np.zeros(self.num_params)
        z2 = ((actions - means) ** 2) * inv_var  # (B, A)
        # d logp / d mean = (a - mu) / sigma^2
        G_mean = c_pg[:, None] * (actions - means) * inv_var
        self._trunk_backward(actor_layers, a_acts, G_mean, grad, self._slices["actor"])
        G_value = c_v[:, None]
        self._trunk_backward(critic_layers, c_acts, G_value, grad, self._slices["critic"])
        # d logp / d log_std = z^2 - 1; d entropy / d log_std = 1
        grad[self._log_std_slice] = (c_pg[:, None] * (z2 - 1.0)).sum(axis=0) + c_ent.sum()
        return grad

    # -- sampling / densities ----------------------------------------------

    def log_prob_batch(self, means, log_std, actions) -> np.ndarray:
        z2 = ((actions - means) * np.exp(-log_std)) ** 2
        return (-0.5 * z2 - log_std - 0.5 * LOG_2PI).sum(axis=-1)

    def entropy(self, log_std) -> float:
        return float(np.sum(log_std + 0.5 * (1.0 + LOG_2PI)))

    def act(self, flat: np.ndarray, obs: np.ndarray, rng: np.random.Generator | None = None):
        """Action + logp + value for one observation; mean action when rng is None."""
        means, values, log_std = self.forward_batch(flat, np.atleast_2d(obs))
        mean = means[0]
        if rng is None:
            action = mean.copy()
        else:
            action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        logp = float(self.log_prob_batch(mean, log_std, action))
        return action, logp, float(values[0])

    def act_batch(self, flat: np.ndarray, obs: np.ndarray, rng: np.random.Generator):
        means, values, log_std = self.forward_batch(flat, obs)
        actions = means + np.exp(log_std) * rng.standard_normal(means.shape)
        logps = self.log_prob_batch(means, log_std, actions)
        return actions, logps, values


_net_cache: dict[NetworkSpec, ActorCritic] = {}


def network_for(spec: NetworkSpec) -> ActorCritic:
    if spec not in _net_cache:
        _net_cache[spec] = ActorCritic(spec)
    return _net_cache[spec]


def forward(params: PolicyParams, obs: np.ndarray) -> ActorCriticOutput:
    net = network_for(params.spec)
    means, values, log_std = net.forward_batch(params.flat, np.atleast_2d(obs))
    return ActorCriticOutput(means[0], log_std, float(values[0]))


def log_prob_and_entropy(out: ActorCriticOutput, action: np.ndarray) -> tuple[float, float]:
    """Diagonal-Gaussian log density at `action` plus the analytic entropy."""
    z2 = ((np.asarray(action, dtype=float) - out.action_mean) * np.exp(-out.action_log_std)) ** 2
    logp = float(np.sum(-0.5 * z2 - out.action_log_std - 0.5 * LOG_2PI))
    entropy = float(np.sum(out.action_log_std + 0.5 * (1.0 + LOG_2PI)))
    return logp, entropy


def backward(
    params: PolicyParams,
    obs: np.ndarray,
    action: np.ndarray,
    grad_coefficients: tuple[float, float, float],
) -> np.ndarray:
    """Flat gradient of c_pg*logp + c_v*value + c_ent*entropy."""
    net = network_for(params.spec)
    c_pg, c_v, c_ent = grad_coefficients
    return net.backward_batch(
        params.flat,
        np.atleast_2d(obs),
        np.atleast_2d(action),
        np.array([c_pg]),
        np.array([c_v]),
        np.array([c_ent]),
    )


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(params: PolicyParams, path, rng_seed: int = 0) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": params.spec.obs_dim,
        "action_dim": params.spec.action_dim,
        "hidden_sizes": list(params.spec.hidden_sizes),
        "rng_seed": int(rng_seed),
        "num_params": int(params.flat.size),
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(params.flat, dtype="<f8").tobytes())


def load_checkpoint(path) -> PolicyParams:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version in {path}")
    spec = NetworkSpec(
        obs_dim=int(header["obs_dim"]),
        action_dim=int(header["action_dim"]),
        hidden_sizes=tuple(header["hidden_sizes"]),
    )
    flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if flat.size != header["num_params"]:
        raise ValueError(f"checkpoint payload size mismatch in {path}")
    expected = network_for(spec).num_params
    if flat.size != expected:
        raise ShapeMismatch(f"checkpoint has {flat.size} params, spec needs {expected}")
    return PolicyParams(flat, spec)
