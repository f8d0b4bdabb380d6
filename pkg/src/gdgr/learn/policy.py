"""Stochastic policies over flat parameter vectors.

Three flavors share one interface:

* ``tabular``     -- Q-table over a discrete state index, softmax export
* ``categorical`` -- ReLU MLP producing action logits
* ``gaussian``    -- ReLU MLP producing the mean, plus a learned log-sigma

The MLP is written out by hand (forward, reverse-mode and forward-mode
derivatives) so gradients, Fisher-vector products and KL terms are exact
and cheap for the small networks used here.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from gdgr.core import ConfigurationError, ContinuousBox, DiscreteActions, goal_key
from gdgr.envs import encoding_from_dict

HIDDEN = (100, 100)
LOG_2PI = float(np.log(2.0 * np.pi))


class MLP:
    """Fully connected ReLU network on a flat parameter vector."""

    def __init__(self, in_dim: int, out_dim: int, hidden=HIDDEN):
        self.sizes = (int(in_dim),) + tuple(int(h) for h in hidden) + (int(out_dim),)
        self.shapes = [(self.sizes[i], self.sizes[i + 1]) for i in range(len(self.sizes) - 1)]
        self.n_params = sum(a * b + b for a, b in self.shapes)

    def init(self, rng: np.random.Generator, out_scale: float = 0.01) -> np.ndarray:
        parts = []
        last = len(self.shapes) - 1
        for i, (a, b) in enumerate(self.shapes):
            std = np.sqrt(2.0 / a) * (out_scale if i == last else 1.0)
            parts.append(rng.standard_normal((a, b)).ravel() * std)
            parts.append(np.zeros(b))
        return np.concatenate(parts)

    def unpack(self, theta: np.ndarray):
        layers, off = [], 0
        for a, b in self.shapes:
            W = theta[off : off + a * b].reshape(a, b)
            off += a * b
            layers.append((W, theta[off : off + b]))
            off += b
        return layers

    def forward(self, theta, X, rowwise: bool = False):
        """Network output and per-layer activations.

        ``rowwise`` uses a row-independent product so a row's output does
        not depend on which other rows share the batch (BLAS gemm does not
        guarantee that); rollouts rely on it.
        """
        layers = self.unpack(theta)
        acts = [X]
        h = X
        for i, (W, b) in enumerate(layers):
            z = (np.einsum("ij,jk->ik", h, W) if rowwise else h @ W) + b
            h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
            acts.append(h)
        return h, acts

    def backward(self, theta, acts, dout) -> np.ndarray:
        """Vector-Jacobian product: d(sum(dout * out)) / d theta."""
        layers = self.unpack(theta)
        grads = []
        delta = dout
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            inp = acts[i]
            grads.append(delta.sum(axis=0))
            grads.append((inp.T @ delta).ravel())
            if i > 0:
                delta = (delta @ W.T) * (acts[i] > 0.0)
        grads.reverse()  # -> W0, b0, W1, b1, ...
        return np.concatenate(grads)

    def jvp(self, theta, acts, v) -> np.ndarray:
        """Jacobian-vector product d out / d theta . v at the cached point."""
        layers = self.unpack(theta)
        vlayers = self.unpack(v)
        dh = np.zeros_like(acts[0])
        for i, ((W, _), (dW, db)) in enumerate(zip(layers, vlayers)):
            dz = dh @ W + acts[i] @ dW + db
            dh = dz * (acts[i + 1] > 0.0) if i < len(layers) - 1 else dz
        return dh


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """A policy pi(a | s[, g]) with parameters ``params``.

    ``goal`` is the goal the policy is bound to (the goal it was trained
    for, or the goal injected by zero-shot binding); ``goal_conditioned``
    marks policies trained across a goal distribution.
    """

    flavor: str
    params: np.ndarray
    action_space: DiscreteActions | ContinuousBox
    encoding: object
    hidden: tuple = HIDDEN
    goal_conditioned: bool = False
    goal: tuple | None = None
    temperature: float = 0.1
    domain_id: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.flavor not in ("tabular", "categorical", "gaussian"):
            raise ConfigurationError(f"unknown policy flavor {self.flavor!r}")
        p = np.array(self.params, dtype=np.float64, copy=True)
        p.setflags(write=False)
        object.__setattr__(self, "params", p)
        if self.goal is not None:
            object.__setattr__(self, "goal", tuple(np.asarray(self.goal).ravel().tolist()))
        if p.size != self.n_params:
            raise ConfigurationError(f"parameter vector has {p.size} entries, architecture needs {self.n_params}")

    # -- architecture ------------------------------------------------------
    @property
    def n_actions(self) -> int:
        return self.action_space.n if self.action_space.discrete else self.action_space.dim

    @property
    def net(self) -> MLP:
        return MLP(self.encoding.dim, self.n_actions, self.hidden)

    @property
    def n_params(self) -> int:
        if self.flavor == "tabular":
            return self.encoding.n_states * self.action_space.n
        extra = self.action_space.dim if self.flavor == "gaussian" else 0
        return MLP(self.encoding.dim, self.n_actions, self.hidden).n_params + extra

    @property
    def q_table(self) -> np.ndarray:
        return self.params.reshape(self.encoding.n_states, self.action_space.n)

    def with_params(self, params) -> "StochasticPolicy":
        return replace(self, params=params)

    def bind(self, goal) -> "StochasticPolicy":
        """Fix the goal fed to a goal-conditioned network (zero-shot use)."""
        return replace(self, goal=tuple(np.asarray(goal).ravel().tolist()))

    # -- evaluation --------------------------------------------------------
    def _goals(self, goals, n):
        if goals is None:
            if self.goal is None:
                raise ConfigurationError("goal-conditioned policy needs a goal")
            goals = self.goal
        g = np.asarray(goals)
        return np.broadcast_to(g.reshape(-1, g.shape[-1]) if g.ndim else g.reshape(1, 1), (n, g.shape[-1]))

    def features(self, states, goals=None) -> np.ndarray:
        s = np.asarray(states)
        n = s.shape[0] if s.ndim > 1 else 1
        return self.encoding.features(s, self._goals(goals, n))

    def probs(self, states, goals=None) -> np.ndarray:
        if not self.action_space.discrete:
            raise ConfigurationError("probs() requires a discrete action space")
        if self.flavor == "tabular":
            q = self.q_table[self.encoding.index(states)]
            return _softmax(q / self.temperature)
        logits, _ = self.net.forward(self.params, self.features(states, goals), rowwise=True)
        return _softmax(logits)

    def mean_std(self, states, goals=None):
        if self.flavor != "gaussian":
            raise ConfigurationError("mean_std() requires a gaussian policy")
        theta, log_std = self.params[: -self.n_actions], self.params[-self.n_actions :]
        mean, _ = self.net.forward(theta, self.features(states, goals), rowwise=True)
        return mean, np.exp(log_std)

    def log_prob(self, states, actions, goals=None) -> np.ndarray:
        if self.flavor == "gaussian":
            mean, std = self.mean_std(states, goals)
            a = np.asarray(actions, dtype=np.float64).reshape(mean.shape)
            z = (a - mean) / std
            return -0.5 * (z**2).sum(axis=1) - np.log(std).sum() - 0.5 * len(std) * LOG_2PI
        p = self.probs(states, goals)
        a = np.asarray(actions, dtype=np.int64)
        return np.log(p[np.arange(len(a)), a])

    def greedy(self, states, goals=None) -> np.ndarray:
        if self.flavor == "gaussian":
            return self.mean_std(states, goals)[0]
        if self.flavor == "tabular":
            return np.argmax(self.q_table[self.encoding.index(states)], axis=1)
        return np.argmax(self.probs(states, goals), axis=1)

    def cache_key(self):
        return (self.flavor, goal_key(self.goal) if self.goal is not None else None, self.params.tobytes())


def init_policy(
    action_space,
    encoding,
    seed: int,
    hidden=HIDDEN,
    goal=None,
    goal_conditioned: bool = False,
    domain_id: int | None = None,
) -> StochasticPolicy:
    """Fresh MLP policy; categorical for discrete actions, gaussian otherwise."""
    rng = np.random.default_rng(seed)
    k = action_space.n if action_space.discrete else action_space.dim
    net = MLP(encoding.dim, k, hidden)
    theta = net.init(rng)
    if action_space.discrete:
        flavor = "categorical"
    else:
        flavor = "gaussian"
        theta = np.concatenate([theta, np.zeros(k)])  # log sigma = log 1
    return StochasticPolicy(
        flavor=flavor,
        params=theta,
        action_space=action_space,
        encoding=encoding,
        hidden=tuple(hidden),
        goal_conditioned=goal_conditioned,
        goal=goal,
        domain_id=domain_id,
    )


def tabular_policy(q_table, action_space, encoding, temperature=0.1, goal=None, domain_id=None) -> StochasticPolicy:
    return StochasticPolicy(
        flavor="tabular",
        params=np.asarray(q_table, dtype=np.float64).ravel(),
        action_space=action_space,
        encoding=encoding,
        hidden=(),
        temperature=temperature,
        goal=goal,
        domain_id=domain_id,
    )


# ---------------------------------------------------------------------------
# differentiable pieces used by the trainers


class PolicyMath:
    """Log-likelihood, KL and Fisher algebra for an MLP policy on features."""

    def __init__(self, policy: StochasticPolicy):
        if policy.flavor == "tabular":
            raise ConfigurationError("gradient methods need an MLP policy")
        self.flavor = policy.flavor
        self.net = policy.net
        self.k = policy.n_actions
        self.n_params = policy.n_params

    def split(self, params):
        if self.flavor == "gaussian":
            return params[: -self.k], params[-self.k :]
        return params, None

    def dist(self, params, X):
        """Distribution parameters plus the forward cache."""
        theta, log_std = self.split(params)
        out, acts = self.net.forward(theta, X)
        if self.flavor == "gaussian":
            return (out, log_std), acts
        return _log_softmax(out), acts

    def log_prob(self, dist, A):
        if self.flavor == "gaussian":
            mean, log_std = dist
            z = (A - mean) / np.exp(log_std)
            return -0.5 * (z**2).sum(axis=1) - log_std.sum() - 0.5 * self.k * LOG_2PI
        return dist[np.arange(len(A)), A]

    def grad_log_prob(self, params, X, A, weights) -> np.ndarray:
        """Gradient of sum_i weights_i * log pi(a_i | x_i)."""
        theta, log_std = self.split(params)
        d, acts = self.dist(params, X)
        w = weights[:, None]
        if self.flavor == "gaussian":
            mean, _ = d
            var = np.exp(2.0 * log_std)
            dmean = w * (A - mean) / var
            g_theta = self.net.backward(theta, acts, dmean)
            g_log_std = (w * (((A - mean) ** 2) / var - 1.0)).sum(axis=0)
            return np.concatenate([g_theta, g_log_std])
        p = np.exp(d)
        onehot = np.zeros_like(p)
        onehot[np.arange(len(A)), A] = 1.0
        return self.net.backward(theta, acts, w * (onehot - p))

    def kl(self, old, new) -> np.ndarray:
        """Per-sample KL(old || new)."""
        if self.flavor == "gaussian":
            m0, l0 = old
            m1, l1 = new
            v0, v1 = np.exp(2 * l0), np.exp(2 * l1)
            return (l1 - l0 + (v0 + (m0 - m1) ** 2) / (2 * v1) - 0.5).sum(axis=1)
        p0 = np.exp(old)
        return (p0 * (old - new)).sum(axis=1)

    def fisher_vp(self, params, X, v, cache=None) -> np.ndarray:
        """Mean Fisher-vector product over the rows of X."""
        theta, log_std = self.split(params)
        if cache is None:
            cache = self.dist(params, X)
        d, acts = cache
        n = X.shape[0]
        vt, vl = self.split(v)
        Jv = self.net.jvp(theta, acts, vt)
        if self.flavor == "gaussian":
            var = np.exp(2.0 * log_std)
            back = self.net.backward(theta, acts, Jv / var) / n
            return np.concatenate([back, 2.0 * vl])
        p = np.exp(d)
        u = p * Jv - p * (p * Jv).sum(axis=1, keepdims=True)
        return self.net.backward(theta, acts, u) / n


# ---------------------------------------------------------------------------
# serialization

MAGIC = b"GDGRPOL\x00"
FORMAT_VERSION = 1


def _space_to_dict(space) -> dict:
    if space.discrete:
        return {"type": "discrete", "n": space.n}
    return {"type": "box", "low": list(space.low), "high": list(space.high)}


def _space_from_dict(d: dict):
    if d["type"] == "discrete":
        return DiscreteActions(int(d["n"]))
    return ContinuousBox(tuple(d["low"]), tuple(d["high"]))


def policy_to_bytes(policy: StochasticPolicy) -> bytes:
    """Versioned container: magic, version, header length, JSON header, f64 LE payload."""
    header = {
        "format_version": FORMAT_VERSION,
        "flavor": policy.flavor,
        "hidden": list(policy.hidden),
        "in_dim": policy.encoding.dim,
        "n_actions": policy.n_actions,
        "n_params": int(policy.params.size),
        "action_space": _space_to_dict(policy.action_space),
        "encoding": policy.encoding.to_dict(),
        "domain_id": None if policy.domain_id is None else f"{policy.domain_id:016x}",
        "goal": "conditioned" if policy.goal_conditioned and policy.goal is None else list(policy.goal) if policy.goal is not None else None,
        "goal_conditioned": policy.goal_conditioned,
        "temperature": policy.temperature,
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = np.ascontiguousarray(policy.params, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(raw)) + raw + payload


def policy_from_bytes(data: bytes) -> StochasticPolicy:
    if data[:8] != MAGIC:
        raise ConfigurationError("not a policy file (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported policy format version {version}")
    header = json.loads(data[16 : 16 + hlen].decode())
    payload = np.frombuffer(data[16 + hlen :], dtype="<f8")
    if payload.size != header["n_params"]:
        raise ConfigurationError("policy payload length does not match header")
    goal = header["goal"]
    return StochasticPolicy(
        flavor=header["flavor"],
        params=payload.astype(np.float64),
        action_space=_space_from_dict(header["action_space"]),
        encoding=encoding_from_dict(header["encoding"]),
        hidden=tuple(header["hidden"]),
        goal_conditioned=bool(header["goal_conditioned"]),
        goal=None if goal in (None, "conditioned") else tuple(goal),
        temperature=float(header["temperature"]),
        domain_id=None if header["domain_id"] is None else int(header["domain_id"], 16),
    )


def save_policy(policy: StochasticPolicy, path) -> None:
    Path(path).write_bytes(policy_to_bytes(policy))


def load_policy(path) -> StochasticPolicy:
    return policy_from_bytes(Path(path).read_bytes())
