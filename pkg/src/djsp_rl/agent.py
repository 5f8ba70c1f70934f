"""Rule-selecting deep Q agent: dueling noisy heads over the pooled encoder
output, double-Q targets from a periodically synced twin, prioritized replay,
and the episode training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .config import EnvConfig, NetConfig, TrainConfig, substream
from .diffcore import Var, no_grad
from .env import JobShopEnv
from .replay import PrioritizedBuffer, Transition
from .rules import ALL_RULES, DispatchRule

N_ACTIONS = len(ALL_RULES)
N_INPUTS = 10


def pool(encoded) -> Var:
    """Column-wise mean over operation rows: (..., n_ops, d) -> (..., d)."""
    return dc.mean_rows(dc.as_var(encoded))


class QNetwork:
    """Encoder + trunk + value/advantage streams with named parameters."""

    def __init__(self, net_cfg: NetConfig, dueling: bool = True, noisy: bool = True,
                 rng: np.random.Generator | None = None, params: dict | None = None):
        self.cfg = net_cfg
        self.dueling = dueling
        self.noisy = noisy
        d = net_cfg.d_feature
        if params is not None:
            self.params = params
        else:
            assert rng is not None
            self.params = dc.init_encoder_params(rng, net_cfg, N_INPUTS)
            for prefix, n_in, n_out in self._head_shapes(d):
                layer = dc.init_linear(rng, n_in, n_out, net_cfg.sigma0, noisy)
                self.params.update({f"{prefix}.{k}": v for k, v in layer.items()})

    def _head_shapes(self, d):
        shapes = [("trunk", d, d)]
        if self.dueling:
            shapes += [("value", d, 1), ("adv", d, N_ACTIONS)]
        else:
            shapes += [("adv", d, N_ACTIONS)]
        return shapes

    def head_prefixes(self):
        return [p for p, _, _ in self._head_shapes(self.cfg.d_feature)]

    def sample_noise(self, rng: np.random.Generator) -> dict:
        return {prefix: (dc.factorised_noise(rng, n_in, n_out) if self.noisy
                         else dc.zero_noise(n_in, n_out))
                for prefix, n_in, n_out in self._head_shapes(self.cfg.d_feature)}

    def zero_noise(self) -> dict:
        return {p: dc.zero_noise(n_in, n_out)
                for p, n_in, n_out in self._head_shapes(self.cfg.d_feature)}

    def q_values(self, states, noise: dict, collect_attention: bool = False):
        """states (..., n_ops, 10) -> q (..., n_actions) Var."""
        encoded, attention = dc.encoder_forward(states, self.params, self.cfg)
        h = dc.relu(dc.noisy_linear(pool(encoded), self.params, "trunk", noise))
        if self.dueling:
            v = dc.noisy_linear(h, self.params, "value", noise)
            a = dc.noisy_linear(h, self.params, "adv", noise)
            q = dc.add(dc.sub(a, dc.mean_last_keepdims(a)), v)
        else:
            q = dc.noisy_linear(h, self.params, "adv", noise)
        return (q, attention) if collect_attention else q

    def q_array(self, states, noise: dict) -> np.ndarray:
        with no_grad():
            return self.q_values(states, noise).data

    def act(self, state: np.ndarray, rng: np.random.Generator) -> DispatchRule:
        """Fresh-noise greedy action; exploration comes from the noise alone."""
        q = self.q_array(state[None, :, :], self.sample_noise(rng))[0]
        return DispatchRule(int(np.argmax(q)))

    def greedy_action(self, state: np.ndarray) -> DispatchRule:
        q = self.q_array(state[None, :, :], self.zero_noise())[0]
        return DispatchRule(int(np.argmax(q)))

    def clone(self) -> "QNetwork":
        params = {k: dc.param(v.data.copy()) for k, v in self.params.items()}
        return QNetwork(self.cfg, self.dueling, self.noisy, params=params)

    def sync_from(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            self.params[k].data = v.data.copy()

    def checkpoint_json(self, seed: int, version: str, extra: dict | None = None) -> str:
        meta = {
            "d_feature": self.cfg.d_feature, "n_heads": self.cfg.n_heads,
            "n_layers": self.cfg.n_layers, "d_ff": self.cfg.d_ff,
            "sigma0": self.cfg.sigma0, "dueling": self.dueling,
            "noisy": self.noisy, "seed": seed, "version": version,
        }
        meta.update(extra or {})
        return dc.params_to_json(self.params, meta)

    @classmethod
    def from_checkpoint(cls, text: str) -> tuple["QNetwork", dict]:
        params, meta = dc.params_from_json(text)
        cfg = NetConfig(d_feature=meta["d_feature"], n_heads=meta["n_heads"],
                        n_layers=meta["n_layers"], d_ff=meta["d_ff"],
                        sigma0=meta.get("sigma0", 0.5))
        return cls(cfg, meta["dueling"], meta["noisy"], params=params), meta


def is_weight(per_j: float, count: int, beta: float, max_weight: float) -> float:
    """(N * Per(j))^(-beta), normalized by the batch max weight."""
    return (count * per_j) ** (-beta) / max_weight


def td_targets(batch: list[Transition], behavior: QNetwork, target: QNetwork,
               gamma: float, noise_target: dict, noise_select: dict,
               double: bool = True) -> np.ndarray:
    """y = r for terminal; else r + gamma * Q_target(s', argmax_b Q_behavior(s', b))."""
    rewards = np.array([t.r for t in batch])
    done = np.array([t.done for t in batch])
    s_next = np.stack([t.s_next for t in batch])
    with no_grad():
        q_tgt = target.q_array(s_next, noise_target)
        if double:
            q_sel = behavior.q_array(s_next, noise_select)
            next_val = q_tgt[np.arange(len(batch)), np.argmax(q_sel, axis=1)]
        else:
            next_val = q_tgt.max(axis=1)
    return rewards + gamma * (1.0 - done) * next_val


class Adam:
    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            if p.grad is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * p.grad
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * p.grad ** 2
            p.data -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


@dataclass
class TrainState:
    behavior: QNetwork
    target: QNetwork
    buffer: PrioritizedBuffer
    optimizer: Adam
    cfg: TrainConfig
    rng_noise: np.random.Generator
    rng_sample: np.random.Generator
    grad_steps: int = 0
    env_decisions: int = 0
    losses: list = field(default_factory=list)

    def epsilon(self) -> float:
        """epsilon-greedy schedule, used only when noisy layers are off."""
        c = self.cfg
        frac = min(1.0, self.env_decisions / max(c.eps_decay_steps, 1))
        return c.eps_start + frac * (c.eps_end - c.eps_start)


def train_step(ts: TrainState) -> dict:
    cfg = ts.cfg
    if len(ts.buffer) < cfg.batch_size:
        raise ValueError(f"buffer holds {len(ts.buffer)} < batch size {cfg.batch_size}")
    idx, batch, weights = ts.buffer.sample(cfg.batch_size, ts.rng_sample)
    y = td_targets(batch, ts.behavior, ts.target, cfg.gamma,
                   noise_target=ts.target.sample_noise(ts.rng_noise),
                   noise_select=ts.behavior.sample_noise(ts.rng_noise),
                   double=cfg.double)
    states = np.stack([t.s for t in batch])
    actions = np.array([t.a for t in batch])
    noise_online = ts.behavior.sample_noise(ts.rng_noise)
    dc.zero_grads(ts.behavior.params)
    q = ts.behavior.q_values(states, noise_online)
    q_taken = dc.gather_last(q, actions)
    delta = dc.sub(Var(y), q_taken)
    loss = dc.mul(dc.sum_all(dc.mul(dc.mul(delta, delta), Var(weights))),
                  1.0 / cfg.batch_size)
    dc.backward(loss)
    ts.optimizer.step(ts.behavior.params)
    ts.buffer.update_priorities(idx, np.abs(delta.data) + cfg.priority_floor)
    ts.grad_steps += 1
    if ts.grad_steps % cfg.target_update == 0:
        ts.target.sync_from(ts.behavior)
    stats = {"loss": float(loss.data), "mean_abs_td": float(np.abs(delta.data).mean()),
             "grad_steps": ts.grad_steps}
    ts.losses.append(stats["loss"])
    return stats


def make_train_state(net_cfg: NetConfig, cfg: TrainConfig, seed: int) -> TrainState:
    behavior = QNetwork(net_cfg, cfg.dueling, cfg.noisy, rng=substream(seed, "net-init"))
    target = behavior.clone()
    buffer = PrioritizedBuffer(cfg.buffer_size, cfg.per_alpha, cfg.per_beta,
                               prioritized=cfg.per)
    return TrainState(
        behavior=behavior, target=target, buffer=buffer,
        optimizer=Adam(behavior.params, cfg.step_size), cfg=cfg,
        rng_noise=substream(seed, "noise"), rng_sample=substream(seed, "sample"),
    )


def train(env_cfg: EnvConfig, net_cfg: NetConfig, cfg: TrainConfig, seed: int,
          episodes: int | None = None, progress=None):
    """Full training loop; returns (behavior net, per-episode log rows).

    Log rows are (episode, cumulative_reward, makespan), the training curve.
    """
    episodes = cfg.episodes if episodes is None else episodes
    env = JobShopEnv(env_cfg)
    ts = make_train_state(net_cfg, cfg, seed)
    ep_seeds = substream(seed, "train-episodes")
    rng_eps = substream(seed, "epsilon")
    log = []
    for ep in range(episodes):
        # buffer keeps float32 copies; all math upcasts to float64 in Var
        state = env.reset(seed=int(ep_seeds.integers(0, 2**63))).astype(np.float32)
        ep_reward = 0.0
        done = False
        while not done:
            if ts.cfg.noisy:
                action = ts.behavior.act(state, ts.rng_noise)
            else:
                if rng_eps.random() < ts.epsilon():
                    action = DispatchRule(int(rng_eps.integers(0, N_ACTIONS)))
                else:
                    action = ts.behavior.greedy_action(state)
            ts.env_decisions += 1
            res = env.step(action)
            state_next = res.features.astype(np.float32)
            ts.buffer.store(Transition(state, int(action), res.reward,
                                       state_next, res.done))
            ep_reward += res.reward
            state = state_next
            done = res.done
            if (len(ts.buffer) >= cfg.batch_size
                    and ts.env_decisions % cfg.train_every == 0):
                train_step(ts)
        log.append((ep, ep_reward, env.makespan()))
        if progress is not None:
            progress(ep, log[-1])
    return ts.behavior, log


def evaluate_policy(policy, env: JobShopEnv, seeds) -> list[int]:
    """Run one episode per seed under `policy(features) -> DispatchRule`."""
    makespans = []
    for s in seeds:
        state = env.reset(seed=int(s))
        done = False
        while not done:
            res = env.step(policy(state))
            state = res.features
            done = res.done
        makespans.append(env.makespan())
    return makespans


def evaluate(net: QNetwork, env_cfg: EnvConfig, seeds) -> dict:
    """Greedy (zero-noise) evaluation over the given episode seeds."""
    env = JobShopEnv(env_cfg)
    ms = evaluate_policy(lambda s: net.greedy_action(s), env, seeds)
    return {"makespans": ms, "mean": float(np.mean(ms)), "min": int(np.min(ms)),
            "std": float(np.std(ms))}


def episode_seed_set(master_seed: int, episodes: int) -> list[int]:
    """The shared evaluation seed list all methods are compared on."""
    gen = substream(master_seed, "eval-episodes")
    return [int(s) for s in gen.integers(0, 2**63, size=episodes)]
