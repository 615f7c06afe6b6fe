"""Lock-step message simulation of split training across edge, drone and server.

Each node owns its slice of the network and its own Adam state. Per batch:

1. the edge computes ``z`` and sends one activation towards the server
   (direct path) and one towards the drone (relay path);
2. links erase symbols on the way through and remember the mask;
3. the drone forwards its two-layer output to the server;
4. once both activations are in, the server evaluates the joint loss
   (both exits on both paths), steps its optimizer and sends gradients
   back along each path;
5. the drone and edge backpropagate what they receive and step their
   optimizers.

Returning gradients cross the same link masks as the forward activations.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import channel
from .channel import Link
from .data import SampleSet
from .errors import ConfigurationError, ContractViolation
from .layers import AdamHyper, AdamState, adam_step
from .network import (
    CostModel,
    Path,
    Role,
    SplitNetwork,
    Strategy,
    loss_seeds,
    per_sample_loss,
    predict,
    server_backward,
    server_forward,
    stack_backward,
    stack_forward,
)
from .numeric import DTYPE

log = logging.getLogger(__name__)

DEFAULT_REPEATS = 20
DEFAULT_TOLERANCE = 1e-3
EVAL_CHUNK = 4096


class MessageKind(str, enum.Enum):
    ACTIVATION = "activation"
    GRADIENT = "gradient"
    DECISION = "decision"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    path: Path
    src: Role
    dst: Role
    payload: object
    batch_id: int


# (src, dst) -> link the message crosses
ROUTES = {
    (Role.EDGE, Role.SERVER): Link.EDGE_SERVER,
    (Role.SERVER, Role.EDGE): Link.EDGE_SERVER,
    (Role.EDGE, Role.DRONE): Link.EDGE_DRONE,
    (Role.DRONE, Role.EDGE): Link.EDGE_DRONE,
    (Role.DRONE, Role.SERVER): Link.DRONE_SERVER,
    (Role.SERVER, Role.DRONE): Link.DRONE_SERVER,
}


@dataclass
class SessionConfig:
    seed: int = 0
    epochs: int = 200
    batch_size: int = 64
    p_es: float = 0.0
    p_ed: float = 0.0
    p_ds: float = 0.0
    hyper: AdamHyper = field(default_factory=AdamHyper)
    hidden: int = 10
    shuffle: bool = True
    rescale: bool = False  # inverted-dropout scaling of surviving symbols

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.hidden < 1:
            raise ConfigurationError(f"hidden must be >= 1, got {self.hidden}")
        for name in ("p_es", "p_ed", "p_ds"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
        h = self.hyper
        if h.lr <= 0 or not (0 <= h.beta1 < 1) or not (0 <= h.beta2 < 1) or h.eps <= 0:
            raise ConfigurationError(f"invalid Adam hyperparameters {h}")

    @property
    def link_probs(self) -> dict[Link, float]:
        return {Link.EDGE_SERVER: self.p_es, Link.EDGE_DRONE: self.p_ed, Link.DRONE_SERVER: self.p_ds}

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "p_es": self.p_es,
            "p_ed": self.p_ed,
            "p_ds": self.p_ds,
            "lr": self.hyper.lr,
            "beta1": self.hyper.beta1,
            "beta2": self.hyper.beta2,
            "eps": self.hyper.eps,
            "hidden": self.hidden,
            "shuffle": self.shuffle,
            "rescale": self.rescale,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SessionConfig":
        d = dict(d)
        hyper = AdamHyper(
            lr=d.pop("lr", 0.01), beta1=d.pop("beta1", 0.9), beta2=d.pop("beta2", 0.999), eps=d.pop("eps", 1e-8)
        )
        known = {"seed", "epochs", "batch_size", "p_es", "p_ed", "p_ds", "hidden", "shuffle", "rescale"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown session config key(s) {sorted(unknown)}")
        return cls(hyper=hyper, **d)


# --------------------------------------------------------------------------
# Links and nodes
# --------------------------------------------------------------------------


class ErasureLink:
    """A channel that remembers each batch's mask for the returning gradient."""

    def __init__(self, link: Link, p: float, rng: np.random.Generator, rescale: bool = False):
        channel.ChannelSpec(link, p)
        self.link = link
        self.p = p
        self.rng = rng
        self.rescale = rescale
        self._masks: dict[tuple[int, Path], np.ndarray] = {}

    def carry(self, msg: Message) -> Message:
        key = (msg.batch_id, msg.path)
        if msg.kind is MessageKind.ACTIVATION:
            if key in self._masks:
                raise ContractViolation(f"{self.link.value}: second activation for batch {key}")
            mask = channel.sample_mask(self.rng, self.p, np.shape(msg.payload), self.rescale)
            self._masks[key] = mask
            payload = channel.apply(msg.payload, mask)
        elif msg.kind is MessageKind.GRADIENT:
            try:
                mask = self._masks.pop(key)
            except KeyError:
                raise ContractViolation(f"{self.link.value}: gradient for unknown batch {key}") from None
            payload = channel.mask_gradient(msg.payload, mask)
        else:
            payload = msg.payload
        return Message(msg.kind, msg.path, msg.src, msg.dst, payload, msg.batch_id)

    @property
    def in_flight(self) -> int:
        return len(self._masks)


class Node:
    role: Role

    def __init__(self, net: SplitNetwork, hyper: AdamHyper, optimizer: AdamState | None = None):
        self.net = net
        self.hyper = hyper
        self.params = net.role_params(self.role)
        self.optimizer = optimizer if optimizer is not None else AdamState.for_params(self.params)
        self.outbox: list[Message] = []

    def send(self, kind: MessageKind, path: Path, dst: Role, payload, batch_id: int) -> None:
        self.outbox.append(Message(kind, path, self.role, dst, payload, batch_id))

    def step(self, grads: dict[str, np.ndarray]) -> None:
        adam_step(self.params, grads, self.optimizer, self.hyper)

    def receive(self, msg: Message) -> None:  # pragma: no cover - abstract
        raise NotImplementedError


def _named(role_prefix: str, grads_list) -> dict[str, np.ndarray]:
    out = {}
    for i, g in enumerate(grads_list):
        for name, arr in g.arrays().items():
            out[f"{role_prefix}.{i}.{name}"] = arr
    return out


class EdgeNode(Node):
    role = Role.EDGE

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._caches = None
        self._grad_in: dict[Path, np.ndarray] = {}
        self.batches_done = 0

    def begin(self, batch_id: int, x: np.ndarray, paths=(Path.DIRECT, Path.RELAY)) -> None:
        z, self._caches = stack_forward(self.net.edge, x)
        self._expect = set(paths)
        self._grad_in = {}
        for path in paths:
            dst = Role.SERVER if path is Path.DIRECT else Role.DRONE
            self.send(MessageKind.ACTIVATION, path, dst, z, batch_id)

    def receive(self, msg: Message) -> None:
        if msg.kind is not MessageKind.GRADIENT:
            raise ContractViolation(f"edge cannot handle {msg.kind.value}")
        self._grad_in[msg.path] = msg.payload
        if set(self._grad_in) == self._expect:
            dz = sum(self._grad_in[p] for p in sorted(self._expect, key=lambda p: p.value))
            grads, _ = stack_backward(self.net.edge, self._caches, dz)
            self.step(_named("edge", grads))
            self._caches = None
            self.batches_done += 1


class DroneNode(Node):
    role = Role.DRONE

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._caches = None

    def receive(self, msg: Message) -> None:
        if msg.kind is MessageKind.ACTIVATION:
            out, self._caches = stack_forward(self.net.drone, msg.payload)
            self.send(MessageKind.ACTIVATION, Path.RELAY, Role.SERVER, out, msg.batch_id)
        elif msg.kind is MessageKind.GRADIENT:
            grads, d_in = stack_backward(self.net.drone, self._caches, msg.payload)
            # Pass the gradient on before updating: it was computed with pre-step weights.
            self.send(MessageKind.GRADIENT, Path.RELAY, Role.EDGE, d_in, msg.batch_id)
            self.step(_named("drone", grads))
            self._caches = None
        else:
            raise ContractViolation(f"drone cannot handle {msg.kind.value}")


class ServerNode(Node):
    role = Role.SERVER

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._labels = None
        self._expect: set[Path] = set()
        self._received: dict[Path, np.ndarray] = {}
        self.last_loss = float("nan")

    def expect(self, batch_id: int, labels: np.ndarray, paths=(Path.DIRECT, Path.RELAY)) -> None:
        self._labels = labels
        self._expect = set(paths)
        self._received = {}
        self._batch_id = batch_id

    def receive(self, msg: Message) -> None:
        if msg.kind is not MessageKind.ACTIVATION:
            raise ContractViolation(f"server cannot handle {msg.kind.value}")
        if msg.batch_id != self._batch_id:
            raise ContractViolation(f"server got batch {msg.batch_id}, expected {self._batch_id}")
        self._received[msg.path] = msg.payload
        if set(self._received) != self._expect:
            return
        total = self.net.zeros_like()
        server_grads = [g for g in total.server]
        head_grad = total.head
        loss = 0.0
        outgoing = []
        for path in sorted(self._expect, key=lambda p: p.value):
            sp = server_forward(self.net, self._received[path])
            loss += float(np.mean(per_sample_loss(self._labels, sp.y_full, sp.y_fc)))
            dy_full, dy_fc = loss_seeds(self._labels, sp)
            g_server, g_head, dz_hat = server_backward(self.net, sp, dy_full, dy_fc)
            server_grads = [a + b for a, b in zip(server_grads, g_server)]
            head_grad = head_grad + g_head
            dst = Role.EDGE if path is Path.DIRECT else Role.DRONE
            outgoing.append((path, dst, dz_hat))
        for path, dst, dz_hat in outgoing:
            self.send(MessageKind.GRADIENT, path, dst, dz_hat, msg.batch_id)
        grads = _named("server", server_grads)
        grads.update({f"head.{k}": v for k, v in head_grad.arrays().items()})
        self.step(grads)
        self.last_loss = loss
        self._received = {}


class Scheduler:
    """Delivers messages in FIFO order, passing each through its link."""

    def __init__(self, nodes: Mapping[Role, Node], links: Mapping[Link, ErasureLink], trace: bool = False):
        self.nodes = dict(nodes)
        self.links = dict(links)
        self.queue: deque[Message] = deque()
        self.delivered: list[tuple[MessageKind, Path, Role, Role, int]] = []
        # Full delivered messages, payloads included; only kept when tracing.
        self.trace: list[Message] | None = [] if trace else None

    def collect(self) -> None:
        for node in self.nodes.values():
            for msg in node.outbox:
                self.queue.append(self.links[ROUTES[(msg.src, msg.dst)]].carry(msg))
            node.outbox.clear()

    def run(self) -> None:
        self.collect()
        while self.queue:
            msg = self.queue.popleft()
            self.delivered.append((msg.kind, msg.path, msg.src, msg.dst, msg.batch_id))
            if self.trace is not None:
                self.trace.append(msg)
            self.nodes[msg.dst].receive(msg)
            self.collect()


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    train_loss: float


@dataclass
class TrainingResult:
    network: SplitNetwork
    log: list[EpochLog]
    optimizers: dict[Role, AdamState]
    message_counts: Counter

    def __iter__(self):
        # Allows ``net, log = run_training_session(...)``.
        yield self.network
        yield self.log


def session_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for init, shuffling and each link."""
    names = ("init", "shuffle", Link.EDGE_SERVER.value, Link.EDGE_DRONE.value, Link.DRONE_SERVER.value)
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def build_session(
    config: SessionConfig,
    input_size: int,
    net: SplitNetwork | None = None,
    optimizers: Mapping[Role, AdamState] | None = None,
    trace: bool = False,
):
    streams = session_streams(config.seed)
    if net is None:
        net = SplitNetwork.init(int(streams["init"].integers(2**63)), input_size, config.hidden)
    optimizers = optimizers or {}
    nodes = {
        Role.EDGE: EdgeNode(net, config.hyper, optimizers.get(Role.EDGE)),
        Role.DRONE: DroneNode(net, config.hyper, optimizers.get(Role.DRONE)),
        Role.SERVER: ServerNode(net, config.hyper, optimizers.get(Role.SERVER)),
    }
    probs = config.link_probs
    links = {l: ErasureLink(l, probs[l], streams[l.value], config.rescale) for l in Link}
    return net, Scheduler(nodes, links, trace), streams["shuffle"]


def run_training_session(config: SessionConfig, data: SampleSet, progress=None) -> TrainingResult:
    """Train a freshly initialised split network on normalised samples."""
    config.validate()
    if len(data) == 0:
        raise ConfigurationError("training set is empty")
    x_all = data.sequences()
    y_all = data.labels
    net, sched, shuffle_rng = build_session(config, x_all.shape[2])
    edge, server = sched.nodes[Role.EDGE], sched.nodes[Role.SERVER]
    n = len(data)
    history: list[EpochLog] = []
    batch_id = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        weighted = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            server.expect(batch_id, y_all[idx])
            edge.begin(batch_id, x_all[idx])
            sched.run()
            if edge.batches_done != batch_id + 1:
                raise ContractViolation(f"batch {batch_id} did not complete its round trip")
            weighted += server.last_loss * len(idx)
            batch_id += 1
        history.append(EpochLog(epoch, weighted / n))
        if progress is not None:
            progress(history[-1])
        log.debug("epoch %d loss %.6f", epoch, history[-1].train_loss)
    counts = Counter((k.value, p.value, s.value, d.value) for k, p, s, d, _ in sched.delivered)
    return TrainingResult(
        network=net,
        log=history,
        optimizers={role: node.optimizer for role, node in sched.nodes.items()},
        message_counts=counts,
    )


# --------------------------------------------------------------------------
# Evaluation and strategy selection
# --------------------------------------------------------------------------


def evaluate(
    net: SplitNetwork,
    samples: SampleSet,
    strategy: Strategy,
    probs: Mapping[Link, float],
    seed: int,
    repeats: int = DEFAULT_REPEATS,
    rescale: bool = False,
) -> float:
    """Mean squared error over every (sample, repeat) pair, fresh masks each time."""
    strategy = Strategy(strategy)
    if repeats < 1:
        raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
    if len(samples) == 0:
        raise ConfigurationError("no samples to evaluate")
    # A channel with p in {0, 1} is deterministic; extra redraws cannot change anything.
    if all(probs.get(l, 0.5) in (0.0, 1.0) for l in strategy.links):
        repeats = 1
    x = samples.sequences()
    y = samples.labels
    rng = np.random.default_rng(seed)
    total = 0.0
    xs = np.tile(x, (repeats, 1, 1)) if repeats > 1 else x
    ys = np.tile(y, repeats) if repeats > 1 else y
    for start in range(0, len(ys), EVAL_CHUNK):
        pred = predict(net, strategy, xs[start : start + EVAL_CHUNK], rng, probs, rescale)
        err = ys[start : start + EVAL_CHUNK] - pred
        total += float(err @ err)
    return total / len(ys)


def score_strategies(net, samples, probs, seed, repeats=DEFAULT_REPEATS, rescale=False) -> dict[Strategy, float]:
    return {s: evaluate(net, samples, s, probs, seed, repeats, rescale) for s in Strategy}


def choose_strategy(mses: Mapping[Strategy, float], cost_ranks: Mapping[Strategy, int], tolerance: float) -> Strategy:
    """Cheapest strategy whose MSE is within ``tolerance`` of the best one."""
    if not mses:
        raise ConfigurationError("no strategies to choose from")
    if tolerance < 0:
        raise ConfigurationError(f"tolerance must be >= 0, got {tolerance}")
    best = min(mses.values())
    close = [s for s, m in mses.items() if m - best <= tolerance]
    return min(close, key=lambda s: (cost_ranks[s], mses[s]))


def select_strategy(
    net: SplitNetwork,
    probe: SampleSet,
    estimates: Mapping[Link, float],
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 0,
    repeats: int = DEFAULT_REPEATS,
    rescale: bool = False,
) -> Strategy:
    if len(probe) == 0:
        raise ConfigurationError("probe set is empty")
    mses = score_strategies(net, probe, estimates, seed, repeats, rescale)
    ranks = CostModel.for_network(net, probe.sequences().shape[1]).ranks()
    return choose_strategy(mses, ranks, tolerance)
