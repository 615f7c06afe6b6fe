"""Edge / drone / server split of a stacked LSTM regressor.

The edge runs one LSTM layer and emits its full hidden sequence ``z``
(shape ``(T, M)``). On the direct path ``z`` crosses the edge-server link;
on the relay path it crosses the edge-drone link, passes two drone LSTM
layers, and crosses the drone-server link. The server holds three LSTM
layers and a scalar FC head. The head serves two exits:

* full:  ``FC(last hidden state of server_lstm(z_hat))``
* early: ``FC(z_hat[-1])`` -- the same head, applied to the received
  representation directly.

Functions work on a single sample ``(T, D)`` or a batch ``(B, T, D)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import channel
from .channel import Link
from .errors import ConfigurationError, ContractViolation
from .layers import (
    FcParams,
    LstmCache,
    LstmParams,
    fc_backward,
    fc_forward,
    init_fc,
    init_lstm,
    lstm_backward,
    lstm_forward,
)
from .numeric import DTYPE

EDGE_LAYERS, DRONE_LAYERS, SERVER_LAYERS = 1, 2, 3


class Path(str, enum.Enum):
    DIRECT = "direct"
    RELAY = "relay"


class Role(str, enum.Enum):
    EDGE = "edge"
    DRONE = "drone"
    SERVER = "server"


class Strategy(str, enum.Enum):
    DIRECT_FULL = "direct_full"
    DIRECT_FC = "direct_fc"
    RELAY_FULL = "relay_full"
    RELAY_FC = "relay_fc"

    @property
    def path(self) -> Path:
        return Path.DIRECT if self.value.startswith("direct") else Path.RELAY

    @property
    def full(self) -> bool:
        return self.value.endswith("full")

    @property
    def links(self) -> tuple[Link, ...]:
        return PATH_LINKS[self.path]

    @property
    def label(self) -> str:
        """Short name for the chain of sub-networks the strategy runs."""
        head = "f_S" if self.full else "f^_S"
        return "f_E+f_D+" + head if self.path is Path.RELAY else "f_E+" + head


PATH_LINKS = {
    Path.DIRECT: (Link.EDGE_SERVER,),
    Path.RELAY: (Link.EDGE_DRONE, Link.DRONE_SERVER),
}


@dataclass
class SplitNetwork:
    edge: list[LstmParams]
    drone: list[LstmParams]
    server: list[LstmParams]
    head: FcParams

    def __post_init__(self):
        sizes = (len(self.edge), len(self.drone), len(self.server))
        if sizes != (EDGE_LAYERS, DRONE_LAYERS, SERVER_LAYERS):
            raise ContractViolation(f"layer stacks must be 1/2/3 LSTM layers, got {sizes}")
        H = self.hidden
        for i, layer in enumerate(self.edge[1:] + self.drone + self.server):
            if layer.input_size != H or layer.hidden != H:
                raise ContractViolation(f"LSTM layer {i + 1} is not {H}->{H}")
        if self.edge[0].hidden != H or self.head.hidden != H:
            raise ContractViolation("edge output width and head input width must equal H")

    @classmethod
    def init(cls, seed: int, input_size: int, hidden: int = 10) -> "SplitNetwork":
        rng = np.random.default_rng(seed)
        return cls(
            edge=[init_lstm(rng, input_size, hidden)],
            drone=[init_lstm(rng, hidden, hidden) for _ in range(DRONE_LAYERS)],
            server=[init_lstm(rng, hidden, hidden) for _ in range(SERVER_LAYERS)],
            head=init_fc(rng, hidden),
        )

    @property
    def hidden(self) -> int:
        return self.edge[0].hidden

    @property
    def input_size(self) -> int:
        return self.edge[0].input_size

    @property
    def n_layers(self) -> int:
        return len(self.edge) + len(self.drone) + len(self.server) + 1

    def role_params(self, role: Role) -> dict[str, np.ndarray]:
        """Named views of the arrays owned by one node (mutating them mutates the net)."""
        role = Role(role)
        out = {}
        for i, layer in enumerate(getattr(self, role.value)):
            for name, arr in layer.arrays().items():
                out[f"{role.value}.{i}.{name}"] = arr
        if role is Role.SERVER:
            for name, arr in self.head.arrays().items():
                out[f"head.{name}"] = arr
        return out

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for role in Role:
            out.update(self.role_params(role))
        return out

    def zeros_like(self) -> "SplitNetwork":
        return SplitNetwork(
            edge=[p.zeros_like() for p in self.edge],
            drone=[p.zeros_like() for p in self.drone],
            server=[p.zeros_like() for p in self.server],
            head=self.head.zeros_like(),
        )

    def copy(self) -> "SplitNetwork":
        return SplitNetwork(
            edge=[p.copy() for p in self.edge],
            drone=[p.copy() for p in self.drone],
            server=[p.copy() for p in self.server],
            head=self.head.copy(),
        )

    def __add__(self, other: "SplitNetwork") -> "SplitNetwork":
        return SplitNetwork(
            edge=[a + b for a, b in zip(self.edge, other.edge)],
            drone=[a + b for a, b in zip(self.drone, other.drone)],
            server=[a + b for a, b in zip(self.server, other.server)],
            head=self.head + other.head,
        )


# --------------------------------------------------------------------------
# Compute cost
# --------------------------------------------------------------------------


def lstm_macs(input_size: int, hidden: int, steps: int) -> int:
    return steps * 4 * hidden * (input_size + hidden)


@dataclass(frozen=True)
class CostModel:
    """Multiply-accumulate counts for one forward pass of each sub-network."""

    edge: int
    drone: int
    server: int  # LSTM stack plus head
    head: int

    @classmethod
    def for_network(cls, net: SplitNetwork, steps: int) -> "CostModel":
        H = net.hidden
        return cls(
            edge=sum(lstm_macs(p.input_size, H, steps) for p in net.edge),
            drone=sum(lstm_macs(H, H, steps) for p in net.drone),
            server=sum(lstm_macs(H, H, steps) for p in net.server) + H,
            head=H,
        )

    def strategy_cost(self, strategy: Strategy) -> int:
        strategy = Strategy(strategy)
        cost = self.edge + (self.server if strategy.full else self.head)
        if strategy.path is Path.RELAY:
            cost += self.drone
        return cost

    def ranks(self) -> dict[Strategy, int]:
        """0 for the cheapest strategy, 3 for the most expensive."""
        order = sorted(Strategy, key=lambda s: (self.strategy_cost(s), s.value))
        return {s: i for i, s in enumerate(order)}


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------


def stack_forward(layers: list[LstmParams], x) -> tuple[np.ndarray, list[LstmCache]]:
    caches = []
    for p in layers:
        x, cache = lstm_forward(p, x)
        caches.append(cache)
    return x, caches


def stack_backward(
    layers: list[LstmParams], caches: list[LstmCache], dh_top
) -> tuple[list[LstmParams], np.ndarray]:
    if len(layers) != len(caches):
        raise ContractViolation(f"{len(layers)} layers but {len(caches)} caches")
    grads = [None] * len(layers)
    dh = dh_top
    for k in reversed(range(len(layers))):
        grads[k], dh = lstm_backward(layers[k], caches[k], dh)
    return grads, dh


@dataclass
class ServerPass:
    y_full: np.ndarray
    y_fc: np.ndarray
    caches: list[LstmCache]
    z_hat: np.ndarray


def server_forward(net: SplitNetwork, z_hat) -> ServerPass:
    z_hat = np.asarray(z_hat, dtype=DTYPE)
    out, caches = stack_forward(net.server, z_hat)
    y_full = fc_forward(net.head, out[..., -1, :])
    y_fc = fc_forward(net.head, z_hat[..., -1, :])
    return ServerPass(y_full=y_full, y_fc=y_fc, caches=caches, z_hat=z_hat)


def server_backward(
    net: SplitNetwork, sp: ServerPass, dy_full, dy_fc
) -> tuple[list[LstmParams], FcParams, np.ndarray]:
    """Gradients of the server parameters and of the received representation."""
    top = sp.caches[-1].h[-1]
    if sp.caches[-1].single:
        top = top[0]
    g_head_full, dh_last = fc_backward(net.head, top, dy_full)
    g_head_fc, dz_fc = fc_backward(net.head, sp.z_hat[..., -1, :], dy_fc)
    dh_top = np.zeros_like(sp.z_hat)
    dh_top[..., -1, :] = dh_last
    g_server, dz_hat = stack_backward(net.server, sp.caches, dh_top)
    dz_hat[..., -1, :] += dz_fc
    return g_server, g_head_full + g_head_fc, dz_hat


@dataclass
class ForwardRecord:
    """Everything produced by one forward pass along a path."""

    path: Path
    x: np.ndarray
    masks: dict[Link, np.ndarray]
    z: np.ndarray
    edge_caches: list[LstmCache]
    z_hat: np.ndarray
    server: ServerPass
    drone_in: np.ndarray | None = None
    drone_out: np.ndarray | None = None
    drone_caches: list[LstmCache] = field(default_factory=list)
    owner: int = 0

    @property
    def y_full(self) -> np.ndarray:
        return self.server.y_full

    @property
    def y_fc(self) -> np.ndarray:
        return self.server.y_fc


def _check_input(net: SplitNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim not in (2, 3) or x.shape[-1] != net.input_size or x.shape[-2] == 0:
        raise ContractViolation(
            f"input must be (T, {net.input_size}) or (B, T, {net.input_size}), got {x.shape}"
        )
    return x


def _rep_shape(net: SplitNetwork, x: np.ndarray) -> tuple[int, ...]:
    return x.shape[:-1] + (net.hidden,)


def _check_mask(name: str, mask, shape) -> np.ndarray:
    mask = np.asarray(mask, dtype=DTYPE)
    if mask.shape != shape:
        raise ContractViolation(f"{name} mask has shape {mask.shape}, representation is {shape}")
    return mask


def forward_direct(net: SplitNetwork, x, mask_es) -> ForwardRecord:
    x = _check_input(net, x)
    mask_es = _check_mask("edge-server", mask_es, _rep_shape(net, x))
    z, edge_caches = stack_forward(net.edge, x)
    z_hat = channel.apply(z, mask_es)
    return ForwardRecord(
        path=Path.DIRECT,
        x=x,
        masks={Link.EDGE_SERVER: mask_es},
        z=z,
        edge_caches=edge_caches,
        z_hat=z_hat,
        server=server_forward(net, z_hat),
        owner=id(net),
    )


def forward_relay(net: SplitNetwork, x, mask_ed, mask_ds) -> ForwardRecord:
    x = _check_input(net, x)
    shape = _rep_shape(net, x)
    mask_ed = _check_mask("edge-drone", mask_ed, shape)
    mask_ds = _check_mask("drone-server", mask_ds, shape)
    z, edge_caches = stack_forward(net.edge, x)
    drone_in = channel.apply(z, mask_ed)
    drone_out, drone_caches = stack_forward(net.drone, drone_in)
    z_hat = channel.apply(drone_out, mask_ds)
    return ForwardRecord(
        path=Path.RELAY,
        x=x,
        masks={Link.EDGE_DRONE: mask_ed, Link.DRONE_SERVER: mask_ds},
        z=z,
        edge_caches=edge_caches,
        z_hat=z_hat,
        server=server_forward(net, z_hat),
        drone_in=drone_in,
        drone_out=drone_out,
        drone_caches=drone_caches,
        owner=id(net),
    )


def per_sample_loss(y, y_full, y_fc) -> np.ndarray:
    y = np.asarray(y, dtype=DTYPE)
    return (y - y_full) ** 2 + (y - y_fc) ** 2


def compute_loss(y, rec: ForwardRecord) -> float:
    """Full-exit squared error plus early-exit squared error, averaged over the batch."""
    return float(np.mean(per_sample_loss(y, rec.y_full, rec.y_fc)))


def loss_seeds(y, rec: ForwardRecord) -> tuple[np.ndarray, np.ndarray]:
    """d loss / d y_full and d loss / d y_fc for :func:`compute_loss`."""
    y = np.broadcast_to(np.asarray(y, dtype=DTYPE), np.shape(rec.y_full))
    n = max(y.size, 1)
    return 2.0 * (rec.y_full - y) / n, 2.0 * (rec.y_fc - y) / n


def backward(net: SplitNetwork, rec: ForwardRecord, y) -> SplitNetwork:
    """Gradient of :func:`compute_loss` for every sub-network.

    The result has the layout of ``net``; drone entries are zero on the
    direct path. Erased symbols pass no gradient upstream.
    """
    if rec.owner != id(net):
        raise ContractViolation("forward record was produced by a different network")
    if rec.edge_caches[0].x.shape[-1] != net.input_size or rec.z.shape[-1] != net.hidden:
        raise ContractViolation("forward record does not match network dims")
    grads = net.zeros_like()
    dy_full, dy_fc = loss_seeds(y, rec)
    g_server, g_head, dz_hat = server_backward(net, rec.server, dy_full, dy_fc)
    grads.server, grads.head = g_server, g_head
    if rec.path is Path.RELAY:
        d_drone_out = channel.mask_gradient(dz_hat, rec.masks[Link.DRONE_SERVER])
        grads.drone, d_drone_in = stack_backward(net.drone, rec.drone_caches, d_drone_out)
        dz = channel.mask_gradient(d_drone_in, rec.masks[Link.EDGE_DRONE])
    else:
        dz = channel.mask_gradient(dz_hat, rec.masks[Link.EDGE_SERVER])
    grads.edge, _ = stack_backward(net.edge, rec.edge_caches, dz)
    return grads


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------


def link_probs(channel_specs) -> dict[Link, float]:
    """Normalise a ``{link: p}`` mapping or an iterable of ChannelSpec."""
    if isinstance(channel_specs, Mapping):
        items = channel_specs.items()
    else:
        items = ((s.link, s.erasure_prob) for s in channel_specs)
    out = {}
    for link, p in items:
        channel.ChannelSpec(Link(link), float(p))
        out[Link(link)] = float(p)
    return out


def draw_masks(
    rng: np.random.Generator, path: Path, probs: Mapping[Link, float], shape, rescale: bool = False
) -> dict[Link, np.ndarray]:
    missing = [l.value for l in PATH_LINKS[path] if l not in probs]
    if missing:
        raise ConfigurationError(f"no erasure probability given for link(s) {missing}")
    return {l: channel.sample_mask(rng, probs[l], shape, rescale) for l in PATH_LINKS[path]}


def forward_path(net: SplitNetwork, path: Path, x, masks: Mapping[Link, np.ndarray]) -> ForwardRecord:
    if Path(path) is Path.DIRECT:
        return forward_direct(net, x, masks[Link.EDGE_SERVER])
    return forward_relay(net, x, masks[Link.EDGE_DRONE], masks[Link.DRONE_SERVER])


def predict(
    net: SplitNetwork, strategy: Strategy, x, rng: np.random.Generator, channel_specs, rescale: bool = False
):
    """Prediction under freshly drawn erasure masks.

    Returns a float for a single sequence, an array for a batch. Only the
    layers the strategy uses are evaluated.
    """
    strategy = Strategy(strategy)
    x = _check_input(net, x)
    masks = draw_masks(rng, strategy.path, link_probs(channel_specs), _rep_shape(net, x), rescale)
    z, _ = stack_forward(net.edge, x)
    if strategy.path is Path.RELAY:
        z, _ = stack_forward(net.drone, channel.apply(z, masks[Link.EDGE_DRONE]))
        z_hat = channel.apply(z, masks[Link.DRONE_SERVER])
    else:
        z_hat = channel.apply(z, masks[Link.EDGE_SERVER])
    if strategy.full:
        z_hat, _ = stack_forward(net.server, z_hat)
    y = fc_forward(net.head, z_hat[..., -1, :])
    return float(y) if np.ndim(y) == 0 else y
