"""Trainable PO model: comparison net, step size, optional LA weights and tile embedding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..ordering import ComparisonNet
from ..perm_optim import (
    ALTERNATIVE, LINEAR_ASSIGNMENT, POConfig, POResult, PositionStructure, optimise,
)
from .optim import xavier_init

NET_KEYS = ("net.w1", "net.b1", "net.w2", "net.b2")


@dataclass
class POModel:
    params: dict[str, np.ndarray]
    structure: PositionStructure
    steps: int = 6
    iterations: int = 4
    init: str = "uniform"

    @classmethod
    def create(cls, rng: np.random.Generator, structure: PositionStructure, element_dim: int,
               hidden: int = 16, steps: int = 6, iterations: int = 4, init: str = "uniform",
               eta: float = 1.0, embed_hidden: int = 0) -> "POModel":
        """Xavier-initialised weights with zero biases.

        With ``embed_hidden > 0`` elements first pass through a shared
        ``relu(x W + b)`` embedding before the comparison net and LA init.
        """
        params: dict[str, np.ndarray] = {}
        feat = element_dim
        if embed_hidden:
            params["embed.w"] = xavier_init((element_dim, embed_hidden), rng)
            params["embed.b"] = np.zeros(embed_hidden)
            feat = embed_hidden
        params["net.w1"] = xavier_init((2 * feat, hidden), rng)
        params["net.b1"] = np.zeros(hidden)
        params["net.w2"] = xavier_init((hidden, structure.channels), rng)
        params["net.b2"] = np.zeros(structure.channels)
        params["eta"] = np.array(float(eta))
        if init == LINEAR_ASSIGNMENT:
            params["la.w"] = xavier_init((structure.n, feat), rng)
        return cls(params, structure, steps, iterations, init)

    @property
    def element_dim(self) -> int:
        if "embed.w" in self.params:
            return self.params["embed.w"].shape[0]
        return self.params["net.w1"].shape[0] // 2

    @property
    def eta(self) -> float:
        return float(self.params["eta"])

    def bind(self, tape: ad.Tape | None = None) -> dict[str, ad.Tensor]:
        """Parameters as tensors; leaves on ``tape`` when one is given."""
        if tape is None:
            return {k: ad.Tensor(v) for k, v in self.params.items()}
        return {k: tape.watch(v) for k, v in sorted(self.params.items())}

    def forward(self, x, tensors: dict[str, ad.Tensor] | None = None,
                update: str = ALTERNATIVE, keep_trajectory: bool = False):
        """Return ``(result, y)`` where ``y`` is the permuted raw input."""
        t = tensors if tensors is not None else self.bind()
        x = ad.as_tensor(x)
        if self.init == LINEAR_ASSIGNMENT and x.shape[-2] != self.structure.n:
            raise ValueError(
                f"linear-assignment model is fixed to N={self.structure.n}, got N={x.shape[-2]}"
            )
        feats = x
        if "embed.w" in t:
            feats = ad.relu(x @ t["embed.w"] + t["embed.b"])
        net = ComparisonNet(*(t[k] for k in NET_KEYS))
        config = POConfig(self.steps, t["eta"], self.init, update, self.iterations)
        result: POResult = optimise(feats, net, self.structure, config, t.get("la.w"),
                                    keep_trajectory=keep_trajectory)
        y = result.output if feats is x else ad.transpose(result.permutation.post) @ x
        return result, y

    def comparison_net(self) -> ComparisonNet:
        return ComparisonNet(*(self.params[k] for k in NET_KEYS))


def oracle_sort_model(structure: PositionStructure, steps: int = 6,
                      iterations: int = 4) -> POModel:
    """Sorting model whose comparison net is ``f(a, b) = a``."""
    net = ComparisonNet.oracle()
    params = {k: v.data.copy() for k, v in zip(NET_KEYS, (net.w1, net.b1, net.w2, net.b2))}
    params["eta"] = np.array(1.0)
    return POModel(params, structure, steps, iterations)


def mse_loss(y: ad.Tensor, target) -> ad.Tensor:
    return ad.mean_all(ad.square(y - ad.Tensor(target)))
