"""Parameter containers for the LSTM mask estimator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from gsep.dsp import NormStats
from gsep.errors import GsepError

GATES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class ArchConfig:
    input_dim: int = 129
    lstm_sizes: tuple[int, ...] = (512, 512, 512)
    dense_size: int = 1024
    output_dim: int = 129
    dropout: float = 0.2
    loss_weighting: str = "plain"

    def __post_init__(self):
        object.__setattr__(self, "lstm_sizes", tuple(int(s) for s in self.lstm_sizes))
        if self.input_dim <= 0 or self.output_dim <= 0 or self.dense_size <= 0:
            raise GsepError("layer sizes must be positive")
        if not self.lstm_sizes or min(self.lstm_sizes) <= 0:
            raise GsepError("need at least one LSTM layer with positive size")
        if not 0.0 <= self.dropout < 1.0:
            raise GsepError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.loss_weighting not in ("plain", "magnitude"):
            raise GsepError(f"unknown loss weighting {self.loss_weighting!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lstm_sizes"] = list(self.lstm_sizes)
        return d


@dataclass
class LstmLayerParams:
    """One LSTM layer with the four gates stacked in i, f, g, o order.

    ``W_x`` is ``(4H, input)``, ``W_h`` is ``(4H, H)``, ``b`` is ``(4H,)``.
    Per-gate views (``W_ii``, ``W_hf``, ``b_o`` ...) slice these in place.
    """

    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        four_h = self.b.shape[0]
        if four_h % 4 or self.W_x.shape[0] != four_h or self.W_h.shape != (four_h, four_h // 4):
            raise GsepError(
                f"inconsistent LSTM shapes W_x{self.W_x.shape} W_h{self.W_h.shape} b{self.b.shape}"
            )

    @property
    def hidden(self) -> int:
        return self.b.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    def _gate(self, arr: np.ndarray, gate: str) -> np.ndarray:
        k = GATES.index(gate)
        h = self.hidden
        return arr[k * h : (k + 1) * h]

    def __getattr__(self, name: str):
        # W_ii, W_hf, b_g ... as views into the stacked tensors
        if len(name) == 4 and name.startswith("W_") and name[2] in "ih" and name[3] in GATES:
            src = self.W_x if name[2] == "i" else self.W_h
            return self._gate(src, name[3])
        if len(name) == 3 and name.startswith("b_") and name[2] in GATES:
            return self._gate(self.b, name[2])
        raise AttributeError(name)


@dataclass
class DenseLayerParams:
    W: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise GsepError(f"inconsistent dense shapes W{self.W.shape} b{self.b.shape}")
        if self.activation not in ("relu", "identity"):
            raise GsepError(f"unknown activation {self.activation!r}")


@dataclass
class NetworkParams:
    lstm_layers: list[LstmLayerParams]
    hidden_fc: DenseLayerParams
    output_fc: DenseLayerParams
    arch: ArchConfig
    norm_stats: NormStats | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self) -> np.dtype:
        return self.hidden_fc.W.dtype

    def named_tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """Trainable tensors in a fixed order (the checkpoint and optimizer order)."""
        for k, layer in enumerate(self.lstm_layers):
            yield f"lstm{k}.W_x", layer.W_x
            yield f"lstm{k}.W_h", layer.W_h
            yield f"lstm{k}.b", layer.b
        yield "fc_hidden.W", self.hidden_fc.W
        yield "fc_hidden.b", self.hidden_fc.b
        yield "fc_out.W", self.output_fc.W
        yield "fc_out.b", self.output_fc.b

    def tensor_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_tensors())

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [LstmLayerParams(l.W_x.copy(), l.W_h.copy(), l.b.copy()) for l in self.lstm_layers],
            DenseLayerParams(self.hidden_fc.W.copy(), self.hidden_fc.b.copy(), self.hidden_fc.activation),
            DenseLayerParams(self.output_fc.W.copy(), self.output_fc.b.copy(), self.output_fc.activation),
            self.arch,
            self.norm_stats,
            dict(self.meta),
        )

    def astype(self, dtype) -> "NetworkParams":
        out = self.copy()
        for name, t in out.named_tensors():
            out.assign(name, t.astype(dtype))
        return out

    def assign(self, name: str, value: np.ndarray) -> None:
        owner, attr = self._locate(name)
        current = getattr(owner, attr)
        if current.shape != value.shape:
            raise GsepError(f"shape mismatch for {name}: {current.shape} vs {value.shape}")
        setattr(owner, attr, value)

    def _locate(self, name: str):
        prefix, attr = name.split(".")
        if prefix.startswith("lstm"):
            return self.lstm_layers[int(prefix[4:])], attr
        if prefix == "fc_hidden":
            return self.hidden_fc, attr
        if prefix == "fc_out":
            return self.output_fc, attr
        raise KeyError(name)

    def n_parameters(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


def init_params(
    arch: ArchConfig,
    seed: int = 0,
    dtype=np.float32,
    norm_stats: NormStats | None = None,
    forget_bias: float = 1.0,
) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget bias +1."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        k = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-k, k, size=shape).astype(dtype)

    layers = []
    fan = arch.input_dim
    for h in arch.lstm_sizes:
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = forget_bias
        layers.append(LstmLayerParams(uniform((4 * h, fan), fan), uniform((4 * h, h), h), b))
        fan = h
    hidden = DenseLayerParams(uniform((arch.dense_size, fan), fan), np.zeros(arch.dense_size, dtype))
    out = DenseLayerParams(
        uniform((arch.output_dim, arch.dense_size), arch.dense_size),
        np.zeros(arch.output_dim, dtype),
    )
    return NetworkParams(layers, hidden, out, arch, norm_stats)


def zeros_like_params(params: NetworkParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.named_tensors()}
