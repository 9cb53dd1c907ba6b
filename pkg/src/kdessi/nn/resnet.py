"""1D residual network: stem conv, residual stages, global pooling, linear head."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from .functional import t_softmax
from .layers import BatchNorm1d, Conv1d, GlobalAvgPool, Layer, Linear, ReLU


@dataclass(frozen=True)
class Resnet1dConfig:
    input_channels: int = 3
    input_length: int = 1500
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_channels: int = 16
    widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks: tuple[int, ...] = (3, 4, 4, 3)
    kernel: int = 3
    class_count: int = 26

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        if len(self.widths) != len(self.blocks) or not self.widths:
            raise InvalidInputError("widths and blocks must be non-empty and of equal length")
        if min(self.blocks) < 1 or min(self.widths) < 1:
            raise InvalidInputError("every stage needs at least one block and one channel")
        if self.kernel % 2 == 0 or self.stem_kernel % 2 == 0:
            raise InvalidInputError("odd kernels required for same-padding")
        if self.class_count < 2:
            raise InvalidInputError("class_count must be at least 2")

    @property
    def conv_layers(self) -> int:
        """Counted the conventional way: stem plus two per block, shortcuts excluded."""
        return 1 + 2 * sum(self.blocks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["blocks"] = list(self.blocks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Resnet1dConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


# Teacher backbone: 1 + 2*14 = 29 conv layers.
TEACHER_CONFIG = Resnet1dConfig()
# Compact distillation student: 1 + 2*4 = 9 conv layers.
STUDENT_CONFIG = Resnet1dConfig(stem_channels=8, widths=(8, 16, 32, 64), blocks=(1, 1, 1, 1))


class ResidualBlock(Layer):
    """``relu(F(x) + shortcut(x))`` with ``F = conv-bn-relu-conv-bn``."""

    def __init__(self, c_in, c_out, stride, kernel=3, rng=None, dtype=np.float32):
        super().__init__()
        pad = kernel // 2
        self.conv1 = Conv1d(c_in, c_out, kernel, stride, pad, bias=False, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm1d(c_out, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv1d(c_out, c_out, kernel, 1, pad, bias=False, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm1d(c_out, dtype=dtype)
        self.relu_out = ReLU()
        if stride != 1 or c_in != c_out:
            self.short_conv = Conv1d(c_in, c_out, 1, stride, 0, bias=False, rng=rng, dtype=dtype)
            self.short_bn = BatchNorm1d(c_out, dtype=dtype)
        else:
            self.short_conv = None
            self.short_bn = None

    def sublayers(self):
        out = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]
        if self.short_conv is not None:
            out += [("shortcut.conv", self.short_conv), ("shortcut.bn", self.short_bn)]
        return out

    def forward(self, x, training=False):
        h = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, training), training))
        h = self.bn2.forward(self.conv2.forward(h, training), training)
        if self.short_conv is not None:
            s = self.short_bn.forward(self.short_conv.forward(x, training), training)
        else:
            s = x
        return self.relu_out.forward(h + s)

    def backward(self, grad):
        g = self.relu_out.backward(grad)
        gh = self.conv1.backward(self.bn1.backward(self.relu1.backward(self.conv2.backward(self.bn2.backward(g)))))
        if self.short_conv is not None:
            gs = self.short_conv.backward(self.short_bn.backward(g))
        else:
            gs = g
        return gh + gs


class Resnet1d:
    """Stem -> residual stages -> global average pool -> linear head.

    The first block of every stage after the first downsamples by 2. Input is
    ``(B, L, C)`` or a single ``(L, C)`` segment.
    """

    def __init__(self, config: Resnet1dConfig = TEACHER_CONFIG, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c = config
        self.stem_conv = Conv1d(
            c.input_channels, c.stem_channels, c.stem_kernel, c.stem_stride, c.stem_kernel // 2,
            bias=False, rng=rng, dtype=dtype,
        )
        self.stem_bn = BatchNorm1d(c.stem_channels, dtype=dtype)
        self.stem_relu = ReLU()
        self.blocks: list[ResidualBlock] = []
        c_in = c.stem_channels
        for stage, (width, n_blocks) in enumerate(zip(c.widths, c.blocks)):
            for b in range(n_blocks):
                stride = 2 if (stage > 0 and b == 0) else 1
                self.blocks.append(ResidualBlock(c_in, width, stride, c.kernel, rng=rng, dtype=dtype))
                c_in = width
        self.pool = GlobalAvgPool()
        self.head = Linear(c_in, c.class_count, rng=rng, dtype=dtype)

    # -- parameter bookkeeping ------------------------------------------------

    def _named_layers(self):
        yield "stem.conv", self.stem_conv
        yield "stem.bn", self.stem_bn
        for i, block in enumerate(self.blocks):
            for name, layer in block.sublayers():
                yield f"blocks.{i}.{name}", layer
        yield "head", self.head

    def named_parameters(self):
        """``(name, layer, key)`` triples for trainable tensors in declaration order."""
        return [(f"{n}.{k}", layer, k) for n, layer in self._named_layers() for k in layer.params]

    def named_buffers(self):
        return [(f"{n}.{k}", layer, k) for n, layer in self._named_layers() for k in layer.buffers]

    def parameters(self) -> list[np.ndarray]:
        return [layer.params[k] for _, layer, k in self.named_parameters()]

    def gradients(self) -> list[np.ndarray]:
        return [layer.grads[k] for _, layer, k in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        """Copies of all parameters and buffers keyed by name (declaration order)."""
        out = {name: layer.params[k].copy() for name, layer, k in self.named_parameters()}
        out.update({name: layer.buffers[k].copy() for name, layer, k in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for name, layer, k in self.named_parameters():
            layer.params[k][...] = state[name]
        for name, layer, k in self.named_buffers():
            layer.buffers[k] = np.array(state[name], dtype=self.dtype)

    def zero_grad(self):
        for _, layer in self._named_layers():
            layer.zero_grad()

    def astype(self, dtype) -> "Resnet1d":
        """A copy of this model with every tensor cast to ``dtype``."""
        clone = Resnet1d(self.config, seed=0, dtype=dtype)
        clone.load_state_dict({k: v.astype(dtype) for k, v in self.state_dict().items()})
        return clone

    # -- computation ----------------------------------------------------------

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        c = self.config
        if x.ndim != 3 or x.shape[2] != c.input_channels or x.shape[1] < 1:
            raise InvalidInputError(
                f"expected input (B, L, {c.input_channels}) or (L, {c.input_channels}), got {x.shape}"
            )
        return x.astype(self.dtype, copy=False)

    def forward(self, x, training=False):
        """Logits ``(B, class_count)`` for samples shaped ``(B, L, C)`` or ``(L, C)``."""
        h = np.ascontiguousarray(self._check_input(x).transpose(0, 2, 1))
        h = self.stem_relu.forward(self.stem_bn.forward(self.stem_conv.forward(h, training), training))
        for block in self.blocks:
            h = block.forward(h, training)
        return self.head.forward(self.pool.forward(h))

    __call__ = forward

    def backward(self, grad_logits):
        """Accumulate parameter gradients from ``dLoss/dlogits``; returns ``dLoss/dx`` as ``(B, L, C)``."""
        g = self.pool.backward(self.head.backward(grad_logits))
        for block in reversed(self.blocks):
            g = block.backward(g)
        g = self.stem_conv.backward(self.stem_bn.backward(self.stem_relu.backward(g)))
        return g.transpose(0, 2, 1)

    def predict_logits(self, x, batch_size=256):
        x = self._check_input(x)
        out = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def predict_proba(self, x, batch_size=256):
        return t_softmax(self.predict_logits(x, batch_size))
