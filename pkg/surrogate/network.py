import logging
from dataclasses import dataclass

import torch
import torch.nn as nn
from torch.func import functional_call

from fiberuq.exceptions import InvalidParameter, ShapeMismatch

logger = logging.getLogger(__name__)

DTYPE = torch.float64


@dataclass(frozen=True)
class NetworkConfig:
    """Dense encoder-decoder layout.

    ``blocks`` holds the layer counts of the encoding, bottleneck and decoding
    dense blocks; every extra bottleneck block adds one halving/doubling pair.
    """

    blocks: tuple = (2, 3, 2)
    growth_rate: int = 2
    initial_features: int = 48
    size: int = 20

    def __post_init__(self):
        blocks = tuple(int(n) for n in self.blocks)
        if len(blocks) < 3 or len(blocks) % 2 == 0 or min(blocks) < 1:
            raise InvalidParameter(f'Dense block layout must be an odd list of positive counts, got {self.blocks}')
        object.__setattr__(self, 'blocks', blocks)
        if self.growth_rate < 1 or self.initial_features < 2:
            raise InvalidParameter('growth_rate and initial_features must be positive')
        halvings = len(blocks) // 2
        if self.size % (2 ** halvings) != 0:
            raise InvalidParameter(f'Field size {self.size} cannot be halved {halvings} times')

    @classmethod
    def full_scale(cls):
        return cls(blocks=(2, 5, 2), growth_rate=2, initial_features=120)


class DenseLayer(nn.Module):
    def __init__(self, in_features, growth_rate):
        super().__init__()
        self.layer = nn.Sequential(
            nn.ReLU(),
            nn.Conv2d(in_features, growth_rate, kernel_size=3, padding=1),
        )

    def forward(self, x):
        return torch.cat([x, self.layer(x)], dim=1)


class DenseBlock(nn.Sequential):
    def __init__(self, n_layers, in_features, growth_rate):
        super().__init__(*[DenseLayer(in_features + i * growth_rate, growth_rate) for i in range(n_layers)])
        self.out_features = in_features + n_layers * growth_rate


class Transition(nn.Sequential):
    """Halves the channels, then halves (encoding) or doubles (decoding) the feature map size."""

    def __init__(self, in_features, encoding=True):
        out_features = in_features // 2
        if encoding:
            resample = nn.Conv2d(out_features, out_features, kernel_size=3, stride=2, padding=1)
        else:
            resample = nn.ConvTranspose2d(out_features, out_features, kernel_size=3, stride=2, padding=1,
                                          output_padding=1)
        super().__init__(
            nn.ReLU(),
            nn.Conv2d(in_features, out_features, kernel_size=1),
            nn.ReLU(),
            resample,
        )
        self.out_features = out_features


class DenseED(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        features = config.initial_features
        layers = [nn.Conv2d(1, features, kernel_size=3, padding=1)]
        middle = len(config.blocks) // 2
        for index, n_layers in enumerate(config.blocks):
            block = DenseBlock(n_layers, features, config.growth_rate)
            layers.append(block)
            features = block.out_features
            if index == len(config.blocks) - 1:
                break
            transition = Transition(features, encoding=index < middle)
            layers.append(transition)
            features = transition.out_features
        layers.append(nn.Sequential(
            nn.ReLU(),
            nn.Conv2d(features, features // 2, kernel_size=1),
            nn.ReLU(),
            nn.Conv2d(features // 2, 1, kernel_size=3, padding=1),
        ))
        self.features = nn.Sequential(*layers)

    def forward(self, x):
        return self.features(x)


class FunctionalNetwork:
    """A DenseED evaluated on flat weight vectors, one vector per particle."""

    def __init__(self, config):
        self.config = config
        self.module = DenseED(config).to(DTYPE)
        self.names = [name for name, _ in self.module.named_parameters()]
        self.shapes = [tuple(p.shape) for _, p in self.module.named_parameters()]
        self.sizes = [p.numel() for _, p in self.module.named_parameters()]
        self.n_params = sum(self.sizes)

    def initial_weights(self, seed):
        """Framework default initialisation under a private torch seed."""
        with torch.random.fork_rng():
            torch.manual_seed(int(seed) % (2 ** 63))
            module = DenseED(self.config).to(DTYPE)
        return torch.cat([p.detach().reshape(-1) for p in module.parameters()])

    def unflatten(self, weights):
        if weights.ndim != 1 or weights.numel() != self.n_params:
            raise ShapeMismatch(f'Expected {self.n_params} weights, got {tuple(weights.shape)}')
        chunks = torch.split(weights, self.sizes)
        return {name: chunk.view(shape) for name, chunk, shape in zip(self.names, chunks, self.shapes)}

    def _inputs(self, fields):
        fields = torch.as_tensor(fields, dtype=DTYPE)
        size = self.config.size
        if fields.shape[-2:] != (size, size):
            raise ShapeMismatch(f'Expected {size}×{size} fields, got {tuple(fields.shape)}')
        return fields.reshape(-1, 1, size, size)

    def forward(self, weights, fields):
        """Predictions of shape ``(batch, size, size)``."""
        output = functional_call(self.module, self.unflatten(weights), (self._inputs(fields),))
        return output[:, 0]

    def backward(self, weights, fields, upstream):
        """Gradient of ``sum(upstream * forward(weights, fields))`` with respect to the weights."""
        weights = weights.detach().clone().requires_grad_(True)
        output = self.forward(weights, fields)
        upstream = torch.as_tensor(upstream, dtype=DTYPE)
        if upstream.shape != output.shape:
            raise ShapeMismatch(f'Upstream gradient {tuple(upstream.shape)} does not match output {tuple(output.shape)}')
        (gradient,) = torch.autograd.grad(output, weights, grad_outputs=upstream)
        return gradient


def parameter_count(config):
    return sum(p.numel() for p in DenseED(config).parameters())
