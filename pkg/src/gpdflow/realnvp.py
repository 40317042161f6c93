"""Real NVP normalizing flow used as the dependence generator density.

A flow is a stack of affine coupling layers.  Layer k holds a binary mask b
and two conditioner networks zeta (log scale) and upsilon (shift); its
forward map is

    y = b * u + (1 - b) * (u * exp(zeta(b * u)) + upsilon(b * u)),

with log-Jacobian sum_{j unmasked} zeta_j.  Masked coordinates pass through
unchanged, so the masked input b * u seen by the conditioners is identical
in both directions and the layer inverts in closed form.  Masks alternate
even/odd coordinates between consecutive layers.  Raw log scales are clamped
smoothly to (-4, 4) via 4 tanh(. / 4) before exponentiation, which keeps
per-layer expansion bounded without breaking invertibility.

Conditioners start with a zero output layer, so a freshly built flow is the
identity map and its density is exactly the standard Gaussian base.

For d = 1 there is no coordinate to condition on: masks are all-zero and
each layer degenerates to a learned scalar affine map driven by zeta(0) and
upsilon(0).
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .numerics import Mlp, Parameter, Var

__all__ = [
    "CouplingLayer",
    "FlowNetwork",
    "flow_forward",
    "flow_inverse",
    "flow_logdensity",
    "flow_sample",
]

_CLAMP = 4.0


def _clamped_scale(raw: Var) -> Var:
    return (raw * (1.0 / _CLAMP)).tanh() * _CLAMP


class CouplingLayer:
    """One affine coupling transform."""

    def __init__(self, mask: np.ndarray, zeta: Mlp, upsilon: Mlp):
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim != 1 or not np.all((mask == 0.0) | (mask == 1.0)):
            raise InputError("mask must be a 1-d array of zeros and ones")
        d = mask.size
        if d >= 2 and (mask.sum() == 0 or mask.sum() == d):
            raise InputError("mask must keep and transform at least one coordinate")
        for net in (zeta, upsilon):
            if net.input_dim != d or net.output_dim != d:
                raise InputError("conditioner width must match the flow dimension")
        self.mask = mask
        self.zeta = zeta
        self.upsilon = upsilon

    def _conditioners(self, masked: Var) -> tuple[Var, Var]:
        return _clamped_scale(self.zeta(masked)), self.upsilon(masked)

    def forward(self, u: Var) -> tuple[Var, Var]:
        b = self.mask
        s, v = self._conditioners(u * b)
        y = u * b + (u * s.exp() + v) * (1.0 - b)
        logdet = (s * (1.0 - b)).sum(axis=1)
        return y, logdet

    def inverse(self, y: Var) -> tuple[Var, Var]:
        b = self.mask
        s, v = self._conditioners(y * b)
        u = y * b + ((y - v) * (-s).exp()) * (1.0 - b)
        logdet = -(s * (1.0 - b)).sum(axis=1)
        return u, logdet


class FlowNetwork:
    """A stack of coupling layers with a standard Gaussian base."""

    def __init__(self, dim: int, layers: list[CouplingLayer]):
        if dim < 1:
            raise InputError("flow dimension must be at least 1")
        if not layers:
            raise InputError("flow needs at least one coupling layer")
        for layer in layers:
            if layer.mask.size != dim:
                raise InputError("layer mask width must match the flow dimension")
        self.dim = int(dim)
        self.layers = list(layers)

    @classmethod
    def build(
        cls,
        dim: int,
        n_layers: int = 16,
        hidden: tuple[int, ...] | int | None = None,
        seed: int = 0,
    ) -> "FlowNetwork":
        """Construct a fresh identity-initialized flow.

        ``hidden`` is the conditioner hidden layout; the default is one
        hidden layer of width 4 * dim.
        """
        if n_layers < 1:
            raise InputError("n_layers must be at least 1")
        if hidden is None:
            hidden = (4 * dim,)
        elif isinstance(hidden, int):
            hidden = (hidden,)
        rng = np.random.default_rng(seed)
        layers = []
        for k in range(n_layers):
            if dim == 1:
                mask = np.zeros(1)
            else:
                mask = ((np.arange(dim) + k) % 2 == 0).astype(np.float64)
            zeta = Mlp(dim, hidden, dim, rng=rng, zero_last=True, name=f"l{k}.zeta")
            upsilon = Mlp(
                dim, hidden, dim, rng=rng, zero_last=True, name=f"l{k}.upsilon"
            )
            layers.append(CouplingLayer(mask, zeta, upsilon))
        return cls(dim, layers)

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer.zeta.parameters())
            out.extend(layer.upsilon.parameters())
        return out

    def forward(self, u: Var) -> tuple[Var, Var]:
        """Base to data: returns (t, log |det dT/du|) for a batch."""
        logdet = None
        h = u
        for layer in self.layers:
            h, ld = layer.forward(h)
            logdet = ld if logdet is None else logdet + ld
        return h, logdet

    def inverse(self, t: Var) -> tuple[Var, Var]:
        """Data to base: returns (u, log |det dU/dt|) for a batch."""
        logdet = None
        h = t
        for layer in reversed(self.layers):
            h, ld = layer.inverse(h)
            logdet = ld if logdet is None else logdet + ld
        return h, logdet

    def logdensity(self, t: Var) -> Var:
        """log f_T(t) per row under the flow pushforward of N(0, I)."""
        u, logdet = self.inverse(t)
        base = -0.5 * float(self.dim) * np.log(2.0 * np.pi)
        quad = (u * u).sum(axis=1) * (-0.5)
        return quad + logdet + base


def _check_points(net: FlowNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.dim:
        raise InputError(f"expected points of shape (n, {net.dim}), got {x.shape}")
    return x


def _mlp_raw(net: Mlp, x: np.ndarray) -> np.ndarray:
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w.data + b.data
        if k < last:
            h = np.tanh(h)
    return h


def _conditioners_raw(layer: CouplingLayer, masked: np.ndarray):
    s = np.tanh(_mlp_raw(layer.zeta, masked) * (1.0 / _CLAMP)) * _CLAMP
    return s, _mlp_raw(layer.upsilon, masked)


def flow_forward(net: FlowNetwork, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tape-free batch evaluation of the base-to-data map.

    Follows the taped arithmetic operation for operation, so the results
    agree bit for bit with :meth:`FlowNetwork.forward`.
    """
    h = _check_points(net, u)
    logdet = None
    for layer in net.layers:
        b = layer.mask
        s, v = _conditioners_raw(layer, h * b)
        ld = (s * (1.0 - b)).sum(axis=1)
        h = h * b + (h * np.exp(s) + v) * (1.0 - b)
        logdet = ld if logdet is None else logdet + ld
    return h, logdet


def flow_inverse(net: FlowNetwork, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tape-free batch evaluation of the data-to-base map."""
    h = _check_points(net, t)
    logdet = None
    for layer in reversed(net.layers):
        b = layer.mask
        s, v = _conditioners_raw(layer, h * b)
        h = h * b + ((h - v) * np.exp(-s)) * (1.0 - b)
        ld = -(s * (1.0 - b)).sum(axis=1)
        logdet = ld if logdet is None else logdet + ld
    return h, logdet


def flow_logdensity(net: FlowNetwork, t: np.ndarray) -> np.ndarray:
    """Tape-free log f_T per row."""
    u, logdet = flow_inverse(net, t)
    base = -0.5 * float(net.dim) * np.log(2.0 * np.pi)
    return (u * u).sum(axis=1) * (-0.5) + logdet + base


def flow_sample(net: FlowNetwork, n: int, seed=0) -> np.ndarray:
    """Draw n generator vectors by pushing base normals through the flow."""
    if n < 1:
        raise InputError("sample size must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.standard_normal((n, net.dim))
    t, _ = flow_forward(net, u)
    return t
