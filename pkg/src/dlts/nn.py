"""Small feed-forward networks in numpy, sized for bay-shaped inputs.

Three layer kinds are supported:

``SharedTierScale``
    one weight and one bias per tier, applied to that tier in every stack.
``LocallyConnectedPerStack``
    an unshared dense block per stack; stack ``s`` only sees its own inputs.
``Dense``
    fully connected.

Inputs are batches of flattened bays, stack-major (all tiers of stack 0
first, bottom tier first). All arithmetic is float64.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ShapeMismatch, VersionMismatch

WEIGHTS_MAGIC = b"DLTSNET\x00"
WEIGHTS_VERSION = 1
CCE_EPS = 1e-12

ACTIVATIONS = ("relu", "linear", "softmax")
HEADS = ("policy", "value")


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "softmax":
        return softmax(z)
    return z


class Layer:
    kind = ""
    param_names = ("W", "b")

    def __init__(self, activation="linear"):
        if activation not in ACTIVATIONS:
            raise ValueError("unknown activation %r" % activation)
        self.activation = activation
        self.params = {}
        self.grads = {}
        self._cache = None

    @property
    def n_in(self):
        raise NotImplementedError

    @property
    def n_out(self):
        raise NotImplementedError

    def _affine(self, x):
        raise NotImplementedError

    def _affine_backward(self, x, g):
        raise NotImplementedError

    def forward(self, x, train=False):
        z = self._affine(x)
        a = _activate(self.activation, z)
        if train:
            self._cache = (x, z)
        return a

    def backward(self, grad_out):
        """Back-propagate ``dL/d(output)``; softmax layers take ``dL/dz`` directly."""
        x, z = self._cache
        if self.activation == "relu":
            grad_out = grad_out * (z > 0)
        return self._affine_backward(x, grad_out)

    def spec(self):
        return {"kind": self.kind, "activation": self.activation}

    def n_params(self):
        return sum(p.size for p in self.params.values())


class SharedTierScale(Layer):
    kind = "SharedTierScale"

    def __init__(self, n_stacks, tiers, activation="linear"):
        super().__init__(activation)
        self.n_stacks = n_stacks
        self.tiers = tiers
        self.params = {"W": np.ones(tiers), "b": np.zeros(tiers)}

    @property
    def n_in(self):
        return self.n_stacks * self.tiers

    n_out = n_in

    def _affine(self, x):
        xs = x.reshape(-1, self.n_stacks, self.tiers)
        return (xs * self.params["W"] + self.params["b"]).reshape(x.shape[0], -1)

    def _affine_backward(self, x, g):
        xs = x.reshape(-1, self.n_stacks, self.tiers)
        gs = g.reshape(-1, self.n_stacks, self.tiers)
        # one weight per tier, tied across every stack
        self.grads = {"W": (gs * xs).sum(axis=(0, 1)), "b": gs.sum(axis=(0, 1))}
        return (gs * self.params["W"]).reshape(x.shape)

    def spec(self):
        d = super().spec()
        d.update(n_stacks=self.n_stacks, tiers=self.tiers)
        return d


class LocallyConnectedPerStack(Layer):
    kind = "LocallyConnectedPerStack"

    def __init__(self, n_stacks, width_in, width_out, activation="relu", rng=None):
        super().__init__(activation)
        self.n_stacks = n_stacks
        self.width_in = width_in
        self.width_out = width_out
        rng = np.random.default_rng(rng)
        lim = np.sqrt(6.0 / (width_in + width_out))
        self.params = {
            "W": rng.uniform(-lim, lim, size=(n_stacks, width_in, width_out)),
            "b": np.zeros((n_stacks, width_out)),
        }

    @property
    def n_in(self):
        return self.n_stacks * self.width_in

    @property
    def n_out(self):
        return self.n_stacks * self.width_out

    def _affine(self, x):
        xs = x.reshape(-1, self.n_stacks, self.width_in)
        z = np.einsum("bsi,sio->bso", xs, self.params["W"]) + self.params["b"]
        return z.reshape(x.shape[0], -1)

    def _affine_backward(self, x, g):
        xs = x.reshape(-1, self.n_stacks, self.width_in)
        gs = g.reshape(-1, self.n_stacks, self.width_out)
        self.grads = {"W": np.einsum("bsi,bso->sio", xs, gs), "b": gs.sum(axis=0)}
        return np.einsum("bso,sio->bsi", gs, self.params["W"]).reshape(x.shape)

    def spec(self):
        d = super().spec()
        d.update(n_stacks=self.n_stacks, width_in=self.width_in, width_out=self.width_out)
        return d


class Dense(Layer):
    kind = "Dense"

    def __init__(self, width_in, width_out, activation="relu", rng=None):
        super().__init__(activation)
        self.width_in = width_in
        self.width_out = width_out
        rng = np.random.default_rng(rng)
        lim = np.sqrt(6.0 / (width_in + width_out))
        self.params = {
            "W": rng.uniform(-lim, lim, size=(width_in, width_out)),
            "b": np.zeros(width_out),
        }

    @property
    def n_in(self):
        return self.width_in

    @property
    def n_out(self):
        return self.width_out

    def _affine(self, x):
        return x @ self.params["W"] + self.params["b"]

    def _affine_backward(self, x, g):
        self.grads = {"W": x.T @ g, "b": g.sum(axis=0)}
        return g @ self.params["W"].T

    def spec(self):
        d = super().spec()
        d.update(width_in=self.width_in, width_out=self.width_out)
        return d


LAYER_KINDS = {cls.kind: cls for cls in (SharedTierScale, LocallyConnectedPerStack, Dense)}


def _layer_from_spec(spec):
    kind = spec["kind"]
    act = spec["activation"]
    if kind == "SharedTierScale":
        return SharedTierScale(spec["n_stacks"], spec["tiers"], act)
    if kind == "LocallyConnectedPerStack":
        return LocallyConnectedPerStack(spec["n_stacks"], spec["width_in"], spec["width_out"], act)
    if kind == "Dense":
        return Dense(spec["width_in"], spec["width_out"], act)
    raise ParseError("unknown layer kind %r" % kind)


class Network:
    """A layer stack with a policy (softmax) or value (scalar) head.

    ``scale`` is the group value that maps to 1.0 on input; it travels with
    the weights so inference encodes bays exactly as training did.
    """

    def __init__(self, layers, head, n_stacks, tiers, scale=1.0):
        if head not in HEADS:
            raise ValueError("head must be one of %s" % (HEADS,))
        self.layers = list(layers)
        self.head = head
        self.n_stacks = n_stacks
        self.tiers = tiers
        self.scale = float(scale)
        self._validate()

    def _validate(self):
        if not self.layers:
            raise ShapeMismatch("network has no layers")
        for i, layer in enumerate(self.layers):
            if layer.kind == "SharedTierScale" and i != 0:
                raise ShapeMismatch("SharedTierScale is only allowed as the first layer")
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise ShapeMismatch("softmax is only allowed on the final layer")
        if self.layers[0].n_in != self.n_stacks * self.tiers:
            raise ShapeMismatch("first layer takes %d inputs, bay has %d positions"
                                % (self.layers[0].n_in, self.n_stacks * self.tiers))
        for a, b in zip(self.layers, self.layers[1:]):
            if a.n_out != b.n_in:
                raise ShapeMismatch("%s outputs %d but %s takes %d" % (a.kind, a.n_out, b.kind, b.n_in))
        last = self.layers[-1]
        if self.head == "policy":
            if last.activation != "softmax" or last.n_out != self.n_outputs:
                raise ShapeMismatch("policy head needs a softmax layer with %d outputs" % self.n_outputs)
        elif last.activation != "linear" or last.n_out != 1:
            raise ShapeMismatch("value head needs a single linear output")

    @property
    def n_inputs(self):
        return self.n_stacks * self.tiers

    @property
    def n_outputs(self):
        return self.n_stacks * (self.n_stacks - 1) if self.head == "policy" else 1

    def n_params(self):
        return sum(layer.n_params() for layer in self.layers)

    def parameters(self):
        """(layer index, name, array) for every parameter, in file order."""
        return [(i, name, layer.params[name])
                for i, layer in enumerate(self.layers) for name in layer.param_names]

    def forward(self, x, train=False):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeMismatch("expected input of length %d, got shape %s" % (self.n_inputs, x.shape))
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x[0] if single else x

    __call__ = forward

    def backward(self, grad_logits):
        """Back-propagate from the pre-activation of the output layer."""
        g = grad_logits
        last = self.layers[-1]
        x, z = last._cache
        g = last._affine_backward(x, g)
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return g

    def copy(self):
        return copy.deepcopy(self)

    def spec(self):
        return {
            "head": self.head,
            "n_stacks": self.n_stacks,
            "tiers": self.tiers,
            "scale": self.scale,
            "layers": [layer.spec() for layer in self.layers],
        }


def build_network(n_stacks, tiers, head, swl=2, nswl=3, local_width=None,
                  dense_width=64, scale=1.0, seed=0):
    """Shared tier scaling, ``swl`` per-stack layers, then ``nswl`` dense layers.

    The last dense layer is the output layer, so ``nswl >= 1``.
    """
    if nswl < 1:
        raise ValueError("nswl counts the output layer and must be >= 1")
    if swl < 0:
        raise ValueError("swl must be >= 0")
    rng = np.random.default_rng(seed)
    local_width = local_width or 2 * tiers
    layers = [SharedTierScale(n_stacks, tiers)]
    width = tiers
    for _ in range(swl):
        layers.append(LocallyConnectedPerStack(n_stacks, width, local_width, "relu", rng))
        width = local_width
    width *= n_stacks
    for _ in range(nswl - 1):
        layers.append(Dense(width, dense_width, "relu", rng))
        width = dense_width
    if head == "policy":
        layers.append(Dense(width, n_stacks * (n_stacks - 1), "softmax", rng))
    else:
        layers.append(Dense(width, 1, "linear", rng))
    return Network(layers, head, n_stacks, tiers, scale)


def loss_cce(predicted, target):
    """Categorical cross-entropy, averaged over a batch when 2-D."""
    p = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch("prediction %s vs target %s" % (p.shape, y.shape))
    per = -np.sum(y * np.log(np.clip(p, CCE_EPS, 1.0)), axis=-1)
    return float(np.mean(per))


def loss_mse(predicted, target):
    p = np.asarray(predicted, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch("prediction %s vs target %s" % (p.shape, y.shape))
    return float(np.mean((p - y) ** 2))


def loss_and_grad(network, X, Y):
    """Mean loss over the batch and ``dL/dz`` at the output pre-activation."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    out = network.forward(X, train=True)
    n = X.shape[0]
    if network.head == "policy":
        if Y.shape != out.shape:
            raise ShapeMismatch("targets %s do not match outputs %s" % (Y.shape, out.shape))
        loss = loss_cce(out, Y)
        grad = (out - Y) / n
    else:
        Y = Y.reshape(n, 1)
        loss = loss_mse(out, Y)
        grad = 2.0 * (out - Y) / n
    return loss, grad


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def bind(self, network):
        self.m = [np.zeros_like(p) for _, _, p in network.parameters()]
        self.v = [np.zeros_like(p) for _, _, p in network.parameters()]
        self.step = 0
        return self

    def update(self, network):
        if not self.m:
            self.bind(network)
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for j, (i, name, p) in enumerate(network.parameters()):
            g = network.layers[i].grads[name]
            self.m[j] = b1 * self.m[j] + (1.0 - b1) * g
            self.v[j] = b2 * self.v[j] + (1.0 - b2) * g * g
            p -= self.lr * (self.m[j] / c1) / (np.sqrt(self.v[j] / c2) + self.eps)


def backward_and_step(network, adam, X, Y):
    """One Adam step on the mean minibatch gradient. Returns the pre-step loss."""
    loss, grad = loss_and_grad(network, X, Y)
    network.backward(grad)
    adam.update(network)
    return loss


def save_weights(network, path):
    """Write the network to a versioned little-endian binary file.

    Layout: 8-byte magic ``DLTSNET\\0``; uint32 format version; uint32 header
    length; UTF-8 JSON header (``network.spec()`` plus the shape of every
    parameter array); then every parameter array as raw ``<f8`` values in
    layer order, ``W`` before ``b``.
    """
    header = network.spec()
    header["params"] = [[i, name, list(p.shape)] for i, name, p in network.parameters()]
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<II", WEIGHTS_VERSION, len(blob)))
        fh.write(blob)
        for _, _, p in network.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_weights(path, n_stacks=None, tiers=None, head=None):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:8] != WEIGHTS_MAGIC:
        raise ParseError("not a weights file (bad magic or truncated header)", path=path)
    version, hlen = struct.unpack("<II", data[8:16])
    if version != WEIGHTS_VERSION:
        raise VersionMismatch("weights format version %d, expected %d" % (version, WEIGHTS_VERSION))
    if len(data) < 16 + hlen:
        raise ParseError("truncated header", path=path)
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        layers = [_layer_from_spec(s) for s in header["layers"]]
        S, T = header["n_stacks"], header["tiers"]
        net_head, scale = header["head"], header["scale"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError("malformed header: %s" % exc, path=path) from None
    offset = 16 + hlen
    for (i, name, shape) in header["params"]:
        layer = layers[i]
        n = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n
        if offset + nbytes > len(data):
            raise ParseError("truncated parameter data", path=path)
        if list(layer.params[name].shape) != list(shape):
            raise ParseError("parameter %d/%s has shape %s, header says %s"
                             % (i, name, layer.params[name].shape, shape), path=path)
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=offset).astype(np.float64)
        layer.params[name] = arr.reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise ParseError("%d trailing bytes after parameters" % (len(data) - offset), path=path)
    net = Network(layers, net_head, S, T, scale)
    if (n_stacks is not None and n_stacks != S) or (tiers is not None and tiers != T):
        raise ShapeMismatch("weights are for a %dx%d bay, requested %sx%s" % (S, T, n_stacks, tiers))
    if head is not None and head != net_head:
        raise ShapeMismatch("weights carry a %s head, requested %s" % (net_head, head))
    return net
