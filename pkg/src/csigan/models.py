"""Generator and shared-weight discriminator/classifier networks."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor_engine import (
    DTYPE,
    LEAKY_ALPHA,
    Activation,
    ConfigurationError,
    Conv1D,
    ConvKernelBank,
    Deconv1D,
    Dense,
    DenseParams,
    Reshape,
    Sequential,
    Stack,
    Unstack,
    conv_output_width,
    deconv_output_width,
    lambda_real_prob,
    logsumexp,
    softmax,
)

LATENT_DIM = 100
CSI_WIDTH = 120
N_CLASSES = 16
N_SLICES = 32
KERNEL_SIZE = 5
RESHAPE_WIDTH = 108
FC_UNITS = N_SLICES * RESHAPE_WIDTH  # 3456
OUTPUT_CROP = 2
INIT_STD = 0.02

G_WIDTHS = (RESHAPE_WIDTH, 112, 116, 120, 120)
D_WIDTHS = (CSI_WIDTH, 116, 112, 108)

CHECKPOINT_FORMAT = "csigan-checkpoint"
CHECKPOINT_VERSION = 1


def _dense(rng, n_in, n_out) -> DenseParams:
    return DenseParams(rng.normal(0.0, INIT_STD, (n_out, n_in)), np.zeros(n_out))


def _bank(rng, n_kernels, depth, size=KERNEL_SIZE) -> ConvKernelBank:
    return ConvKernelBank(rng.normal(0.0, INIT_STD, (n_kernels, size, depth)), np.zeros(n_kernels))


class Network:
    """Common plumbing: a Sequential stack plus the seed it was built from."""

    kind = "network"

    def __init__(self, net: Sequential, seed):
        self.net = net
        self.seed = seed

    def params(self) -> list[np.ndarray]:
        return self.net.param_list()

    def grads(self) -> list[np.ndarray]:
        return self.net.grad_list()

    def named_params(self) -> dict[str, np.ndarray]:
        return self.net.named_params()

    def zero_grad(self):
        self.net.zero_grad()

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, arrays: list[np.ndarray]):
        for p, a in zip(self.params(), arrays, strict=True):
            if p.shape != a.shape:
                raise ConfigurationError(f"parameter shape {p.shape} != {a.shape}")
            p[...] = a

    def backward(self, grad, need_input: bool = True, need_params: bool = True):
        return self.net.backward(grad, need_input, need_params)


class GeneratorNet(Network):
    """latent(100) -> FC 3456 -> 32x108 -> deconv x3 -> 1x120 -> tanh."""

    kind = "generator"
    latent_dim = LATENT_DIM

    def __init__(self, fc: DenseParams, deconvs: list[ConvKernelBank], out_deconv: ConvKernelBank, seed=None):
        self.fc = fc
        self.deconvs = deconvs
        self.out_deconv = out_deconv
        layers = [Dense(fc), Activation("relu"), Unstack(N_SLICES, RESHAPE_WIDTH)]
        for bank in deconvs:
            layers += [Deconv1D(bank), Activation("relu")]
        layers += [Deconv1D(out_deconv, crop=OUTPUT_CROP), Activation("tanh"), Reshape((CSI_WIDTH,))]
        super().__init__(Sequential(layers), seed)
        self.check_shapes()

    def layer_widths(self) -> list[int]:
        widths = [self.fc.out_dim // N_SLICES]
        for bank in self.deconvs:
            widths.append(deconv_output_width(widths[-1], bank.size))
        widths.append(deconv_output_width(widths[-1], self.out_deconv.size, crop=OUTPUT_CROP))
        return widths

    def check_shapes(self):
        if self.fc.in_dim != LATENT_DIM or self.fc.out_dim != FC_UNITS:
            raise ConfigurationError(f"generator FC must be {LATENT_DIM}->{FC_UNITS}")
        widths = tuple(self.layer_widths())
        if widths != G_WIDTHS:
            raise ConfigurationError(f"generator widths {widths} != {G_WIDTHS}")
        depth = N_SLICES
        for bank in self.deconvs + [self.out_deconv]:
            if bank.depth != depth:
                raise ConfigurationError(f"deconv depth {bank.depth} != incoming slices {depth}")
            depth = bank.n_kernels
        if depth != 1:
            raise ConfigurationError("generator output must have a single slice")

    def forward(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=DTYPE))
        if z.shape[1] != self.latent_dim:
            raise ConfigurationError(f"latent length {z.shape[1]} != {self.latent_dim}")
        return self.net.forward(z)


class SimplifiedGeneratorNet(Network):
    """Ablation generator: latent(100) -> FC 120 -> tanh, no deconvolutions."""

    kind = "simplified_generator"
    latent_dim = LATENT_DIM

    def __init__(self, fc: DenseParams, seed=None):
        if fc.in_dim != LATENT_DIM or fc.out_dim != CSI_WIDTH:
            raise ConfigurationError(f"simplified generator FC must be {LATENT_DIM}->{CSI_WIDTH}")
        self.fc = fc
        super().__init__(Sequential([Dense(fc), Activation("tanh")]), seed)

    def forward(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=DTYPE))
        if z.shape[1] != self.latent_dim:
            raise ConfigurationError(f"latent length {z.shape[1]} != {self.latent_dim}")
        return self.net.forward(z)


class DiscClassNet(Network):
    """CSI(120) -> conv x3 (LeakyReLU) -> flatten 3456 -> 16 logits.

    The discriminator head (lambda) and classifier head (softmax) both read the
    same logits, so every parameter is shared between them.
    """

    kind = "discriminator"

    def __init__(self, convs: list[ConvKernelBank], out_fc: DenseParams, seed=None, alpha: float = LEAKY_ALPHA):
        self.convs = convs
        self.out_fc = out_fc
        layers = [Reshape((CSI_WIDTH, 1))]
        for bank in convs:
            layers += [Conv1D(bank), Activation("leaky_relu", alpha)]
        layers += [Stack(), Dense(out_fc)]
        super().__init__(Sequential(layers), seed)
        self.check_shapes()

    def layer_widths(self) -> list[int]:
        widths = [CSI_WIDTH]
        for bank in self.convs:
            widths.append(conv_output_width(widths[-1], bank.size))
        return widths

    def check_shapes(self):
        widths = tuple(self.layer_widths())
        if widths != D_WIDTHS:
            raise ConfigurationError(f"discriminator widths {widths} != {D_WIDTHS}")
        depth = 1
        for bank in self.convs:
            if bank.depth != depth:
                raise ConfigurationError(f"conv depth {bank.depth} != incoming slices {depth}")
            depth = bank.n_kernels
        if depth * widths[-1] != FC_UNITS or self.out_fc.in_dim != FC_UNITS:
            raise ConfigurationError(f"flattened features must be {FC_UNITS}")
        if self.out_fc.out_dim != N_CLASSES:
            raise ConfigurationError(f"logits must have length {N_CLASSES}")

    def forward(self, x) -> np.ndarray:
        """Logits for a sample or a ``(batch, 120)`` matrix (always returns 2-D)."""
        x = np.atleast_2d(np.asarray(x, dtype=DTYPE))
        if x.shape[1] != CSI_WIDTH:
            raise ConfigurationError(f"input length {x.shape[1]} != {CSI_WIDTH}")
        return self.net.forward(x)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def build_generator(seed) -> GeneratorNet:
    rng = np.random.default_rng(seed)
    fc = _dense(rng, LATENT_DIM, FC_UNITS)
    deconvs = [_bank(rng, N_SLICES, N_SLICES) for _ in range(3)]
    out = _bank(rng, 1, N_SLICES)
    return GeneratorNet(fc, deconvs, out, seed=seed)


def build_simplified_generator(seed) -> SimplifiedGeneratorNet:
    rng = np.random.default_rng(seed)
    return SimplifiedGeneratorNet(_dense(rng, LATENT_DIM, CSI_WIDTH), seed=seed)


def build_discriminator(seed, alpha: float = LEAKY_ALPHA) -> DiscClassNet:
    rng = np.random.default_rng(seed)
    convs = [_bank(rng, N_SLICES, 1), _bank(rng, N_SLICES, N_SLICES), _bank(rng, N_SLICES, N_SLICES)]
    return DiscClassNet(convs, _dense(rng, FC_UNITS, N_CLASSES), seed=seed, alpha=alpha)


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------


def generate(g, z) -> np.ndarray:
    """Fake CSI sample(s) in [-1, 1]; a single latent vector gives a length-120 vector."""
    z = np.asarray(z, dtype=DTYPE)
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("latent vector must be finite")
    out = g.forward(z)
    return out[0] if z.ndim == 1 else out


def logits(net: DiscClassNet, x) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("input must be finite")
    c = net.forward(x)
    return c[0] if x.ndim == 1 else c


def discriminate(net: DiscClassNet, x):
    """Probability that ``x`` is real, ``lambda(c)``."""
    return lambda_real_prob(logits(net, x))


def classify(net: DiscClassNet, x):
    """``(probabilities, predicted class)``; classes are 1-based."""
    c = logits(net, x)
    return softmax(c), np.argmax(c, axis=-1) + 1


def softmax_normalizer(c) -> np.ndarray:
    return np.exp(logsumexp(c))


def predict_batches(net: DiscClassNet, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """1-based class predictions for many samples."""
    preds = [np.argmax(net.forward(x[i : i + batch_size]), axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(preds) + 1 if preds else np.zeros(0, dtype=int)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, **nets: Network) -> None:
    """Store every parameter array of the given networks in one ``.npz`` file.

    Shapes, network kinds and build seeds go into an embedded JSON header.
    """
    arrays = {}
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "networks": {}}
    for role, net in nets.items():
        if net is None:
            continue
        names = []
        for name, arr in net.named_params().items():
            key = f"{role}/{name}"
            arrays[key] = arr
            names.append({"key": key, "shape": list(arr.shape)})
        header["networks"][role] = {"kind": net.kind, "seed": net.seed, "params": names}
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


_BUILDERS = {
    "generator": build_generator,
    "simplified_generator": build_simplified_generator,
    "discriminator": build_discriminator,
}


def load_checkpoint(path) -> dict[str, Network]:
    path = Path(path)
    with np.load(path) as data:
        if "__header__" not in data:
            raise ValueError(f"{path}: not a checkpoint (missing header)")
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unknown format {header.get('format')!r}")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported version {header.get('version')}")
        nets = {}
        for role, info in header["networks"].items():
            net = _BUILDERS[info["kind"]](info["seed"])
            stored = [data[p["key"]] for p in info["params"]]
            for p, entry in zip(stored, info["params"]):
                if list(p.shape) != entry["shape"]:
                    raise ValueError(f"{path}: shape mismatch for {entry['key']}")
            net.set_params(stored)
            nets[role] = net
    return nets
