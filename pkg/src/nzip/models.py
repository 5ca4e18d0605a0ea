"""The two predictors and their combination.

The stored predictor ("bootstrap") is a strided bidirectional-GRU
classifier over the last K symbols, trained on the input itself before
coding and shipped in the archive.  The adaptive predictor ("supporter")
is a wider feed-forward stack over features tapped from the bootstrap;
it is never stored — both ends rebuild it from the header seed and train
it in lockstep while coding.  Their logits are blended by a learned
convex weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import DegenerateAlphabet, EmptyInput
from .rng import derive_seed, uniform_init

_f32 = np.float32

CONTEXT_DEFAULT = 64
STRIDE_DEFAULT = 16

# width schedule: V bracket -> (E, H, D, supporter width)
_SCHEDULE = (
    (4, (8, 8, 16, 1024)),
    (31, (8, 32, 64, 1024)),
    (127, (16, 64, 128, 2048)),
    (256, (16, 128, 256, 2048)),
)

# scaled test profile: widths / 8, floored so the recurrent state keeps
# enough capacity to pick up long-lag structure (an H=1 GRU cannot carry a
# 20-symbol-back bit, which the synthetic acceptance runs require)
_SCALED_FLOOR = (2, 8, 8, 32)


@dataclass(frozen=True)
class BootstrapConfig:
    V: int
    E: int
    H: int
    D: int
    K: int = CONTEXT_DEFAULT
    m: int = STRIDE_DEFAULT
    scaled: bool = False

    def __post_init__(self):
        if self.K % self.m != 0:
            raise ValueError("context length must be divisible by the output stride")
        if self.V < 2:
            raise ValueError("predictor needs an alphabet of at least 2")
        if not self.scaled:
            if not (8 <= self.E <= 16 and 8 <= self.H <= 128 and 16 <= self.D <= 256):
                raise ValueError("full-scale widths outside the supported ranges")

    @property
    def taps(self) -> tuple[int, ...]:
        """Time steps whose biGRU output is kept: every m-th, ending at K-1."""
        return tuple(range(self.m - 1, self.K, self.m))

    @property
    def flat_width(self) -> int:
        return (self.K // self.m) * 2 * self.H


@dataclass(frozen=True)
class SupporterConfig:
    V: int
    E: int
    H: int
    K: int
    m: int
    width: int
    scaled: bool = False

    def __post_init__(self):
        w = self.width
        if w < 32 or (w & (w - 1)) != 0:
            raise ValueError("supporter width must be a power of two >= 32")
        if not self.scaled and w not in (1024, 2048):
            raise ValueError("full-scale supporter width is 1024 or 2048")

    @property
    def feature_width(self) -> int:
        """Last-m embeddings plus the strided biGRU features."""
        return self.m * self.E + (self.K // self.m) * 2 * self.H


def select_configs(
    V: int, K: int = CONTEXT_DEFAULT, m: int = STRIDE_DEFAULT, scaled: bool = False
) -> tuple[BootstrapConfig, SupporterConfig]:
    """Deterministic hyperparameter schedule keyed on alphabet size alone."""
    if V == 0:
        raise EmptyInput("no alphabet")
    if V == 1:
        raise DegenerateAlphabet("single-symbol alphabet needs no predictor")
    for ceiling, (E, H, D, W) in _SCHEDULE:
        if V <= ceiling:
            break
    if scaled:
        E = max(E // 8, _SCALED_FLOOR[0])
        H = max(H // 8, _SCALED_FLOOR[1])
        D = max(D // 8, _SCALED_FLOOR[2])
        W = max(W // 8, _SCALED_FLOOR[3])
    boot = BootstrapConfig(V=V, E=E, H=H, D=D, K=K, m=m, scaled=scaled)
    sup = SupporterConfig(V=V, E=E, H=H, K=K, m=m, width=W, scaled=scaled)
    return boot, sup


def _init(store: nn.ParameterStore, name: str, shape, fan_in: int, seed: int, prefix: str):
    scale = float(np.sqrt(1.0 / fan_in))
    store.add(name, uniform_init(derive_seed(seed, f"{prefix}/{name}"), tuple(shape), scale))


def _zeros(store: nn.ParameterStore, name: str, shape):
    store.add(name, np.zeros(shape, dtype=_f32))


def _gru_params(store: nn.ParameterStore, tag: str, e: int, h: int, seed: int, prefix: str) -> nn.GruParams:
    _init(store, f"{tag}.Wxg", (e, 2 * h), e, seed, prefix)
    _init(store, f"{tag}.Whg", (h, 2 * h), h, seed, prefix)
    _zeros(store, f"{tag}.bg", (2 * h,))
    _init(store, f"{tag}.Wxc", (e, h), e, seed, prefix)
    _init(store, f"{tag}.Whc", (h, h), h, seed, prefix)
    _zeros(store, f"{tag}.bc", (h,))
    return nn.GruParams(*(store[f"{tag}.{p}"] for p in ("Wxg", "Whg", "bg", "Wxc", "Whc", "bc")))


class BootstrapModel:
    """Stored predictor: embedding -> 2 biGRU layers -> strided taps ->
    linear head + bottleneck dense head, summed into logits."""

    def __init__(self, cfg: BootstrapConfig, seed: int):
        self.cfg = cfg
        self.store = nn.ParameterStore()
        s = self.store
        E, H, D, V = cfg.E, cfg.H, cfg.D, cfg.V
        _init(s, "emb", (V, E), E, seed, "bootstrap")
        self.g1f = _gru_params(s, "g1f", E, H, seed, "bootstrap")
        self.g1b = _gru_params(s, "g1b", E, H, seed, "bootstrap")
        self.g2f = _gru_params(s, "g2f", 2 * H, H, seed, "bootstrap")
        self.g2b = _gru_params(s, "g2b", 2 * H, H, seed, "bootstrap")
        F = cfg.flat_width
        _init(s, "lin.W", (F, V), F, seed, "bootstrap")
        _zeros(s, "lin.b", (V,))
        _init(s, "dense1.W", (F, D), F, seed, "bootstrap")
        _zeros(s, "dense1.b", (D,))
        _init(s, "dense2.W", (D, V), D, seed, "bootstrap")
        _zeros(s, "dense2.b", (V,))

    def logits(self, contexts: np.ndarray) -> tuple[nn.Tensor, nn.Tensor]:
        """contexts: (B, K) int array.  Returns (logits_b, supporter taps).

        Taps are the last-m embeddings and the strided biGRU features,
        concatenated to (B, m*E + (K/m)*2H).
        """
        cfg = self.cfg
        s = self.store
        emb = nn.embedding_forward(contexts, s["emb"])  # (B, K, E)
        x = nn.transpose01(emb)  # (K, B, E)
        h1 = nn.bigru_forward(x, self.g1f, self.g1b)
        h2 = nn.bigru_forward(h1, self.g2f, self.g2b)
        flat = nn.select_steps(h2, cfg.taps)  # (B, K/m * 2H)
        lin = nn.dense_forward(flat, s["lin.W"], s["lin.b"])
        mid = nn.dense_forward(flat, s["dense1.W"], s["dense1.b"], activation="relu")
        bottleneck = nn.dense_forward(mid, s["dense2.W"], s["dense2.b"])
        logits_b = nn.add(lin, bottleneck)
        last_emb = nn.select_steps(x, tuple(range(cfg.K - cfg.m, cfg.K)))  # (B, m*E)
        taps = nn.concat([last_emb, flat], axis=1)
        return logits_b, taps


class SupporterModel:
    """Adaptive predictor: three parallel sub-networks over the taps
    (linear, two-dense, dense + two residual blocks), each down-projected
    to V and summed; plus the mixing weight theta."""

    def __init__(self, cfg: SupporterConfig, seed: int):
        self.cfg = cfg
        self.store = nn.ParameterStore()
        s = self.store
        F, W, V = cfg.feature_width, cfg.width, cfg.V
        _init(s, "lin.W", (F, W), F, seed, "supporter")
        _zeros(s, "lin.b", (W,))
        _init(s, "lin_down.W", (W, V), W, seed, "supporter")
        _zeros(s, "lin_down.b", (V,))
        _init(s, "ff1.W", (F, W), F, seed, "supporter")
        _zeros(s, "ff1.b", (W,))
        _init(s, "ff2.W", (W, W), W, seed, "supporter")
        _zeros(s, "ff2.b", (W,))
        _init(s, "ff_down.W", (W, V), W, seed, "supporter")
        _zeros(s, "ff_down.b", (V,))
        _init(s, "res_in.W", (F, W), F, seed, "supporter")
        _zeros(s, "res_in.b", (W,))
        for blk in ("res1", "res2"):
            _init(s, f"{blk}.W1", (W, W), W, seed, "supporter")
            _zeros(s, f"{blk}.b1", (W,))
            _init(s, f"{blk}.W2", (W, W), W, seed, "supporter")
            _zeros(s, f"{blk}.b2", (W,))
        _init(s, "res_down.W", (W, V), W, seed, "supporter")
        _zeros(s, "res_down.b", (V,))
        s.add("theta", np.array([2.0], dtype=_f32))

    @property
    def theta(self) -> nn.Tensor:
        return self.store["theta"]

    def logits(self, feats: nn.Tensor) -> nn.Tensor:
        s = self.store
        n1 = nn.dense_forward(feats, s["lin.W"], s["lin.b"])
        out = nn.dense_forward(n1, s["lin_down.W"], s["lin_down.b"])
        n2 = nn.dense_forward(feats, s["ff1.W"], s["ff1.b"], activation="relu")
        n2 = nn.dense_forward(n2, s["ff2.W"], s["ff2.b"], activation="relu")
        out = nn.add(out, nn.dense_forward(n2, s["ff_down.W"], s["ff_down.b"]))
        n3 = nn.dense_forward(feats, s["res_in.W"], s["res_in.b"], activation="relu")
        n3 = nn.residual_block_forward(n3, s["res1.W1"], s["res1.b1"], s["res1.W2"], s["res1.b2"])
        n3 = nn.residual_block_forward(n3, s["res2.W1"], s["res2.b1"], s["res2.W2"], s["res2.b2"])
        out = nn.add(out, nn.dense_forward(n3, s["res_down.W"], s["res_down.b"]))
        return out


@dataclass
class MixState:
    """One combined prediction: both logit sets and their convex blend."""

    theta: nn.Tensor
    lam: float
    logits_b: nn.Tensor
    logits_s: nn.Tensor
    logits_c: nn.Tensor


def combine(logits_b: nn.Tensor, logits_s: nn.Tensor, theta: nn.Tensor) -> MixState:
    logits_c = nn.mix_logits(logits_b, logits_s, theta)
    lam = float(1.0 / (1.0 + np.exp(-float(theta.data[0]))))
    return MixState(theta=theta, lam=lam, logits_b=logits_b, logits_s=logits_s, logits_c=logits_c)


def combined_loss(mix: MixState, targets: np.ndarray) -> nn.Tensor:
    """CE(y, softmax(logits_c)) + CE(y, softmax(logits_s)), mean nats.

    The second term keeps gradient flowing into the supporter even while
    the blend leans on the stored predictor.
    """
    return nn.add(
        nn.softmax_cross_entropy(mix.logits_c, targets),
        nn.softmax_cross_entropy(mix.logits_s, targets),
    )
