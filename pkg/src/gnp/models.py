"""Model assembly: encoder x head -> Gaussian predictive over targets.

A ``Model`` owns no state; parameters are flat name->array dicts produced by
``init_params`` and passed (optionally tape-watched) to ``predict``. Encoder
parameters are namespaced ``enc.``, head parameters ``head.``.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .encoders import AttentiveEncoder, ConvEncoder, DeepSetEncoder
from .heads import HEAD_KINDS, predictive_loglik
from .tasks import NS_INIT, stream_rng

ENCODER_KINDS = ("deepset", "attentive", "conv")
HEAD_NAMES = ("meanfield", "linear", "kvv")

# default basis/embedding dimension per head kind
DEFAULT_D_G = {"meanfield": 0, "linear": 128, "kvv": 16}


@dataclass(frozen=True)
class ModelSpec:
    encoder: str
    head: str
    width: int = 128
    depth: int = 3
    rep_dim: int = 128
    attn_heads: int = 8
    attn_global: bool = False
    d_g: int = 0                      # 0 -> default for the head kind
    conv_channels: int = 64
    conv_layers: int = 6
    conv_kernel: int = 5
    lengthscale_init: float = 0.2
    margin: float = 1.0

    def __post_init__(self):
        if self.encoder not in ENCODER_KINDS:
            raise ValueError(
                f"unknown encoder {self.encoder!r}; expected one of {ENCODER_KINDS}"
            )
        if self.head not in HEAD_NAMES:
            raise ValueError(
                f"unknown head {self.head!r}; expected one of {HEAD_NAMES}"
            )
        if self.d_g < 0 or (self.head != "meanfield" and self.effective_d_g < 1):
            raise ValueError(f"d_g must be >= 1, got {self.d_g}")

    @property
    def effective_d_g(self):
        return self.d_g if self.d_g > 0 else DEFAULT_D_G[self.head]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown model spec keys: {sorted(extra)}")
        missing = {"encoder", "head"} - set(d)
        if missing:
            raise ValueError(f"model spec requires keys: {sorted(missing)}")
        return cls(**d)

    # checkpoint meta encoding: every field as one scalar array
    def to_meta(self):
        enc = float(ENCODER_KINDS.index(self.encoder))
        head = float(HEAD_NAMES.index(self.head))
        meta = {"meta.encoder": enc, "meta.head": head}
        for name in self.__dataclass_fields__:
            if name in ("encoder", "head"):
                continue
            meta[f"meta.{name}"] = float(getattr(self, name))
        return {k: np.full((1,), v) for k, v in meta.items()}

    @classmethod
    def from_meta(cls, meta):
        def scalar(name):
            return float(np.asarray(meta[name]).reshape(-1)[0])

        kw = {
            "encoder": ENCODER_KINDS[int(scalar("meta.encoder"))],
            "head": HEAD_NAMES[int(scalar("meta.head"))],
        }
        ints = {"width", "depth", "rep_dim", "attn_heads", "d_g",
                "conv_channels", "conv_layers", "conv_kernel"}
        for name in cls.__dataclass_fields__:
            if name in ("encoder", "head"):
                continue
            v = scalar(f"meta.{name}")
            if name == "attn_global":
                kw[name] = bool(v)
            elif name in ints:
                kw[name] = int(v)
            else:
                kw[name] = v
        return cls(**kw)


def _build_encoder(spec, grid_multiplier=1):
    if spec.encoder == "deepset":
        return DeepSetEncoder(spec.width, spec.depth, spec.rep_dim)
    if spec.encoder == "attentive":
        return AttentiveEncoder(spec.width, spec.depth, spec.rep_dim,
                                spec.attn_heads, spec.attn_global)
    return ConvEncoder(spec.conv_channels, spec.conv_layers, spec.conv_kernel,
                       spec.lengthscale_init, spec.margin, grid_multiplier)


class Model:
    def __init__(self, spec, grid_multiplier=1):
        self.spec = spec
        self.encoder = _build_encoder(spec, grid_multiplier)
        self.head = HEAD_KINDS[spec.head](spec.width, spec.depth, spec.effective_d_g)
        self.head_in_dim = self.encoder.rep_dim + (
            1 if self.encoder.uses_target_inputs else 0
        )

    def init_params(self, seed):
        """Deterministic initialization on the reserved init stream."""
        rng = stream_rng(seed, NS_INIT, 0)
        params = {}
        for name, arr in self.encoder.init_params(rng).items():
            params[f"enc.{name}"] = arr
        for name, arr in self.head.init_params(rng, self.head_in_dim).items():
            params[f"head.{name}"] = arr
        return params

    def _split(self, params):
        enc = {k[4:]: v for k, v in params.items() if k.startswith("enc.")}
        head = {k[5:]: v for k, v in params.items() if k.startswith("head.")}
        return enc, head

    def predict(self, params, x_c, y_c, x_t):
        """Gaussian predictive over targets; params may be tape-watched."""
        enc_p, head_p = self._split(params)
        x_t = np.asarray(x_t, dtype=np.float64).reshape(-1)
        rep = self.encoder.encode(enc_p, x_c, y_c)
        queried = self.encoder.query(enc_p, rep, x_t)               # [M, R]
        if self.encoder.uses_target_inputs:
            feats = T.concat([T.tensor(x_t.reshape(-1, 1)), queried], axis=1)
        else:
            feats = queried
        return self.head.predict(head_p, feats)

    def loglik(self, params, dataset):
        pred = self.predict(params, dataset.x_c, dataset.y_c, dataset.x_t)
        return predictive_loglik(pred, dataset.y_t)
