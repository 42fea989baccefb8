"""Model aggregate: construction, namespaced parameters, checkpointing.

A checkpoint stores every component parameter plus numeric `meta/*`
entries describing the architecture, so a decoder can rebuild the exact
model from the file alone. The 64-bit FNV-1a hash of the checkpoint bytes
identifies the weights on the wire.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .checkpoint import fnv1a64, load_tensors, save_tensors
from .context import ContinuousCCM, DiscreteCCM
from .errors import FormatError
from .fsq import FsqConfig
from .fusion import FusionDecoder
from .masking import FillProjection
from .predictor import TokenPredictor
from .tokenizer import Tokenizer


@dataclass(frozen=True)
class ModelConfig:
    fsq_levels: tuple = (4, 4, 4, 4, 4, 4)
    widths: tuple = (32, 64, 64)
    cont_channels: int = 16
    cont_bound: float = 30.0
    gain_init: float = 8.0
    hyper_channels: int = 8
    hyper_width: int = 32
    ctx_width: int = 32
    head_width: int = 64
    d_model: int = 128
    layers: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    max_grid: tuple = (8, 16, 16)
    init_seed: int = 0


STAGE_COMPONENTS = {
    1: ("tokenizer",),
    2: ("ccm_c", "ccm_d", "fill"),
    3: ("predictor",),
    4: ("fusion",),
}


class TvcModel:
    def __init__(self, cfg: ModelConfig = ModelConfig(), dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.fsq_cfg = FsqConfig(tuple(cfg.fsq_levels))
        rng = np.random.default_rng(cfg.init_seed)
        self.tokenizer = Tokenizer(self.fsq_cfg, cfg.widths, cfg.cont_channels,
                                   cfg.cont_bound, cfg.gain_init, rng, dtype)
        self.ccm_c = ContinuousCCM(cfg.cont_channels, cfg.hyper_channels,
                                   cfg.hyper_width, cfg.ctx_width, cfg.head_width,
                                   cfg.cont_bound, rng, dtype)
        self.ccm_d = DiscreteCCM(self.fsq_cfg.levels, cfg.cont_channels,
                                 cfg.hyper_channels, cfg.hyper_width, cfg.ctx_width,
                                 cfg.head_width, cfg.cont_bound, rng, dtype)
        self.fill = FillProjection(cfg.cont_channels, self.fsq_cfg.channels, rng, dtype)
        self.predictor = TokenPredictor(self.fsq_cfg, cfg.cont_channels, cfg.d_model,
                                        cfg.layers, cfg.heads, cfg.mlp_ratio,
                                        cfg.max_grid, rng, dtype)
        self.fusion = FusionDecoder(cfg.widths, cfg.cont_channels, rng, dtype)
        self.weight_hash = None

    def components(self):
        return {
            "tokenizer": self.tokenizer,
            "ccm_c": self.ccm_c,
            "ccm_d": self.ccm_d,
            "fill": self.fill,
            "predictor": self.predictor,
            "fusion": self.fusion,
        }

    def params(self):
        out = {}
        for prefix, comp in self.components().items():
            for name, tensor in comp.params().items():
                out[f"{prefix}.{name}"] = tensor
        return out

    def trainable_names(self, stage, unfreeze_main_decoder=False):
        prefixes = STAGE_COMPONENTS[stage]
        names = [n for n in self.params()
                 if any(n.startswith(p + ".") for p in prefixes)]
        if stage == 4 and unfreeze_main_decoder:
            names += [n for n in self.params() if n.startswith("tokenizer.dec_d.")]
        return names

    def set_stage_trainable(self, stage, unfreeze_main_decoder=False):
        trainable = set(self.trainable_names(stage, unfreeze_main_decoder))
        for name, p in self.params().items():
            p.requires_grad = name in trainable

    # --- persistence --------------------------------------------------------

    def _meta(self):
        cfg = self.cfg
        return {
            "meta/fsq_levels": np.asarray(cfg.fsq_levels, dtype=np.float32),
            "meta/widths": np.asarray(cfg.widths, dtype=np.float32),
            "meta/max_grid": np.asarray(cfg.max_grid, dtype=np.float32),
            "meta/ints": np.asarray([cfg.cont_channels, cfg.hyper_channels,
                                     cfg.hyper_width, cfg.ctx_width, cfg.head_width,
                                     cfg.d_model, cfg.layers, cfg.heads,
                                     cfg.mlp_ratio, cfg.init_seed], dtype=np.float32),
            "meta/floats": np.asarray([cfg.cont_bound, cfg.gain_init], dtype=np.float32),
        }

    def save(self, path):
        named = {name: t.data for name, t in self.params().items()}
        named.update(self._meta())
        blob = save_tensors(path, named)
        self.weight_hash = fnv1a64(blob)
        return self.weight_hash

    @classmethod
    def config_from_tensors(cls, named):
        try:
            ints = named["meta/ints"].astype(np.int64)
            floats = named["meta/floats"].astype(np.float64)
            return ModelConfig(
                fsq_levels=tuple(named["meta/fsq_levels"].astype(np.int64).tolist()),
                widths=tuple(named["meta/widths"].astype(np.int64).tolist()),
                cont_channels=int(ints[0]), hyper_channels=int(ints[1]),
                hyper_width=int(ints[2]), ctx_width=int(ints[3]),
                head_width=int(ints[4]), d_model=int(ints[5]), layers=int(ints[6]),
                heads=int(ints[7]), mlp_ratio=int(ints[8]), init_seed=int(ints[9]),
                max_grid=tuple(named["meta/max_grid"].astype(np.int64).tolist()),
                cont_bound=float(floats[0]), gain_init=float(floats[1]),
            )
        except KeyError as exc:
            raise FormatError(f"checkpoint missing meta entry {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            blob = fh.read()
        named = load_tensors(path)
        cfg = cls.config_from_tensors(named)
        model = cls(cfg)
        params = model.params()
        stored = {k: v for k, v in named.items() if not k.startswith("meta/")}
        if set(stored) != set(params):
            missing = set(params) - set(stored)
            extra = set(stored) - set(params)
            raise FormatError(f"checkpoint mismatch: missing={sorted(missing)[:3]} "
                              f"extra={sorted(extra)[:3]}")
        for name, arr in stored.items():
            if params[name].data.shape != arr.shape:
                raise FormatError(f"checkpoint tensor {name} has shape {arr.shape}, "
                                  f"expected {params[name].data.shape}")
            params[name].data = arr.astype(params[name].data.dtype)
        model.weight_hash = fnv1a64(blob)
        return model

    def param_hash(self, names=None):
        """Digest of selected parameter bytes (stage-isolation checks)."""
        params = self.params()
        digest = hashlib.sha256()
        for name in sorted(names if names is not None else params):
            digest.update(name.encode())
            digest.update(params[name].data.astype("<f4").tobytes())
        return digest.hexdigest()
