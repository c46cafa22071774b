"""End-to-end configuration and the segment -> features -> CNN -> propagation path."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import features as F
from . import propagate as P
from .errors import ConfigError
from .nn.network import predict_proba
from .nn.train import TrainConfig, sample_regions
from .superpixel import DEFAULT_COMPACTNESS, region_stats, slic_segment


@dataclass
class PipelineConfig:
    n_superpixels: int = F.N_REGIONS
    n_background: int = F.N_BACKGROUND
    sigma_lr: float = F.SIGMA_LOCAL
    sigma_gr: float = F.SIGMA_GLOBAL
    delta_c: float = F.DELTA_COLOR
    delta1: float = P.DELTA_COLOR
    delta2: float = P.DELTA_DEPTH
    alpha: float = P.ALPHA
    cg_tol: float = P.CG_TOL
    cg_max_iter: int = P.CG_MAX_ITER
    compactness: float = DEFAULT_COMPACTNESS
    train: TrainConfig = field(default_factory=TrainConfig)
    train_root: Optional[str] = None
    test_root: Optional[str] = None
    output_dir: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig.from_dict(self.train)
        for name in ("sigma_lr", "sigma_gr", "delta_c", "delta1", "delta2", "compactness"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.n_background < 1 or self.n_background > F.PATCH_SIDE * F.PATCH_SIDE // 2:
            raise ConfigError("n_background must lie in [1, 512]")

    def require_cnn_layout(self):
        if self.n_superpixels != F.PATCH_SIDE * F.PATCH_SIDE:
            raise ConfigError(
                f"n_superpixels must be {F.PATCH_SIDE * F.PATCH_SIDE} for the 32x32 CNN input, got {self.n_superpixels}"
            )

    def feature_params(self):
        return {"n_b": self.n_background, "sigma_local": self.sigma_lr, "sigma_global": self.sigma_gr,
                "delta_c": self.delta_c}

    def propagation_params(self):
        return {"alpha": self.alpha, "delta1": self.delta1, "delta2": self.delta2, "tol": self.cg_tol,
                "max_iter": self.cg_max_iter}

    def to_dict(self):
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def segment(img, config):
    seg = slic_segment(img, config.n_superpixels, config.compactness)
    return seg, region_stats(seg, img)


class PatchMaker:
    """Per-image patch extractor used by training (see ``nn.train.epoch_patches``).

    A class rather than a closure so worker processes can unpickle it.
    """

    def __init__(self, config):
        config.require_cnn_layout()
        self.config = config

    def __call__(self, img, rng, k):
        seg, stats = segment(img, self.config)
        labels = F.region_labels(seg, img.gt)
        rows = sample_regions(labels, k, rng)
        x, _ = F.extract_arrays(img, seg, stats, self.config.feature_params(), rows=rows)
        return x, labels[rows]


make_patch_fn = PatchMaker


@dataclass
class Prediction:
    seg: object
    stats: object
    p_sal: np.ndarray  # per region
    initial: np.ndarray  # per pixel CNN probability
    refined: Optional[P.SaliencyMap] = None
    seeds: Optional[np.ndarray] = None


def predict(net, img, config, propagate=True):
    """Saliency for one image: raw CNN probabilities and (optionally) the propagated map."""
    config.require_cnn_layout()
    seg, stats = segment(img, config)
    x, _ = F.extract_arrays(img, seg, stats, config.feature_params())
    probs = predict_proba(net, x)
    p_sal, p_non = probs[:, 1], probs[:, 0]
    out = Prediction(seg=seg, stats=stats, p_sal=p_sal, initial=p_sal[seg.labels])
    if propagate:
        out.refined, out.seeds = P.propagate(p_sal, p_non, stats, seg, **config.propagation_params())
    return out
