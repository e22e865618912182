"""Seeded Gaussian-mixture generator for multi-cluster live/spoof data."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Cluster:
    mean: tuple
    std: float
    weight: float
    spoof_type: int = 0
    illum: int = 0


@dataclass(frozen=True)
class MixtureSpec:
    live: tuple  # of Cluster
    spoof: tuple
    live_fraction: float = 0.5

    @property
    def dim(self) -> int:
        return len(self.live[0].mean)

    @property
    def clusters(self) -> tuple:
        """All clusters, live first; a sample's cluster id indexes this tuple."""
        return tuple(self.live) + tuple(self.spoof)

    @property
    def n_spoof_types(self) -> int:
        return max(c.spoof_type for c in self.clusters) + 1

    @property
    def n_illum(self) -> int:
        return max(c.illum for c in self.clusters) + 1

    def validate(self) -> None:
        if not self.live or not self.spoof:
            raise ConfigurationError("each class needs at least one cluster")
        if not 0 <= self.live_fraction <= 1:
            raise ConfigurationError("live_fraction must lie in [0, 1]")
        dim = len(self.live[0].mean)
        for name, group in (("live", self.live), ("spoof", self.spoof)):
            total = sum(c.weight for c in group)
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"{name} cluster weights sum to {total}, expected 1")
            for c in group:
                if len(c.mean) != dim:
                    raise ConfigurationError("all cluster means must share one dimension")
                if not c.std > 0 or c.weight < 0:
                    raise ConfigurationError("cluster std must be > 0 and weight >= 0")
                if c.spoof_type < 0 or c.illum < 0:
                    raise ConfigurationError("sub-labels must be non-negative")
        if any(c.spoof_type != 0 for c in self.live):
            raise ConfigurationError("live clusters must use spoof_type 0 (no attack)")

    def to_dict(self) -> dict:
        def cl(c):
            return {"mean": list(c.mean), "std": c.std, "weight": c.weight,
                    "spoof_type": c.spoof_type, "illum": c.illum}

        return {"live": [cl(c) for c in self.live], "spoof": [cl(c) for c in self.spoof],
                "live_fraction": self.live_fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        try:
            spec = cls(
                tuple(Cluster(tuple(float(v) for v in c["mean"]), float(c["std"]), float(c["weight"]),
                              int(c.get("spoof_type", 0)), int(c.get("illum", 0))) for c in d["live"]),
                tuple(Cluster(tuple(float(v) for v in c["mean"]), float(c["std"]), float(c["weight"]),
                              int(c.get("spoof_type", 0)), int(c.get("illum", 0))) for c in d["spoof"]),
                float(d.get("live_fraction", 0.5)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed mixture spec: {exc}") from exc
        spec.validate()
        return spec


@dataclass
class SampleSet:
    """Column-wise storage of labeled samples."""

    x: np.ndarray  # (n, D_in)
    y: np.ndarray  # 0 live, 1 spoof
    spoof_type: np.ndarray
    illum: np.ndarray
    cluster: np.ndarray

    def __len__(self) -> int:
        return self.y.shape[0]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.x[idx], self.y[idx], self.spoof_type[idx], self.illum[idx], self.cluster[idx])


def gaussian_from_uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normals by Box-Muller on the generator's uniform stream."""
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)  # (0, 1]
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:size]


def sample_mixture(spec: MixtureSpec, n: int, seed: int) -> SampleSet:
    spec.validate()
    if n < 0:
        raise ConfigurationError("n must be >= 0")
    rng = np.random.default_rng(seed)
    n_live = int(round(n * spec.live_fraction))
    counts = (n_live, n - n_live)
    offset = (0, len(spec.live))

    cluster_ids = []
    for klass, group in enumerate((spec.live, spec.spoof)):
        cdf = np.cumsum([c.weight for c in group])
        draws = np.searchsorted(cdf, rng.random(counts[klass]) * cdf[-1], side="right")
        cluster_ids.append(np.minimum(draws, len(group) - 1) + offset[klass])
    cid = np.concatenate(cluster_ids).astype(np.int64)
    cid = cid[rng.permutation(n)]

    clusters = spec.clusters
    means = np.array([c.mean for c in clusters], dtype=np.float64).reshape(len(clusters), spec.dim)
    stds = np.array([c.std for c in clusters])
    noise = gaussian_from_uniform(rng, n * spec.dim).reshape(n, spec.dim)
    x = means[cid] + stds[cid, None] * noise
    y = (cid >= len(spec.live)).astype(np.int64)
    spoof_type = np.array([c.spoof_type for c in clusters], dtype=np.int64)[cid]
    illum = np.array([c.illum for c in clusters], dtype=np.int64)[cid]
    return SampleSet(x, y, spoof_type, illum, cid)


def shift_domain(spec: MixtureSpec, translation, std_scale: float) -> MixtureSpec:
    t = np.asarray(translation, dtype=np.float64)
    if t.shape != (spec.dim,):
        raise ConfigurationError(f"translation must have length {spec.dim}")
    if not std_scale > 0:
        raise ConfigurationError("std_scale must be > 0")

    def move(c):
        return replace(c, mean=tuple(float(v) for v in np.asarray(c.mean) + t), std=c.std * std_scale)

    return replace(spec, live=tuple(move(c) for c in spec.live), spoof=tuple(move(c) for c in spec.spoof))


def default_fig1_spec(radius: float = 3.0, std: float = 0.6) -> MixtureSpec:
    """Two live and three spoof clusters on a ring, ordered L S L S S.

    One spoof cluster sits between the two live clusters, so no single
    linear boundary separates the classes.
    """
    angles = np.deg2rad([0.0, 72.0, 144.0, 216.0, 288.0])
    pts = [(float(radius * np.cos(a)), float(radius * np.sin(a))) for a in angles]
    live = (
        Cluster(pts[0], std, 0.5, spoof_type=0, illum=0),
        Cluster(pts[2], std, 0.5, spoof_type=0, illum=1),
    )
    spoof = (
        Cluster(pts[1], std, 0.4, spoof_type=1, illum=0),  # interposed between the live clusters
        Cluster(pts[3], std, 0.3, spoof_type=2, illum=1),
        Cluster(pts[4], std, 0.3, spoof_type=3, illum=2),
    )
    return MixtureSpec(live, spoof, 0.5)
