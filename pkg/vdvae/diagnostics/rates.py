"""Per-layer KL rate profiles and posterior-collapse detection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dist import nats_to_bpd
from ..model import Parameters, VeryDeepVAE
from ..training import NormStats, evaluate

COLLAPSE_THRESHOLD_BPD = 1e-4


@dataclass
class RateProfile:
    """Mean KL per layer in bits/dim, in decoder order."""
    kl_bpd: np.ndarray
    resolutions: list[int]
    label: str = ""
    threshold: float = COLLAPSE_THRESHOLD_BPD
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kl_bpd = np.asarray(self.kl_bpd, dtype=np.float64)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.kl_bpd)

    @property
    def total(self) -> float:
        return float(self.cumulative[-1]) if self.kl_bpd.size else 0.0

    def collapsed_layers(self) -> list[int]:
        return [i for i, v in enumerate(self.kl_bpd) if v < self.threshold]

    def rows(self) -> list[tuple[int, int, float, float]]:
        return [(i, res, float(kl), float(cum))
                for i, (res, kl, cum) in enumerate(zip(self.resolutions, self.kl_bpd, self.cumulative))]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["layer", "resolution", "kl_bpd", "cum_kl_bpd"])
            for layer, res, kl, cum in self.rows():
                writer.writerow([layer, res, repr(kl), repr(cum)])


def kl_per_layer(model: VeryDeepVAE, params: Parameters, images: np.ndarray, stats: NormStats,
                 batch_size: int = 64, seed: int = 0, label: str = "") -> RateProfile:
    """Average KL of every layer over `images`, in bits per subpixel."""
    result = evaluate(model, params, images, stats, batch_size=batch_size, seed=seed)
    kl = np.array([nats_to_bpd(v) for v in result.kl_per_layer])
    return RateProfile(kl_bpd=kl, resolutions=model.dec_spec.layer_resolutions, label=label,
                       extra={"eval_bpd": result.bits_per_dim})


def plot_rate_profile(profiles: Sequence[RateProfile], path: str | Path, title: str = "Cumulative KL") -> None:
    """One cumulative-rate curve per profile on a shared figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for profile in profiles:
        ax.plot(np.arange(len(profile.kl_bpd)), profile.cumulative, label=profile.label or None)
    ax.set_xlabel("layer")
    ax.set_ylabel("cumulative KL (bits/dim)")
    ax.set_title(title)
    if any(p.label for p in profiles):
        ax.legend()
    fig.tight_layout()
    fig.savefig(str(path))
    plt.close(fig)
