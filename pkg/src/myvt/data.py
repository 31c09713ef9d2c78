"""Seeded synthetic datasets: a sparse truth or a piecewise-constant truth in
R^d, plus n noisy copies of it, and dataset file round-tripping.

The dataset file is CSV with two sections so it is self-describing:

    # truth
    <d comma-separated values>
    # examples
    <one row per example>
"""

from dataclasses import dataclass

import numpy as np

from .nn import Rng

__all__ = ["SyntheticSpec", "Dataset", "make_truth", "make_dataset",
           "save_dataset", "load_dataset"]

_TRUTH_STREAM = 11
_NOISE_STREAM = 12


@dataclass(frozen=True)
class SyntheticSpec:
    """Generation settings for one synthetic case.

    case "sparse": k coordinates (chosen without replacement) get levels
    uniform in [amp_low, amp_high], the rest are zero. case "pwc":
    n_segments contiguous near-equal blocks with uniform levels.
    noise_std 0.2 gives per-coordinate noise variance 0.04.
    """

    case: str = "sparse"
    d: int = 100
    n_examples: int = 500
    noise_std: float = 0.2
    k: int = 5
    n_segments: int = 5
    amp_low: float = -2.0
    amp_high: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.case not in ("sparse", "pwc"):
            raise ValueError(f"unknown case {self.case!r}")
        if not 0 <= self.k <= self.d:
            raise ValueError("need 0 <= k <= d")
        if not 1 <= self.n_segments <= self.d:
            raise ValueError("need 1 <= n_segments <= d")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.n_examples < 1 or self.d < 1:
            raise ValueError("n_examples and d must be >= 1")


@dataclass
class Dataset:
    truth: np.ndarray      # (d,)
    examples: np.ndarray   # (n, d)


def make_truth(spec):
    """Draw the ground-truth vector from the truth substream of spec.seed."""
    rng = Rng(spec.seed).split(_TRUTH_STREAM)
    z = np.zeros(spec.d)
    if spec.case == "sparse":
        if spec.k > 0:
            support = rng.choice_without_replacement(spec.d, spec.k)
            levels = spec.amp_low + (spec.amp_high - spec.amp_low) * rng.uniform(spec.k)
            z[support] = levels
    else:
        # near-equal contiguous blocks
        bounds = [round(j * spec.d / spec.n_segments) for j in range(spec.n_segments + 1)]
        levels = spec.amp_low + (spec.amp_high - spec.amp_low) * rng.uniform(spec.n_segments)
        for j in range(spec.n_segments):
            z[bounds[j]:bounds[j + 1]] = levels[j]
    return z


def make_dataset(spec):
    """Truth plus n_examples rows of truth + noise_std * N(0, I)."""
    truth = make_truth(spec)
    rng = Rng(spec.seed).split(_NOISE_STREAM)
    noise = rng.normal((spec.n_examples, spec.d))
    return Dataset(truth=truth, examples=truth[None, :] + spec.noise_std * noise)


def _format_row(row):
    return ",".join(repr(float(v)) for v in row)


def save_dataset(ds, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# truth\n")
        fh.write(_format_row(ds.truth) + "\n")
        fh.write("# examples\n")
        for row in ds.examples:
            fh.write(_format_row(row) + "\n")


def load_dataset(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if len(lines) < 4 or lines[0] != "# truth" or lines[2] != "# examples":
        raise ValueError(f"{path}: not a dataset file")
    truth = np.array([float(v) for v in lines[1].split(",")])
    examples = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[3:] if ln]
    )
    if examples.ndim != 2 or examples.shape[1] != truth.shape[0]:
        raise ValueError(f"{path}: example rows do not match truth length")
    return Dataset(truth=truth, examples=examples)
