"""Small synthetic classification datasets.

``two_moons_data`` draws two interleaved half circles; ``digits8x8_subset`` samples the
bundled 8x8 digit bitmaps in ``adasecant/data/digits8x8.txt``. That file starts with a
``#`` header of ``key=value`` fields (version, rows, cols, dtype, layout); every other
line is one example: the label followed by 64 row-major pixel intensities in [0, 16].
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict

import numpy as np

from adasecant.errors import ProblemError
from adasecant.services.numerics import make_rng

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
DIGITS_PATH = DATA_DIR / "digits8x8.txt"
DIGITS_VERSION = "1"
PIXEL_MAX = 16.0


@dataclass(frozen=True)
class Dataset:
    name: str
    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ProblemError(f"dataset {self.name!r} needs a non-empty 2-d input matrix")
        if self.targets.shape != (self.inputs.shape[0],):
            raise ProblemError(
                f"dataset {self.name!r}: {self.targets.shape[0]} targets for {self.inputs.shape[0]} rows"
            )

    @property
    def n_examples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.targets.max()) + 1


def two_moons_data(seed: int, n: int, noise_std: float = 0.1) -> Dataset:
    if n < 2:
        raise ProblemError(f"two_moons_data needs n >= 2, got {n}")
    if noise_std < 0 or not math.isfinite(noise_std):
        raise ProblemError(f"two_moons_data needs a finite noise_std >= 0, got {noise_std}")
    rng = make_rng(seed)
    n_outer = (n + 1) // 2
    n_inner = n // 2
    t_outer = np.linspace(0.0, np.pi, n_outer)
    t_inner = np.linspace(0.0, np.pi, n_inner)
    outer = np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner = np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)])
    inputs = np.vstack([outer, inner])
    targets = np.concatenate([np.zeros(n_outer, dtype=np.int64), np.ones(n_inner, dtype=np.int64)])
    if noise_std > 0:
        inputs = inputs + rng.normal(0.0, noise_std, size=inputs.shape)
    order = rng.permutation(n)
    return Dataset(name="two_moons", inputs=inputs[order], targets=targets[order], seed=seed)


def _read_header(path: Path) -> Dict[str, str]:
    with path.open("r", encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith("#"):
        raise ProblemError(f"{path} is missing its header line")
    fields = {}
    for token in first[1:].split():
        if "=" in token:
            key, value = token.split("=", 1)
            fields[key] = value
    return fields


def load_digits(path: Path = DIGITS_PATH) -> Dataset:
    try:
        header = _read_header(path)
        table = np.loadtxt(path, dtype=np.int64, comments="#", ndmin=2)
    except OSError as e:
        raise ProblemError(f"Failed to read digits file {path}: {str(e)}") from e
    if header.get("version") != DIGITS_VERSION:
        raise ProblemError(f"{path}: unsupported digits file version {header.get('version')!r}")
    rows, cols = int(header["rows"]), int(header["cols"])
    if table.shape != (rows, cols):
        raise ProblemError(f"{path}: header says {rows}x{cols}, found {table.shape[0]}x{table.shape[1]}")
    return Dataset(
        name="digits8x8",
        inputs=table[:, 1:].astype(np.float64) / PIXEL_MAX,
        targets=table[:, 0].copy(),
        seed=0,
    )


def digits8x8_subset(seed: int, n_per_class: int) -> Dataset:
    if n_per_class < 1:
        raise ProblemError(f"n_per_class must be >= 1, got {n_per_class}")
    digits = load_digits()
    rng = make_rng(seed)
    chosen = []
    for label in range(digits.n_classes):
        candidates = np.flatnonzero(digits.targets == label)
        if n_per_class > candidates.size:
            raise ProblemError(
                f"only {candidates.size} bundled examples of digit {label}, asked for {n_per_class}"
            )
        chosen.append(rng.choice(candidates, size=n_per_class, replace=False))
    order = rng.permutation(np.concatenate(chosen))
    return Dataset(
        name="digits8x8",
        inputs=digits.inputs[order],
        targets=digits.targets[order],
        seed=seed,
    )
