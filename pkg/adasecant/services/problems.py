"""Benchmark objectives with analytic gradients.

Every problem works on a flat parameter vector described by its ``layout``.
``loss_and_grad(theta, indices, rng)`` is the stochastic oracle the optimizers see:
data-driven problems average over the rows in ``indices`` (all rows when omitted),
analytic problems add Gaussian gradient noise drawn from ``rng`` when one is given.
``full_loss`` is always the exact, deterministic objective.
"""

from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from adasecant.errors import ProblemError
from adasecant.services.datasets import Dataset
from adasecant.services.numerics import (
    BlockLayout,
    ParamVector,
    Rng,
    block_view,
    gaussian_fill,
)
from adasecant.settings import FD_STEP

INIT_STD = 0.05
BLOCK_MODES = ("coordinate", "single")


class Problem(ABC):
    name: str = ""

    def __init__(self, layout: BlockLayout, dataset: Optional[Dataset] = None):
        self.layout = layout
        self.dataset = dataset

    @property
    def dim(self) -> int:
        return self.layout.size

    @property
    def n_examples(self) -> int:
        return 0 if self.dataset is None else self.dataset.n_examples

    def initial_theta(self, rng: Rng, std: float = INIT_STD) -> ParamVector:
        return gaussian_fill(rng, self.dim, 0.0, std)

    def _check_theta(self, theta: npt.ArrayLike) -> ParamVector:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ProblemError(f"{self.name}: theta has shape {theta.shape}, expected ({self.dim},)")
        return theta

    @abstractmethod
    def full_loss(self, theta: ParamVector) -> float:
        ...

    @abstractmethod
    def loss_and_grad(
        self,
        theta: ParamVector,
        indices: Optional[np.ndarray] = None,
        rng: Optional[Rng] = None,
    ) -> Tuple[float, ParamVector]:
        ...


def _analytic_layout(dim: int, blocks: str) -> BlockLayout:
    if blocks == "coordinate":
        return BlockLayout.per_coordinate(dim)
    if blocks == "single":
        return BlockLayout.single(dim)
    raise ProblemError(f"Unknown block mode {blocks!r}; expected one of {BLOCK_MODES}")


def _check_noise(noise_std: float) -> float:
    if not np.isfinite(noise_std) or noise_std < 0:
        raise ProblemError(f"noise_std must be finite and >= 0, got {noise_std}")
    return float(noise_std)


class QuadraticProblem(Problem):
    """f(theta) = 1/2 sum h_i theta_i^2, minimum 0 at the origin."""

    name = "quadratic"

    def __init__(self, h_diag: npt.ArrayLike, noise_std: float = 0.0, blocks: str = "coordinate"):
        h_diag = np.asarray(h_diag, dtype=np.float64).ravel()
        if h_diag.size == 0:
            raise ProblemError("quadratic needs at least one curvature entry")
        if not np.all(np.isfinite(h_diag)) or np.any(h_diag <= 0):
            raise ProblemError(f"quadratic curvatures must be finite and > 0, got {h_diag.tolist()}")
        super().__init__(_analytic_layout(h_diag.size, blocks))
        self.h_diag = h_diag
        self.noise_std = _check_noise(noise_std)

    def full_loss(self, theta: ParamVector) -> float:
        theta = self._check_theta(theta)
        return 0.5 * float(np.dot(self.h_diag * theta, theta))

    def loss_and_grad(self, theta, indices=None, rng=None):
        theta = self._check_theta(theta)
        grad = self.h_diag * theta
        if rng is not None and self.noise_std > 0:
            grad = grad + rng.normal(0.0, self.noise_std, size=self.dim)
        return self.full_loss(theta), grad


class RosenbrockProblem(Problem):
    """Chained Rosenbrock: sum 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2, minimum 0 at all-ones."""

    name = "rosenbrock"

    def __init__(self, dim: int, noise_std: float = 0.0, blocks: str = "coordinate"):
        if dim < 2:
            raise ProblemError(f"rosenbrock needs dim >= 2, got {dim}")
        super().__init__(_analytic_layout(dim, blocks))
        self.noise_std = _check_noise(noise_std)

    def full_loss(self, theta: ParamVector) -> float:
        x = self._check_theta(theta)
        head, tail = x[:-1], x[1:]
        return float(np.sum(100.0 * (tail - head**2) ** 2 + (1.0 - head) ** 2))

    def loss_and_grad(self, theta, indices=None, rng=None):
        x = self._check_theta(theta)
        head, tail = x[:-1], x[1:]
        coupling = tail - head**2
        grad = np.zeros_like(x)
        grad[:-1] = -400.0 * head * coupling - 2.0 * (1.0 - head)
        grad[1:] += 200.0 * coupling
        if rng is not None and self.noise_std > 0:
            grad = grad + rng.normal(0.0, self.noise_std, size=self.dim)
        return self.full_loss(x), grad


Activation = Tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray, np.ndarray], np.ndarray]]

# (forward, derivative given pre-activation z and output a)
ACTIVATIONS: Dict[str, Activation] = {
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(np.float64)),
    "sigmoid": (lambda z: 0.5 * (1.0 + np.tanh(0.5 * z)), lambda z, a: a * (1.0 - a)),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class MLPProblem(Problem):
    """Fully connected network with softmax cross-entropy output.

    ``arch`` lists layer widths from inputs to classes. Parameters are laid out as
    ``W0, b0, W1, b1, ...``; ``W{l}`` is stored row-major with shape (in, out).
    """

    name = "mlp"

    def __init__(self, arch: Sequence[int], activation: str, dataset: Dataset):
        arch = [int(w) for w in arch]
        if len(arch) < 2 or any(w < 1 for w in arch):
            raise ProblemError(f"arch needs at least two positive widths, got {arch}")
        if activation not in ACTIVATIONS:
            raise ProblemError(f"Unknown activation {activation!r}; expected one of {sorted(ACTIVATIONS)}")
        if arch[0] != dataset.n_features:
            raise ProblemError(f"arch input width {arch[0]} does not match {dataset.n_features} features")
        if dataset.targets.min() < 0 or dataset.n_classes > arch[-1]:
            raise ProblemError(f"labels must lie in [0, {arch[-1]}), found up to {dataset.n_classes - 1}")
        shapes: List[Tuple[str, Tuple[int, ...]]] = []
        for layer, (fan_in, fan_out) in enumerate(zip(arch[:-1], arch[1:])):
            shapes.append((f"W{layer}", (fan_in, fan_out)))
            shapes.append((f"b{layer}", (fan_out,)))
        super().__init__(BlockLayout.from_shapes(shapes), dataset)
        self.arch = arch
        self.activation = activation
        self._shapes = dict(shapes)

    @property
    def n_layers(self) -> int:
        return len(self.arch) - 1

    def unpack(self, theta: ParamVector) -> List[Tuple[np.ndarray, np.ndarray]]:
        theta = self._check_theta(theta)
        return [
            (
                block_view(theta, self.layout, f"W{l}").reshape(self._shapes[f"W{l}"]),
                block_view(theta, self.layout, f"b{l}"),
            )
            for l in range(self.n_layers)
        ]

    def _forward(self, params, inputs):
        act, _ = ACTIVATIONS[self.activation]
        pre, post = [], [inputs]
        a = inputs
        for l, (w, b) in enumerate(params):
            z = a @ w + b
            pre.append(z)
            a = z if l == self.n_layers - 1 else act(z)
            post.append(a)
        return pre, post

    def _batch(self, indices):
        if indices is None:
            return self.dataset.inputs, self.dataset.targets
        indices = np.asarray(indices)
        if indices.size == 0:
            raise ProblemError("minibatch must contain at least one example")
        return self.dataset.inputs[indices], self.dataset.targets[indices]

    def _loss(self, log_probs, targets) -> float:
        return -float(np.mean(log_probs[np.arange(targets.size), targets]))

    def full_loss(self, theta: ParamVector) -> float:
        _, post = self._forward(self.unpack(theta), self.dataset.inputs)
        return self._loss(_log_softmax(post[-1]), self.dataset.targets)

    def loss_and_grad(self, theta, indices=None, rng=None):
        params = self.unpack(theta)
        inputs, targets = self._batch(indices)
        pre, post = self._forward(params, inputs)
        log_probs = _log_softmax(post[-1])
        loss = self._loss(log_probs, targets)

        m = targets.size
        delta = np.exp(log_probs)
        delta[np.arange(m), targets] -= 1.0
        delta /= m
        _, act_grad = ACTIVATIONS[self.activation]
        grad = np.zeros(self.dim)
        for l in reversed(range(self.n_layers)):
            w, _ = params[l]
            block_view(grad, self.layout, f"W{l}")[:] = (post[l].T @ delta).ravel()
            block_view(grad, self.layout, f"b{l}")[:] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ w.T) * act_grad(pre[l - 1], post[l])
        return loss, grad


def quadratic_problem(h_diag: Sequence[float], noise_std: float = 0.0, blocks: str = "coordinate") -> QuadraticProblem:
    return QuadraticProblem(h_diag, noise_std, blocks)


def rosenbrock_problem(dim: int, noise_std: float = 0.0, blocks: str = "coordinate") -> RosenbrockProblem:
    return RosenbrockProblem(dim, noise_std, blocks)


def mlp_problem(arch: Sequence[int], activation: str, dataset: Dataset) -> MLPProblem:
    return MLPProblem(arch, activation, dataset)


def logistic_problem(dataset: Dataset) -> MLPProblem:
    """Multinomial logistic regression: an MLP without hidden layers (blocks W0, b0)."""
    problem = MLPProblem([dataset.n_features, max(2, dataset.n_classes)], "identity", dataset)
    problem.name = "logistic"
    return problem


def finite_diff_grad(problem: Problem, theta: ParamVector, h: float = FD_STEP) -> ParamVector:
    """Central differences of ``full_loss`` along every coordinate."""
    if not h > 0:
        raise ProblemError(f"finite-difference step must be > 0, got {h}")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        saved = theta[i]
        theta[i] = saved + h
        upper = problem.full_loss(theta)
        theta[i] = saved - h
        lower = problem.full_loss(theta)
        theta[i] = saved
        grad[i] = (upper - lower) / (2.0 * h)
    return grad
