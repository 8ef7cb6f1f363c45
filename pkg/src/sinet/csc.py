"""Soft thresholding, the l1-regularized CSC objective, and a classic ISTA solver.

The solver here is the plain tied-weight iteration

    z <- S_{lambda*step}( z - step * D^T (D(z) - observation) ),   z0 = 0,

kept deliberately simple so it can serve as the correctness oracle for the
unrolled estimation blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import (
    KernelBank,
    check_tensor3,
    conv2d_adjoint,
    conv2d_same,
    sq_sum,
    abs_sum,
)

_POWER_ITERATIONS = 50
_POWER_SEED = 7


def soft_threshold(x: np.ndarray, theta: float) -> np.ndarray:
    """Elementwise sgn(x) * max(|x| - theta, 0)."""
    if theta < 0:
        raise ValueError(f"theta must be nonnegative, got {theta}")
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


@dataclass
class CscProblem:
    """One single-channel l1-regularized CSC instance.

    ``dictionary`` is the bias-free decode bank D mapping a K-channel code to
    the 1-channel image domain; ``step_size`` is the ISTA step (1/L).
    """

    observation: np.ndarray
    dictionary: KernelBank
    lam: float
    step_size: float
    iterations: int = 0

    def __post_init__(self):
        self.observation = check_tensor3(self.observation, "observation")
        if self.observation.shape[2] != 1:
            raise ValueError(
                f"observation must have exactly 1 channel, got "
                f"{self.observation.shape[2]}"
            )
        if self.dictionary.out_channels != 1:
            raise ValueError(
                f"dictionary must have 1 out-channel, got "
                f"{self.dictionary.out_channels}"
            )
        if self.dictionary.bias is not None:
            raise ValueError("dictionary must be bias-free")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be nonnegative, got {self.iterations}")

    @property
    def code_shape(self) -> tuple[int, int, int]:
        h, w, _ = self.observation.shape
        return (h, w, self.dictionary.in_channels)


def csc_objective(problem: CscProblem, z: np.ndarray) -> float:
    """(1/2) ||obs - D(z)||_2^2 + lam * ||z||_1 with unreduced (summed) norms."""
    z = check_tensor3(z, "z")
    if z.shape != problem.code_shape:
        raise ValueError(f"z shape {z.shape} does not match {problem.code_shape}")
    residual = conv2d_same(z, problem.dictionary) - problem.observation
    return 0.5 * sq_sum(residual) + problem.lam * abs_sum(z)


def ista_iterate(problem: CscProblem, z: np.ndarray) -> np.ndarray:
    """One ISTA step from the current code z."""
    residual = conv2d_same(z, problem.dictionary) - problem.observation
    grad = conv2d_adjoint(residual, problem.dictionary)
    return soft_threshold(
        z - problem.step_size * grad, problem.lam * problem.step_size
    )


def ista_solve(problem: CscProblem, record_trace: bool = False):
    """Run ISTA from z = 0 for ``problem.iterations`` steps.

    Returns the final code, or (code, trace) with the per-iteration codes when
    ``record_trace`` is set.
    """
    z = np.zeros(problem.code_shape, dtype=problem.observation.dtype)
    trace = []
    for _ in range(problem.iterations):
        z = ista_iterate(problem, z)
        if record_trace:
            trace.append(z)
    if record_trace:
        return z, trace
    return z


def estimate_lipschitz(dictionary: KernelBank, height: int, width: int) -> float:
    """Power-iteration estimate of the largest eigenvalue of z -> D^T(D(z)).

    Deterministic: fixed seed, fixed iteration count. Returns 0 for the zero
    operator.
    """
    if dictionary.bias is not None:
        raise ValueError("dictionary must be bias-free")
    rng = np.random.default_rng(_POWER_SEED)
    v = rng.standard_normal((height, width, dictionary.in_channels))
    v /= np.linalg.norm(v.ravel())
    estimate = 0.0
    for _ in range(_POWER_ITERATIONS):
        av = conv2d_adjoint(conv2d_same(v, dictionary), dictionary)
        norm = float(np.linalg.norm(av.ravel()))
        if norm == 0.0:
            return 0.0
        estimate = norm
        v = av / norm
    return estimate
