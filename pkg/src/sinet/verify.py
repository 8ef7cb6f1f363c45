"""Built-in self-verification suites.

Three independent correctness oracles, runnable from the CLI:

* adjoint identity   <conv(x, B), y> == <x, conv_adjoint(y, B)>
* unrolling equivalence   a tied estimation block with analytically chosen
  banks and constant thresholds reproduces the classic iterative solver
* gradient fidelity   analytic gradients vs central finite differences
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .csc import CscProblem, ista_solve
from .model import ModelConfig
from .sfeb import SfebParams, ThresholdSchedule, sfeb_forward
from .tensor_ops import KernelBank, conv2d_adjoint, conv2d_same, dot, transpose_bank
from .training import grad_check


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.detail})"


def run_adjoint_suite(trials: int = 100, seed: int = 0, tol: float = 1e-10) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        h = int(rng.integers(4, 11))
        w = int(rng.integers(4, 11))
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 4))
        ks = int(rng.choice([1, 3, 5]))
        bank = KernelBank(rng.standard_normal((cout, cin, ks, ks)))
        x = rng.standard_normal((h, w, cin))
        y = rng.standard_normal((h, w, cout))
        lhs = dot(conv2d_same(x, bank), y)
        rhs = dot(x, conv2d_adjoint(y, bank))
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return SuiteResult(
        name="adjoint identity",
        passed=worst <= tol,
        detail=f"worst relative mismatch {worst:.3e} over {trials} triples, tol {tol:.0e}",
    )


def tied_block_for_problem(problem: CscProblem) -> tuple[SfebParams, list]:
    """Banks and constant thresholds that make a tied block replay the solver.

    The gradient step z - s*D^T(D z - I) rearranges to
    z - W_u(W_d z) + W_in I with W_d = D, W_u = W_in = s*D^T, and the
    proximal threshold becomes the constant lam*s.
    """
    s = problem.step_size
    d_t = transpose_bank(problem.dictionary)
    w_u = KernelBank(s * d_t.weights)
    params = SfebParams(
        w_in=[],
        w_u=[w_u],
        w_d=[KernelBank(problem.dictionary.weights.copy())],
        schedule=ThresholdSchedule(w_raw=0.0, b_theta=0.0),
        iterations=problem.iterations,
        tied=True,
    )
    thetas = [problem.lam * s] * problem.iterations
    return params, thetas


def run_unrolling_suite(
    trials: int = 10, seed: int = 123, tol: float = 1e-10
) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        dictionary = KernelBank(rng.standard_normal((1, 2, 3, 3)))
        observation = rng.standard_normal((6, 6, 1))
        problem = CscProblem(
            observation=observation,
            dictionary=dictionary,
            lam=0.1,
            step_size=0.05,
            iterations=4,
        )
        _, ista_trace = ista_solve(problem, record_trace=True)
        params, thetas = tied_block_for_problem(problem)
        _, block_trace = sfeb_forward(params, observation, theta_override=thetas)
        for za, zb in zip(ista_trace, block_trace):
            worst = max(worst, float(np.max(np.abs(za - zb))))
    return SuiteResult(
        name="unrolling equivalence",
        passed=worst <= tol,
        detail=f"worst trace deviation {worst:.3e} over {trials} dictionaries, tol {tol:.0e}",
    )


def run_grad_suite(seed: int = 0, tolerance: float = 1e-4) -> SuiteResult:
    cfg = ModelConfig(k_filters=4, kernel_size=3, iterations=2)
    report = grad_check(cfg, seed=seed, samples=60, tolerance=tolerance)
    return SuiteResult(
        name="gradient fidelity",
        passed=report.passed,
        detail=(
            f"max relative error {report.max_rel_error:.3e} over {report.checked} "
            f"parameters ({report.skipped} kink-skipped), tol {tolerance:.0e}"
        ),
    )


def run_all_suites() -> list[SuiteResult]:
    return [run_adjoint_suite(), run_unrolling_suite(), run_grad_suite()]
