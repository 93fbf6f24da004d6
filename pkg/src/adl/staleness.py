"""Staleness arithmetic and convergence-bound calculators.

Delay accounting uses exact integer / rational arithmetic (Python ints
and fractions.Fraction); floats appear only in the bound calculators.

Conventions: K modules, module index k in 1..K, accumulation factor
M >= 1, update index s >= 0 (update s+1 moves version s to s+1), and
within-group slot j in 0..M-1.  The gradient accumulated at slot j of
update s+1 in module k comes from data batch M*s + j - 2*(K-k); if that
is negative the slot was skipped during pipeline fill and contributes a
zero gradient.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError


def _check_int(name, v):
    if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
        raise DomainError(f"{name} must be an integer, got {v!r}")
    return int(v)


def _check_module_args(s, j, K, k, M):
    s = _check_int("s", s)
    j = _check_int("j", j)
    K = _check_int("K", K)
    k = _check_int("k", k)
    M = _check_int("M", M)
    if s < 0:
        raise DomainError(f"update index s must be >= 0, got {s}")
    if M < 1:
        raise DomainError(f"accumulation factor M must be >= 1, got {M}")
    if not 0 <= j < M:
        raise DomainError(f"slot j must lie in 0..M-1, got {j}")
    if K < 1 or not 1 <= k <= K:
        raise DomainError(f"module k must lie in 1..K, got k={k}, K={K}")
    return s, j, K, k, M


def level_of_staleness(t: int, d: int, M: int) -> int:
    """Number of parameter updates between batch t-d and batch t under
    wrapped indexing U_s = M*s: floor(t/M) - floor((t-d)/M)."""
    t = _check_int("t", t)
    d = _check_int("d", d)
    M = _check_int("M", M)
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if d < 0 or t < d:
        raise DomainError(f"need t >= d >= 0, got t={t}, d={d}")
    return t // M - (t - d) // M


def module_staleness(s: int, j: int, K: int, k: int, M: int) -> int:
    """Update-count staleness of the j-th gradient of update s+1 in module k:
    s - floor((M*s + j - 2*(K-k)) / M).  Clamped below at 0."""
    s, j, K, k, M = _check_module_args(s, j, K, k, M)
    d = s - (M * s + j - 2 * (K - k)) // M
    return max(0, d)


def steady_staleness(K: int, k: int, M: int, j: int) -> int:
    """Closed form of module_staleness once the pipeline is full:
    ceil((2*(K-k) - j) / M), never negative for valid j."""
    _, j, K, k, M = _check_module_args(0, j, K, k, M)
    return max(0, -((j - 2 * (K - k)) // M))


def effective_version(s: int, j: int, K: int, k: int, M: int) -> int:
    """Parameter version actually used by the j-th gradient of update s+1
    in module k: max(0, s - staleness)."""
    s, j, K, k, M = _check_module_args(s, j, K, k, M)
    return max(0, (M * s + j - 2 * (K - k)) // M)


def averaged_los(K: int, k: int, M: int) -> Fraction:
    """Average staleness over one accumulation group, exact rational:
    (1/M) * sum_j steady_staleness."""
    total = 0
    for j in range(_check_int("M", M)):
        total += steady_staleness(K, k, M, j)
    return Fraction(total, M)


def averaged_los_sum(K: int, M: int) -> Fraction:
    """sum_k averaged_los(K, k, M), the quantity the bounds depend on."""
    return sum((averaged_los(K, k, M) for k in range(1, K + 1)),
               Fraction(0))


def _check_pos(name, v):
    v = float(v)
    if not np.isfinite(v) or v <= 0.0:
        raise DomainError(f"{name} must be positive and finite, got {v}")
    return v


def _staleness_factor(M, dbar_sum) -> float:
    M = _check_int("M", M)
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    dbar_sum = float(dbar_sum)
    if dbar_sum < 0:
        raise DomainError(f"summed averaged staleness must be >= 0, got {dbar_sum}")
    return 1.0 + dbar_sum / M


def theorem1_rhs(lr: float, grad_norm_sq: float, A: float, L: float,
                 M: int, dbar_sum: float) -> float:
    """Per-update expected descent bound:
    -(lr/2)*||g||^2 + lr^2 * A * L * (1 + dbar_sum/M) / M.

    Negative return value certifies expected descent at this step.
    Requires L*lr <= 1.
    """
    lr = float(lr)
    if lr < 0:
        raise DomainError(f"learning rate must be >= 0, got {lr}")
    A = _check_pos("A", A)
    L = _check_pos("L", L)
    if float(grad_norm_sq) < 0:
        raise DomainError("grad_norm_sq must be >= 0")
    if L * lr > 1.0 + 1e-12:
        raise DomainError(f"requires L*lr <= 1, got {L * lr}")
    factor = _staleness_factor(M, dbar_sum)
    return -(lr / 2.0) * float(grad_norm_sq) + lr * lr * A * L * factor / M


def theorem2_rhs(lrs, gap: float, A: float, L: float,
                 M: int, dbar_sum: float) -> float:
    """Bound on the minimum expected squared gradient norm over S updates:
    2*gap/T + 2*A*L*(1 + dbar_sum/M) * sum(lr^2) / (M*T),  T = sum(lr).

    lrs is the whole learning-rate sequence (must be non-increasing with
    L*lrs[0] <= 1); gap is f(theta_0) - f*.
    """
    lrs = np.asarray(lrs, dtype=np.float64)
    if lrs.size == 0:
        raise DomainError("learning-rate sequence is empty")
    if np.any(lrs <= 0) or not np.all(np.isfinite(lrs)):
        raise DomainError("learning rates must be positive and finite")
    if np.any(np.diff(lrs) > 1e-15):
        raise DomainError("learning-rate sequence must be non-increasing")
    gap = _check_pos("gap", gap)
    A = _check_pos("A", A)
    L = _check_pos("L", L)
    if L * float(lrs[0]) > 1.0 + 1e-12:
        raise DomainError(f"requires L*lr_0 <= 1, got {L * float(lrs[0])}")
    factor = _staleness_factor(M, dbar_sum)
    M = int(M)
    T = float(np.sum(lrs))
    sumsq = float(np.sum(lrs * lrs))
    return 2.0 * gap / T + 2.0 * A * L * factor * sumsq / (M * T)


def theorem3_lr(epsilon: float, gap: float, S: int, A: float, L: float,
                M: int, dbar_sum: float) -> float:
    """Constant learning rate epsilon*sqrt(M*gap / (S*A*L*(1+dbar_sum/M))).

    Callers should check theorem3_lr_ok (L*lr <= 1) before trusting the
    matching bound; the rate itself is returned unconditionally.
    """
    epsilon = _check_pos("epsilon", epsilon)
    gap = _check_pos("gap", gap)
    S = _check_int("S", S)
    if S < 1:
        raise DomainError(f"S must be >= 1, got {S}")
    A = _check_pos("A", A)
    L = _check_pos("L", L)
    factor = _staleness_factor(M, dbar_sum)
    M = int(M)
    return epsilon * float(np.sqrt(M * gap / (S * A * L * factor)))


def theorem3_lr_ok(epsilon, gap, S, A, L, M, dbar_sum) -> bool:
    """True iff the theorem3 rate satisfies its own precondition L*lr <= 1."""
    return float(L) * theorem3_lr(epsilon, gap, S, A, L, M, dbar_sum) <= 1.0


def theorem3_bound(epsilon: float, gap: float, S: int, A: float, L: float,
                   M: int, dbar_sum: float) -> float:
    """min_s E||g||^2 bound at the theorem3 rate:
    ((2+2*eps^2)/eps) * sqrt(A*L*gap*(1+dbar_sum/M) / (M*S)).

    Decays as 1/sqrt(M*S); epsilon = 1 minimizes the leading factor.
    """
    epsilon = _check_pos("epsilon", epsilon)
    gap = _check_pos("gap", gap)
    S = _check_int("S", S)
    if S < 1:
        raise DomainError(f"S must be >= 1, got {S}")
    A = _check_pos("A", A)
    L = _check_pos("L", L)
    factor = _staleness_factor(M, dbar_sum)
    M = int(M)
    return (2.0 + 2.0 * epsilon * epsilon) / epsilon * float(
        np.sqrt(A * L * gap * factor / (M * S)))


@dataclass
class BoundInputs:
    """Bundle of problem constants for the bound calculators.

    A bounds the expected squared gradient norm, L is the smoothness
    constant, gap = f(theta_0) - f*.  dbar_sum defaults to the exact
    pipeline value for (K, M).
    """

    A: float
    L: float
    M: int
    K: int = None
    dbar_sum: float = None
    gap: float = None
    S: int = None
    epsilon: float = 1.0

    def __post_init__(self):
        if self.dbar_sum is None:
            if self.K is None:
                raise DomainError("need either dbar_sum or K")
            self.dbar_sum = float(averaged_los_sum(self.K, self.M))

    def theorem1(self, lr, grad_norm_sq):
        return theorem1_rhs(lr, grad_norm_sq, self.A, self.L, self.M,
                            self.dbar_sum)

    def theorem2(self, lrs):
        return theorem2_rhs(lrs, self.gap, self.A, self.L, self.M,
                            self.dbar_sum)

    def theorem3(self):
        lr = theorem3_lr(self.epsilon, self.gap, self.S, self.A, self.L,
                         self.M, self.dbar_sum)
        bound = theorem3_bound(self.epsilon, self.gap, self.S, self.A,
                               self.L, self.M, self.dbar_sum)
        return lr, bound, float(self.L) * lr <= 1.0


def estimate_grad_bound(grad_norms) -> float:
    """Empirical stand-in for A: max observed squared gradient norm.

    This is an estimate from one trajectory, not a proof-grade constant.
    """
    norms = np.asarray(grad_norms, dtype=np.float64)
    if norms.size == 0:
        raise DomainError("no gradient norms to estimate from")
    return float(np.max(norms * norms))


def estimate_lipschitz(params_seq, grads_seq) -> float:
    """Empirical stand-in for L: max secant slope ||dg|| / ||dtheta||
    along a recorded trajectory.  Estimate only; can undershoot the true
    smoothness constant badly on curved regions the trajectory misses.
    """
    if len(params_seq) != len(grads_seq):
        raise DomainError("parameter and gradient histories differ in length")
    if len(params_seq) < 2:
        raise DomainError("need at least two trajectory points")
    best = 0.0
    for i in range(len(params_seq) - 1):
        dtheta = np.asarray(params_seq[i + 1]) - np.asarray(params_seq[i])
        dgrad = np.asarray(grads_seq[i + 1]) - np.asarray(grads_seq[i])
        denom = float(np.linalg.norm(dtheta))
        if denom > 0.0:
            best = max(best, float(np.linalg.norm(dgrad)) / denom)
    return best
