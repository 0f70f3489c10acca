"""Differential-privacy accountant for the noisy-aggregate mechanisms.

All guarantees here are per communication round.  A client performing
tau' = tau - 1 local sample draws from a dataset of size D touches a
random subsample, which amplifies a base budget eps_tilde to

    eps = log(1 + p * (exp(eps_tilde) - 1)),    p = 1 - (1 - 1/D)^tau'.

For the Gaussian mechanism (aggregate noise sigma^2 / K per coordinate)
the relaxation delta is a binomial mixture over the number j of touched
copies of the standard Gaussian-mechanism tail term

    Phi(t'g/(sqrt(K) s) - sqrt(K) e s / (2 j t' g))
      - exp(e / j) * Phi(-t'g/(sqrt(K) s) - sqrt(K) e s / (2 j t' g)),

weighted by C(tau', j) (1/D)^j (1 - 1/D)^(tau'-j) (e^e - 1)/(e^(e/j) - 1).
The Laplace mechanism is pure eps-DP provided eps_tilde >= 2 tau' g / b.

Composition across rounds is intentionally out of scope; the accountant
reports per-round budgets only.  Evaluation is done in log space with
expm1/log1p-grade accuracy and the normal CDF from scipy.special (ndtr /
log_ndtr), which is deterministic and accurate well beyond the 1e-12
pinning used in the tests.
"""

from __future__ import annotations

import math

from scipy.special import log_ndtr, ndtr


class CalibrationError(RuntimeError):
    """Requested privacy target is unreachable for the given parameters."""


def _log_expm1(x: float) -> float:
    """log(exp(x) - 1) without overflow, x > 0."""
    if x <= 0.0:
        raise ValueError(f"argument must be positive, got {x}")
    if x > 36.0:  # exp(-x) below double epsilon
        return x
    return x + math.log1p(-math.exp(-x))


def subsampling_prob(dataset_size: int, local_steps: int) -> float:
    """Probability that a given record is touched: 1 - (1 - 1/D)^tau'."""
    if dataset_size < 1:
        raise ValueError(f"dataset size must be >= 1, got {dataset_size}")
    if local_steps < 1:
        raise ValueError(f"local step count must be >= 1, got {local_steps}")
    if dataset_size == 1:
        return 1.0
    return -math.expm1(local_steps * math.log1p(-1.0 / dataset_size))


def amplified_epsilon(epsilon_tilde: float, p: float) -> float:
    """Subsampling amplification log(1 + p*(e^eps - 1)), overflow-safe."""
    if epsilon_tilde < 0.0:
        raise ValueError(f"budget must be nonnegative, got {epsilon_tilde}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"subsampling probability must be in (0, 1], got {p}")
    if epsilon_tilde == 0.0:
        return 0.0
    if epsilon_tilde > 700.0:  # exp would overflow; use e = eps + ln p + log1p(...)
        return epsilon_tilde + math.log(p) + math.log1p((1.0 - p) * math.exp(-epsilon_tilde) / p)
    return math.log1p(p * math.expm1(epsilon_tilde))


def inverse_amplified_epsilon(epsilon: float, p: float) -> float:
    """The base budget whose amplification equals ``epsilon``."""
    if epsilon <= 0.0:
        raise ValueError(f"target epsilon must be positive, got {epsilon}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"subsampling probability must be in (0, 1], got {p}")
    if epsilon > 700.0:
        return epsilon - math.log(p) + math.log1p((p - 1.0) * math.exp(-epsilon))
    return math.log1p(math.expm1(epsilon) / p)


def gaussian_delta(
    epsilon_tilde: float,
    local_steps: int,
    clip_radius: float,
    clients: int,
    sigma: float,
    dataset_size: int,
) -> float:
    """Per-round delta of the subsampled Gaussian aggregate, clamped to [0, 1]."""
    if epsilon_tilde <= 0.0:
        raise ValueError(f"base budget must be positive, got {epsilon_tilde}")
    if min(local_steps, clients, dataset_size) < 1 or clip_radius <= 0.0 or sigma <= 0.0:
        raise ValueError("all accountant parameters must be positive")

    log_q = -math.log(dataset_size)           # log(1/D)
    log_1mq = math.log1p(-1.0 / dataset_size) if dataset_size > 1 else -math.inf
    sqrt_k = math.sqrt(clients)
    shift = local_steps * clip_radius / (sqrt_k * sigma)
    log_num = _log_expm1(epsilon_tilde)

    total = 0.0
    for j in range(1, local_steps + 1):
        log_binom = (
            math.lgamma(local_steps + 1) - math.lgamma(j + 1) - math.lgamma(local_steps - j + 1)
        )
        tail = local_steps - j
        log_weight = log_binom + j * log_q + (tail * log_1mq if tail else 0.0)
        log_ratio = log_num - _log_expm1(epsilon_tilde / j)

        drift = sqrt_k * epsilon_tilde * sigma / (2.0 * j * local_steps * clip_radius)
        upper = float(ndtr(shift - drift))
        lower = math.exp(epsilon_tilde / j + float(log_ndtr(-shift - drift)))
        bracket = max(upper - lower, 0.0)
        total += math.exp(log_weight + log_ratio) * bracket

    return min(max(total, 0.0), 1.0)


def laplace_min_budget(local_steps: int, clip_radius: float, b: float) -> float:
    """Smallest base budget for which the Laplace aggregate is pure-DP."""
    if b <= 0.0:
        raise ValueError(f"scale b must be positive, got {b}")
    if clip_radius < 0.0:
        raise ValueError(f"clip radius must be nonnegative, got {clip_radius}")
    return 2.0 * local_steps * clip_radius / b


def calibrate_noise(
    epsilon: float,
    delta: float,
    local_steps: int,
    clip_radius: float,
    clients: int,
    dataset_size: int,
    family: str,
    rel_tol: float = 1e-6,
) -> dict:
    """Invert the accountant: smallest noise meeting a target budget.

    Gaussian: bisects sigma until gaussian_delta <= delta (delta is
    decreasing in sigma).  Laplace: closed form b = 2 tau' gamma / eps_tilde.
    Returns the noise level together with the intermediate quantities.
    """
    p = subsampling_prob(dataset_size, local_steps)
    eps_tilde = inverse_amplified_epsilon(epsilon, p)

    if family == "laplace":
        if eps_tilde <= 0.0:
            raise CalibrationError("target epsilon too small for a positive base budget")
        b = 2.0 * local_steps * clip_radius / eps_tilde
        return {"family": "laplace", "b": b, "epsilon_tilde": eps_tilde, "p": p, "delta": 0.0}

    if family != "gaussian":
        raise ValueError(f"unknown family {family!r}")
    if not (0.0 < delta < 1.0):
        raise CalibrationError(f"gaussian calibration needs delta in (0, 1), got {delta}")

    def delta_at(sigma: float) -> float:
        return gaussian_delta(eps_tilde, local_steps, clip_radius, clients, sigma, dataset_size)

    lo = hi = 1e-6
    for _ in range(120):
        if delta_at(hi) <= delta:
            break
        lo = hi
        hi *= 2.0
    else:
        raise CalibrationError("delta target unreachable even with enormous noise")
    if delta_at(lo) <= delta:
        hi = lo  # already feasible at the smallest probe

    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if delta_at(mid) <= delta:
            hi = mid
        else:
            lo = mid
    return {
        "family": "gaussian",
        "sigma": hi,
        "epsilon_tilde": eps_tilde,
        "p": p,
        "delta": delta_at(hi),
    }
