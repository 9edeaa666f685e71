"""Coefficient interface, built-in models, and structural validation.

A model bundles the neutral map, drift, diffusion, and initial segment of a
mean-field neutral delay equation together with the two constants the
validation layer needs: the contraction modulus of the neutral map and the
polynomial growth power of the drift.  Coefficient callbacks are vectorized:
state arguments arrive as (batch, state_dim) arrays, the diffusion returns
(batch, state_dim, bm_dim), and the measure argument is a shared
:class:`~mvnsdde.measure.EmpiricalMeasure` whose functionals (currently the
mean) are cached per step.  Callbacks must be pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .measure import EmpiricalMeasure
from .noise import derived_generator

_PROBE_TAG = 0xA55E55  # validation probe stream, disjoint from particle keys
_PROBE_PAIRS = 1000
_PROBE_BOX = 10.0
_PROBE_SLACK = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients and metadata of one equation."""

    name: str
    state_dim: int
    bm_dim: int
    neutral: Callable[[np.ndarray], np.ndarray]
    drift: Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
    diffusion: Callable[[np.ndarray, np.ndarray, EmpiricalMeasure], np.ndarray]
    initial_segment: Callable[[float], np.ndarray]
    contraction: float
    growth_power: float
    lipschitz_constants: dict[str, float] | None = None


@dataclass(frozen=True)
class SchemeParams:
    """Time grid, particle count, and scheme switches for one run.

    ``delay_steps`` and ``total_steps`` are rounded ratios; ``validate``
    reports when the ratios are not integers.
    """

    delta: float
    tau: float
    alpha: float
    particles: int
    horizon: float
    seed: int
    taming_enabled: bool = True
    moment_order_p: int = 12

    @property
    def delay_steps(self) -> int:
        return int(round(self.tau / self.delta))

    @property
    def total_steps(self) -> int:
        return int(round(self.horizon / self.delta))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(f"violation: {v}" for v in self.violations)


def _is_integer_ratio(num: float, den: float) -> bool:
    ratio = num / den
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


def validate(
    model: ModelSpec, params: SchemeParams, q: float = 2.0
) -> ValidationReport:
    """Report every violated structural condition; never raises.

    Covers the contraction modulus, the neutral map probes (zero at zero,
    contractivity on random pairs), grid integrality (tau/delta and
    horizon/delta), the step/exponent ranges, and the error-exponent window
    q <= p / (2 (c + 1)) for the requested q.
    """
    report = ValidationReport()
    v = report.violations

    lam = model.contraction
    if not 0.0 < lam < 1.0:
        v.append(f"contraction modulus must lie in (0, 1), got {lam}")
    if model.growth_power < 0:
        v.append(f"growth power must be >= 0, got {model.growth_power}")

    zero = np.zeros((1, model.state_dim))
    try:
        d0 = np.asarray(model.neutral(zero))
        if not np.allclose(d0, 0.0, atol=1e-12):
            v.append(f"neutral map at zero is {d0.ravel()}, expected 0")
    except Exception as exc:  # report, do not crash the validator
        v.append(f"neutral map failed at zero: {exc!r}")

    if 0 <= params.seed < 2**64:
        rng = derived_generator(params.seed, _PROBE_TAG)
        y1 = rng.uniform(-_PROBE_BOX, _PROBE_BOX, (_PROBE_PAIRS, model.state_dim))
        y2 = rng.uniform(-_PROBE_BOX, _PROBE_BOX, (_PROBE_PAIRS, model.state_dim))
        try:
            gap = np.linalg.norm(model.neutral(y1) - model.neutral(y2), axis=1)
            bound = lam * np.linalg.norm(y1 - y2, axis=1) + _PROBE_SLACK
            bad = int(np.sum(gap > bound))
            if bad:
                v.append(
                    f"neutral map violates the stated contraction modulus "
                    f"{lam} on {bad}/{_PROBE_PAIRS} probe pairs"
                )
        except Exception as exc:
            v.append(f"neutral map probe failed: {exc!r}")
    else:
        v.append(f"seed must be a 64-bit unsigned integer, got {params.seed}")

    if params.tau <= 0:
        v.append(f"tau must be positive, got {params.tau}")
    if not 0.0 < params.delta < min(1.0, params.tau):
        v.append(
            f"delta must lie in (0, min(1, tau)) = "
            f"(0, {min(1.0, params.tau)}), got {params.delta}"
        )
    if params.delta > 0 and params.tau > 0 and not _is_integer_ratio(
        params.tau, params.delta
    ):
        v.append(f"tau/delta = {params.tau / params.delta!r} is not an integer")
    if not 0.0 < params.alpha <= 0.5:
        v.append(f"alpha must lie in (0, 1/2], got {params.alpha}")
    if params.particles < 1:
        v.append(f"particles must be >= 1, got {params.particles}")
    if params.horizon <= 0:
        v.append(f"horizon must be positive, got {params.horizon}")
    elif params.delta > 0 and not _is_integer_ratio(params.horizon, params.delta):
        v.append(
            f"horizon/delta = {params.horizon / params.delta!r} is not an integer"
        )

    p = params.moment_order_p
    q_max = p / (2.0 * (model.growth_power + 1.0))
    if q < 2.0:
        v.append(f"error exponent q must be >= 2, got {q}")
    elif q > q_max:
        v.append(
            f"error exponent q = {q} exceeds p/(2(c+1)) = {q_max:.6g} "
            f"(p = {p}, c = {model.growth_power})"
        )

    if params.delta > 0 and params.tau > 0:
        n0 = params.delay_steps
        try:
            for n in range(-n0, 1):
                val = np.asarray(model.initial_segment(n * params.delta))
                if val.shape != (model.state_dim,):
                    v.append(
                        f"initial segment at t = {n * params.delta} has shape "
                        f"{val.shape}, expected ({model.state_dim},)"
                    )
                    break
        except Exception as exc:
            v.append(f"initial segment not evaluable on [-tau, 0]: {exc!r}")

    return report


def example51(beta: float = 0.5) -> ModelSpec:
    """Scalar cubic mean-field model with neutral delay coupling.

    Differences the combination state + beta * delayed state; the drift adds
    the mean of the current law to a dissipative cubic, and the diffusion is
    linear in the current and delayed state.  The initial segment is the
    identity path t -> t.  Spells out the standing assumptions with
    contraction beta and cubic growth (power 2).
    """
    beta3 = beta**3

    def neutral(y):
        return -beta * y

    def drift(x, y, mu):
        return x - x * x * x + beta * y - beta3 * (y * y * y) + mu.mean

    def diffusion(x, y, mu):
        return (x + beta * y)[..., None]

    def segment(t):
        return np.array([t])

    return ModelSpec(
        name="example51",
        state_dim=1,
        bm_dim=1,
        neutral=neutral,
        drift=drift,
        diffusion=diffusion,
        initial_segment=segment,
        contraction=beta,
        growth_power=2.0,
    )


def linear_meanfield(
    a_coef: float = -1.0,
    b_coef: float = 0.5,
    sigma0: float = 0.2,
    x0: float = 1.0,
) -> ModelSpec:
    """Linear model with additive noise and a closed-form mean.

    No neutral term, the delay argument is ignored, and the mean satisfies
    m'(t) = (a_coef + b_coef) m(t) with m(0) = x0, giving the analytic
    oracle ``linear_meanfield_mean``.
    """

    def neutral(y):
        return np.zeros_like(y)

    def drift(x, y, mu):
        return a_coef * x + b_coef * mu.mean

    def diffusion(x, y, mu):
        return np.full(x.shape + (1,), sigma0)

    def segment(t):
        return np.array([x0])

    return ModelSpec(
        name="linear_meanfield",
        state_dim=1,
        bm_dim=1,
        neutral=neutral,
        drift=drift,
        diffusion=diffusion,
        initial_segment=segment,
        contraction=0.5,
        growth_power=0.0,
    )


def linear_meanfield_mean(
    t: float, a_coef: float = -1.0, b_coef: float = 0.5, x0: float = 1.0
) -> float:
    """Exact mean m(t) = x0 * exp((a_coef + b_coef) t) of the linear model."""
    return x0 * float(np.exp((a_coef + b_coef) * t))


def cubic_no_mf(x0: float = 0.0, beta: float = 0.5) -> ModelSpec:
    """Cubic model without the mean term, from a constant initial segment.

    Particles never interact, which makes it the control case for chaos
    studies and the drift for taming demonstrations: from |x0| >= 3 the
    untamed update overshoots super-exponentially at coarse steps.
    """
    beta3 = beta**3

    def neutral(y):
        return -beta * y

    def drift(x, y, mu):
        return x - x * x * x + beta * y - beta3 * (y * y * y)

    def diffusion(x, y, mu):
        return (x + beta * y)[..., None]

    def segment(t):
        return np.array([x0])

    return ModelSpec(
        name="cubic_no_mf",
        state_dim=1,
        bm_dim=1,
        neutral=neutral,
        drift=drift,
        diffusion=diffusion,
        initial_segment=segment,
        contraction=beta,
        growth_power=2.0,
    )


MODEL_NAMES = ("example51", "linear_meanfield", "cubic_no_mf")


def build_model(
    name: str,
    a_coef: float = -1.0,
    b_coef: float = 0.5,
    sigma0: float = 0.2,
    x0: float = 0.0,
) -> ModelSpec:
    """Construct a built-in model by CLI name."""
    if name == "example51":
        return example51()
    if name == "linear_meanfield":
        return linear_meanfield(a_coef=a_coef, b_coef=b_coef, sigma0=sigma0, x0=x0)
    if name == "cubic_no_mf":
        return cubic_no_mf(x0=x0)
    raise ConfigError(
        f"unknown model {name!r}; valid models: {', '.join(MODEL_NAMES)}"
    )
