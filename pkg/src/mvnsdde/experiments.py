"""Convergence, chaos, moment, and taming studies with coupled noise.

The exact solution is unobservable, so every study compares against a proxy
on the *same* Brownian path: the step-size study coarsens one fine grid of
increments, the particle study shares per-particle streams between runs of
different sizes (stream derivation is keyed by absolute particle id, so the
smaller system is a prefix of the larger), and the moment study couples its
runs the same way so the monitored bound is compared across step sizes on
one path.  Errors are root mean squares across the particles of a single
coupled run; the reported standard error comes from the particle-wise
squared-error sample variance (particles are exchangeable but weakly
correlated through the measure, which the reports state).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateFitError
from .measure import (
    DEFAULT_ASSIGNMENT_CAP,
    EmpiricalMeasure,
    w2_assignment,
    w2sq_to_standard_normal_1d,
)
from .model import ModelSpec, SchemeParams, cubic_no_mf
from .noise import derived_generator, generate
from .scheme import ParticleGrid, simulate, simulate_terminal

_RATE_TAG = 0x3A7E  # auxiliary stream namespace for sampling experiments

D5_PROXY_NOTE = (
    "dim-5 values are mean squared assignment distances between two "
    "independent samples of equal size; by the triangle inequality this "
    "proxy dominates the one-sample distance to the sampled law up to a "
    "factor of 2"
)


@dataclass(frozen=True)
class ErrorRow:
    resolution: float
    rms_error: float
    stderr: float
    samples: int


@dataclass
class ErrorTable:
    """Rows of (resolution, rms error, Monte Carlo stderr, sample count)."""

    rows: list[ErrorRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def resolutions(self) -> np.ndarray:
        return np.array([r.resolution for r in self.rows])

    def errors(self) -> np.ndarray:
        return np.array([r.rms_error for r in self.rows])

    def stderrs(self) -> np.ndarray:
        return np.array([r.stderr for r in self.rows])

    def nonzero(self) -> "ErrorTable":
        """Table with exact-zero rows (self-comparisons) dropped."""
        return ErrorTable([r for r in self.rows if r.rms_error > 0.0])

    def csv_text(self) -> str:
        lines = ["resolution,rms_error,stderr,samples"]
        for r in self.rows:
            lines.append(
                f"{r.resolution:.17g},{r.rms_error:.17g},"
                f"{r.stderr:.17g},{r.samples}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())


def fit_loglog_slope(table: ErrorTable) -> tuple[float, float]:
    """Least squares of log2(rms_error) against log2(resolution).

    Zero-error rows make the fit meaningless; callers drop self-comparison
    rows first (:meth:`ErrorTable.nonzero`).
    """
    if len(table) < 2:
        raise DegenerateFitError(
            f"slope fit needs at least 2 rows, got {len(table)}"
        )
    if any(r.rms_error <= 0.0 for r in table.rows):
        raise DegenerateFitError(
            "slope fit on a zero error row; drop self-comparison rows first"
        )
    slope, intercept = np.polyfit(
        np.log2(table.resolutions()), np.log2(table.errors()), 1
    )
    return float(slope), float(intercept)


def _row_from_sq_errors(resolution, e2: np.ndarray) -> ErrorRow:
    mse = float(e2.mean())
    rms = float(np.sqrt(mse))
    if rms > 0.0 and e2.size > 1:
        stderr = float(e2.std(ddof=1) / np.sqrt(e2.size) / (2.0 * rms))
    else:
        stderr = 0.0
    return ErrorRow(
        resolution=float(resolution),
        rms_error=rms,
        stderr=stderr,
        samples=int(e2.size),
    )


def _replicate_seeds(seed: int, replicates: int) -> list[int]:
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    return [(int(seed) + r) % 2**64 for r in range(replicates)]


def _power_of_two_factor(coarse: float, fine: float, what: str) -> int:
    ratio = coarse / fine
    factor = int(round(ratio))
    if (
        factor < 1
        or abs(ratio - factor) > 1e-9 * factor
        or factor & (factor - 1)
    ):
        raise ConfigError(
            f"{what} = {coarse!r} is not a power-of-two multiple of {fine!r}"
        )
    return factor


def strong_error_vs_dt(
    model: ModelSpec,
    particles: int,
    delta_ref: float,
    deltas: list[float],
    tau: float,
    alpha: float,
    horizon: float,
    seed: int,
    taming: bool = True,
    replicates: int = 1,
) -> ErrorTable:
    """Coupled strong error at the horizon as a function of the step size.

    One increment grid is generated at ``delta_ref``; the reference run uses
    it directly and every test step size consumes the block-summed
    coarsening of the same grid, so all runs share one Brownian path.  Each
    test step must be a power-of-two multiple of the reference step.

    ``replicates`` repeats the whole coupled study on independent master
    seeds (seed, seed + 1, ...) and pools the particle-wise squared errors,
    for sensitivity checks of the single-run estimate.
    """
    deltas = sorted(float(d) for d in deltas)
    factors = [
        _power_of_two_factor(d, delta_ref, "test step") for d in deltas
    ]
    sq_errors: list[list[np.ndarray]] = [[] for _ in deltas]
    for run_seed in _replicate_seeds(seed, replicates):
        base_params = SchemeParams(
            delta=delta_ref,
            tau=tau,
            alpha=alpha,
            particles=particles,
            horizon=horizon,
            seed=run_seed,
            taming_enabled=taming,
        )
        base_noise = generate(
            run_seed, particles, model.bm_dim, delta_ref, horizon
        )
        ref = simulate_terminal(model, base_params, base_noise).terminal
        for i, (delta, factor) in enumerate(zip(deltas, factors)):
            params = replace(base_params, delta=delta)
            noise = base_noise.coarsen(factor)
            term = simulate_terminal(model, params, noise).terminal
            sq_errors[i].append(np.sum((ref - term) ** 2, axis=1))
            del noise
        del base_noise
    return ErrorTable(
        [
            _row_from_sq_errors(delta, np.concatenate(e2s))
            for delta, e2s in zip(deltas, sq_errors)
        ]
    )


def chaos_error_vs_particles(
    model: ModelSpec,
    xis: list[int],
    delta: float,
    tau: float,
    alpha: float,
    horizon: float,
    seed: int,
    taming: bool = True,
    replicates: int = 1,
) -> ErrorTable:
    """Coupled error between systems of different sizes at the horizon.

    The largest size is the reference; smaller systems reuse the leading
    per-particle streams and initial segments, so particle a sees identical
    noise in every run and the only difference is the empirical measure it
    interacts with.  Measure-independent models therefore give exact zeros.
    ``replicates`` pools independent master seeds as in the step-size study.
    """
    xis = [int(x) for x in xis]
    if any(b <= a for a, b in zip(xis, xis[1:])) or len(xis) < 1:
        raise ConfigError(f"particle counts must be strictly increasing: {xis}")
    xi_max = xis[-1]
    sq_errors: list[list[np.ndarray]] = [[] for _ in xis]
    for run_seed in _replicate_seeds(seed, replicates):
        params_max = SchemeParams(
            delta=delta,
            tau=tau,
            alpha=alpha,
            particles=xi_max,
            horizon=horizon,
            seed=run_seed,
            taming_enabled=taming,
        )
        noise_max = generate(run_seed, xi_max, model.bm_dim, delta, horizon)
        ref = simulate_terminal(model, params_max, noise_max).terminal
        for i, xi in enumerate(xis):
            if xi == xi_max:
                sq_errors[i].append(np.zeros(xi))
                continue
            params = replace(params_max, particles=xi)
            term = simulate_terminal(
                model, params, noise_max.restrict(xi)
            ).terminal
            sq_errors[i].append(np.sum((ref[:xi] - term) ** 2, axis=1))
        del noise_max
    return ErrorTable(
        [
            _row_from_sq_errors(xi, np.concatenate(e2s))
            for xi, e2s in zip(xis, sq_errors)
        ]
    )


@dataclass(frozen=True)
class MomentMonitor:
    value: float
    argmax_index: int


def moment_monitor(grid: ParticleGrid, p: int) -> MomentMonitor:
    """Largest sample p-th moment of the state norm over the whole grid.

    Returns the maximum of (1/particles) * sum_a |U_n^a|^p over grid indices
    n (initial-segment rows included) and where it occurs.  Intended for
    even integer p >= 2.
    """
    norms = np.linalg.norm(grid.states, axis=2)
    moments = np.mean(norms**p, axis=1)
    row = int(np.argmax(moments))
    return MomentMonitor(
        value=float(moments[row]), argmax_index=row - grid.delay_steps
    )


def moment_bound_vs_dt(
    model: ModelSpec,
    particles: int,
    deltas: list[float],
    tau: float,
    alpha: float,
    horizon: float,
    seed: int,
    p: int = 4,
    taming: bool = True,
) -> list[tuple[float, float, int]]:
    """Moment monitor across step sizes on one coupled Brownian path.

    Couples the runs exactly like the strong-error study (finest step is the
    base grid); the sample p-th moment is heavy-tailed, so independent paths
    per step would swamp the step-size dependence the bound is about.
    Returns (delta, monitor value, argmax grid index) per step size.
    """
    deltas = sorted(float(d) for d in deltas)
    finest = deltas[0]
    factors = [_power_of_two_factor(d, finest, "step") for d in deltas]
    base_noise = generate(seed, particles, model.bm_dim, finest, horizon)
    out = []
    for d, factor in zip(deltas, factors):
        params = SchemeParams(
            delta=d,
            tau=tau,
            alpha=alpha,
            particles=particles,
            horizon=horizon,
            seed=seed,
            taming_enabled=taming,
        )
        grid = simulate(model, params, base_noise.coarsen(factor))
        mon = moment_monitor(grid, p)
        out.append((d, mon.value, mon.argmax_index))
        del grid
    return out


@dataclass(frozen=True)
class TamingReport:
    """Paired tamed/untamed run summary on identical noise."""

    tamed_max_moment: float
    tamed_argmax_index: int
    untamed_divergence_fraction: float
    untamed_diverged_count: int
    first_divergence_step: int | None
    particles: int
    divergence_threshold: float

    def as_dict(self) -> dict:
        return {
            "tamed_max_moment": self.tamed_max_moment,
            "tamed_argmax_index": self.tamed_argmax_index,
            "untamed_divergence_fraction": self.untamed_divergence_fraction,
            "untamed_diverged_count": self.untamed_diverged_count,
            "first_divergence_step": self.first_divergence_step,
            "particles": self.particles,
            "divergence_threshold": self.divergence_threshold,
        }


def taming_comparison(
    x0: float,
    delta_coarse: float,
    particles: int,
    tau: float,
    horizon: float,
    seed: int,
    alpha: float = 0.5,
    divergence_threshold: float = 1e10,
) -> TamingReport:
    """Tamed vs untamed runs of the cubic model from a constant segment.

    Both runs consume identical increments.  The tamed run reports its p=2
    moment monitor; the untamed run reports the fraction of particles whose
    state ever exceeds the threshold or goes non-finite before the horizon
    (the measured event, not an error).  Meant for coarse steps 1/4 or 1/8
    and |x0| >= 3; smaller starting points stay subcritical.
    """
    model = cubic_no_mf(x0=x0)
    params = SchemeParams(
        delta=delta_coarse,
        tau=tau,
        alpha=alpha,
        particles=particles,
        horizon=horizon,
        seed=seed,
        taming_enabled=True,
    )
    noise = generate(seed, particles, model.bm_dim, delta_coarse, horizon)

    tamed_grid = simulate(model, params, noise)
    tamed = moment_monitor(tamed_grid, p=2)

    untamed = simulate_terminal(
        model,
        replace(params, taming_enabled=False),
        noise,
        track_divergence=True,
        divergence_threshold=divergence_threshold,
    )
    assert untamed.diverged is not None
    return TamingReport(
        tamed_max_moment=tamed.value,
        tamed_argmax_index=tamed.argmax_index,
        untamed_divergence_fraction=untamed.divergence_fraction,
        untamed_diverged_count=int(untamed.diverged.sum()),
        first_divergence_step=untamed.first_divergence_step,
        particles=particles,
        divergence_threshold=divergence_threshold,
    )


def empirical_measure_rate(
    dim: int,
    xis: list[int],
    mc_reps: int,
    seed: int,
    assignment_cap: int = DEFAULT_ASSIGNMENT_CAP,
) -> ErrorTable:
    """Mean squared W2 distance of standard normal samples vs sample size.

    dim = 1 integrates each sorted sample against the exact N(0,1) quantile
    function; dim = 5 uses the two-independent-samples assignment proxy (see
    ``D5_PROXY_NOTE``).  The rms_error column holds the mean squared
    distance; stderr is its Monte Carlo standard error over the repetitions.
    """
    if dim not in (1, 5):
        raise ConfigError(f"supported dims are 1 and 5, got {dim}")
    xis = sorted(int(x) for x in xis)
    if any(b <= a for a, b in zip(xis, xis[1:])):
        raise ConfigError(f"sample sizes must be distinct: {xis}")
    rng = derived_generator(seed, _RATE_TAG + dim)
    rows = []
    if mc_reps <= 0:
        return ErrorTable([])
    for xi in xis:
        vals = np.empty(mc_reps)
        for r in range(mc_reps):
            if dim == 1:
                mu = EmpiricalMeasure(rng.standard_normal(xi))
                vals[r] = w2sq_to_standard_normal_1d(mu)
            else:
                mu = EmpiricalMeasure(rng.standard_normal((xi, dim)))
                nu = EmpiricalMeasure(rng.standard_normal((xi, dim)))
                vals[r] = w2_assignment(mu, nu, assignment_cap) ** 2
        mean = float(vals.mean())
        stderr = (
            float(vals.std(ddof=1) / np.sqrt(mc_reps)) if mc_reps > 1 else 0.0
        )
        rows.append(
            ErrorRow(
                resolution=float(xi),
                rms_error=mean,
                stderr=stderr,
                samples=mc_reps,
            )
        )
    return ErrorTable(rows)


@dataclass
class ExperimentReport:
    """Config echo, error table, slope fit, and runtime of one experiment."""

    name: str
    config: dict
    table: ErrorTable
    slope: float | None
    intercept: float | None
    runtime_seconds: float
    reference_slope: float = 0.5
    notes: dict = field(default_factory=dict)

    def summary_dict(self) -> dict:
        return {
            "experiment": self.name,
            "config": self.config,
            "slope": self.slope,
            "intercept": self.intercept,
            "runtime_seconds": self.runtime_seconds,
            "notes": self.notes,
        }

    def gnuplot_text(self) -> str:
        s = self.reference_slope
        lines = [
            f"# log-log plot for {self.name} with a slope-1/2 reference line",
            "set datafile separator ','",
            "set logscale xy 2",
            "set key left top",
            "set xlabel 'resolution'",
            "set ylabel 'rms error'",
        ]
        anchor = self.table.nonzero()
        plot = (
            f"plot '{self.name}.csv' skip 1 using 1:2 with linespoints "
            "pointtype 7 title 'measured'"
        )
        if len(anchor) > 0:
            r = anchor.rows[-1]
            c = r.rms_error / r.resolution**s
            lines.append(f"ref(x) = {c:.17g} * x**({s})")
            plot += (
                ", ref(x) with lines dashtype 2 title "
                f"'slope {s} reference'"
            )
        lines.append(plot)
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> None:
        """Emit <name>.csv, <name>.summary.json, and <name>.gp."""
        base = f"{outdir}/{self.name}"
        self.table.write_csv(base + ".csv")
        with open(base + ".summary.json", "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(base + ".gp", "w") as fh:
            fh.write(self.gnuplot_text())


def build_report(
    name: str,
    config: dict,
    table: ErrorTable,
    runtime_seconds: float,
    reference_slope: float = 0.5,
    notes: dict | None = None,
) -> ExperimentReport:
    """Assemble a report; the slope is fit on the positive-error rows."""
    usable = table.nonzero()
    try:
        slope, intercept = fit_loglog_slope(usable)
    except DegenerateFitError:
        slope, intercept = None, None
    return ExperimentReport(
        name=name,
        config=config,
        table=table,
        slope=slope,
        intercept=intercept,
        runtime_seconds=runtime_seconds,
        reference_slope=reference_slope,
        notes=notes or {},
    )


class Stopwatch:
    """Minimal wall-clock timer for experiment reports."""

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._t0
        return False
