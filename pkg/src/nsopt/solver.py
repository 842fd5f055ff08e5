"""Spectral projected subgradient loop with optional nonmonotone line search.

One iteration, starting from a feasible ``x`` with spectral coefficient
``zeta`` and sample size ``n`` (1-based counter ``k``):

1. pick a subgradient ``g`` of the sample-average objective (descent-preferring
   when the problem supports it) and set the direction ``p = -zeta * g``;
2. pick the step size ``alpha``: either the predefined ``1/k`` or the
   two-candidate nonmonotone Armijo search over ``{d_k, (d_k + 1/k)/2}`` with
   fallback ``1/k``, where ``d_k = min(1, c2/k)``;
3. project ``x + alpha * p`` onto the feasible region;
4. grow the sample size along the geometric schedule;
5. update ``zeta`` from the safeguarded ratio ``s.s / s.y`` of consecutive
   displacement and subgradient differences.

Every charged oracle call costs one FEV unit per index in its index set; runs
terminate on an FEV budget or an iteration cap.  Traces record one row per
iterate and serialize to CSV and JSON.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from .model import (
    FeasibleRegion,
    Problem,
    SampleSchedule,
    SpectralBounds,
    StepSchedule,
    Vector,
    as_vector,
    nested_index_set,
)

SCHEMA = "nsopt/1"

PREDEFINED = "predefined"
LINE_SEARCH = "line-search"
STEP_MODES = (PREDEFINED, LINE_SEARCH)

SAME_SAMPLE = "same-sample"
CROSS_SAMPLE = "cross-sample"
NEXT_SAMPLE = "next-sample"
Y_POLICIES = (SAME_SAMPLE, CROSS_SAMPLE, NEXT_SAMPLE)


class BudgetExhausted(RuntimeError):
    """Raised inside a step when a charge would exceed the FEV budget."""


@dataclass(frozen=True)
class SolverConfig:
    """All solver tunables; validated at construction.

    ``sample_start_fraction=None`` means the full sample is used from the
    first iteration; otherwise the sample starts at ``ceil(fraction * N)``
    rows and grows by ``sample_growth`` per iteration until it reaches ``N``.
    """

    c1: float = 1e-2
    c2: float = 1e2
    zeta_lo: float = 1e-4
    zeta_hi: float = 1e4
    zeta_init: float = 1.0
    step_mode: str = PREDEFINED
    eta: float = 1e-4
    window: int = 5
    y_policy: str = SAME_SAMPLE
    sample_start_fraction: float | None = None
    sample_growth: float = 1.1
    descent_margin: float = 1e-8
    kink_tol: float = 1e-12
    normalize_directions: bool = False
    track_true: bool = True
    max_iters: int | None = 1_000_000
    seed: int = 0

    def __post_init__(self):
        StepSchedule(self.c1, self.c2)
        bounds = SpectralBounds(self.zeta_lo, self.zeta_hi)
        if not (bounds.zeta_lo <= self.zeta_init <= bounds.zeta_hi):
            raise ValueError(f"zeta_init={self.zeta_init} outside [{self.zeta_lo}, {self.zeta_hi}]")
        if self.step_mode not in STEP_MODES:
            raise ValueError(f"step_mode must be one of {STEP_MODES}, got {self.step_mode!r}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.y_policy not in Y_POLICIES:
            raise ValueError(f"y_policy must be one of {Y_POLICIES}, got {self.y_policy!r}")
        if self.sample_start_fraction is not None and not (0.0 < self.sample_start_fraction <= 1.0):
            raise ValueError(f"sample_start_fraction must lie in (0, 1], got {self.sample_start_fraction}")
        if self.sample_growth < 1.0:
            raise ValueError(f"sample_growth must be >= 1, got {self.sample_growth}")
        if self.descent_margin <= 0:
            raise ValueError(f"descent_margin must be > 0, got {self.descent_margin}")
        if self.kink_tol <= 0:
            raise ValueError(f"kink_tol must be > 0, got {self.kink_tol}")
        if self.max_iters is not None and self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")

    @property
    def step_schedule(self) -> StepSchedule:
        return StepSchedule(self.c1, self.c2)

    @property
    def spectral_bounds(self) -> SpectralBounds:
        return SpectralBounds(self.zeta_lo, self.zeta_hi)

    def sample_schedule(self, ground_size: int) -> SampleSchedule:
        if self.sample_start_fraction is None:
            return SampleSchedule.full(ground_size)
        return SampleSchedule.fraction(ground_size, self.sample_start_fraction, self.sample_growth)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **kwargs) -> "SolverConfig":
        return replace(self, **kwargs)


def spectral_update(s: Vector, y: Vector, bounds: SpectralBounds, zeta_prev: float) -> float:
    """Safeguarded spectral coefficient ``min(hi, max(lo, s.s / s.y))``.

    Degenerate cases: a zero displacement carries no curvature information and
    retains ``zeta_prev``; nonpositive or non-finite curvature ``s.y`` clamps
    to the lower safeguard.  The result always lies inside ``bounds``.
    """
    with np.errstate(over="ignore"):
        ss = float(s @ s)
        if ss == 0.0:
            return bounds.clamp(zeta_prev)
        sy = float(s @ y)
    if sy <= 0.0:
        return bounds.zeta_lo
    ratio = ss / sy
    if not math.isfinite(ratio):
        return bounds.zeta_lo
    return bounds.clamp(ratio)


def nonmonotone_reference(history: Sequence[float], c: int) -> float:
    """Maximum of the last ``min(c, len(history))`` sample-average values."""
    if len(history) == 0:
        raise ValueError("value history is empty")
    if c < 1:
        raise ValueError(f"window must be >= 1, got {c}")
    window = list(history)[-c:]
    return max(window)


def armijo_accepts_norm(f_trial: float, reference: float, eta: float, alpha: float, p_norm_sq: float) -> bool:
    """Nonmonotone Armijo test ``f_trial <= reference - eta * alpha * ||p||^2``."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    return f_trial <= reference - eta * alpha * p_norm_sq


def armijo_accepts(f_trial: float, reference: float, eta: float, alpha: float, p: Vector) -> bool:
    """Nonmonotone Armijo test against the squared direction norm of ``p``."""
    return armijo_accepts_norm(f_trial, reference, eta, alpha, float(p @ p))


def ls_candidates(k: int, schedule: StepSchedule) -> tuple[float, float, float]:
    """The exact candidate ladder ``(d_k, (d_k + 1/k)/2, 1/k)`` with ``d_k = min(1, c2/k)``."""
    if k < 1:
        raise ValueError(f"iteration counter is 1-based, got k={k}")
    d = min(1.0, schedule.c2 / k)
    return d, (d + 1.0 / k) / 2.0, 1.0 / k


def ls_step_size(
    k: int,
    schedule: StepSchedule,
    trial: Callable[[float], float],
    reference: float,
    eta: float,
    p: Vector,
    p_norm_sq: float | None = None,
) -> tuple[float, int]:
    """Two-candidate nonmonotone Armijo search.

    Tests ``d_k`` and then ``(d_k + 1/k)/2``; returns the first accepted
    candidate.  When both fail, returns the fallback ``1/k`` without a third
    evaluation.  ``trial`` maps a step size to the sample-average value at the
    (unprojected) trial point and is charged per call; the second returned
    element counts those calls (1 or 2).
    """
    if p_norm_sq is None:
        p_norm_sq = float(p @ p)
    d, mid, fallback = ls_candidates(k, schedule)
    f1 = trial(d)
    if armijo_accepts_norm(f1, reference, eta, d, p_norm_sq):
        return d, 1
    f2 = trial(mid)
    if armijo_accepts_norm(f2, reference, eta, mid, p_norm_sq):
        return mid, 2
    return fallback, 2


@dataclass
class IterateState:
    """State between iterations; treat as immutable (steps return new states)."""

    x: Vector
    zeta: float
    k: int  # completed steps; the upcoming step is k + 1
    n: int  # sample size for the upcoming step
    history: deque  # trailing sample-average values (line-search mode only)
    fev: int
    cached_g: Vector | None = None  # subgradient reusable as the next direction


@dataclass
class StepDiag:
    """Per-step diagnostics kept in memory (not serialized with the trace)."""

    k: int
    n_used: int
    n_next: int
    alpha: float
    zeta_used: float
    f_saa: float | None           # charged reference value (line-search mode)
    p_norm_sq: float
    trials: tuple[tuple[float, float], ...]  # (alpha, f_trial) in test order
    fallback: bool
    reference: float | None
    s1_cached: bool
    descent_certified: bool
    charges: tuple[int, int, int, int]  # (reference, subgradient, trials, y-pair)
    x_after: Vector
    eta: float  # stashed so acceptance can be replayed exactly

    @property
    def charge_total(self) -> int:
        return sum(self.charges)

    @property
    def accepted(self) -> tuple[float, float] | None:
        """(alpha, f_trial) of the accepted non-fallback candidate, if any."""
        if self.reference is None:
            return None
        for a, f in self.trials:
            if armijo_accepts_norm(f, self.reference, self.eta, a, self.p_norm_sq):
                return a, f
        return None


class _ChargedOracle:
    """Wraps a problem; charges one FEV unit per index on every oracle call."""

    def __init__(self, problem: Problem, budget: int | None):
        self.problem = problem
        self.budget = budget
        self.fev = 0

    def _charge(self, units: int) -> None:
        if self.budget is not None and self.fev + units > self.budget:
            raise BudgetExhausted(f"charge of {units} units exceeds budget {self.budget} (spent {self.fev})")
        self.fev += units

    def value(self, x: Vector, idx) -> float:
        self._charge(len(idx))
        return self.problem.value(x, idx)

    def subgradient(self, x: Vector, idx) -> Vector:
        self._charge(len(idx))
        return self.problem.subgradient(x, idx)

    def descent_subgradient(self, x: Vector, idx, zeta: float, margin: float):
        self._charge(len(idx))
        return self.problem.descent_subgradient(x, idx, zeta, margin)


TRACE_COLUMNS = ("k", "N_k", "alpha_k", "zeta_k", "fev_cum", "f_saa", "f_true")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass
class RunTrace:
    """One record per iterate: the terminal record carries ``alpha_k = nan``.

    Record ``k`` describes the iterate at the start of step ``k``; its
    ``fev_cum`` is the cost of reaching that iterate, and ``alpha_k``/``N_k``/
    ``zeta_k`` belong to the step departing from it.  ``f_true`` is the
    full-sample objective in natural row order, computed out of band and never
    charged.
    """

    k: np.ndarray
    n: np.ndarray
    alpha: np.ndarray
    zeta: np.ndarray
    fev: np.ndarray
    f_saa: np.ndarray
    f_true: np.ndarray
    steps: list[StepDiag] | None = None

    def __len__(self) -> int:
        return len(self.k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunTrace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=name in ("alpha", "f_saa", "f_true"))
            for name in ("k", "n", "alpha", "zeta", "fev", "f_saa", "f_true")
        )

    @classmethod
    def from_records(cls, records: list[tuple], steps: list[StepDiag] | None = None) -> "RunTrace":
        cols = list(zip(*records)) if records else [[]] * 7
        return cls(
            k=np.asarray(cols[0], dtype=np.int64),
            n=np.asarray(cols[1], dtype=np.int64),
            alpha=np.asarray(cols[2], dtype=np.float64),
            zeta=np.asarray(cols[3], dtype=np.float64),
            fev=np.asarray(cols[4], dtype=np.int64),
            f_saa=np.asarray(cols[5], dtype=np.float64),
            f_true=np.asarray(cols[6], dtype=np.float64),
            steps=steps,
        )

    def to_csv(self) -> str:
        lines = [f"# schema: {SCHEMA}", ",".join(TRACE_COLUMNS)]
        for i in range(len(self)):
            lines.append(
                ",".join(
                    (
                        str(int(self.k[i])),
                        str(int(self.n[i])),
                        _fmt(self.alpha[i]),
                        _fmt(self.zeta[i]),
                        str(int(self.fev[i])),
                        _fmt(self.f_saa[i]),
                        _fmt(self.f_true[i]),
                    )
                )
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RunTrace":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or tuple(lines[0].split(",")) != TRACE_COLUMNS:
            raise ValueError(f"trace CSV must start with header {','.join(TRACE_COLUMNS)}")
        records = []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != len(TRACE_COLUMNS):
                raise ValueError(f"malformed trace row: {ln!r}")
            records.append(
                (int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3]), int(parts[4]), float(parts[5]), float(parts[6]))
            )
        return cls.from_records(records)

    def to_json(self) -> str:
        def cell(value: float):
            return None if math.isnan(value) else float(value)

        records = [
            {
                "k": int(self.k[i]),
                "N_k": int(self.n[i]),
                "alpha_k": cell(self.alpha[i]),
                "zeta_k": cell(self.zeta[i]),
                "fev_cum": int(self.fev[i]),
                "f_saa": cell(self.f_saa[i]),
                "f_true": cell(self.f_true[i]),
            }
            for i in range(len(self))
        ]
        return json.dumps({"schema": SCHEMA, "records": records}, indent=None, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        payload = json.loads(text)
        records = [
            (
                r["k"],
                r["N_k"],
                math.nan if r["alpha_k"] is None else r["alpha_k"],
                math.nan if r["zeta_k"] is None else r["zeta_k"],
                r["fev_cum"],
                math.nan if r["f_saa"] is None else r["f_saa"],
                math.nan if r["f_true"] is None else r["f_true"],
            )
            for r in payload["records"]
        ]
        return cls.from_records(records)

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load_csv(cls, path) -> "RunTrace":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


class SpsSolver:
    """Driver binding a problem, region and config to one reproducible run.

    The initial point (when not supplied) and the row permutation that
    defines the nested samples are drawn from independent seeded generators,
    so the permutation does not depend on whether ``x0`` was supplied.
    """

    def __init__(
        self,
        problem: Problem,
        region: FeasibleRegion,
        config: SolverConfig,
        budget: int | None = None,
        x0: Vector | None = None,
    ):
        if budget is not None and budget < 0:
            raise ValueError(f"budget must be >= 0, got {budget}")
        if budget is None and config.max_iters is None:
            raise ValueError("either a finite FEV budget or max_iters must be set")
        self.problem = problem
        self.region = region
        self.config = config
        self.steps_schedule = config.step_schedule
        self.bounds = config.spectral_bounds
        self.samples = config.sample_schedule(problem.ground_size)
        self.oracle = _ChargedOracle(problem, budget)
        if x0 is None:
            x0 = np.random.default_rng([config.seed, 0]).uniform(size=problem.dimension)
        x0 = as_vector(x0, dim=problem.dimension)
        self.x0 = region.project(x0)
        self.perm = np.random.default_rng([config.seed, 1]).permutation(problem.ground_size)

    def initial_state(self) -> IterateState:
        return IterateState(
            x=self.x0.copy(),
            zeta=self.config.zeta_init,
            k=0,
            n=self.samples.n0,
            history=deque(maxlen=self.config.window),
            fev=0,
            cached_g=None,
        )

    def _maybe_normalize(self, g: Vector) -> Vector:
        if not self.config.normalize_directions:
            return g
        norm = math.sqrt(float(g @ g))
        return g / norm if norm > 0 else g

    def step(self, state: IterateState) -> tuple[IterateState, StepDiag]:
        """One full iteration; raises BudgetExhausted without side effects on ``state``."""
        cfg = self.config
        oracle = self.oracle
        k = state.k + 1
        n = state.n
        idx = nested_index_set(self.perm, n)
        x, zeta = state.x, state.zeta
        line_search = cfg.step_mode == LINE_SEARCH

        history = state.history
        f_saa = None
        reference = None
        ref_charge = 0
        if line_search:
            f_saa = oracle.value(x, idx)
            ref_charge = n
            history = deque(state.history, maxlen=cfg.window)
            history.append(f_saa)
            reference = nonmonotone_reference(history, cfg.window)

        if state.cached_g is not None:
            g = state.cached_g
            sub_charge = 0
            certified = False
        else:
            g, certified = oracle.descent_subgradient(x, idx, zeta, cfg.descent_margin)
            g = self._maybe_normalize(g)
            sub_charge = n

        p = -zeta * g
        p_norm_sq = float(p @ p)

        trials: list[tuple[float, float]] = []
        if line_search:

            def trial(a: float) -> float:
                f = oracle.value(x + a * p, idx)
                trials.append((a, f))
                return f

            alpha, _ = ls_step_size(k, self.steps_schedule, trial, reference, cfg.eta, p, p_norm_sq=p_norm_sq)
            fallback = not any(armijo_accepts_norm(f, reference, cfg.eta, a, p_norm_sq) for a, f in trials)
        else:
            alpha = 1.0 / k
            fallback = False

        x_new = self.region.project(x + alpha * p)
        s = x_new - x

        n_next = self.samples.next_size(n)
        if cfg.y_policy == SAME_SAMPLE:
            g2 = self._maybe_normalize(oracle.subgradient(x_new, idx))
            pair_charge = n
            y = g2 - g
            cache = g2 if n_next == n else None
        elif cfg.y_policy == CROSS_SAMPLE:
            idx_next = nested_index_set(self.perm, n_next)
            g2 = self._maybe_normalize(oracle.subgradient(x_new, idx_next))
            pair_charge = n_next
            y = g2 - g
            cache = g2
        else:  # NEXT_SAMPLE
            idx_next = nested_index_set(self.perm, n_next)
            g2 = self._maybe_normalize(oracle.subgradient(x_new, idx_next))
            g3 = self._maybe_normalize(oracle.subgradient(x, idx_next))
            pair_charge = 2 * n_next
            y = g2 - g3
            cache = g2

        zeta_new = spectral_update(s, y, self.bounds, zeta)

        new_state = IterateState(
            x=x_new,
            zeta=zeta_new,
            k=k,
            n=n_next,
            history=history,
            fev=oracle.fev,
            cached_g=cache,
        )
        diag = StepDiag(
            k=k,
            n_used=n,
            n_next=n_next,
            alpha=alpha,
            zeta_used=zeta,
            f_saa=f_saa,
            p_norm_sq=p_norm_sq,
            trials=tuple(trials),
            fallback=fallback,
            reference=reference,
            s1_cached=state.cached_g is not None,
            descent_certified=certified,
            charges=(ref_charge, sub_charge, len(trials) * n, pair_charge),
            x_after=x_new,
            eta=cfg.eta,
        )
        return new_state, diag

    def run(self) -> RunTrace:
        cfg = self.config
        state = self.initial_state()
        records: list[tuple] = []
        diags: list[StepDiag] = []
        while cfg.max_iters is None or state.k < cfg.max_iters:
            fev_before = self.oracle.fev
            try:
                new_state, diag = self.step(state)
            except BudgetExhausted:
                self.oracle.fev = fev_before  # discard partial charges of the aborted step
                break
            f_true = self.problem.full_value(state.x) if cfg.track_true else math.nan
            f_saa = diag.f_saa
            if f_saa is None:
                f_saa = self.problem.value(state.x, nested_index_set(self.perm, state.n))
            records.append((state.k + 1, state.n, diag.alpha, state.zeta, fev_before, f_saa, f_true))
            diags.append(diag)
            state = new_state
        # terminal record: the last iterate, with no departing step
        idx = nested_index_set(self.perm, state.n)
        f_saa = self.problem.value(state.x, idx)
        f_true = self.problem.full_value(state.x) if cfg.track_true else math.nan
        records.append((state.k + 1, state.n, math.nan, state.zeta, self.oracle.fev, f_saa, f_true))
        return RunTrace.from_records(records, steps=diags)


def run(
    problem: Problem,
    region: FeasibleRegion,
    config: SolverConfig,
    budget: int | None = None,
    x0: Vector | None = None,
) -> RunTrace:
    """Run the solver to its FEV budget or iteration cap and return the trace.

    Deterministic: identical ``(problem, region, config, budget, x0)`` yield
    bit-identical traces.
    """
    return SpsSolver(problem, region, config, budget=budget, x0=x0).run()
