"""Benchmark harness: FEV cost model, campaigns, winning probability, profiles.

The cost unit is one scalar product.  A method's cost to reach an iterate is
the cumulative FEV charged for every oracle call it needed; relative errors
``(f(x_k) - f*) / f*`` against a supplied or estimated optimal value define
per-threshold first-hit costs, from which winning probabilities and
performance profiles are computed.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone

import numpy as np

from .data_io import Dataset, load_libsvm, split, synthetic_blobs
from .model import Ball, FeasibleRegion, Problem
from .problems import HingeLossSvm
from .solver import LINE_SEARCH, PREDEFINED, SCHEMA, RunTrace, SolverConfig, run

METHODS = ("sps", "sps-f", "ls-sps", "ls-sps-f", "ls-ps", "ls-ps-f")

#: Sample-size schedule for the variable-sample-size methods.
VSS_START_FRACTION = 0.1
VSS_GROWTH = 1.1


@dataclass(frozen=True)
class CostModel:
    """Charges, in scalar-product units, for each kind of oracle interaction.

    A value or subgradient evaluation over an index set costs one unit per
    index, as does each line-search trial; reusing a cached subgradient as the
    next direction is free, and instrumentation (the full-sample objective
    recorded in traces, and the sample-average value recorded by methods that
    never consume it) is never charged.
    """

    def value(self, idx_size: int) -> int:
        return idx_size

    def subgradient(self, idx_size: int) -> int:
        return idx_size

    def line_search_trial(self, idx_size: int) -> int:
        return idx_size

    def cached_reuse(self) -> int:
        return 0

    def instrumentation(self) -> int:
        return 0


COST_MODEL = CostModel()


def reconcile_fev(trace: RunTrace) -> bool:
    """Check that per-step charge bookkeeping matches the trace's FEV column."""
    if trace.steps is None:
        raise ValueError("trace carries no step diagnostics")
    expected = np.array([d.charge_total for d in trace.steps], dtype=np.int64)
    return int(trace.fev[0]) == 0 and np.array_equal(expected, np.diff(trace.fev))


def default_budget(ground_size: int) -> int:
    """Default per-run FEV budget: 50 full passes over the data."""
    return 50 * ground_size


def default_tau_grid() -> tuple[float, ...]:
    return tuple(np.geomspace(0.01, 3.5, 50))


def default_q_grid() -> tuple[float, ...]:
    return tuple(np.geomspace(1.0, 64.0, 25))


def method_config(name: str, base: SolverConfig | None = None, **overrides) -> SolverConfig:
    """Solver configuration for one of the named methods.

    ``-f`` variants run on the full sample from the first iteration; the
    ``ls-`` prefix switches on the nonmonotone Armijo search; ``ps`` variants
    pin the spectral coefficient to 1 (plain projected subgradient direction).
    """
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; valid methods: {', '.join(METHODS)}")
    cfg = base if base is not None else SolverConfig()
    kwargs: dict = dict(overrides)
    kwargs["step_mode"] = LINE_SEARCH if name.startswith("ls-") else PREDEFINED
    if name.endswith("-f"):
        kwargs["sample_start_fraction"] = None
    else:
        kwargs.setdefault("sample_start_fraction", VSS_START_FRACTION)
        kwargs.setdefault("sample_growth", VSS_GROWTH)
    if name in ("ls-ps", "ls-ps-f"):
        kwargs["zeta_lo"] = 1.0
        kwargs["zeta_hi"] = 1.0
        kwargs["zeta_init"] = 1.0
    return cfg.with_overrides(**kwargs)


def relative_error(f_val: float, f_star: float) -> float:
    """``(f_val - f_star) / f_star``; requires a nonzero reference value."""
    if f_star == 0:
        raise ValueError("f_star must be nonzero; shift the objective or use absolute errors")
    return (f_val - f_star) / f_star


def first_hit_fevs(trace: RunTrace, f_star: float, tau_grid) -> np.ndarray:
    """FEV spent when the relative error first reaches each threshold (inf if never)."""
    rel = np.array([relative_error(v, f_star) for v in trace.f_true])
    out = np.full(len(tau_grid), np.inf)
    for j, tau in enumerate(tau_grid):
        hits = np.flatnonzero(rel <= tau)
        if hits.size:
            out[j] = float(trace.fev[hits[0]])
    return out


@dataclass(frozen=True)
class DatasetSpec:
    """One benchmark problem: a LIBSVM file or a synthetic generator."""

    name: str
    path: str | None = None
    synthetic: dict | None = None
    train_fraction: float | None = None
    split_seed: int = 0
    reg_coeff: float = 10.0
    radius_sq: float = 0.1
    kink_tol: float = 1e-12

    def __post_init__(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError(f"dataset {self.name!r} must set exactly one of path/synthetic")

    def load(self) -> Dataset:
        if self.path is not None:
            ds = load_libsvm(self.path)
        else:
            params = dict(self.synthetic)
            kind = params.pop("kind", "blobs")
            if kind != "blobs":
                raise ValueError(f"unknown synthetic kind {kind!r}")
            ds = synthetic_blobs(**params)
        if self.train_fraction is not None:
            ds, _ = split(ds, self.train_fraction, self.split_seed)
        return ds

    def build(self) -> tuple[Problem, FeasibleRegion]:
        ds = self.load()
        problem = HingeLossSvm.from_dataset(ds, reg_coeff=self.reg_coeff, kink_tol=self.kink_tol)
        return problem, Ball(self.radius_sq)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


F_STAR_MODES = ("given", "reference")


@dataclass(frozen=True)
class CampaignSpec:
    """Declarative description of a benchmark campaign (JSON-serializable)."""

    methods: tuple[str, ...]
    datasets: tuple[DatasetSpec, ...]
    seeds: tuple[int, ...]
    budget: int | None = None  # per-run FEV; None -> 50 full passes per dataset
    tau_grid: tuple[float, ...] = field(default_factory=default_tau_grid)
    q_grid: tuple[float, ...] = field(default_factory=default_q_grid)
    pp_tau: float = 1.0
    f_star_mode: str = "reference"
    f_star: dict | None = None
    reference_budget_factor: float = 50.0
    solver_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        object.__setattr__(self, "q_grid", tuple(float(q) for q in self.q_grid))
        datasets = tuple(d if isinstance(d, DatasetSpec) else DatasetSpec(**d) for d in self.datasets)
        object.__setattr__(self, "datasets", datasets)
        if not self.methods:
            raise ValueError("campaign needs at least one method")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; valid methods: {', '.join(METHODS)}")
        if not self.datasets:
            raise ValueError("campaign needs at least one dataset")
        if not self.seeds:
            raise ValueError("campaign needs at least one seed")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")
        if self.f_star_mode not in F_STAR_MODES:
            raise ValueError(f"f_star_mode must be one of {F_STAR_MODES}")
        if self.f_star_mode == "given":
            missing = [n for n in names if self.f_star is None or n not in self.f_star]
            if missing:
                raise ValueError(f"f_star_mode='given' but no f_star for: {missing}")
            for n in names:
                if self.f_star[n] == 0:
                    raise ValueError(f"f_star for {n!r} must be nonzero")
        if any(t <= 0 for t in self.tau_grid):
            raise ValueError("tau grid entries must be > 0")
        if list(self.q_grid) != sorted(self.q_grid) or any(q < 1 for q in self.q_grid):
            raise ValueError("q grid must be sorted and >= 1")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")
        if self.reference_budget_factor <= 0:
            raise ValueError("reference_budget_factor must be > 0")

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["methods"] = list(self.methods)
        out["seeds"] = list(self.seeds)
        out["tau_grid"] = list(self.tau_grid)
        out["q_grid"] = list(self.q_grid)
        out["datasets"] = [d.to_dict() for d in self.datasets]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown campaign spec keys: {sorted(unknown)}")
        return cls(**data)


RunKey = tuple[str, str, int]  # (method, dataset, seed)


@dataclass
class CampaignResult:
    """First-hit costs and summaries for every (method, dataset, seed) run."""

    methods: tuple[str, ...]
    runs: tuple[tuple[str, int], ...]  # (dataset, seed)
    tau_grid: np.ndarray
    q_grid: np.ndarray
    f_star: dict
    first_hit: dict
    final_true: dict
    fev_total: dict
    pp_tau: float = 1.0
    spec: CampaignSpec | None = None
    traces: dict | None = None
    failures: dict = field(default_factory=dict)

    def tau_index(self, tau: float) -> int:
        matches = np.flatnonzero(np.isclose(self.tau_grid, tau, rtol=1e-12, atol=0.0))
        if matches.size != 1:
            raise ValueError(f"tau={tau} is not a point of the campaign tau grid")
        return int(matches[0])

    def to_json_dict(self) -> dict:
        def hit_list(arr):
            return [None if np.isinf(v) else float(v) for v in arr]

        runs = [
            {
                "method": m,
                "dataset": d,
                "seed": s,
                "first_hit_fev": hit_list(self.first_hit[(m, d, s)]),
                "final_f_true": self.final_true[(m, d, s)],
                "fev_total": self.fev_total[(m, d, s)],
            }
            for m in self.methods
            for (d, s) in self.runs
            if (m, d, s) in self.first_hit
        ]
        return {
            "methods": list(self.methods),
            "runs": runs,
            "tau_grid": [float(t) for t in self.tau_grid],
            "q_grid": [float(q) for q in self.q_grid],
            "pp_tau": self.pp_tau,
            "f_star": self.f_star,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CampaignResult":
        methods = tuple(data["methods"])
        tau_grid = np.asarray(data["tau_grid"], dtype=np.float64)
        q_grid = np.asarray(data["q_grid"], dtype=np.float64)
        first_hit, final_true, fev_total = {}, {}, {}
        run_keys = []
        for entry in data["runs"]:
            key = (entry["method"], entry["dataset"], int(entry["seed"]))
            hits = np.array([np.inf if v is None else float(v) for v in entry["first_hit_fev"]])
            first_hit[key] = hits
            final_true[key] = entry["final_f_true"]
            fev_total[key] = entry["fev_total"]
            if (key[1], key[2]) not in run_keys:
                run_keys.append((key[1], key[2]))
        return cls(
            methods=methods,
            runs=tuple(run_keys),
            tau_grid=tau_grid,
            q_grid=q_grid,
            f_star=data["f_star"],
            first_hit=first_hit,
            final_true=final_true,
            fev_total=fev_total,
            pp_tau=float(data.get("pp_tau", 1.0)),
        )


def winning_probability(result: CampaignResult, tau: float) -> dict[str, float]:
    """Fraction of runs each method wins: minimal first-hit FEV at threshold ``tau``.

    Ties award a point to every winner; runs in which no method reaches the
    threshold award none.  Denominators are always the total number of runs.
    """
    j = result.tau_index(tau)
    points = {m: 0 for m in result.methods}
    for run_key in result.runs:
        fevs = {m: result.first_hit[(m,) + run_key][j] for m in result.methods}
        best = min(fevs.values())
        if np.isinf(best):
            continue
        for m, v in fevs.items():
            if v == best:
                points[m] += 1
    total = len(result.runs)
    return {m: points[m] / total for m in result.methods}


def performance_profile(result: CampaignResult, tau: float, q_grid=None) -> dict[str, np.ndarray]:
    """Classical performance-profile curves at threshold ``tau``.

    A method earns a point at ratio ``q`` in a run when its first-hit FEV is
    within a factor ``q`` of the per-run best; curves are nondecreasing in
    ``q`` and equal the winning probability at ``q = 1``.
    """
    if q_grid is None:
        q_grid = result.q_grid
    q_grid = np.asarray(q_grid, dtype=np.float64)
    if np.any(q_grid < 1.0) or np.any(np.diff(q_grid) < 0):
        raise ValueError("q grid must be sorted and >= 1")
    j = result.tau_index(tau)
    counts = {m: np.zeros(len(q_grid)) for m in result.methods}
    for run_key in result.runs:
        fevs = {m: result.first_hit[(m,) + run_key][j] for m in result.methods}
        best = min(fevs.values())
        if np.isinf(best):
            continue
        for m, v in fevs.items():
            counts[m] += v <= q_grid * best
    total = len(result.runs)
    return {m: counts[m] / total for m in result.methods}


def _run_one(problem, region, config, budget):
    return run(problem, region, config, budget=budget)


def estimate_f_star(problem: Problem, region: FeasibleRegion, spec: CampaignSpec, budget: int) -> float:
    """Reference-mode optimum estimate: best full-sample value visited by a
    long line-search run (the campaign budget scaled by the reference factor)."""
    cfg = method_config("ls-sps-f", **spec.solver_overrides).with_overrides(seed=spec.seeds[0], track_true=True)
    ref_budget = int(round(budget * spec.reference_budget_factor))
    trace = run(problem, region, cfg, budget=ref_budget)
    return float(np.min(trace.f_true))


def run_campaign(spec: CampaignSpec, out_dir=None, parallelism: int = 1, keep_traces: bool = True) -> CampaignResult:
    """Execute every (method, dataset, seed) combination of a campaign.

    Methods within a run share the initial point and the sampling permutation
    because both derive from the run's seed alone.  Aggregation order is fixed
    by the spec, so results are deterministic regardless of scheduling.
    """
    built = {d.name: d.build() for d in spec.datasets}
    budgets = {
        name: spec.budget if spec.budget is not None else default_budget(problem.ground_size)
        for name, (problem, _) in built.items()
    }

    f_star: dict[str, dict] = {}
    for ds in spec.datasets:
        problem, region = built[ds.name]
        if spec.f_star_mode == "given":
            f_star[ds.name] = {"value": float(spec.f_star[ds.name]), "mode": "given"}
        else:
            value = estimate_f_star(problem, region, spec, budgets[ds.name])
            if value == 0:
                raise ValueError(f"reference f_star for {ds.name!r} is zero; supply a shifted objective")
            f_star[ds.name] = {"value": value, "mode": "reference"}

    tasks = []
    for ds in spec.datasets:
        problem, region = built[ds.name]
        for seed in spec.seeds:
            for m in spec.methods:
                cfg = method_config(m, **spec.solver_overrides).with_overrides(seed=seed, track_true=True)
                tasks.append(((m, ds.name, seed), problem, region, cfg, budgets[ds.name]))

    traces: dict[RunKey, RunTrace] = {}
    failures: dict[RunKey, str] = {}
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            futures = {pool.submit(_run_one, p, r, c, b): key for key, p, r, c, b in tasks}
            for fut, key in futures.items():
                try:
                    traces[key] = fut.result()
                except Exception as exc:  # preserve completed runs on partial failure
                    failures[key] = f"{type(exc).__name__}: {exc}"
    else:
        for key, p, r, c, b in tasks:
            try:
                traces[key] = _run_one(p, r, c, b)
            except Exception as exc:
                failures[key] = f"{type(exc).__name__}: {exc}"

    tau_grid = np.asarray(spec.tau_grid, dtype=np.float64)
    first_hit, final_true, fev_total = {}, {}, {}
    for key, trace in traces.items():
        ds_name = key[1]
        first_hit[key] = first_hit_fevs(trace, f_star[ds_name]["value"], tau_grid)
        final_true[key] = float(trace.f_true[-1])
        fev_total[key] = int(trace.fev[-1])

    result = CampaignResult(
        methods=spec.methods,
        runs=tuple((d.name, s) for d in spec.datasets for s in spec.seeds),
        tau_grid=tau_grid,
        q_grid=np.asarray(spec.q_grid, dtype=np.float64),
        f_star=f_star,
        first_hit=first_hit,
        final_true=final_true,
        fev_total=fev_total,
        pp_tau=spec.pp_tau,
        spec=spec,
        traces=traces if keep_traces else None,
        failures=failures,
    )
    if out_dir is not None:
        write_campaign_outputs(result, out_dir)
    return result


def profiles_csv(result: CampaignResult) -> str:
    """Winning-probability and performance-profile table: metric, method, x, value."""
    lines = [f"# schema: {SCHEMA}", "metric,method,x,value"]
    for tau in result.tau_grid:
        pi = winning_probability(result, tau)
        for m in result.methods:
            lines.append(f"pi,{m},{format(tau, '.17g')},{format(pi[m], '.17g')}")
    curves = performance_profile(result, result.pp_tau)
    for m in result.methods:
        for q, v in zip(result.q_grid, curves[m]):
            lines.append(f"pp,{m},{format(q, '.17g')},{format(v, '.17g')}")
    return "\n".join(lines) + "\n"


def results_json(result: CampaignResult) -> str:
    payload = {
        "schema": SCHEMA,
        "meta": {"created": datetime.now(timezone.utc).isoformat()},
        "result": {
            "spec": result.spec.to_dict() if result.spec is not None else None,
            **result.to_json_dict(),
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def write_campaign_outputs(result: CampaignResult, out_dir) -> None:
    """Write results.json, profiles.csv and per-run trace CSVs under ``out_dir``."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.json").write_text(results_json(result), encoding="utf-8")
    if result.failures:
        manifest = {
            "schema": SCHEMA,
            "failures": [
                {"method": m, "dataset": d, "seed": s, "error": err}
                for (m, d, s), err in sorted(result.failures.items())
            ],
        }
        (out / "failures.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    else:
        (out / "profiles.csv").write_text(profiles_csv(result), encoding="utf-8")
    if result.traces:
        trace_dir = out / "traces"
        trace_dir.mkdir(exist_ok=True)
        for (m, d, s), trace in sorted(result.traces.items()):
            trace.save_csv(trace_dir / f"{m}__{d}__s{s}.csv")


def saa_error_proxy(problem: Problem, config: SolverConfig, trace: RunTrace, x_ref) -> np.ndarray:
    """Proxy for the sample-average approximation error along a trace.

    Per record: ``|f_N_k(x_k) - f(x_k)| + |f_N_k(x_ref) - f(x_ref)|`` where
    ``x_ref`` stands in for a solution point.  This is a computable proxy (the
    exact error is a maximum over the whole feasible set) and is labeled as
    such wherever reported; it is never charged.
    """
    x_ref = np.asarray(x_ref, dtype=np.float64)
    perm = np.random.default_rng([config.seed, 1]).permutation(problem.ground_size)
    f_ref_full = problem.full_value(x_ref)
    out = np.empty(len(trace))
    for i in range(len(trace)):
        idx = perm[: int(trace.n[i])]
        ref_gap = abs(problem.value(x_ref, idx) - f_ref_full)
        out[i] = abs(float(trace.f_saa[i]) - float(trace.f_true[i])) + ref_gap
    return out
