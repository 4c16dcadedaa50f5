"""Probabilistic inputs: scenario ensembles, percentile tables, tiers,
characteristic-week clustering and forecast-quality diagnostics.

Percentile tables come in two orientations. Consumption-style quantities
(load, net load) are positive; participant availability is expressed as net
injection, so load-like tables are flipped with ``to_injection`` before tier
construction. Empirical quantiles use the nearest-rank rule so results are
reproducible bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .system import MarketConfig, SystemModel, UncertainAccount


@dataclass
class ScenarioSet:
    """Scenario ensembles per constituent on a shared time axis."""
    data: dict[str, np.ndarray]          # key -> (scenarios, intervals) MW
    probabilities: np.ndarray | None = None
    resolution_hours: float = 1.0
    start_hour: float = 0.0

    def __post_init__(self):
        sizes = {v.shape for v in self.data.values()}
        if len({s for s in sizes}) > 1:
            raise ValueError("constituents must share the scenario/time axes")
        if self.probabilities is None and self.data:
            n = self.num_scenarios
            self.probabilities = np.full(n, 1.0 / n)
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=float)
            if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
                raise ValueError("probabilities must be non-negative and sum to 1")
            self.probabilities = p

    @property
    def num_scenarios(self) -> int:
        return next(iter(self.data.values())).shape[0]

    @property
    def num_intervals(self) -> int:
        return next(iter(self.data.values())).shape[1]

    def matrix(self, key: str) -> np.ndarray:
        return self.data[key]


@dataclass
class PercentileTable:
    """Per-interval values of a named quantity at requested percentiles."""
    quantity: str
    percentiles: tuple[float, ...]
    values: np.ndarray                   # (intervals, percentiles)
    resolution_hours: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[1] != len(self.percentiles):
            raise ValueError("values width must match the percentile list")
        if np.any(np.diff(self.values, axis=1) < -1e-9):
            raise ValueError(f"{self.quantity}: values must be non-decreasing "
                             "in percentile")

    @property
    def num_intervals(self) -> int:
        return self.values.shape[0]

    def at(self, pct: float) -> np.ndarray:
        try:
            j = self.percentiles.index(pct)
        except ValueError:
            raise KeyError(f"{self.quantity}: percentile {pct} not tabulated") \
                from None
        return self.values[:, j]

    def restrict(self, pcts: tuple[float, ...]) -> "PercentileTable":
        cols = [self.percentiles.index(p) for p in pcts]
        return PercentileTable(self.quantity, tuple(pcts),
                               self.values[:, cols], self.resolution_hours)


@dataclass
class TierStructure:
    """Discrete availability levels per account plus tier exercise odds.

    levels[account] has one column per configured percentile; tier r spans
    [level r, level r+1]. prob_up[r] is the chance the realized output fully
    crosses below tier r's lower level, prob_down[r] the chance it fully
    crosses above the upper level.
    """
    percentiles: tuple[float, ...]
    levels: dict[str, np.ndarray]        # account id -> (intervals, |S|)
    prob_up: np.ndarray                  # (|S|-1,)
    prob_down: np.ndarray

    @property
    def num_levels(self) -> int:
        return len(self.percentiles)

    @property
    def num_tiers(self) -> int:
        return len(self.percentiles) - 1

    def widths(self, account: str) -> np.ndarray:
        """Tier widths (intervals, |S|-1); these partition the level span."""
        return np.diff(self.levels[account], axis=1)

    def merged(self, other: "TierStructure") -> "TierStructure":
        if other.percentiles != self.percentiles:
            raise ValueError("tier structures use different percentiles")
        return TierStructure(self.percentiles, {**self.levels, **other.levels},
                             self.prob_up, self.prob_down)


@dataclass
class WeekClusterResult:
    assignments: np.ndarray              # (weeks,) cluster index per week
    medoids: np.ndarray                  # (k,) week index of each medoid
    weights: np.ndarray                  # (k,) member counts

    @property
    def k(self) -> int:
        return len(self.medoids)


def nearest_rank_quantile(sorted_values: np.ndarray, pct: float) -> np.ndarray:
    """Nearest-rank quantile along axis 0 of pre-sorted data."""
    n = sorted_values.shape[0]
    idx = int(np.ceil(pct / 100.0 * n)) - 1
    return sorted_values[min(max(idx, 0), n - 1)]


def compute_constituent_percentiles(sset: ScenarioSet, pcts: list[float],
                                    key: str) -> PercentileTable:
    """Empirical per-interval quantiles of one constituent's ensemble."""
    if any(not 0 < p < 100 for p in pcts):
        raise ValueError("percentiles must lie strictly inside (0, 100)")
    mat = sset.matrix(key)
    if mat.shape[0] < 2:
        raise ValueError("need at least two scenarios")
    pcts = sorted(pcts)
    ordered = np.sort(mat, axis=0)
    cols = [nearest_rank_quantile(ordered, p) for p in pcts]
    return PercentileTable(key, tuple(pcts), np.column_stack(cols),
                           sset.resolution_hours)


def compute_net_load_percentiles(load: PercentileTable, wind: PercentileTable,
                                 solar: PercentileTable) -> PercentileTable:
    """Net load at percentile p: load(p) minus wind and solar at (100-p).

    A high net-load percentile pairs high load with correspondingly low
    renewable output, so the table stays monotone.
    """
    for tbl in (wind, solar):
        if tbl.num_intervals != load.num_intervals:
            raise ValueError("tables must share the time axis")
    out = []
    for p in load.percentiles:
        comp = 100.0 - p
        try:
            out.append(load.at(p) - wind.at(comp) - solar.at(comp))
        except KeyError:
            raise ValueError(
                f"missing complementary percentile {comp} for net load at {p}"
            ) from None
    return PercentileTable("net_load", load.percentiles, np.column_stack(out),
                           load.resolution_hours)


def to_injection(table: PercentileTable, name: str | None = None
                 ) -> PercentileTable:
    """Flip a consumption-style table into net-injection orientation."""
    pcts = tuple(100.0 - p for p in reversed(table.percentiles))
    values = -table.values[:, ::-1]
    return PercentileTable(name or f"{table.quantity}_injection", pcts, values,
                           table.resolution_hours)


def build_tiers(table: PercentileTable, cfg: MarketConfig,
                account: str | None = None) -> TierStructure:
    """Tier structure for one account from its injection percentile table.

    Exercise probabilities follow the full-crossing rule: prob_up[r] is the
    percentile mass below tier r's lower level, prob_down[r] the mass above
    its upper level. With the default nine percentiles the deepest up tier
    carries probability 0.05.
    """
    pcts = tuple(float(p) for p in cfg.tier_percentiles)
    if len(pcts) < 2:
        raise ValueError("need at least two tier percentiles")
    missing = [p for p in pcts if p not in table.percentiles]
    if missing:
        raise ValueError(f"table lacks configured percentiles {missing}")
    sub = table.restrict(pcts)
    prob_up = np.array([p / 100.0 for p in pcts[:-1]])
    prob_down = np.array([1.0 - p / 100.0 for p in pcts[1:]])
    return TierStructure(pcts, {account or table.quantity: sub.values},
                         prob_up, prob_down)


def account_injection(sset: ScenarioSet, account: UncertainAccount
                      ) -> np.ndarray:
    """Scenario matrix in injection convention, sorted ascending per interval.

    Load and aggregate accounts consume, so their series are negated; rows
    are then re-sorted so scenario 1 is the lowest injection.
    """
    mat = sset.matrix(account.scenario_key)
    if account.allows_negative_injection:
        mat = -mat
    return np.sort(mat, axis=0)


def account_tiers(sset: ScenarioSet, accounts: list[UncertainAccount],
                  cfg: MarketConfig) -> TierStructure:
    """Tier structure covering every account, on the shared percentile grid."""
    merged: TierStructure | None = None
    for acc in accounts:
        tbl = compute_constituent_percentiles(
            sset, list(cfg.tier_percentiles), acc.scenario_key)
        if acc.allows_negative_injection:
            tbl = to_injection(tbl)
        ts = build_tiers(tbl, cfg, account=acc.id)
        merged = ts if merged is None else merged.merged(ts)
    if merged is None:
        raise ValueError("no accounts supplied")
    return merged


def default_self_hedge_cost_up(tiers: TierStructure, cfg: MarketConfig) -> float:
    """Scarcity-implied cost of self-hedging up: rarest tier odds times the
    RT spinning scarcity price."""
    return float(tiers.prob_up.min() * cfg.rt_spin_scarcity)


# -- characteristic weeks ----------------------------------------------------

def build_week_features(da_net_load: np.ndarray, rt_actual: np.ndarray
                        ) -> np.ndarray:
    """Per-week clustering features.

    Day-ahead features are the mean and standard deviation of the DA net
    load; real-time features are the mean and standard deviation of the RT
    deviation from the DA mean, normalized by the DA standard deviation.
    """
    da = np.asarray(da_net_load, dtype=float)
    rt = np.asarray(rt_actual, dtype=float)
    if da.shape != rt.shape:
        raise ValueError("DA and RT series must share the (weeks, time) shape")
    mu = da.mean(axis=1)
    sigma = da.std(axis=1)
    safe = np.where(sigma > 0, sigma, 1.0)
    z = (rt - mu[:, None]) / safe[:, None]
    return np.column_stack([mu, sigma, z.mean(axis=1), z.std(axis=1)])


def cluster_weeks(features: np.ndarray, k: int) -> WeekClusterResult:
    """Deterministic k-medoids (greedy build plus swap refinement) on
    z-scored features with Euclidean distance."""
    feats = np.asarray(features, dtype=float)
    n = feats.shape[0]
    if k <= 0 or k > n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    std = feats.std(axis=0)
    z = (feats - feats.mean(axis=0)) / np.where(std > 0, std, 1.0)
    dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=2)

    # Greedy build: start from the 1-medoid optimum, then add the point that
    # most reduces total assignment distance (ties to the lowest index).
    medoids = [int(np.argmin(dist.sum(axis=1)))]
    while len(medoids) < k:
        current = dist[:, medoids].min(axis=1)
        gains = np.maximum(current[None, :] - dist, 0.0).sum(axis=1)
        gains[medoids] = -1.0
        medoids.append(int(np.argmax(gains)))

    def total_cost(meds: list[int]) -> float:
        return float(dist[:, meds].min(axis=1).sum())

    improved = True
    while improved:
        improved = False
        best_cost = total_cost(medoids)
        for mi in range(k):
            for candidate in range(n):
                if candidate in medoids:
                    continue
                trial = list(medoids)
                trial[mi] = candidate
                c = total_cost(trial)
                if c < best_cost - 1e-12:
                    medoids, best_cost, improved = trial, c, True

    meds = np.array(sorted(medoids))
    assignments = np.argmin(dist[:, meds], axis=1)
    # Medoids must belong to their own cluster even under distance ties.
    for ci, m in enumerate(meds):
        assignments[m] = ci
    weights = np.bincount(assignments, minlength=k)
    return WeekClusterResult(assignments, meds, weights)


# -- forecast diagnostics ----------------------------------------------------

@dataclass
class ForecastDiagnostics:
    observed_rank: np.ndarray            # (intervals,) percent of ensemble <= actual
    rank_curve: np.ndarray               # (percentiles, 2): nominal, observed
    interval_width_pct: np.ndarray       # [5,95] width as % of median
    error_mean: float                    # actual minus median, MW
    error_min: float
    error_max: float
    error_mean_pct: float                # relative to mean median magnitude
    error_min_pct: float
    error_max_pct: float


def forecast_diagnostics(sset: ScenarioSet, actuals: np.ndarray,
                         key: str) -> ForecastDiagnostics:
    """Calibration and sharpness diagnostics of one ensemble vs the actuals."""
    mat = sset.matrix(key)
    actual = np.asarray(actuals, dtype=float)
    if actual.shape != (mat.shape[1],):
        raise ValueError("actuals must align with the scenario time axis")
    n = mat.shape[0]
    rank = 100.0 * (mat <= actual[None, :]).sum(axis=0) / n

    nominal = np.arange(1, 100)
    rank_sorted = np.sort(rank)
    observed = np.array([nearest_rank_quantile(rank_sorted, p) for p in nominal])
    curve = np.column_stack([nominal, observed])

    ordered = np.sort(mat, axis=0)
    p5 = nearest_rank_quantile(ordered, 5)
    p95 = nearest_rank_quantile(ordered, 95)
    median = nearest_rank_quantile(ordered, 50)
    with np.errstate(divide="ignore", invalid="ignore"):
        width_pct = np.where(median != 0, 100.0 * (p95 - p5) / np.abs(median),
                             np.nan)
    err = actual - median
    scale = np.abs(median).mean() or 1.0
    return ForecastDiagnostics(
        observed_rank=rank, rank_curve=curve, interval_width_pct=width_pct,
        error_mean=float(err.mean()), error_min=float(err.min()),
        error_max=float(err.max()),
        error_mean_pct=float(100.0 * err.mean() / scale),
        error_min_pct=float(100.0 * err.min() / scale),
        error_max_pct=float(100.0 * err.max() / scale))


# -- synthetic generation ----------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    """First-order autocorrelated noise around a base profile."""
    std: float
    autocorr: float = 0.7
    count: int = 1000
    floor: float | None = None           # clip level, e.g. 0 for renewables


def generate_synthetic_scenarios(profile: np.ndarray, noise: NoiseConfig,
                                 seed: int, key: str = "net_load",
                                 resolution_hours: float = 1.0) -> ScenarioSet:
    """Ensemble of AR(1)-perturbed copies of a profile; fixed seed, fixed output."""
    if noise.count <= 0:
        raise ValueError("scenario count must be positive")
    prof = np.asarray(profile, dtype=float)
    rng = np.random.default_rng(seed)
    t = prof.shape[0]
    phi = noise.autocorr
    innov = rng.standard_normal((noise.count, t))
    eps = np.empty((noise.count, t))
    eps[:, 0] = innov[:, 0]
    scale = np.sqrt(max(1.0 - phi * phi, 0.0))
    for j in range(1, t):
        eps[:, j] = phi * eps[:, j - 1] + scale * innov[:, j]
    series = prof[None, :] + noise.std * eps
    if noise.floor is not None:
        series = np.maximum(series, noise.floor)
    return ScenarioSet({key: series}, resolution_hours=resolution_hours)


def merge_scenario_sets(sets: list[ScenarioSet]) -> ScenarioSet:
    data: dict[str, np.ndarray] = {}
    for s in sets:
        data.update(s.data)
    return ScenarioSet(data, probabilities=sets[0].probabilities,
                       resolution_hours=sets[0].resolution_hours,
                       start_hour=sets[0].start_hour)


# -- CSV interchange ---------------------------------------------------------

def write_scenarios_csv(sset: ScenarioSet, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["constituent", "scenario", "timestamp", "mw"])
        for key in sorted(sset.data):
            mat = sset.data[key]
            for s in range(mat.shape[0]):
                for t in range(mat.shape[1]):
                    ts = sset.start_hour + t * sset.resolution_hours
                    writer.writerow([key, s, f"{ts:g}", f"{mat[s, t]:.6f}"])


def read_scenarios_csv(path: str, resolution_hours: float = 1.0) -> ScenarioSet:
    cells: dict[str, dict[tuple[int, float], float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cells.setdefault(row["constituent"], {})[
                (int(row["scenario"]), float(row["timestamp"]))
            ] = float(row["mw"])
    data = {}
    start = 0.0
    for key, values in cells.items():
        scen_ids = sorted({s for s, _ in values})
        stamps = sorted({t for _, t in values})
        start = stamps[0]
        mat = np.array([[values[(s, t)] for t in stamps] for s in scen_ids])
        data[key] = mat
    return ScenarioSet(data, resolution_hours=resolution_hours,
                       start_hour=start)


def write_table_csv(table: PercentileTable, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval"] + [f"p{p:g}" for p in table.percentiles])
        for t in range(table.num_intervals):
            writer.writerow([t] + [f"{v:.6f}" for v in table.values[t]])
