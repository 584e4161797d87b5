# Define here the records passed between the toolkit's modules.
#
# Everything that is data (as opposed to a bundle of evaluators) is a pydantic
# model so that it validates on construction and dumps straight to JSON.

import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import PchipInterpolator

ParamScale = Literal["natural", "log"]
VScale = Literal["natural", "log", "custom"]
Verdict = Literal["Bartlized", "FirstOnly", "Fails", "NotApplicable"]
FaceVerdict = Literal["Vanishes", "NonVanishing", "EqualEndpoints"]
SolveStatus = Literal["Converged", "Diverged", "NoInteriorMode", "HessianNotPD"]
CoverageMethod = Literal["hessian-normal", "aphl", "pivotal", "posterior-flat"]
FlatPrior = Literal["flat_lambda", "flat_log_lambda"]


def _split_list(value):
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    return value


class Interval(BaseModel):
    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lower < self.upper:
            raise ValueError(f"interval needs lower < upper, got [{self.lower}, {self.upper}]")
        return self

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, x) -> bool:
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


class BoxDomain(BaseModel):
    model_config = ConfigDict(frozen=True)

    axes: list[Interval] = Field(min_length=1)

    @classmethod
    def of(cls, *bounds):
        return cls(axes=[Interval(lower=lo, upper=hi) for lo, hi in bounds])

    @property
    def dim(self) -> int:
        return len(self.axes)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return all(axis.contains(x[..., k]) for k, axis in enumerate(self.axes))


class QuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    rel_tol: float = Field(default=1e-8, gt=0)
    abs_tol: float = Field(default=1e-12, gt=0)
    max_subdivisions: int = Field(default=2000, ge=1)
    tail_map: Literal["none", "exp-compactify", "logistic-compactify"] = "logistic-compactify"


class RngStream(BaseModel):
    """Counter-based random stream: (seed, stream_id) keys a Philox generator."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(default=0, ge=0, lt=2**64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(seed=self.seed, stream_id=int(stream_id))


class ParameterVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: list[float] = Field(min_length=1)
    scale_labels: list[ParamScale]

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.values) != len(self.scale_labels):
            raise ValueError("one scale label per parameter coordinate")
        if not all(math.isfinite(x) for x in self.values):
            raise ValueError(f"parameter values must be finite: {self.values}")
        return self

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class UnobservableVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: list[float] = Field(min_length=1)
    scale_label: VScale = "natural"

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class ObservedData(BaseModel):
    """Observations y_1..y_n with cached n, sample mean and total U_n."""

    model_config = ConfigDict(frozen=True)

    observations: list[float] = Field(min_length=1)
    n: int = 0
    mean: float = 0.0
    total: float = 0.0

    @model_validator(mode="before")
    @classmethod
    def _fill_summaries(cls, data):
        if isinstance(data, dict) and "observations" in data:
            obs = [float(x) for x in data["observations"]]
            data = {**data, "observations": obs}
            if obs:
                total = math.fsum(obs)
                data.setdefault("n", len(obs))
                data.setdefault("total", total)
                data.setdefault("mean", total / len(obs))
        return data

    @model_validator(mode="after")
    def _summaries_match(self):
        if self.n != len(self.observations):
            raise ValueError("cached n does not match the observations")
        if not math.isclose(self.total, math.fsum(self.observations), rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("cached total does not match the observations")
        if not math.isclose(self.mean, self.total / self.n, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("cached mean does not match the observations")
        return self

    @classmethod
    def of(cls, values) -> "ObservedData":
        return cls(observations=np.asarray(values, dtype=float).ravel().tolist())

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.observations, dtype=float)


class BoundaryVerdict(BaseModel):
    axis: int
    face: Literal["lower", "upper"]
    order: Literal[1, 2]
    location: float
    limit: float
    verdict: FaceVerdict


class FullIdentityResidual(BaseModel):
    """Monte Carlo residuals of the first and second h-likelihood identities."""

    n_mc: int
    n_obs: int
    score_mean: list[float]
    score_se: list[float]
    second_residual: list[list[float]]
    second_se: list[list[float]]
    block_a: list[list[float]]
    block_a_se: list[list[float]]
    block_b: list[list[float]]
    block_b_se: list[list[float]]
    block_c: list[list[float]]
    block_c_se: list[list[float]]
    block_b_from_condition1: Optional[list[list[float]]] = None
    # residuals within max(AUDIT_ABS_TOL, 3 SE) entrywise
    first_holds: Optional[bool] = None
    second_holds: Optional[bool] = None


class BartlettPoint(BaseModel):
    theta: list[float]
    cond1: list[float]
    cond1_error: float
    cond2: list[list[float]]
    cond2_error: float
    boundary_difference: Optional[list[float]] = None
    boundary: list[BoundaryVerdict] = []
    full_identities: Optional[FullIdentityResidual] = None
    tolerance: float
    verdict: Verdict
    explanation: str = ""


class BartlettReport(BaseModel):
    model: str
    v_scale: str
    support_depends_on_theta: bool = False
    points: list[BartlettPoint]

    @property
    def theta_grid(self) -> list[list[float]]:
        return [p.theta for p in self.points]

    @property
    def verdicts(self) -> list[str]:
        return [p.verdict for p in self.points]

    def worst_residual(self) -> float:
        worst = 0.0
        for p in self.points:
            worst = max(worst, float(np.max(np.abs(p.cond1))), float(np.max(np.abs(p.cond2))))
        return worst


class TransformRanking(BaseModel):
    transform: str
    worst_residual: float
    report: BartlettReport


class HessianEstimate(BaseModel):
    matrix: list[list[float]]
    se: Optional[list[list[float]]] = None
    method: Literal["closed-form", "monte-carlo"]
    theta: list[float]
    n_obs: int
    n_mc: Optional[int] = None

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)


class MhleSolution(BaseModel):
    model: str
    theta: ParameterVector
    v: UnobservableVector
    h_value: float
    score: list[float]
    observed_hessian: list[list[float]]
    expected_hessian: Optional[list[list[float]]] = None
    expected_method: Optional[str] = None
    inverse_expected: Optional[list[list[float]]] = None
    expected_pd: Optional[bool] = None
    hessian_point: Literal["theta_hat", "true_theta"] = "theta_hat"
    status: SolveStatus
    iterations: int
    message: str = ""

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate([self.theta.array, self.v.array])


class MarginalFit(BaseModel):
    model: str
    theta: ParameterVector
    loglik: float
    iterations: int
    converged: bool


class FitReport(BaseModel):
    solution: MhleSolution
    marginal: Optional[MarginalFit] = None


class SamplingMoments(BaseModel):
    """Monte Carlo moments of the MHLE errors against the Hessian-based values."""

    model: str
    theta: list[float]
    n: int
    n_mc: int
    seed: int
    cov_theta_v: float
    cov_theta_v_se: float
    cov_expected: float
    var_v: float
    var_v_se: float
    var_v_exact: float
    tau2_v: float
    excess: float
    excess_se: float


class RTermDecomposition(BaseModel):
    phi_true: list[float]
    phi_hat: list[float]
    leading: list[float]
    remainder: list[float]
    hessian_point: Literal["theta_hat", "true_theta"]


class DensityGrid(BaseModel):
    """Normalized 1-D density tabulated on increasing nodes.

    `log_density` is unnormalized; the normalized density is
    exp(log_density - log_normalizer).
    """

    support: Interval
    nodes: list[float] = Field(min_length=3)
    log_density: list[float]
    log_normalizer: float
    scale_label: str = "v"

    @model_validator(mode="after")
    def _shape(self):
        if len(self.nodes) != len(self.log_density):
            raise ValueError("nodes and log_density differ in length")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        return self

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.nodes, dtype=float)

    def density(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_density, dtype=float) - self.log_normalizer)

    def cell_masses(self) -> np.ndarray:
        f = self.density()
        return 0.5 * (f[1:] + f[:-1]) * np.diff(self.x)

    def total_mass(self) -> float:
        return float(self.cell_masses().sum())

    def cdf(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.cell_masses())])

    def evaluate(self, points) -> np.ndarray:
        """Normalized density at arbitrary points (log-linear interpolation, zero outside)."""
        points = np.asarray(points, dtype=float)
        logf = np.interp(points, self.x, np.asarray(self.log_density), left=-np.inf, right=-np.inf)
        return np.exp(logf - self.log_normalizer)

    def quantile(self, p: float) -> float:
        cdf = self.cdf() / self.total_mass()
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        inverse = PchipInterpolator(cdf[keep], self.x[keep])
        return float(inverse(np.clip(p, 0.0, 1.0)))

    def mass_between(self, a: float, b: float) -> float:
        cdf = self.cdf()
        return float(np.interp(b, self.x, cdf) - np.interp(a, self.x, cdf))

    def pushforward(self, nodes, log_abs_deriv, support: Interval, scale_label: str) -> "DensityGrid":
        """The same law on nodes T(x_i) of a strictly monotone map T.

        `log_abs_deriv` holds log|T'(x_i)|; the normalizer is carried over.
        """
        y = np.asarray(nodes, dtype=float)
        logd = np.asarray(self.log_density, dtype=float) - np.asarray(log_abs_deriv, dtype=float)
        if y[-1] < y[0]:
            y, logd = y[::-1], logd[::-1]
        return DensityGrid(support=support, nodes=y.tolist(), log_density=logd.tolist(),
                           log_normalizer=self.log_normalizer, scale_label=scale_label)


class HdpInterval(BaseModel):
    level: float
    lower: float
    upper: float
    c: Optional[float] = None
    scale: str = "r"
    intervals: list[tuple[float, float]] = []

    @model_validator(mode="after")
    def _ordered(self):
        if self.lower > self.upper:
            raise ValueError("HDP interval needs lower <= upper")
        if not self.intervals:
            self.intervals.append((self.lower, self.upper))
        return self

    def covers(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)


class PredictiveTriple(BaseModel):
    """Pivotal, flat-prior posterior and h-distribution on shared v nodes."""

    model: str
    n: int
    param_scale: ParamScale
    prior: FlatPrior
    pivotal: DensityGrid
    posterior: DensityGrid
    h_dist: DensityGrid
    pivot_nodes: list[float]
    pivot_log_jacobian: list[float]
    pivot_label: str = "r"


class TripleDistances(BaseModel):
    sup_norm: dict[str, float]
    total_variation: dict[str, float]


class Prediction(BaseModel):
    """Predictive triple, its distances and HDP intervals on the pivot and observation scales."""

    triple: PredictiveTriple
    distances: TripleDistances
    alpha: float
    hdp: dict[str, HdpInterval]
    hdp_observation: dict[str, tuple[float, float]]


class ExperimentConfig(BaseModel):
    model: str = "exp-future-log"
    theta: list[float] = [1.0]
    n: int = Field(default=10, ge=1)
    n_grid: list[int] = []
    replications: int = Field(default=10_000, ge=100)
    alphas: list[float] = [0.05]
    seed: int = Field(ge=0)
    methods: list[CoverageMethod] = ["hessian-normal", "aphl", "pivotal", "posterior-flat"]
    param_scale: ParamScale = "natural"
    prior: FlatPrior = "flat_lambda"

    @field_validator("theta", "n_grid", "alphas", "methods", mode="before")
    @classmethod
    def _split_lists(cls, value):
        return _split_list(value)

    @field_validator("alphas")
    @classmethod
    def _alpha_range(cls, alphas):
        for alpha in alphas:
            if not 0.0 < alpha < 1.0:
                raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return alphas

    @field_validator("n_grid")
    @classmethod
    def _n_positive(cls, n_grid):
        if any(n < 1 for n in n_grid):
            raise ValueError("every n in n_grid must be >= 1")
        return n_grid

    @property
    def sizes(self) -> list[int]:
        return self.n_grid or [self.n]


class CoverageRow(BaseModel):
    method: CoverageMethod
    alpha: float
    n: int
    replications: int
    coverage: float = Field(ge=0.0, le=1.0)
    se: float
    mean_width: float


class CoverageResult(BaseModel):
    model: str
    seed: int
    rows: list[CoverageRow]

    def row(self, method: str, alpha: float, n: int) -> CoverageRow:
        for row in self.rows:
            if row.method == method and math.isclose(row.alpha, alpha) and row.n == n:
                return row
        raise KeyError((method, alpha, n))


class DualityResult(BaseModel):
    n: int
    prior: FlatPrior
    replications: int
    posterior_mean_term: float
    posterior_var_term: float
    posterior_total: float
    sampling_mean_term: float
    sampling_var_term: float
    sampling_var_term_se: float
    sampling_total: float
    sampling_total_se: float
    sampling_self_gap: float
    sampling_self_gap_se: float
    mean_gap: float
    var_gap: float
    var_gap_se: float


class RTermRow(BaseModel):
    n: int
    n_mc: int
    mean_r: float
    mean_r_se: float
    var_r: float
    var_r_se: float
    mean_abs_r: float
    mean_z: float
    mean_z_se: float
    var_z: float
    var_z_se: float
    var_z_expected: float
    cov_theta_v: float
    cov_theta_v_se: float
    cov_expected: float
    var_log_y: float
    var_log_y_se: float


class RTermStudy(BaseModel):
    """Remainder-term and Z moments per n plus the limiting constants they are read against."""

    model: str
    theta: list[float]
    seed: int
    rows: list[RTermRow]
    euler_gamma: float
    var_log_y_limit: float
    z_limit_ratio: float
    z_limit_ratio_quoted: float = 5.0
    z_limit_ratio_flagged: bool


class ScaleRow(BaseModel):
    n: int
    param_scale: ParamScale
    prior: FlatPrior
    status: Literal["ok", "ImproperPosterior"] = "ok"
    sup_h_vs_pivotal: Optional[float] = None
    sup_h_vs_posterior: Optional[float] = None
    sup_pivotal_vs_posterior: Optional[float] = None
    tv_h_vs_pivotal: Optional[float] = None
    tv_h_vs_posterior: Optional[float] = None
    tv_pivotal_vs_posterior: Optional[float] = None


class ReproCheck(BaseModel):
    name: str
    computed: Optional[float] = None
    expected: Optional[float] = None
    tolerance: Optional[float] = None
    status: Literal["PASS", "FAIL", "REPORT"]
    detail: str = ""


class ReproReport(BaseModel):
    seed: int
    checks: list[ReproCheck]

    @property
    def failed(self) -> list[ReproCheck]:
        return [check for check in self.checks if check.status == "FAIL"]


class RunManifest(BaseModel):
    subcommand: str
    config: dict
    seed: Optional[int] = None
    tool_version: str
    input_digests: dict[str, str] = {}
    timestamp: str
    jobs: int = 1
