"""Simulation studies: scenario builders, contamination, MSE and a Monte Carlo runner.

Scenarios
---------
spline
    Second-order integrated random walk tracking ``(-cos t, -sin t)`` from
    noisy observations of the second component, ``t_k = 0.04 pi k``.
vdp
    Euler-discretized Van der Pol oscillator with a simulated stochastic
    ground truth; the first state component is observed.
jump
    Spline dynamics on ``[0, 2 pi]`` where the observed sinusoid jumps by
    ``jump_size`` at ``t = pi``.
jump-two-sensor
    The jump track seen by two direct sensors: a reliable one reporting
    every 10th step and a frequent one subject to contamination.

Every Monte Carlo run draws from its own Philox stream keyed by
``(seed, run index)``, so runs are independent of execution order.
"""
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .gauss_newton import SmootherConfig, run
from .model import (LinearMeasurement, LinearProcess, NoisePartition, PrecisionSpec,
                    ProblemSpec, ProcessModel)
from .presets import PRESET_NAMES, make_preset, trend_robust_partition

__all__ = [
    "ContaminationScheme",
    "parse_scheme",
    "sample_noise",
    "VanDerPolProcess",
    "Scenario",
    "build_spline",
    "build_vdp",
    "build_jump",
    "build_scenario",
    "mse",
    "make_rng",
    "ExperimentSpec",
    "SmootherStats",
    "RunStats",
    "run_experiment",
    "EXPERIMENTS",
]

EXPERIMENTS = ("spline", "vdp", "jump", "jump-two-sensor")


# ---------------------------------------------------------------- noise

@dataclass(frozen=True)
class ContaminationScheme:
    """Measurement noise law: nominal Gaussian, optionally mixed with outliers.

    ``kind`` is ``"nominal"``, ``"gauss"`` (outliers ``N(0, phi)`` with
    probability ``p``) or ``"uniform"`` (outliers ``U(a, b)`` with probability
    ``p``). ``base_var=None`` lets the scenario supply its nominal variance.
    """

    kind: str = "nominal"
    p: float = 0.0
    phi: float = 1.0
    a: float = -10.0
    b: float = 10.0
    base_var: float = None

    def __post_init__(self):
        if self.kind not in ("nominal", "gauss", "uniform"):
            raise ValueError(f"unknown contamination kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.kind == "gauss" and not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.kind == "uniform" and not self.a < self.b:
            raise ValueError("need a < b")
        if self.base_var is not None and not self.base_var > 0:
            raise ValueError("base_var must be positive")

    def label(self):
        if self.kind == "gauss":
            return f"gauss:{self.p:g}:{self.phi:g}"
        if self.kind == "uniform":
            return f"uniform:{self.p:g}:{self.a:g}:{self.b:g}"
        return "nominal"


def parse_scheme(text):
    """Parse ``nominal``, ``gauss:p:phi`` or ``uniform:p:a:b``."""
    parts = text.strip().lower().split(":")
    try:
        if parts[0] == "nominal" and len(parts) == 1:
            return ContaminationScheme()
        if parts[0] == "gauss" and len(parts) == 3:
            return ContaminationScheme("gauss", p=float(parts[1]), phi=float(parts[2]))
        if parts[0] == "uniform" and len(parts) == 4:
            return ContaminationScheme("uniform", p=float(parts[1]),
                                       a=float(parts[2]), b=float(parts[3]))
    except ValueError as exc:
        raise ValueError(f"bad contamination scheme {text!r}: {exc}") from None
    raise ValueError(f"bad contamination scheme {text!r}")


def sample_noise(scheme, rng, size=None):
    """Draw from the contamination mixture (a scalar when ``size`` is None)."""
    if scheme.base_var is None:
        raise ValueError("scheme has no base variance")
    shape = () if size is None else size
    out = rng.normal(0.0, np.sqrt(scheme.base_var), shape)
    if scheme.kind != "nominal" and scheme.p > 0:
        hit = rng.random(shape) < scheme.p
        if scheme.kind == "gauss":
            bad = rng.normal(0.0, np.sqrt(scheme.phi), shape)
        else:
            bad = rng.uniform(scheme.a, scheme.b, shape)
        out = np.where(hit, bad, out)
    return float(out) if size is None else out


def make_rng(seed, run_index):
    """Independent Philox stream for one Monte Carlo run."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------- models

class VanDerPolProcess(ProcessModel):
    """Euler step of the Van der Pol oscillator."""

    def __init__(self, mu, dt, g0):
        self.mu = float(mu)
        self.dt = float(dt)
        self.g0 = np.asarray(g0, dtype=float)
        self.n = 2

    def step(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x1 + x2 * self.dt,
                         x2 + (self.mu * (1.0 - x1 ** 2) * x2 - x1) * self.dt], axis=-1)

    def step_jacobian(self, x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0
        J[..., 0, 1] = self.dt
        J[..., 1, 0] = (-2.0 * self.mu * x1 * x2 - 1.0) * self.dt
        J[..., 1, 1] = 1.0 + self.mu * (1.0 - x1 ** 2) * self.dt
        return J

    def g(self, k, x_prev):
        return self.step(x_prev)

    def jacobian(self, k, x_prev):
        return self.step_jacobian(x_prev)

    def predict(self, x):
        return self.step(x[:-1])

    def jacobians(self, x):
        return self.step_jacobian(x[:-1])


def _spline_matrices(dt):
    G = np.array([[1.0, 0.0], [dt, 1.0]])
    Q = np.array([[dt, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt ** 3 / 3.0]])
    return G, Q


@dataclass
class Scenario:
    """Everything needed to simulate data and pose smoothing problems.

    ``Rinv`` holds the nominal measurement precisions, with zero rows and
    columns at missing measurements. ``noisy`` flags the measurement
    components that receive the contamination scheme; the others get plain
    Gaussian noise of variance ``meas_var``.
    """

    name: str
    process: ProcessModel
    H: np.ndarray
    Qinv: np.ndarray
    Rinv: np.ndarray
    times: np.ndarray
    meas_var: float
    truth: np.ndarray = None
    mse_components: tuple = None
    noisy: tuple = None
    partitions: dict = field(default_factory=dict)
    q_var: float = None
    x0: np.ndarray = None

    @property
    def N(self):
        return len(self.times)

    @property
    def n(self):
        return self.process.n

    @property
    def m(self):
        return self.H.shape[0]

    def simulate(self, rng):
        """Ground truth for one run; deterministic scenarios ignore ``rng``."""
        if self.truth is not None:
            return self.truth.copy()
        x = np.empty((self.N, self.n))
        prev = self.x0
        sd = np.sqrt(self.q_var)
        for k in range(self.N):
            prev = self.process.step(prev) + rng.normal(0.0, sd, self.n)
            x[k] = prev
        return x

    def measure(self, truth, rng, scheme):
        """Noisy measurements of ``truth``; missing entries are set to 0."""
        if scheme.base_var is None:
            scheme = replace(scheme, base_var=self.meas_var)
        clean = truth @ self.H.T
        noise = np.empty_like(clean)
        noisy = range(self.m) if self.noisy is None else self.noisy
        for i in range(self.m):
            if i in noisy:
                noise[:, i] = sample_noise(scheme, rng, self.N)
            else:
                noise[:, i] = rng.normal(0.0, np.sqrt(self.meas_var), self.N)
        z = clean + noise
        missing = np.einsum("kii->ki", self.Rinv) == 0
        z[missing] = 0.0
        return z

    def partition(self, name, r=4.0, s=4.0):
        if name in self.partitions:
            return self.partitions[name](r, s)
        return make_preset(name, self.n, self.m, r, s)

    def problem(self, z, partition):
        return ProblemSpec(self.process, LinearMeasurement(self.H, z), partition,
                           PrecisionSpec(self.Qinv, self.Rinv))


def build_spline(N=100, dt=0.04 * np.pi, meas_var=0.25):
    """Spline reconstruction of ``x(t) = (-cos t, -sin t)`` from ``x_2`` samples.

    The prior mean of the first state is the model prediction from the true
    state at ``t = 0``.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    G, Q = _spline_matrices(dt)
    t = dt * np.arange(1, N + 1)
    truth = np.column_stack([-np.cos(t), -np.sin(t)])
    g0 = G @ np.array([-1.0, 0.0])
    return Scenario(
        name="spline",
        process=LinearProcess(G, g0),
        H=np.array([[0.0, 1.0]]),
        Qinv=np.broadcast_to(np.linalg.inv(Q), (N, 2, 2)).copy(),
        Rinv=np.full((N, 1, 1), 1.0 / meas_var),
        times=t,
        meas_var=meas_var,
        truth=truth,
        mse_components=(0, 1),
    )


def build_vdp(N=164, mu=2.0, dt=None, q_var=0.01, meas_var=1.0, x0=(0.0, -0.5)):
    """Van der Pol tracking from noisy observations of ``x_1``.

    ``dt`` defaults to ``16 / N``. The ground truth is simulated per run by
    :meth:`Scenario.simulate` with process noise variance ``q_var``.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    dt = 16.0 / N if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    proc = VanDerPolProcess(mu, dt, g0=np.zeros(2))
    proc.g0 = proc.step(x0)
    return Scenario(
        name="vdp",
        process=proc,
        H=np.array([[1.0, 0.0]]),
        Qinv=np.broadcast_to(np.eye(2) / q_var, (N, 2, 2)).copy(),
        Rinv=np.full((N, 1, 1), 1.0 / meas_var),
        times=dt * np.arange(1, N + 1),
        meas_var=meas_var,
        mse_components=(0, 1),
        q_var=q_var,
        x0=x0,
    )


def build_jump(N=20, jump_size=6.0, two_sensor=False, meas_var=0.05, period=2 * np.pi,
               sensor1_every=10):
    """Sinusoid with a step of ``jump_size`` at ``t = period / 2``.

    Smaller jumps are absorbed by the spline process prior at this sampling
    rate, so the default is large enough to defeat the L2 smoother. The
    two-sensor variant observes ``x_2`` twice: sensor 1 (index 0) only every
    ``sensor1_every`` steps, sensor 2 (index 1) at every step. Sensor 2 is
    the one exposed to contamination.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    dt = period / N
    G, Q = _spline_matrices(dt)
    t = dt * np.arange(1, N + 1)
    truth = np.column_stack([-np.cos(t),
                             -np.sin(t) + jump_size * (t >= period / 2 - 1e-12)])
    g0 = G @ np.array([-1.0, 0.0])
    Qinv = np.broadcast_to(np.linalg.inv(Q), (N, 2, 2)).copy()
    if not two_sensor:
        return Scenario(
            name="jump", process=LinearProcess(G, g0), H=np.array([[0.0, 1.0]]),
            Qinv=Qinv, Rinv=np.full((N, 1, 1), 1.0 / meas_var), times=t,
            meas_var=meas_var, truth=truth, mse_components=(1,))
    Rinv = np.zeros((N, 2, 2))
    Rinv[:, 1, 1] = 1.0 / meas_var
    has_s1 = (np.arange(1, N + 1) % sensor1_every) == 0
    Rinv[has_s1, 0, 0] = 1.0 / meas_var
    return Scenario(
        name="jump-two-sensor", process=LinearProcess(G, g0),
        H=np.array([[0.0, 1.0], [0.0, 1.0]]), Qinv=Qinv, Rinv=Rinv, times=t,
        meas_var=meas_var, truth=truth, mse_components=(1,), noisy=(1,),
        partitions={
            # Student's t only on the unreliable sensor
            "t-robust": lambda r, s: NoisePartition(2, 2, (), (1,), r, s),
            "trend-robust": lambda r, s: trend_robust_partition(2, 2, trusted=(0,), r=r, s=s),
        },
    )


def build_scenario(name, **kwargs):
    if name == "spline":
        return build_spline(**kwargs)
    if name == "vdp":
        return build_vdp(**kwargs)
    if name == "jump":
        return build_jump(**kwargs)
    if name == "jump-two-sensor":
        return build_jump(two_sensor=True, **kwargs)
    raise ValueError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")


# ---------------------------------------------------------------- metric

def mse(truth, estimate, components=None):
    """``1/N sum_k sum_i (truth[k, i] - estimate[k, i])^2`` over the chosen components."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise DimensionMismatch(f"shapes differ: {truth.shape} vs {estimate.shape}")
    if truth.ndim == 1:
        truth, estimate = truth[:, None], estimate[:, None]
    diff = truth - estimate
    if components is not None:
        diff = diff[:, list(components)]
    return float((diff ** 2).sum() / len(truth))


# ---------------------------------------------------------------- Monte Carlo

DEFAULT_SMOOTHERS = {
    "spline": ("l2", "t-robust"),
    "vdp": ("l2", "t-robust"),
    "jump": ("l2", "t-trend"),
    "jump-two-sensor": ("l2", "t-robust", "double-t", "trend-robust"),
}

# Cauchy innovations let the trend-robust smoother leave the smooth-ramp
# local minimum that the null start leads to under r = 4.
DEFAULT_DOF = {"jump-two-sensor": (1.0, 4.0)}

DEFAULT_SCHEMES = {
    "spline": ContaminationScheme(),
    "vdp": ContaminationScheme(),
    "jump": ContaminationScheme(),
    "jump-two-sensor": ContaminationScheme("gauss", p=0.2, phi=100.0),
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A Monte Carlo study.

    ``smoothers`` lists preset names (or scenario-specific names such as
    ``"trend-robust"``); ``scenario_args`` are forwarded to the builder.
    """

    name: str
    runs: int = 200
    seed: int = 0
    smoothers: tuple = None
    scheme: ContaminationScheme = None
    dof: tuple = None
    config: SmootherConfig = None
    scenario_args: tuple = ()

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; expected one of {EXPERIMENTS}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.smoothers is None:
            object.__setattr__(self, "smoothers", DEFAULT_SMOOTHERS[self.name])
        if self.scheme is None:
            object.__setattr__(self, "scheme", DEFAULT_SCHEMES[self.name])
        if self.dof is None:
            object.__setattr__(self, "dof", DEFAULT_DOF.get(self.name, (4.0, 4.0)))
        known = set(PRESET_NAMES) | {"trend-robust"}
        for name in self.smoothers:
            if name not in known:
                raise ValueError(f"unknown smoother {name!r}")

    def scenario(self):
        return build_scenario(self.name, **dict(self.scenario_args))


@dataclass
class SmootherStats:
    """Per-smoother results over all runs (``nan`` MSE marks a failed run)."""

    name: str
    mse: np.ndarray
    iterations: np.ndarray
    statuses: list
    failures: int
    descent_violations: int

    def _ok(self):
        return self.mse[np.isfinite(self.mse)]

    @property
    def median(self):
        return float(np.median(self._ok())) if self._ok().size else float("nan")

    @property
    def q025(self):
        return float(np.quantile(self._ok(), 0.025)) if self._ok().size else float("nan")

    @property
    def q975(self):
        return float(np.quantile(self._ok(), 0.975)) if self._ok().size else float("nan")

    @property
    def mean_iterations(self):
        return float(np.mean(self.iterations))

    def summary(self):
        return {
            "smoother": self.name,
            "runs": int(len(self.mse)),
            "median_mse": self.median,
            "q025": self.q025,
            "q975": self.q975,
            "mean_iterations": self.mean_iterations,
            "failures": int(self.failures),
            "descent_violations": int(self.descent_violations),
        }


@dataclass
class RunStats:
    experiment: str
    scheme: str
    seed: int
    runs: int
    smoothers: dict
    trajectories: list = None

    def __getitem__(self, name):
        return self.smoothers[name]

    @property
    def aborted(self):
        return any(s.failures for s in self.smoothers.values())

    def to_json(self):
        doc = {
            "experiment": self.experiment,
            "scheme": self.scheme,
            "seed": self.seed,
            "runs": self.runs,
            "smoothers": [
                {**s.summary(), "mse": [float(v) for v in s.mse],
                 "statuses": list(s.statuses)}
                for s in self.smoothers.values()
            ],
        }
        return json.dumps(doc, indent=2, allow_nan=True)


def _descent_ok(result):
    objs = [rec.objective for rec in result.trace]
    if any(b > a for a, b in zip(objs, objs[1:])):
        return False
    return all(rec.delta <= 0 for rec in result.trace)


def _one_run(spec, scen, index, keep):
    rng = make_rng(spec.seed, index)
    truth = scen.simulate(rng)
    z = scen.measure(truth, rng, spec.scheme)
    r, s = spec.dof
    out = {}
    for name in spec.smoothers:
        prob = scen.problem(z, scen.partition(name, r, s))
        try:
            res = run(prob, None, spec.config)
        except NotPositiveDefinite:
            out[name] = (float("nan"), 0, "NotPositiveDefinite", True, None)
            continue
        est = res.x_hat
        out[name] = (mse(truth, est, scen.mse_components), res.iterations,
                     res.status.value, _descent_ok(res), est if keep else None)
    traj = (truth, z) if keep else None
    return index, out, traj


def _run_chunk(args):
    spec, indices, keep = args
    scen = spec.scenario()
    return [_one_run(spec, scen, i, keep) for i in indices]


def run_experiment(spec, n_jobs=1, keep_trajectories=False):
    """Run all smoothers of ``spec`` on ``spec.runs`` independent data sets.

    Failures (non-factorizable curvature) are counted per smoother and never
    stop the sweep. With ``keep_trajectories`` the returned stats carry,
    per run, ``(truth, z, {smoother: estimate})``.
    """
    indices = list(range(spec.runs))
    if n_jobs > 1:
        chunks = [indices[i::n_jobs] for i in range(n_jobs)]
        with ProcessPoolExecutor(n_jobs) as pool:
            results = [r for part in pool.map(_run_chunk, [(spec, c, keep_trajectories) for c in chunks])
                       for r in part]
    else:
        results = _run_chunk((spec, indices, keep_trajectories))
    results.sort(key=lambda item: item[0])

    smoothers = {}
    for name in spec.smoothers:
        rows = [out[name] for _, out, _ in results]
        smoothers[name] = SmootherStats(
            name=name,
            mse=np.array([row[0] for row in rows]),
            iterations=np.array([row[1] for row in rows]),
            statuses=[row[2] for row in rows],
            failures=sum(row[2] == "NotPositiveDefinite" for row in rows),
            descent_violations=sum(not row[3] for row in rows),
        )
    traj = None
    if keep_trajectories:
        traj = [(t[0], t[1], {name: out[name][4] for name in spec.smoothers})
                for _, out, t in results]
    return RunStats(spec.name, spec.scheme.label(), spec.seed, spec.runs, smoothers, traj)
