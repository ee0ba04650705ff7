"""Instance generators and the experiment runner.

Random instances use an explicitly specified PRNG (SplitMix64 driving
Box-Muller normals) rather than a platform RNG so that a seed pins the
instance bit-for-bit across languages and library versions. The lollipop
instance carries the Metropolis-Hastings consensus matrix of the graph,
damped below the unit circle so that the zero gain is a feasible start.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descent import gd_run, ngd_run, qn_run, rate_fit, trace_to_csv
from .errors import LQRGradError
from .flows import FlowConfig, export_trajectory, integrate
from .matrices import spectral_radius
from .model import LQRInstance, optimal_solution
from .structured import SparsityPattern, pgd_run

_MASK64 = 0xFFFFFFFFFFFFFFFF

PRNG_NAME = "splitmix64+box-muller"
DEFAULT_TARGET_RHO = 0.9
DEFAULT_N = 20
DEFAULT_LOLLIPOP_DAMPING = 0.95


class SplitMix64:
    """SplitMix64 PRNG (public-domain reference constants)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_open_unit(self) -> float:
        """Uniform double in (0, 1]."""
        return ((self.next_uint64() >> 11) + 1) * 2.0**-53

    def next_unit(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_uint64() >> 11) * 2.0**-53


class NormalStream:
    """Standard normals via the Box-Muller transform on SplitMix64 draws."""

    def __init__(self, seed: int):
        self._rng = SplitMix64(seed)
        self._spare: float | None = None

    def next(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self._rng.next_open_unit()
        u2 = self._rng.next_unit()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        return np.array([[self.next() for _ in range(cols)] for _ in range(rows)])


def gen_random_instance(n: int, seed: int, target_rho: float = DEFAULT_TARGET_RHO) -> LQRInstance:
    """Standard-normal A rescaled to the target spectral radius; B=Q=R=Sigma=I."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0.0 < target_rho < 1.0):
        raise ValueError("target_rho must lie in (0, 1)")
    for attempt in range(5):
        A = NormalStream(seed + attempt).matrix(n, n)
        rho = spectral_radius(A)
        if rho > 0.0:
            break
    else:
        raise ValueError(f"drew a degenerate (rho = 0) matrix 5 times from seed {seed}")
    A = A * (target_rho / rho)
    eye = np.eye(n)
    return LQRInstance(A=A, B=eye, Q=eye, R=eye, Sigma=eye)


def metropolis_hastings_matrix(adjacency: np.ndarray) -> np.ndarray:
    """Row-stochastic Metropolis-Hastings consensus weights of a graph.

    Off-diagonal weight 1 / (1 + max(d_i, d_j)) on each edge, diagonal
    absorbing the remainder; the result is symmetric and doubly stochastic.
    """
    adjacency = np.asarray(adjacency, dtype=bool)
    degrees = adjacency.sum(axis=1)
    n = adjacency.shape[0]
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and adjacency[i, j]:
                W[i, j] = 1.0 / (1.0 + max(degrees[i], degrees[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


def lollipop_adjacency(clique: int, path: int) -> np.ndarray:
    """Complete graph on ``clique`` nodes bridged to a path on ``path`` nodes."""
    if clique < 2:
        raise ValueError("clique must have at least 2 nodes")
    if path < 1:
        raise ValueError("path must have at least 1 node")
    n = clique + path
    adj = np.zeros((n, n), dtype=bool)
    adj[:clique, :clique] = True
    adj[np.diag_indices(n)] = False
    adj[clique - 1, clique] = adj[clique, clique - 1] = True
    for i in range(clique, n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return adj


def gen_lollipop_instance(
    clique: int,
    path: int,
    damping: float = DEFAULT_LOLLIPOP_DAMPING,
    diag_in_pattern: bool = True,
) -> tuple[LQRInstance, SparsityPattern]:
    """Lollipop-graph consensus instance plus its gain sparsity pattern.

    The raw Metropolis-Hastings matrix has unit spectral radius (it is
    stochastic), so A is scaled by ``damping`` < 1 to make the zero gain
    stabilizing. The pattern allows gain entries on graph edges, plus the
    diagonal by default so each node may use its own state.
    """
    if not (0.0 < damping < 1.0):
        raise ValueError("damping must lie in (0, 1)")
    adj = lollipop_adjacency(clique, path)
    A = damping * metropolis_hastings_matrix(adj)
    n = adj.shape[0]
    mask = adj.copy()
    if diag_in_pattern:
        mask[np.diag_indices(n)] = True
    eye = np.eye(n)
    inst = LQRInstance(A=A, B=eye, Q=eye, R=eye, Sigma=eye)
    return inst, SparsityPattern(mask)


ALGORITHMS = ("gd", "ngd", "qn", "pgd", "flow")
INSTANCE_KINDS = ("random", "lollipop", "file")


@dataclass
class ExperimentConfig:
    """Flat description of one benchmark run; JSON round-trippable."""

    algorithm: str
    instance_kind: str = "random"
    n: int = DEFAULT_N
    seed: int = 0
    target_rho: float = DEFAULT_TARGET_RHO
    clique: int = 10
    path_nodes: int = 10
    damping: float = DEFAULT_LOLLIPOP_DAMPING
    instance_file: str | None = None
    pattern_file: str | None = None
    sigma_scale: float = 1.0
    tol: float | None = None
    max_iter: int | None = None
    stepmode: str = "fixed_L0"
    flow_kind: str = "gradient"
    gamma: float = 1.0
    t_end: float = 50.0
    v_target_rel: float | None = None
    output_dir: str = "runs"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.instance_kind not in INSTANCE_KINDS:
            raise ValueError(f"instance kind must be one of {INSTANCE_KINDS}")
        if self.sigma_scale <= 0.0:
            raise ValueError("sigma_scale must be positive")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)


@dataclass
class RunArtifact:
    config_path: str
    instance_path: str
    trace_path: str
    summary_path: str
    summary: dict = field(default_factory=dict)


def _build_instance(config: ExperimentConfig) -> tuple[LQRInstance, SparsityPattern | None]:
    pattern = None
    if config.instance_kind == "random":
        inst = gen_random_instance(config.n, config.seed, config.target_rho)
    elif config.instance_kind == "lollipop":
        inst, pattern = gen_lollipop_instance(config.clique, config.path_nodes, config.damping)
    else:
        if not config.instance_file:
            raise ValueError("instance_kind 'file' needs instance_file")
        inst = LQRInstance.load(config.instance_file)
    if config.pattern_file:
        pattern = SparsityPattern.load(config.pattern_file)
    if config.sigma_scale != 1.0:
        inst = LQRInstance(
            A=inst.A, B=inst.B, Q=inst.Q, R=inst.R, Sigma=config.sigma_scale * inst.Sigma
        )
    return inst, pattern


def run(config: ExperimentConfig) -> RunArtifact:
    """Execute one experiment and write config echo, instance, trace, summary.

    On an algorithm failure a failure record is written in place of the
    summary and the error re-raised, leaving no partial trace file behind.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_path = out / "config.json"
    instance_path = out / "instance.json"
    trace_path = out / "trace.csv"
    summary_path = out / "summary.json"

    with open(config_path, "w") as fh:
        json.dump(config.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")

    try:
        inst, pattern = _build_instance(config)
        inst.save(instance_path)
        K0 = np.zeros((inst.m, inst.n))
        summary: dict = {"algorithm": config.algorithm, "prng": PRNG_NAME}

        if config.algorithm in ("gd", "ngd", "qn"):
            opt = optimal_solution(inst, K0)
            runner = {"gd": gd_run, "ngd": ngd_run, "qn": qn_run}[config.algorithm]
            kwargs = {}
            if config.tol is not None:
                kwargs["grad_tol" if config.algorithm != "qn" else "tol"] = config.tol
            if config.max_iter is not None:
                kwargs["max_iter"] = config.max_iter
            trace = runner(inst, K0, **kwargs)
            trace_to_csv(trace, trace_path, f_star=opt.f_star)
            summary["f_star"] = opt.f_star
            summary["iterations"] = trace.records[-1].j
            summary["terminated_by"] = trace.terminated_by
            summary["rate_fit"] = fit_trace_csv(trace_path, opt.f_star)
            gaps = trace.costs() - opt.f_star
            for rel in (1e-6, 1e-8):
                hits = np.nonzero(gaps <= rel * max(gaps[0], 1e-300))[0]
                summary[f"iters_to_gap_{rel:g}"] = int(hits[0]) if hits.size else None
        elif config.algorithm == "pgd":
            if pattern is None:
                pattern = SparsityPattern.full(inst.m, inst.n)
            pattern.save(out / "pattern.json")
            kwargs = {"stepmode": config.stepmode}
            if config.tol is not None:
                kwargs["grad_tol"] = config.tol
            if config.max_iter is not None:
                kwargs["max_iter"] = config.max_iter
            trace = pgd_run(inst, pattern, K0, **kwargs)
            trace_to_csv(trace, trace_path, proj_grad=True)
            proj_sq = np.array([r.proj_grad_norm for r in trace.records]) ** 2
            running_min = np.minimum.accumulate(proj_sq)
            sublinear_c = float(np.max(running_min * (1.0 + np.arange(len(proj_sq)))))
            summary["iterations"] = trace.records[-1].j
            summary["terminated_by"] = trace.terminated_by
            summary["final_proj_grad_norm"] = trace.records[-1].proj_grad_norm
            summary["sublinear_constant"] = sublinear_c
        else:
            v_target = None
            if config.v_target_rel is not None:
                from .model import certify

                opt = optimal_solution(inst, K0)
                v_target = config.v_target_rel * (certify(inst, K0).cost - opt.f_star)
            cfg = FlowConfig(
                kind=config.flow_kind, gamma=config.gamma, t_end=config.t_end,
                v_target=v_target,
            )
            traj = integrate(inst, K0, cfg)
            export_trajectory(traj, trace_path, gains_path=out / "gains.json")
            summary["f_star"] = traj.f_star
            summary["t_final"] = traj.final.t
            summary["v_final"] = traj.final.V
            if v_target is not None:
                summary["v_target"] = v_target
                summary["time_to_v_target"] = traj.time_to_v(v_target)
    except LQRGradError as exc:
        trace_path.unlink(missing_ok=True)
        failure = {"error": type(exc).__name__, "message": str(exc)}
        with open(summary_path, "w") as fh:
            json.dump(failure, fh, sort_keys=True, indent=1)
            fh.write("\n")
        raise

    with open(summary_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return RunArtifact(
        config_path=str(config_path),
        instance_path=str(instance_path),
        trace_path=str(trace_path),
        summary_path=str(summary_path),
        summary=summary,
    )


def fit_trace_csv(path, f_star: float | None = None) -> dict:
    """Rate-fit the f column of an emitted trace CSV.

    Uses the gap column when f_star is not given. Returns the fit kind and
    coefficient as a plain dict for JSON summaries.
    """
    from .descent import IterateRecord, IterateTrace  # local to avoid cycle confusion

    js, fs = [], []
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        col = {name: idx for idx, name in enumerate(header)}
        for line in fh:
            parts = line.rstrip("\n").split(",")
            js.append(int(parts[col["j"]]))
            if f_star is None:
                if "gap" not in col or parts[col["gap"]] == "":
                    raise ValueError("trace has no usable gap column; pass f_star")
                fs.append(float(parts[col["gap"]]))
            else:
                fs.append(float(parts[col["f"]]))
    trace = IterateTrace(
        records=[
            IterateRecord(j=j, K=np.empty((0, 0)), f=f, grad_norm=0.0, eta=0.0, rho=0.0)
            for j, f in zip(js, fs)
        ]
    )
    kind, coefficient = rate_fit(trace, 0.0 if f_star is None else f_star)
    return {"kind": kind, "coefficient": coefficient}
