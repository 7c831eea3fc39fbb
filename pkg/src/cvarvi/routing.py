"""CVaR-based routing games on path flows.

Costs are attached to paths directly, as ``C_p(h, u)`` for the full flow
vector ``h``. The feasible set is the product over OD pairs of scaled
simplices {h_p >= 0, sum_{p in P_w} h_p = d_w}.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np
import yaml

from .errors import InvalidInputError, UnsupportedOperationError
from .feasible import PolyhedralSet
from .problem import AffineUniformModel, UncertainCostModel, ViProblem, empirical_map, exact_map

__all__ = [
    "BENCHMARK_ALPHA",
    "BENCHMARK_REFERENCE",
    "CweReport",
    "OdPair",
    "RoutingNetwork",
    "benchmark_instance",
    "load_network",
    "to_vi_problem",
    "verify_cwe",
]

BENCHMARK_ALPHA = 0.2
BENCHMARK_REFERENCE = np.array([89.52, 98.39, 72.09, 74.32, 95.68])


@dataclass(frozen=True)
class OdPair:
    origin: object
    destination: object
    demand: float


@dataclass(frozen=True)
class RoutingNetwork:
    """Vertices, OD pairs with demands, and paths tagged by OD index.

    ``path_od[p]`` is the OD index of path p; ``model`` evaluates the path
    costs for all paths from one shared uncertainty event.
    """

    vertices: tuple
    od_pairs: tuple[OdPair, ...]
    path_od: tuple[int, ...]
    model: UncertainCostModel

    def __post_init__(self):
        if any(od.demand < 0 for od in self.od_pairs):
            raise InvalidInputError("OD demands must be nonnegative")
        n_od = len(self.od_pairs)
        if any(not 0 <= w < n_od for w in self.path_od):
            raise InvalidInputError("path refers to an unknown OD pair")
        missing = set(range(n_od)) - set(self.path_od)
        if missing:
            raise InvalidInputError(f"OD pairs without paths: {sorted(missing)}")
        if self.model.n != len(self.path_od):
            raise InvalidInputError("cost model dimension must equal the number of paths")

    @property
    def n_paths(self) -> int:
        return len(self.path_od)

    @property
    def demands(self) -> np.ndarray:
        return np.array([od.demand for od in self.od_pairs], dtype=float)

    def paths_of(self, w: int) -> np.ndarray:
        return np.array([p for p, od in enumerate(self.path_od) if od == w], dtype=int)


def to_vi_problem(net: RoutingNetwork, alpha) -> ViProblem:
    groups = [net.paths_of(w) for w in range(len(net.od_pairs))]
    demands = net.demands
    if np.any(demands == 0):
        # a zero-demand simplex is the single point 0; keep it as a general set
        A_eq = np.zeros((len(groups), net.n_paths))
        for row, g in enumerate(groups):
            A_eq[row, g] = 1.0
        set_ = PolyhedralSet(-np.eye(net.n_paths), np.zeros(net.n_paths), A_eq, demands)
    else:
        set_ = PolyhedralSet.product_of_simplices(groups, demands, net.n_paths)
    return ViProblem(net.model, alpha, set_)


def benchmark_instance() -> tuple[RoutingNetwork, float, np.ndarray]:
    """Two-node network with three A->B paths and two B->A paths.

    Returns ``(network, alpha, reference_equilibrium)``.
    """
    A = np.array([
        [40.0, 0.0, 0.0, 20.0, 0.0],
        [0.0, 60.0, 0.0, 0.0, 20.0],
        [0.0, 0.0, 80.0, 0.0, 0.0],
        [8.0, 0.0, 0.0, 80.0, 0.0],
        [0.0, 4.0, 0.0, 0.0, 100.0],
    ])
    w = np.array([1000.0, 950.0, 3000.0, 1000.0, 1300.0])
    gains = np.array([3000.0, 0.0, 0.0, 4000.0, 0.0])
    noise_index = np.array([0, -1, -1, 1, -1])
    model = AffineUniformModel(A, w, gains, noise_index, m=2)
    net = RoutingNetwork(
        vertices=("A", "B"),
        od_pairs=(OdPair("A", "B", 260.0), OdPair("B", "A", 170.0)),
        path_od=(0, 0, 0, 1, 1),
        model=model,
    )
    return net, BENCHMARK_ALPHA, BENCHMARK_REFERENCE.copy()


@dataclass(frozen=True)
class CweReport:
    is_equilibrium: bool
    demand_residual: np.ndarray
    max_cost_gap: float
    used_path_tol: float
    cost_gap_tol: float
    min_flow: float
    path_costs: np.ndarray


def verify_cwe(net: RoutingNetwork, alpha, h, used_path_tol: float | None = None,
               cost_gap_tol: float | None = None, feas_tol: float | None = None,
               n_samples: int | None = None, rng=None) -> CweReport:
    """Check the two Wardrop conditions for the CVaR path costs at ``h``.

    Exact costs are used when the model has an exact CVaR map; otherwise
    ``n_samples`` shared events are drawn from ``rng``. A flow is feasible
    when every OD demand is met and no path flow is negative, both within
    ``feas_tol``.
    """
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.size != net.n_paths:
        raise InvalidInputError(f"flow has {h.size} entries, network has {net.n_paths} paths")
    problem = to_vi_problem(net, alpha)
    if net.model.exact_cvar_map is not None:
        costs = exact_map(problem, h)
    elif n_samples is not None:
        rng = np.random.default_rng(0) if rng is None else rng
        costs = empirical_map(problem, h, n_samples, rng)[0]
    else:
        raise UnsupportedOperationError("no exact CVaR map: pass n_samples for an empirical check")

    demands = net.demands
    scale = max(1.0, float(demands.max()))
    if used_path_tol is None:
        used_path_tol = 1e-6 * scale
    if cost_gap_tol is None:
        cost_gap_tol = 1e-6 * float(np.max(np.abs(costs)))
    if feas_tol is None:
        feas_tol = 1e-6 * scale

    residual = np.empty(len(net.od_pairs))
    gap = 0.0
    for w in range(len(net.od_pairs)):
        paths = net.paths_of(w)
        residual[w] = h[paths].sum() - demands[w]
        cheapest = costs[paths].min()
        used = paths[h[paths] > used_path_tol]
        if used.size:
            gap = max(gap, float(costs[used].max() - cheapest))
    min_flow = float(h.min())
    ok = (np.max(np.abs(residual)) <= feas_tol and min_flow >= -feas_tol
          and gap <= cost_gap_tol)
    return CweReport(bool(ok), residual, gap, float(used_path_tol), float(cost_gap_tol),
                     min_flow, costs)


def load_network(path) -> tuple[RoutingNetwork, dict]:
    """Read a network description (YAML or JSON) with affine-uniform path costs.

    Returns the network and the raw mapping so callers can pick up optional
    ``alpha`` and ``reference`` entries.
    """
    data = yaml.safe_load(FilePath(path).read_text())
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: network file must be a mapping")
    try:
        vertices = tuple(data.get("vertices", ()))
        ods = tuple(OdPair(od["origin"], od["destination"], float(od["demand"]))
                    for od in data["od_pairs"])
        paths = data["paths"]
        n = len(paths)
        A = np.array([[float(v) for v in p["A_row"]] for p in paths]).reshape(n, -1)
        w = np.array([float(p.get("constant", 0.0)) for p in paths])
        gains = np.array([float(p.get("noise_gain", 0.0)) for p in paths])
        idx = np.array([int(p.get("noise_index", -1)) for p in paths])
        path_od = tuple(int(p["od"]) for p in paths)
        m = data.get("uncertainty_dim")
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed network description ({exc})") from exc
    model = AffineUniformModel(A, w, gains, idx, m=None if m is None else int(m))
    return RoutingNetwork(vertices, ods, path_od, model), data
