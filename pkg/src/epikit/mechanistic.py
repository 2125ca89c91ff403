"""Compartmental epidemic models.

Deterministic SIR/SIS/SEIR dynamics integrated with a fixed-step RK4
scheme (bit-reproducible, no adaptive stepping), a discrete-time
stochastic SIR process on a weighted contact graph, and least-squares
parameter fitting for the deterministic models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ._validation import (
    ValidationError,
    check_count,
    check_non_negative,
    check_node_ids,
    check_positive,
)
from .types import NodeStates, SeedPolicy, StaticGraph

#: Numerical dust below this fraction of N is clamped to zero.
_DUST = 1e-12


@dataclass(frozen=True)
class CompartmentParams:
    """Rates of a deterministic compartment model; sigma is SEIR-only."""

    beta: float
    gamma: float
    population: float
    sigma: float = 0.0

    def __post_init__(self):
        check_non_negative(self.beta, "beta")
        check_non_negative(self.gamma, "gamma")
        check_non_negative(self.sigma, "sigma")
        check_positive(self.population, "population")


class CompartmentTrajectory:
    """Per-time compartment counts of a deterministic simulation."""

    def __init__(self, times, counts: dict[str, np.ndarray]):
        self.times = np.asarray(times, dtype=np.float64)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValidationError("times must be a non-empty 1-D array")
        self.counts = {}
        for comp, values in counts.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != self.times.shape:
                raise ValidationError(
                    f"compartment {comp} has {arr.shape[0]} values for {len(self.times)} times")
            self.counts[comp] = arr

    @property
    def compartments(self) -> tuple[str, ...]:
        return tuple(self.counts)

    def __getitem__(self, comp: str) -> np.ndarray:
        return self.counts[comp]

    def final(self, comp: str) -> float:
        return float(self.counts[comp][-1])

    def total(self) -> np.ndarray:
        """Sum over compartments at each time (should stay at N)."""
        return sum(self.counts.values())

    def __repr__(self):
        comps = "".join(self.compartments)
        return f"CompartmentTrajectory({comps}, {len(self.times)} points)"


def _integrate(rhs, y0, horizon, dt, labels, population, sample_every=1):
    """Fixed-step RK4 over [0, horizon]; the last step shrinks to land on horizon.

    Scalar tuples instead of arrays: the systems have <= 4 components and
    the per-step numpy overhead would dominate.
    """
    horizon = check_positive(horizon, "horizon")
    dt = check_positive(dt, "dt")
    if dt > horizon:
        raise ValidationError(f"dt={dt} exceeds horizon={horizon}")
    sample_every = check_count(sample_every, "sample_every", minimum=1)

    n_full = int(math.floor(horizon / dt + 1e-9))
    times = [0.0]
    rows = [y0]
    y = y0
    t = 0.0
    for i in range(n_full):
        y = _rk4_step(rhs, y, dt)
        t = (i + 1) * dt
        if (i + 1) % sample_every == 0:
            times.append(t)
            rows.append(y)
    if horizon - t > 1e-9 * dt:
        y = _rk4_step(rhs, y, horizon - t)
        t = horizon
    if times[-1] != t:
        times.append(t)
        rows.append(y)
    # exact landing on the requested horizon
    times[-1] = horizon

    data = np.asarray(rows, dtype=np.float64)
    tol = _DUST * population
    data[(data < 0) & (data > -tol)] = 0.0
    counts = {label: data[:, j] for j, label in enumerate(labels)}
    return CompartmentTrajectory(times, counts)


def _rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k1)))
    k3 = rhs(tuple(yi + 0.5 * h * ki for yi, ki in zip(y, k2)))
    k4 = rhs(tuple(yi + h * ki for yi, ki in zip(y, k3)))
    return tuple(
        yi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    )


def _check_initial(params, parts):
    total = 0.0
    for name, value in parts:
        if value < 0:
            raise ValidationError(f"initial count {name} must be >= 0, got {value}")
        total += value
    n = params.population
    if abs(total - n) > 1e-9 * n:
        raise ValidationError(
            f"initial counts sum to {total}, expected population {n}")


def simulate_sir(params: CompartmentParams, s0, i0, r0, horizon, dt,
                 sample_every: int = 1) -> CompartmentTrajectory:
    """Deterministic SIR: dS = -bSI/N, dI = bSI/N - gI, dR = gI."""
    _check_initial(params, [("s0", s0), ("i0", i0), ("r0", r0)])
    beta, gamma, n = params.beta, params.gamma, params.population

    def rhs(y):
        s, i, _ = y
        inf = beta * s * i / n
        return (-inf, inf - gamma * i, gamma * i)

    return _integrate(rhs, (float(s0), float(i0), float(r0)), horizon, dt,
                      ("S", "I", "R"), n, sample_every)


def simulate_sis(params: CompartmentParams, s0, i0, horizon, dt,
                 sample_every: int = 1) -> CompartmentTrajectory:
    """Deterministic SIS: recovered individuals return to susceptible."""
    _check_initial(params, [("s0", s0), ("i0", i0)])
    beta, gamma, n = params.beta, params.gamma, params.population

    def rhs(y):
        s, i = y
        inf = beta * s * i / n
        return (-inf + gamma * i, inf - gamma * i)

    return _integrate(rhs, (float(s0), float(i0)), horizon, dt,
                      ("S", "I"), n, sample_every)


def simulate_seir(params: CompartmentParams, s0, e0, i0, r0, horizon, dt,
                  sample_every: int = 1) -> CompartmentTrajectory:
    """Deterministic SEIR with incubation rate sigma between S and I."""
    _check_initial(params, [("s0", s0), ("e0", e0), ("i0", i0), ("r0", r0)])
    beta, gamma, sigma, n = params.beta, params.gamma, params.sigma, params.population

    def rhs(y):
        s, e, i, _ = y
        inf = beta * s * i / n
        return (-inf, inf - sigma * e, sigma * e - gamma * i, gamma * i)

    return _integrate(rhs, (float(s0), float(e0), float(i0), float(r0)), horizon, dt,
                      ("S", "E", "I", "R"), n, sample_every)


@dataclass(frozen=True)
class NetworkSirConfig:
    """Parameters of the discrete-time stochastic SIR process on a graph.

    beta is a per-contact rate: a susceptible node with total infected
    neighbour weight W becomes infected in one step with probability
    1 - exp(-dt * beta * W). The exponential link keeps probabilities in
    [0, 1] for any parameter choice.
    """

    beta: float
    gamma: float
    dt: float
    initial_infected: frozenset[int] = field(default_factory=frozenset)
    immune: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        check_non_negative(self.beta, "beta")
        check_non_negative(self.gamma, "gamma")
        check_positive(self.dt, "dt")
        object.__setattr__(self, "initial_infected", frozenset(int(i) for i in self.initial_infected))
        object.__setattr__(self, "immune", frozenset(int(i) for i in self.immune))
        if not self.initial_infected:
            raise ValidationError("initial_infected must be nonempty")
        overlap = self.initial_infected & self.immune
        if overlap:
            raise ValidationError(
                f"initial_infected and immune overlap on nodes {sorted(overlap)}")


def network_sir_step(weights: np.ndarray, states: np.ndarray, beta: float,
                     gamma: float, dt: float, rng: np.random.Generator,
                     collect_sources: bool = False):
    """Advance the stochastic process by one step.

    Draw order is fixed: one uniform per node for infection trials, then
    one per node for recovery trials, then (if requested) one per newly
    infected node in ascending node order to attribute its source. Only S
    and I nodes ever change; E/R/V/Q are inert, which is what freezes
    quarantined nodes.

    Returns (new_states, sources) where sources maps newly infected nodes
    to the neighbour that infected them (empty unless collect_sources).
    """
    infected = states == "I"
    susceptible = states == "S"
    pressure = weights @ infected.astype(np.float64)
    p_inf = -np.expm1(-dt * beta * pressure)
    u_inf = rng.random(len(states))
    new_inf = susceptible & (u_inf < p_inf)
    p_rec = -math.expm1(-gamma * dt)
    u_rec = rng.random(len(states))
    recovered = infected & (u_rec < p_rec)

    new_states = states.copy()
    new_states[new_inf] = "I"
    new_states[recovered] = "R"

    sources: dict[int, int] = {}
    if collect_sources:
        for v in np.flatnonzero(new_inf):
            contrib = weights[v] * infected
            total = contrib.sum()
            if total <= 0:
                continue
            cdf = np.cumsum(contrib) / total
            sources[int(v)] = int(np.searchsorted(cdf, rng.random(), side="right"))
    return new_states, sources


def initial_network_states(n_nodes: int, cfg: NetworkSirConfig) -> np.ndarray:
    """Step-0 state vector: S everywhere, I on seeds, V on immune nodes."""
    check_node_ids(cfg.initial_infected, n_nodes, "initial_infected")
    check_node_ids(cfg.immune, n_nodes, "immune")
    states = np.full(n_nodes, "S", dtype="<U1")
    states[list(cfg.immune)] = "V"
    states[list(cfg.initial_infected)] = "I"
    return states


def simulate_network_sir(graph: StaticGraph, cfg: NetworkSirConfig, steps: int,
                         seed: SeedPolicy) -> NodeStates:
    """Run the stochastic process for `steps` steps on a fixed graph.

    Returns the full state history, shape [steps + 1][n_nodes], including
    the initial state. Immune nodes are rendered as V; callers that mean
    quarantine can relabel, the dynamics are identical (inert).
    """
    steps = check_count(steps, "steps", minimum=1)
    states = initial_network_states(graph.n_nodes, cfg)
    weights = graph.weight_matrix()
    rng = seed.rng()
    history = [states]
    for _ in range(steps):
        states, _ = network_sir_step(weights, states, cfg.beta, cfg.gamma, cfg.dt, rng)
        history.append(states)
    return NodeStates(np.stack(history))


@dataclass(frozen=True)
class FitResult:
    """Outcome of a compartmental fit."""

    params: CompartmentParams
    loss: float
    n_evals: int
    status: str  # "converged" | "max_evals" | "unidentifiable"

    @property
    def converged(self) -> bool:
        return self.status == "converged"


_MODEL_NAMES = ("sir", "sis", "seir")


def _simulate_observed(model, beta, gamma, sigma, n, i0, t_max, dt):
    params = CompartmentParams(beta=beta, gamma=gamma, sigma=sigma, population=n)
    if model == "sir":
        traj = simulate_sir(params, n - i0, i0, 0.0, t_max, dt)
    elif model == "sis":
        traj = simulate_sis(params, n - i0, i0, t_max, dt)
    else:
        traj = simulate_seir(params, n - i0, 0.0, i0, 0.0, t_max, dt)
    return traj


def fit_compartmental(observed, model: str, population: float,
                      init: CompartmentParams, dt: float,
                      max_evals: int = 2000) -> FitResult:
    """Fit rate parameters to an observed infected-count series.

    The series is taken at unit time spacing (one observation per time
    unit). Initial conditions are pinned from the data: I(0) = observed[0],
    everyone else susceptible. Minimizes the mean squared error between
    simulated and observed I(t) with Nelder-Mead over log-rates, which
    keeps all rates positive without explicit constraints.
    """
    if model not in _MODEL_NAMES:
        raise ValidationError(f"unknown model {model!r}; choose from {_MODEL_NAMES}")
    if hasattr(observed, "series"):
        if observed.n_nodes != 1 or observed.n_features != 1:
            raise ValidationError(
                f"observed panel must be 1 node x 1 feature, got {observed.shape}")
        series = observed.series(0, 0)
    else:
        series = np.asarray(observed, dtype=np.float64)
    if series.ndim != 1 or len(series) < 5:
        raise ValidationError(f"observed series must be 1-D with >= 5 points, got shape {series.shape}")
    if not np.all(np.isfinite(series)):
        raise ValidationError("observed series contains non-finite values")
    population = check_positive(population, "population")
    if population < series.max():
        raise ValidationError(
            f"population {population} is below the maximum observed count {series.max()}")
    dt = check_positive(dt, "dt")

    if np.all(series == 0):
        return FitResult(params=init, loss=0.0, n_evals=0, status="unidentifiable")

    i0 = float(series[0])
    t_obs = np.arange(len(series), dtype=np.float64)
    t_max = float(t_obs[-1]) if t_obs[-1] > 0 else dt
    n_params = 3 if model == "seir" else 2

    def loss_of(theta):
        beta, gamma = theta[0], theta[1]
        sigma = theta[2] if n_params == 3 else 0.0
        traj = _simulate_observed(model, beta, gamma, sigma, population, i0, t_max, dt)
        i_sim = np.interp(t_obs, traj.times, traj["I"])
        return float(np.mean((i_sim - series) ** 2))

    x0 = np.log(np.maximum(
        [init.beta, init.gamma, init.sigma][:n_params], 1e-8))
    loss_init = loss_of(np.exp(x0))
    result = minimize(
        lambda x: loss_of(np.exp(x)), x0, method="Nelder-Mead",
        options={"maxfev": max_evals, "xatol": 1e-7, "fatol": 1e-12})

    if result.fun <= loss_init:
        theta = np.exp(result.x)
        loss = float(result.fun)
    else:  # optimizer contract: never return worse than the starting point
        theta = np.exp(x0)
        loss = loss_init
    params = CompartmentParams(
        beta=float(theta[0]), gamma=float(theta[1]),
        sigma=float(theta[2]) if n_params == 3 else init.sigma,
        population=population)
    status = "converged" if result.success else "max_evals"
    return FitResult(params=params, loss=loss, n_evals=int(result.nfev), status=status)
