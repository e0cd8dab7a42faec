"""Tug-of-war with noise on a bounded domain.

Two players alternate by fair (or tilted) coin; the toss winner picks a move
v with |v| <= epsilon, then a noise vector drawn uniformly from the sphere of
the orthogonal complement of v, scaled to sqrt((d-1)/(p-1))|v|, is added.
Play stops once the state is within (sqrt((d-1)/(p-1)) + 1) epsilon of the
boundary; one more toss lets the winner pick the final boundary point from a
deterministic candidate set, and the payoff is the boundary function there.
Games that never stop within max_steps pay zero.

Every trajectory owns a counter-based Philox stream keyed by (seed,
trajectory index), so runs are reproducible bit-for-bit regardless of
scheduling.  Alongside the states, each trajectory records the coin sums,
the likelihood ratio of the tilted coin law against the fair one, and the
three derived diagnostic processes (height drift compensation M, squared
radial part compensation N, normalized likelihood ratio Q).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .domain import BoundaryFunction, Domain

ORTHO_TOL = 1e-10


def noise_scale(p: float, d: int) -> float:
    """Noise magnitude per unit move length: sqrt((d-1)/(p-1))."""
    if d < 2:
        raise ValueError(f"ambient dimension must be >= 2, got d={d}")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got p={p}")
    return math.sqrt((d - 1.0) / (p - 1.0))


def stopping_margin(p: float, d: int, epsilon: float) -> float:
    return (noise_scale(p, d) + 1.0) * epsilon


@dataclass(frozen=True)
class GameHistory:
    """Moves and noises played so far; the only information strategies may see."""

    moves: tuple
    noises: tuple


@dataclass(frozen=True)
class Strategy:
    """A sampler over the closed epsilon-ball, fed the recorded history."""

    name: str
    sample: Callable[[GameHistory, np.random.Generator], np.ndarray]


def zero_strategy(d: int) -> Strategy:
    v = np.zeros(d)
    return Strategy("zero", lambda hist, rng: v)


def pull_strategy(direction, epsilon: float) -> Strategy:
    """Always move epsilon in a fixed direction (e.g. straight down)."""
    direction = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(direction)
    if nrm == 0:
        raise ValueError("pull direction must be nonzero")
    v = epsilon * direction / nrm
    return Strategy("pull", lambda hist, rng: v)


def counter_strategy(opponent: Strategy, c: float, epsilon: float, p: float,
                     up_direction) -> Strategy:
    """Mixture that mirrors the opponent with weight (1-t)/(1+t) and pushes
    epsilon 'up' with weight 2t/(1+t), where t = 2 c epsilon / (p-1)."""
    t = 2.0 * c * epsilon / (p - 1.0)
    if not 0.0 <= t < 1.0:
        raise ValueError(f"tilt too large for this epsilon: 2*c*eps/(p-1) = {t:.4g} >= 1")
    up = np.asarray(up_direction, dtype=float)
    nrm = np.linalg.norm(up)
    if nrm == 0:
        raise ValueError("up_direction must be nonzero")
    up = epsilon * up / nrm
    w_mirror = (1.0 - t) / (1.0 + t)

    def sample(hist: GameHistory, rng: np.random.Generator) -> np.ndarray:
        if rng.random() < w_mirror:
            return -opponent.sample(hist, rng)
        return up

    return Strategy(f"counter(c={c:g},{opponent.name})", sample)


def counter_weights(c: float, epsilon: float, p: float) -> tuple:
    """(mirror weight, push-up weight) of the counter strategy."""
    t = 2.0 * c * epsilon / (p - 1.0)
    return (1.0 - t) / (1.0 + t), 2.0 * t / (1.0 + t)


def c1_constant(H: float, h: float) -> float:
    """Escape-probability constant (h/2)/(H - h/2) of the height martingale bound."""
    if not 0 < h < H:
        raise ValueError(f"heights must satisfy 0 < h < H, got h={h}, H={H}")
    return (h / 2.0) / (H - h / 2.0)


def proof_tilt(d: int, H: float, h: float) -> float:
    """The coin-bias constant 8 H d / C1^2 used by the analytic argument.

    Only usable directly when epsilon is small enough that
    2 c epsilon/(p-1) < 1; see usable_tilt for a capped value.
    """
    return 8.0 * H * d / c1_constant(H, h) ** 2


def usable_tilt(d: int, H: float, h: float, p: float, epsilon: float,
                t_cap: float = 0.5) -> float:
    """proof_tilt capped so the counter-strategy mixture parameter stays at
    most t_cap (< 1); at desk-scale epsilon the analytic constant is far too
    large to define a probability."""
    return min(proof_tilt(d, H, h), t_cap * (p - 1.0) / (2.0 * epsilon))


def default_max_steps(p: float, epsilon: float, c: float, H: float, h: float) -> int:
    """50 * T0 where T0 = H (p-1) / (C1 c eps^2) bounds the stopping time tail."""
    t0 = H * (p - 1.0) / (c1_constant(H, h) * c * epsilon ** 2)
    return int(math.ceil(50.0 * t0))


@dataclass(frozen=True)
class GameConfig:
    p: float
    d: int
    epsilon: float
    domain: Domain
    payoff: BoundaryFunction
    start: np.ndarray
    max_steps: int
    seed: int
    tilt_c: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        if self.d != self.domain.dim:
            raise ValueError(f"d={self.d} does not match domain dimension {self.domain.dim}")
        scale = noise_scale(self.p, self.d)  # validates p, d
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        margin = (scale + 1.0) * self.epsilon
        if self.domain.kind == "cylinder":
            dc, R, H = self.domain.params
            limit = min(R, H) / 4.0
        else:
            limit = float(np.min(self.domain.bbox[1] - self.domain.bbox[0])) / 4.0
        if not margin < limit:
            raise ValueError(
                f"stopping margin {margin:.4g} must stay below {limit:.4g}; shrink epsilon")
        if not self.domain.inside(self.start):
            raise ValueError("start point must lie inside the domain")
        if self.domain.boundary_distance(self.start) < margin:
            raise ValueError("start point is already within the stopping margin")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.tilt_c is not None:
            bias = self.tilt_c * self.epsilon / (self.p - 1.0)
            if not 0.0 <= bias < 0.5:
                raise ValueError(
                    f"tilt too large for this epsilon: coin bias {bias:.4g} >= 1/2")

    @property
    def margin(self) -> float:
        return stopping_margin(self.p, self.d, self.epsilon)

    @property
    def coin_bias(self) -> float:
        if self.tilt_c is None:
            return 0.0
        return self.tilt_c * self.epsilon / (self.p - 1.0)


@dataclass
class Trajectory:
    """One recorded game: states X_0..X_{tau+1}, per-step moves/noises/coins,
    and the running diagnostics (index n runs 0..tau)."""

    traj_index: int
    states: np.ndarray        # (n_rec + 1, d); final row is X_{tau+1} when tau is set
    coins: np.ndarray         # int8, +1 player I / -1 player II; length tau+1 or max_steps
    moves: np.ndarray
    noises: np.ndarray
    tau: Optional[int]
    payoff: float
    truncated: bool
    tilt_c: Optional[float]
    S: np.ndarray             # running coin sum, S[0] = 0
    f: np.ndarray             # likelihood ratio of tilted vs fair coin law
    M: np.ndarray
    N: np.ndarray
    Q: np.ndarray


def sample_noise(v, p: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction in the orthogonal complement of v, scaled to
    sqrt((d-1)/(p-1)) |v|; zero when v is zero."""
    scale = noise_scale(p, d)
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return np.zeros(d)
    vh = v / nv
    g = rng.standard_normal(d)
    g -= (g @ vh) * vh
    ng = float(np.linalg.norm(g))
    while ng < 1e-12:
        g = rng.standard_normal(d)
        g -= (g @ vh) * vh
        ng = float(np.linalg.norm(g))
    return (scale * nv / ng) * g


def _trajectory_rng(seed: int, traj_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(traj_index),))
    return np.random.Generator(np.random.Philox(ss))


def _boundary_candidates(cfg: GameConfig, x: np.ndarray) -> np.ndarray:
    """Projection of x plus 2(d-1) axis-perturbed projections, kept within the
    stopping ball around x."""
    dom = cfg.domain
    margin = cfg.margin
    probes = [x]
    for a in range(cfg.d - 1):
        e = np.zeros(cfg.d)
        e[a] = 0.5 * margin
        probes.append(x + e)
        probes.append(x - e)
    cands = dom.boundary_project(np.array(probes))
    keep = np.linalg.norm(cands - x, axis=1) <= margin * (1.0 + 1e-9)
    kept = cands[keep]
    return kept if len(kept) else cands[:1]


def run_game(cfg: GameConfig, sI: Strategy, sII: Strategy, traj_index: int) -> Trajectory:
    """Play one game to the stopping time (or max_steps) and record everything."""
    rng = _trajectory_rng(cfg.seed, traj_index)
    dom = cfg.domain
    d = cfg.d
    eps = cfg.epsilon
    margin = cfg.margin
    scale = noise_scale(cfg.p, d)
    bias = cfg.coin_bias
    p_I = 0.5 + bias
    tprime = 2.0 * bias
    c_tilt = cfg.tilt_c if cfg.tilt_c is not None else 0.0
    drift = 2.0 * c_tilt * eps * eps / (cfg.p - 1.0)
    ndrift = d * eps * eps / (cfg.p - 1.0)
    lr_norm = 1.0 + tprime * tprime

    X = cfg.start.copy()
    states = [X.copy()]
    coins: List[int] = []
    moves: List[np.ndarray] = []
    noises: List[np.ndarray] = []
    S = [0]
    f = [1.0]
    M = [float(X[-1])]
    N = [float(np.dot(X[:-1], X[:-1]))]
    Q = [1.0]

    tau: Optional[int] = None
    for n in range(cfg.max_steps):
        if dom.boundary_distance(X) < margin:
            tau = n
            break
        z = 1 if rng.random() < p_I else -1
        coins.append(z)
        hist = GameHistory(tuple(moves), tuple(noises))
        v = (sI if z > 0 else sII).sample(hist, rng)
        v = np.asarray(v, dtype=float)
        nv = float(np.linalg.norm(v))
        if nv > eps + 1e-12:
            raise AssertionError(f"strategy move |v|={nv} exceeds epsilon={eps}")
        w = sample_noise(v, cfg.p, d, rng)
        if abs(float(w @ v)) > ORTHO_TOL * max(nv, 1.0) ** 2:
            raise AssertionError("noise not orthogonal to the move")
        if abs(float(np.linalg.norm(w)) - scale * nv) > ORTHO_TOL:
            raise AssertionError("noise magnitude violates sqrt((d-1)/(p-1))|v|")
        X = X + v + w
        moves.append(v)
        noises.append(w)
        states.append(X.copy())
        k = n + 1
        S.append(S[-1] + z)
        f.append(f[-1] * ((1.0 + tprime) if z > 0 else (1.0 - tprime)))
        M.append(float(X[-1]) - drift * k)
        N.append(float(np.dot(X[:-1], X[:-1])) - ndrift * k)
        Q.append(f[-1] / lr_norm ** k)

    payoff = 0.0
    truncated = tau is None
    if tau is not None:
        z = 1 if rng.random() < p_I else -1
        coins.append(z)
        cands = _boundary_candidates(cfg, X)
        vals = np.asarray(cfg.payoff.value(cands), dtype=float)
        pick = int(np.argmax(vals)) if z > 0 else int(np.argmin(vals))
        X_final = cands[pick]
        states.append(X_final.copy())
        payoff = float(vals[pick])

    return Trajectory(
        traj_index=traj_index,
        states=np.array(states),
        coins=np.array(coins, dtype=np.int8),
        moves=np.array(moves) if moves else np.zeros((0, d)),
        noises=np.array(noises) if noises else np.zeros((0, d)),
        tau=tau,
        payoff=payoff,
        truncated=truncated,
        tilt_c=cfg.tilt_c,
        S=np.array(S, dtype=np.int64),
        f=np.array(f),
        M=np.array(M),
        N=np.array(N),
        Q=np.array(Q),
    )


def run_games(cfg: GameConfig, sI: Strategy, sII: Strategy, n_traj: int,
              threads: int = 1) -> List[Trajectory]:
    """Independently seeded trajectories 0..n_traj-1, in index order."""
    indices = range(n_traj)
    if threads <= 1:
        return [run_game(cfg, sI, sII, i) for i in indices]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda i: run_game(cfg, sI, sII, i), indices))


def estimate_value(cfg: GameConfig, sI: Strategy, sII: Strategy, n_traj: int,
                   threads: int = 1) -> tuple:
    """Sample mean and standard error of the payoff over n_traj games."""
    if n_traj < 100:
        raise ValueError(f"n_traj must be >= 100, got {n_traj}")
    total = 0.0
    total_sq = 0.0

    def payoff_of(i):
        return run_game(cfg, sI, sII, i).payoff

    if threads <= 1:
        vals = map(payoff_of, range(n_traj))
    else:
        ex = ThreadPoolExecutor(max_workers=threads)
        vals = ex.map(payoff_of, range(n_traj))
    for v in vals:
        total += v
        total_sq += v * v
    if threads > 1:
        ex.shutdown()
    mean = total / n_traj
    var = max(total_sq / n_traj - mean * mean, 0.0) * n_traj / (n_traj - 1)
    return mean, math.sqrt(var / n_traj)


@dataclass
class MartingaleReport:
    checkpoints: np.ndarray
    mean_M: np.ndarray
    se_M: np.ndarray
    mean_N: np.ndarray
    se_N: np.ndarray
    mean_Q: np.ndarray
    se_Q: np.ndarray
    samples_M: np.ndarray = field(repr=False, default=None)  # (n_cp, n_traj)
    samples_N: np.ndarray = field(repr=False, default=None)
    samples_Q: np.ndarray = field(repr=False, default=None)


def martingale_report(trajs: List[Trajectory], cfg: GameConfig) -> MartingaleReport:
    """Empirical means of the stopped diagnostics at checkpoints {0, 1, 2, 4, ...}.

    Requires trajectories simulated under one tilted coin law; mixing laws in
    one list is an error.
    """
    if not trajs:
        raise ValueError("no trajectories given")
    tilts = {t.tilt_c for t in trajs}
    if len(tilts) > 1:
        raise ValueError(f"trajectories mix different coin laws: {sorted(tilts, key=str)}")
    if trajs[0].tilt_c is None:
        raise ValueError("martingale report requires tilted-measure trajectories (tilt_c set)")

    n_max = max(len(t.M) - 1 for t in trajs)
    cps = [0]
    k = 1
    while k <= n_max:
        cps.append(k)
        k *= 2
    cps = np.array(cps, dtype=int)

    def stopped(arrs):
        out = np.empty((len(cps), len(trajs)))
        for j, t in enumerate(trajs):
            a = arrs(t)
            idx = np.minimum(cps, len(a) - 1)
            out[:, j] = a[idx]
        return out

    sM = stopped(lambda t: t.M)
    sN = stopped(lambda t: t.N)
    sQ = stopped(lambda t: t.Q)

    def mean_se(s):
        m = s.mean(axis=1)
        se = s.std(axis=1, ddof=1) / math.sqrt(s.shape[1]) if s.shape[1] > 1 else np.zeros(len(cps))
        return m, se

    mM, eM = mean_se(sM)
    mN, eN = mean_se(sN)
    mQ, eQ = mean_se(sQ)
    return MartingaleReport(cps, mM, eM, mN, eN, mQ, eQ, sM, sN, sQ)
