"""Hamiltonian Monte Carlo over an unconstrained real parameter space."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from sampling.diagnostics import chain_summary
from utils.errors import NumericalError
from utils.logging_config import get_logger, log_duration

logger = get_logger(__name__)

FD_STEP = 1e-5
MIN_STEP_SIZE = 1e-10
MAX_INITIAL_STEP_SIZE = 10.0
ACCEPTANCE_BAND = (0.5, 0.8)

GradientFn = Callable[[np.ndarray], np.ndarray]
Integrator = Callable[[np.ndarray, np.ndarray, float, int, GradientFn], Tuple[np.ndarray, np.ndarray]]


class TrajectoryDiverged(Exception):
    """Raised inside a trajectory when the gradient stops being finite."""


# ============================================================================
# CONFIGURATION AND TARGET
# ============================================================================


class HmcConfig(BaseModel):
    """Sampler settings. ``step_size=None`` selects the initial step size automatically."""

    model_config = ConfigDict(extra="forbid")

    step_size: Optional[float] = Field(default=None, gt=0)
    leapfrog_steps: int = Field(default=20, ge=1)
    draws: int = Field(default=10_000, ge=1)
    burn_in: Optional[int] = Field(default=None, ge=0)
    thin: int = Field(default=1, ge=1)
    target_accept: float = Field(default=0.65, gt=0, lt=1)
    adapt_window: int = Field(default=50, ge=1)
    adapt: bool = True
    jitter: float = Field(default=0.2, ge=0, lt=1)
    seed: int = 0

    def resolved_burn_in(self) -> int:
        """Explicit burn-in, or 10% of the requested draws with a floor of 500."""
        if self.burn_in is not None:
            return self.burn_in
        return max(500, self.draws // 10)

    @property
    def total_iterations(self) -> int:
        return self.resolved_burn_in() + self.draws * self.thin

    @property
    def trajectory_time(self) -> Optional[float]:
        if self.step_size is None:
            return None
        return self.step_size * self.leapfrog_steps


@dataclass
class TargetDensity:
    """
    Unnormalized log density w(θ) on Rⁿ.

    log_w may return −∞. Without grad_log_w, the gradient is a central finite difference; a
    batched log_w_batch, when given, evaluates all 2n shifted points in one call.
    """

    dimension: int
    log_w: Callable[[np.ndarray], float]
    grad_log_w: Optional[GradientFn] = None
    log_w_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = FD_STEP

    def log_density(self, theta: np.ndarray) -> float:
        value = float(self.log_w(np.asarray(theta, dtype=float)))
        return value if not np.isnan(value) else -np.inf

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.grad_log_w is not None:
            return np.asarray(self.grad_log_w(theta), dtype=float)
        return finite_difference_gradient(self, theta)


def finite_difference_gradient(target: TargetDensity, theta: np.ndarray) -> np.ndarray:
    """Central finite-difference gradient of target.log_w with step target.fd_step."""
    n = theta.shape[0]
    h = target.fd_step
    shifts = np.eye(n) * h
    points = np.concatenate([theta + shifts, theta - shifts], axis=0)
    if target.log_w_batch is not None:
        values = np.asarray(target.log_w_batch(points), dtype=float)
    else:
        values = np.array([target.log_w(p) for p in points], dtype=float)
    with np.errstate(invalid="ignore"):
        return (values[:n] - values[n:]) / (2 * h)


# ============================================================================
# INTEGRATION AND ADAPTATION
# ============================================================================


def leapfrog(
    theta: np.ndarray,
    momentum: np.ndarray,
    step_size: float,
    n_steps: int,
    grad_log_w: GradientFn,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate Hamilton's equations for H = −log w(θ) + ½|ϑ|² with the leapfrog scheme.

    Args:
        theta: Start position
        momentum: Start momentum
        step_size: ε > 0
        n_steps: L ≥ 1
        grad_log_w: Gradient of log w

    Returns:
        (θ*, ϑ*) after L steps

    Raises:
        ValueError: If ε ≤ 0 or L < 1
        TrajectoryDiverged: If the gradient is not finite along the path
    """
    if step_size <= 0:
        raise ValueError(f"Step size must be positive, got {step_size}")
    if n_steps < 1:
        raise ValueError(f"Leapfrog needs at least one step, got {n_steps}")

    def kick(position: np.ndarray) -> np.ndarray:
        grad = grad_log_w(position)
        if not np.all(np.isfinite(grad)):
            raise TrajectoryDiverged("non-finite gradient")
        return grad

    theta = np.array(theta, dtype=float)
    momentum = np.array(momentum, dtype=float)
    momentum = momentum + 0.5 * step_size * kick(theta)
    for step in range(n_steps):
        theta = theta + step_size * momentum
        grad = kick(theta)
        if step < n_steps - 1:
            momentum = momentum + step_size * grad
    momentum = momentum + 0.5 * step_size * grad
    return theta, momentum


def adapt_step_size(step_size: float, acceptance: float, target_accept: float, window: int) -> float:
    """
    One Robbins–Monro update of log ε toward the target acceptance.

    Args:
        step_size: Current ε
        acceptance: Mean acceptance probability over the last window
        target_accept: Desired acceptance
        window: Index of the window (gain decays as 1/√(window+1))

    Returns:
        Updated ε
    """
    gain = 1.0 / np.sqrt(window + 1.0)
    return float(step_size * np.exp(gain * (acceptance - target_accept)))


def _acceptance_probability(current_h: float, proposed_h: float) -> float:
    if not np.isfinite(proposed_h):
        return 0.0
    return float(min(1.0, np.exp(current_h - proposed_h)))


def _propose(
    target: TargetDensity,
    theta: np.ndarray,
    log_w: float,
    step_size: float,
    n_steps: int,
    rng: np.random.Generator,
    integrator: Integrator,
) -> Tuple[np.ndarray, float, float]:
    """One HMC transition proposal: returns (θ*, log w(θ*), acceptance probability)."""
    momentum = rng.standard_normal(theta.shape[0])
    current_h = -log_w + 0.5 * momentum @ momentum
    try:
        new_theta, new_momentum = integrator(theta, momentum, step_size, n_steps, target.gradient)
    except TrajectoryDiverged:
        return theta, log_w, 0.0
    new_log_w = target.log_density(new_theta)
    if not np.isfinite(new_log_w):
        return theta, log_w, 0.0
    proposed_h = -new_log_w + 0.5 * new_momentum @ new_momentum
    return new_theta, new_log_w, _acceptance_probability(current_h, proposed_h)


def find_initial_step_size(
    target: TargetDensity,
    theta: np.ndarray,
    log_w: float,
    rng: np.random.Generator,
    start: float = 0.1,
    max_rounds: int = 50,
) -> float:
    """Double or halve ε until a single leapfrog step crosses acceptance ½."""
    step_size = start
    _, _, accept = _propose(target, theta, log_w, step_size, 1, rng, leapfrog)
    direction = 1.0 if accept > 0.5 else -1.0
    for _ in range(max_rounds):
        _, _, accept = _propose(target, theta, log_w, step_size, 1, rng, leapfrog)
        if (direction > 0 and accept <= 0.5) or (direction < 0 and accept > 0.5):
            break
        step_size *= 2.0 ** direction
        if step_size > MAX_INITIAL_STEP_SIZE:
            return MAX_INITIAL_STEP_SIZE
        if step_size < MIN_STEP_SIZE:
            raise NumericalError(f"Initial step size search fell below {MIN_STEP_SIZE}", stage="hmc")
    logger.debug(f"Initial step size {step_size:.3e}")
    return step_size


# ============================================================================
# CHAINS
# ============================================================================


@dataclass
class Chain:
    """Kept draws of one (or several merged) HMC runs."""

    draws: np.ndarray
    log_w: np.ndarray
    acceptance_rate: float
    step_size: float
    leapfrog_steps: int
    burn_in: int
    thin: int
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_kept(self) -> int:
        return int(self.draws.shape[0])

    @property
    def ess(self) -> float:
        return float(self.diagnostics.get("min_ess", self.n_kept))

    def to_frame(self) -> pd.DataFrame:
        """Draws as columns theta_0..theta_{n-1} plus log_w."""
        columns = [f"theta_{j}" for j in range(self.draws.shape[1])]
        frame = pd.DataFrame(self.draws, columns=columns)
        frame["log_w"] = self.log_w
        return frame


def sample(
    target: TargetDensity,
    cfg: HmcConfig,
    theta0: np.ndarray,
    integrator: Integrator = leapfrog,
) -> Chain:
    """
    Run one HMC chain.

    Args:
        target: Density to sample
        cfg: Sampler configuration
        theta0: Starting point (log w must be finite there)
        integrator: Hamiltonian flow approximation, leapfrog by default

    Returns:
        Chain with cfg.draws kept draws

    Raises:
        ValueError: If the start point has zero density or the wrong dimension
        NumericalError: If the step size collapses during adaptation
    """
    theta = np.asarray(theta0, dtype=float).copy()
    if theta.shape != (target.dimension,):
        raise ValueError(f"Start point has shape {theta.shape}, expected ({target.dimension},)")
    log_w = target.log_density(theta)
    if not np.isfinite(log_w):
        raise ValueError("Start point has zero target density")

    rng = np.random.default_rng(cfg.seed)
    burn_in = cfg.resolved_burn_in()
    step_size = cfg.step_size or find_initial_step_size(target, theta, log_w, rng)
    base_steps = cfg.leapfrog_steps
    low = max(1, int(round((1.0 - cfg.jitter) * base_steps)))
    high = max(low, int(round((1.0 + cfg.jitter) * base_steps)))

    logger.info(
        f"HMC chain start: dim={target.dimension}, draws={cfg.draws}, burn_in={burn_in}, "
        f"L={base_steps}, eps={step_size:.3e}, seed={cfg.seed}"
    )

    draws = np.empty((cfg.draws, target.dimension))
    log_ws = np.empty(cfg.draws)
    window_accept: List[float] = []
    log_step_history: List[float] = []
    accepted = 0
    kept = 0

    for iteration in range(cfg.total_iterations):
        n_steps = int(rng.integers(low, high + 1))
        proposal, proposal_log_w, accept_prob = _propose(target, theta, log_w, step_size, n_steps, rng, integrator)
        if rng.uniform() < accept_prob:
            theta, log_w = proposal, proposal_log_w
            if iteration >= burn_in:
                accepted += 1

        if iteration < burn_in:
            if cfg.adapt:
                window_accept.append(accept_prob)
                if len(window_accept) == cfg.adapt_window:
                    step_size = adapt_step_size(
                        step_size, float(np.mean(window_accept)), cfg.target_accept, len(log_step_history)
                    )
                    log_step_history.append(np.log(step_size))
                    logger.debug(f"Window {len(log_step_history)}: acceptance {np.mean(window_accept):.3f}, eps {step_size:.3e}")
                    window_accept = []
                    if step_size < MIN_STEP_SIZE:
                        logger.error(f"Step size collapsed to {step_size:.3e} during adaptation")
                        raise NumericalError(
                            f"Step size fell below {MIN_STEP_SIZE}; the target rejects every proposal",
                            stage="hmc",
                        )
            if iteration == burn_in - 1 and log_step_history:
                tail = log_step_history[len(log_step_history) // 2:]
                step_size = float(np.exp(np.mean(tail)))
            continue

        if (iteration - burn_in) % cfg.thin == 0:
            draws[kept] = theta
            log_ws[kept] = log_w
            kept += 1

    iterations = cfg.total_iterations - burn_in
    acceptance_rate = accepted / iterations if iterations else 0.0
    diagnostics = chain_summary(draws)
    if not ACCEPTANCE_BAND[0] <= acceptance_rate <= ACCEPTANCE_BAND[1]:
        logger.warning(f"Acceptance rate {acceptance_rate:.3f} outside {ACCEPTANCE_BAND}")
    logger.info(
        f"HMC chain done: acceptance={acceptance_rate:.3f}, eps={step_size:.3e}, min ESS={diagnostics['min_ess']:.1f}"
    )
    return Chain(
        draws=draws,
        log_w=log_ws,
        acceptance_rate=acceptance_rate,
        step_size=step_size,
        leapfrog_steps=base_steps,
        burn_in=burn_in,
        thin=cfg.thin,
        diagnostics=diagnostics,
    )


def merge_chains(chains: Sequence[Chain]) -> Chain:
    """Concatenate chains; ESS adds up across independent chains."""
    if not chains:
        raise ValueError("No chains to merge")
    if len(chains) == 1:
        return chains[0]
    kept = np.array([c.n_kept for c in chains], dtype=float)
    ess = np.sum([c.diagnostics["ess"] for c in chains], axis=0)
    return Chain(
        draws=np.concatenate([c.draws for c in chains]),
        log_w=np.concatenate([c.log_w for c in chains]),
        acceptance_rate=float(np.average([c.acceptance_rate for c in chains], weights=kept)),
        step_size=float(np.exp(np.mean([np.log(c.step_size) for c in chains]))),
        leapfrog_steps=chains[0].leapfrog_steps,
        burn_in=chains[0].burn_in,
        thin=chains[0].thin,
        diagnostics={
            "tau": kept.sum() / ess,
            "ess": ess,
            "min_ess": float(ess.min()),
            "chain_acceptance": [c.acceptance_rate for c in chains],
        },
    )


def run_chains(
    target: TargetDensity,
    cfg: HmcConfig,
    starts: Sequence[np.ndarray],
    max_workers: int = 1,
) -> Chain:
    """
    Run one chain per start point and merge them.

    Chain k uses seed cfg.seed + k and gets an equal share of cfg.draws, so the merged result
    does not depend on max_workers. With fewer draws than starts only the first cfg.draws starts run.
    """
    if len(starts) == 0:
        raise ValueError("At least one start point is required")
    n_chains = min(len(starts), cfg.draws)
    if n_chains < len(starts):
        logger.warning(f"{cfg.draws} draws cannot feed {len(starts)} chains; running {n_chains}")
    shares = [cfg.draws // n_chains + (1 if k < cfg.draws % n_chains else 0) for k in range(n_chains)]
    configs = [cfg.model_copy(update={"seed": cfg.seed + k, "draws": share}) for k, share in enumerate(shares)]
    with log_duration(logger, f"{n_chains} chain(s) of {cfg.draws} draws"):
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
            chains = list(executor.map(lambda pair: sample(target, pair[0], pair[1]), zip(configs, starts[:n_chains])))
    return merge_chains(chains)
