"""Event generation by per-mark thinning and deterministic next-event
prediction by numeric integration of the conditional density.

Thinning, per mark m: bound the intensity over the lookahead window by
checking both window endpoints (the intensity is monotone in elapsed
time between events, so the extremum sits at an endpoint), inflate by a
safety factor plus a margin, then draw candidate gaps from the
Exp(bound) proposal cumulatively and accept a candidate at elapsed tau
with probability lambda(tau, m) / bound.  Candidates past the horizon
yield "no event" for that mark; the next event is the earliest accepted
candidate across marks (ties broken toward the lowest mark index, a
measure-zero case).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, PredictionError, SamplingError
from .events import EventSequence

MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class ThinningConfig:
    horizon: float  # lookahead window length per step
    bound_margin: float = 1e-3  # margin added as a fraction of the window max
    bound_grid_points: int = 64
    max_rejections: int = 10000
    bound_safety: float = 1.05

    def __post_init__(self):
        if self.horizon <= 0 or self.bound_margin < 0 or self.bound_grid_points < 2:
            raise ContractError("thinning config values must be positive (grid >= 2)")
        if self.max_rejections < 1 or self.bound_safety < 1.0:
            raise ContractError("max_rejections >= 1 and bound_safety >= 1 required")


@dataclass(frozen=True)
class NextEventPrediction:
    time: float  # predicted next-event time (conditional mean within horizon)
    mark: int  # argmax of per-mark probability mass
    mark_masses: np.ndarray  # (M,), sums to <= 1; remainder = no event in horizon
    no_event_mass: float


@dataclass(frozen=True)
class SampledSequence:
    times: np.ndarray
    marks: np.ndarray
    rejections: np.ndarray  # proposal rejections per generated event

    def __len__(self):
        return len(self.times)


def intensity_upper_bound(weights, rep, mark, cfg):
    """Dominating rate for mark ``mark`` over (t_last, t_last + horizon].

    The per-mark intensity is monotone in elapsed time between events, so
    the window max is attained at an endpoint; the bound is
    safety * max(endpoints) + margin * max(endpoints).
    """
    ends = weights.grid(rep, np.array([0.0, cfg.horizon]))[:, mark]
    if not np.all(np.isfinite(ends)):
        raise NumericError("non-finite intensity while bounding the proposal rate")
    peak = float(ends.max())
    return cfg.bound_safety * peak + cfg.bound_margin * peak


def thinning_next(weights, rep, cfg, rng):
    """One thinning step: (gap, mark, rejections) or None when no mark
    produces an event inside the horizon.  Gaps are elapsed times since
    the conditioning event.

    Marks are processed in ascending order with a per-mark candidate loop,
    so a fixed rng seed fixes the draw sequence exactly.
    """
    mark_count = weights.decay.shape[0]
    best_gap = np.inf
    best_mark = -1
    rejections = 0
    for m in range(mark_count):
        bound = intensity_upper_bound(weights, rep, m, cfg)
        if bound <= 0.0:
            continue
        tau = 0.0
        while True:
            tau += rng.exponential(bound)
            if tau >= cfg.horizon:
                break  # no event for this mark
            mu = rng.uniform()
            if mu * bound <= weights.at(rep, tau, m):
                if tau < best_gap:
                    best_gap = tau
                    best_mark = m
                break
            rejections += 1
            if rejections > cfg.max_rejections:
                raise SamplingError(
                    f"thinning exceeded {cfg.max_rejections} rejections "
                    f"(mark {m}, bound {bound:.3g}, horizon {cfg.horizon:.3g})"
                )
    if best_mark < 0:
        return None
    return float(best_gap), int(best_mark), rejections


def simulate(model, prefix_times, prefix_marks, count, cfg, rng):
    """Generate up to ``count`` events continuing a (possibly empty) prefix.

    The fused conditioning representation is recomputed after every
    accepted event; stops early when a step finds no event within the
    horizon.  Returned times include only the generated events.
    """
    if count < 1:
        raise ContractError("simulate needs count >= 1")
    weights = model.weights()
    times = list(prefix_times)
    marks = list(prefix_marks)
    out_t, out_m, out_r = [], [], []
    for _ in range(count):
        t_last, rep = model.cond_state(times, marks)
        step = thinning_next(weights, rep, cfg, rng)
        if step is None:
            break
        gap, mark, rej = step
        times.append(t_last + gap)
        marks.append(mark)
        out_t.append(t_last + gap)
        out_m.append(mark)
        out_r.append(rej)
    return SampledSequence(
        times=np.array(out_t, dtype=np.float64),
        marks=np.array(out_m, dtype=np.intp),
        rejections=np.array(out_r, dtype=np.intp),
    )


def predict_next(weights, t_last, rep, cfg):
    """Deterministic next-event prediction from a conditioning state.

    On a grid over (t_last, t_last + horizon], form the conditional
    density p(t, m) = lambda(t, m) * exp(-integral of total intensity)
    with a cumulative trapezoid, then report the mass-weighted mean time
    (given an event inside the horizon) and the mark with the largest
    integrated mass.
    """
    n = cfg.bound_grid_points
    elapsed = np.linspace(0.0, cfg.horizon, n + 1)
    lam = weights.grid(rep, elapsed)  # (n+1, M)
    total = lam.sum(axis=1)
    h = cfg.horizon / n
    # cumulative compensator at the grid nodes
    panel = 0.5 * h * (total[:-1] + total[1:])
    comp = np.concatenate([[0.0], np.cumsum(panel)])
    survival = np.exp(-comp)

    # per-panel event mass telescopes, so the masses sum to exactly
    # 1 - exp(-comp[-1]) and the <= 1 invariant holds by construction
    panel_mass = survival[:-1] - survival[1:]  # (n,)
    mark_weight = lam[:-1] + lam[1:]  # panel-average mark split
    mark_weight = mark_weight / mark_weight.sum(axis=1, keepdims=True)
    mark_masses = panel_mass @ mark_weight
    total_mass = float(mark_masses.sum())
    if total_mass < MASS_FLOOR:
        raise PredictionError("no probability mass inside the prediction horizon; enlarge it")

    density = total * survival
    trap_w = np.full(n + 1, h)
    trap_w[0] = trap_w[-1] = 0.5 * h
    t_hat = float((trap_w * elapsed * density).sum() / (trap_w * density).sum())
    return NextEventPrediction(
        time=t_last + t_hat,
        mark=int(np.argmax(mark_masses)),
        mark_masses=mark_masses,
        no_event_mass=float(survival[-1]),
    )


def predict_next_for_model(model, prefix_times, prefix_marks, cfg):
    t_last, rep = model.cond_state(prefix_times, prefix_marks)
    return predict_next(model.weights(), t_last, rep, cfg)


def sampled_to_sequence(sample, mark_count):
    """View a SampledSequence as a validated EventSequence."""
    return EventSequence.make(sample.times, sample.marks, mark_count)
