"""Ground-truth synthetic processes with closed-form likelihood oracles.

Two generators: a homogeneous multivariate Poisson process (exact
superposition sampling) and a multivariate Hawkes process with
exponential kernel a[m, k] * exp(-b * dt) (Ogata thinning against the
left-limit intensity, which dominates the decaying kernel between
events).  Both expose exact log-likelihoods with analytic compensators,
windowed over [t_1, t_L] to match the model's likelihood convention.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .events import Dataset, EventSequence


@dataclass(frozen=True)
class PoissonParams:
    rates: np.ndarray  # (M,) positive

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=np.float64))
        if self.rates.ndim != 1 or np.any(self.rates <= 0):
            raise ContractError("Poisson rates must be a vector of positives")

    @property
    def mark_count(self):
        return len(self.rates)


@dataclass(frozen=True)
class HawkesParams:
    mu: np.ndarray  # (M,) base rates, positive
    a: np.ndarray  # (M, M) excitation, nonnegative; a[m, k]: event of mark k boosts mark m
    b: float  # shared positive decay

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        if self.mu.ndim != 1 or np.any(self.mu <= 0):
            raise ContractError("Hawkes base rates must be positive")
        m = len(self.mu)
        if self.a.shape != (m, m) or np.any(self.a < 0):
            raise ContractError("excitation matrix must be (M, M) nonnegative")
        if self.b <= 0:
            raise ContractError("decay must be positive")
        radius = float(np.max(np.abs(np.linalg.eigvals(self.a / self.b))))
        if radius >= 1.0:
            raise ContractError(
                f"supercritical Hawkes parameters: spectral radius of a/b is {radius:.3f} (must be < 1)"
            )

    @property
    def mark_count(self):
        return len(self.mu)


def default_hawkes_benchmark():
    """Subcritical 2-mark benchmark with visible cross-excitation."""
    return HawkesParams(mu=np.array([0.2, 0.2]), a=np.array([[0.6, 0.1], [0.1, 0.6]]), b=1.0)


# -- generation --------------------------------------------------------------


def _draw_mark(weights, rng):
    cum = np.cumsum(weights / weights.sum())
    return min(int(np.searchsorted(cum, rng.uniform(), side="right")), len(cum) - 1)


def _poisson_sequence(params, horizon, rng):
    total = float(params.rates.sum())
    times = []
    t = 0.0
    while True:
        t += rng.exponential(total)
        if t >= horizon:
            break
        times.append(t)
    marks = [_draw_mark(params.rates, rng) for _ in times]
    return times, marks


def generate_poisson(params, horizon, n_seqs, rng, split=""):
    """Dataset of homogeneous Poisson sequences over (0, horizon)."""
    if horizon <= 0 or n_seqs < 1:
        raise ContractError("need horizon > 0 and n_seqs >= 1")
    sequences = []
    while len(sequences) < n_seqs:
        times, marks = _poisson_sequence(params, horizon, rng)
        if not times:  # empty draws are redrawn; a sequence needs >= 1 event
            continue
        sequences.append(EventSequence.make(times, marks, params.mark_count))
    return Dataset(mark_count=params.mark_count, sequences=sequences, split=split)


def _hawkes_sequence(params, horizon, rng):
    """Ogata thinning with the exact left-limit bound (kernel only decays)."""
    m_count = params.mark_count
    times, marks = [], []
    excite = np.zeros(m_count)  # sum_j a[:, m_j] exp(-b (t - t_j)) at current clock
    t = 0.0
    while True:
        bound = float(params.mu.sum() + excite.sum())
        w = rng.exponential(bound)
        decay = np.exp(-params.b * w)
        lam = params.mu + excite * decay  # intensity at the candidate point
        total = float(lam.sum())
        t += w
        if t >= horizon:
            break
        excite = excite * decay
        if rng.uniform() * bound <= total:
            mark = _draw_mark(lam, rng)
            times.append(t)
            marks.append(mark)
            excite = excite + params.a[:, mark]
    return times, marks


def generate_hawkes(params, horizon, n_seqs, rng, split=""):
    """Dataset of exponential-kernel Hawkes sequences over (0, horizon)."""
    if horizon <= 0 or n_seqs < 1:
        raise ContractError("need horizon > 0 and n_seqs >= 1")
    sequences = []
    while len(sequences) < n_seqs:
        times, marks = _hawkes_sequence(params, horizon, rng)
        if not times:
            continue
        sequences.append(EventSequence.make(times, marks, params.mark_count))
    return Dataset(mark_count=params.mark_count, sequences=sequences, split=split)


# -- oracle intensities and likelihoods --------------------------------------


class PoissonOracle:
    """Exact intensity/compensator evaluator for a homogeneous Poisson process."""

    def __init__(self, params):
        self.params = params

    def event_log_intensities(self, seq):
        return np.log(self.params.rates[seq.marks])

    def gap_compensators(self, seq):
        """Integral of total intensity over each gap (t_{i-1}, t_i), i >= 2."""
        return float(self.params.rates.sum()) * np.diff(seq.times)

    def log_likelihood(self, seq):
        """Exact LL over [t_1, t_L]: sum log mu_{m_i} - span * sum mu."""
        span = float(seq.times[-1] - seq.times[0])
        return float(self.event_log_intensities(seq).sum()) - span * float(self.params.rates.sum())

    def intensity_grid(self, seq, idx, elapsed):
        """(len(elapsed), M) intensities after event idx (constant here)."""
        return np.broadcast_to(self.params.rates, (len(elapsed), len(self.params.rates))).copy()


class HawkesOracle:
    """Exact evaluator for the exponential-kernel Hawkes process.

    Uses the standard recursion: the excitation received by each mark
    decays by exp(-b dt) between events and jumps by a[:, mark] at each
    event, so intensities and the compensator are exact without
    quadrature.
    """

    def __init__(self, params):
        self.params = params

    def _excitation_states(self, seq):
        """Excitation vector just after each event (including its own jump)."""
        p = self.params
        states = np.zeros((len(seq.times), p.mark_count))
        excite = np.zeros(p.mark_count)
        prev_t = None
        for i, (t, m) in enumerate(zip(seq.times, seq.marks)):
            if prev_t is not None:
                excite = excite * np.exp(-p.b * (t - prev_t))
            excite = excite + p.a[:, m]
            states[i] = excite
            prev_t = t
        return states

    def event_log_intensities(self, seq):
        """log lambda_{m_i}(t_i-) at each event (left limit, own jump excluded)."""
        p = self.params
        states = self._excitation_states(seq)
        out = np.empty(len(seq.times))
        for i, (t, m) in enumerate(zip(seq.times, seq.marks)):
            if i == 0:
                lam = p.mu[m]
            else:
                decay = np.exp(-p.b * (t - seq.times[i - 1]))
                lam = p.mu[m] + states[i - 1][m] * decay
            out[i] = np.log(lam)
        return out

    def gap_compensators(self, seq):
        p = self.params
        states = self._excitation_states(seq)
        gaps = np.diff(seq.times)
        out = np.empty(len(gaps))
        for i, dt in enumerate(gaps):
            tail = states[i].sum() / p.b * (1.0 - np.exp(-p.b * dt))
            out[i] = p.mu.sum() * dt + tail
        return out

    def log_likelihood(self, seq):
        """Exact LL over [t_1, t_L] with the analytic compensator."""
        return float(self.event_log_intensities(seq).sum() - self.gap_compensators(seq).sum())

    def intensity_grid(self, seq, idx, elapsed):
        """(len(elapsed), M) intensities at times seq.times[idx] + elapsed."""
        p = self.params
        states = self._excitation_states(seq)
        decay = np.exp(-p.b * np.asarray(elapsed, dtype=np.float64))[:, None]
        return p.mu[None, :] + states[idx][None, :] * decay


def oracle_loglik(dataset, oracle):
    """Mean per-event log-likelihood of a dataset under an exact oracle."""
    total = 0.0
    events = 0
    for seq in dataset.sequences:
        total += oracle.log_likelihood(seq)
        events += len(seq)
    return total / events


def fit_poisson_mle(dataset):
    """Best homogeneous Poisson fit under the [t_1, t_L] windowing."""
    counts = np.zeros(dataset.mark_count)
    span = 0.0
    for seq in dataset.sequences:
        np.add.at(counts, seq.marks, 1.0)
        span += float(seq.times[-1] - seq.times[0])
    if span <= 0:
        raise ContractError("Poisson MLE needs at least one sequence with two events")
    return PoissonParams(rates=np.clip(counts / span, 1e-12, None))
