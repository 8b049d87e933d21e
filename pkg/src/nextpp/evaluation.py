"""Evaluation metrics and goodness-of-fit.

Three model-quality metrics: mean per-event log-likelihood, RMSE of
next-event-time point predictions, and the next-mark misclassification
fraction.  Goodness-of-fit uses the time-rescaling theorem: under the
true intensity the per-gap compensator increments are unit-exponential,
so a one-sample KS test against Exp(1) flags misspecification.
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from . import autodiff as ad
from .errors import ContractError
from .events import EventSequence
from .sampling import predict_next
from .training import nll

GOF_GRID = 64  # trapezoid panels per gap for neural-intensity compensators


@dataclass(frozen=True)
class GofResult:
    ks_stat: float
    p_value: float
    n_gaps: int

    @property
    def uninformative(self):
        return self.n_gaps < 2


@dataclass(frozen=True)
class MetricReport:
    loglik_per_event: float
    rmse: float
    error_rate: float
    ks_stat: float
    ks_p_value: float
    n_events: int
    n_predictions: int

    def as_dict(self):
        return {
            "loglik_per_event": self.loglik_per_event,
            "rmse": self.rmse,
            "error_rate": self.error_rate,
            "ks_stat": self.ks_stat,
            "ks_p_value": self.ks_p_value,
            "n_events": self.n_events,
            "n_predictions": self.n_predictions,
        }

    def table(self):
        rows = [
            ("log-likelihood / event", f"{self.loglik_per_event:.4f}"),
            ("RMSE (next time)", f"{self.rmse:.4f}"),
            ("error rate (next mark)", f"{self.error_rate:.4f}"),
            ("KS statistic", f"{self.ks_stat:.4f}"),
            ("KS p-value", f"{self.ks_p_value:.4g}"),
            ("events", str(self.n_events)),
            ("predictions", str(self.n_predictions)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def rmse(pred_times, true_times):
    pred = np.asarray(pred_times, dtype=np.float64)
    true = np.asarray(true_times, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1 or len(pred) < 1:
        raise ContractError("rmse needs equal-length nonempty vectors")
    return float(np.sqrt(np.mean((pred - true) ** 2)))


def error_rate(pred_marks, true_marks):
    """Multiclass misclassification fraction."""
    pred = np.asarray(pred_marks)
    true = np.asarray(true_marks)
    if pred.shape != true.shape or pred.ndim != 1 or len(pred) < 1:
        raise ContractError("error_rate needs equal-length nonempty vectors")
    return float(np.mean(pred != true))


def time_rescaling_gof(dataset, gap_compensator):
    """KS test of rescaled inter-event gaps against Exp(1).

    ``gap_compensator(seq)`` returns the integral of the total intensity
    over each gap (t_{i-1}, t_i), i >= 2, of one sequence; oracles supply
    it analytically, the neural model by trapezoid quadrature.
    """
    gaps = []
    for seq in dataset.sequences:
        if len(seq) >= 2:
            gaps.append(gap_compensator(seq))
    if not gaps:
        raise ContractError("no gaps to rescale (all sequences have a single event)")
    flat = np.concatenate(gaps)
    result = sps.kstest(flat, "expon")
    return GofResult(ks_stat=float(result.statistic), p_value=float(result.pvalue), n_gaps=len(flat))


def model_gap_compensator(model, grid=GOF_GRID):
    """Trapezoid compensator increments under a trained model's intensity.

    Gap (t_i, t_{i+1}) integrates the intensity conditioned on event i's
    fused row, matching the training likelihood's convention.
    """
    weights = model.weights()

    def compensator(seq):
        with ad.no_grad():
            fwd = model.forward(seq, training=False)
        gaps = np.diff(seq.times)
        out = np.empty(len(gaps))
        for i, dt in enumerate(gaps):
            elapsed = np.linspace(0.0, dt, grid + 1)
            total = weights.grid(fwd.c_rows.data[i], elapsed).sum(axis=1)
            out[i] = np.trapezoid(total, dx=dt / grid)
        return out

    return compensator


def oracle_gap_compensator(oracle):
    return oracle.gap_compensators


def model_loglik_per_event(dataset, model, mc_samples=20, integrator="trapezoid", rng=None):
    """Mean per-event log-likelihood of a dataset under the model.

    Deterministic by default (trapezoid integrator, posterior-mean
    latents); sequences with fewer than two events are skipped.
    """
    total = 0.0
    events = 0
    with ad.no_grad():
        for seq in dataset.sequences:
            if len(seq) < 2:
                continue
            fwd = model.forward(seq, training=False)
            value = nll(seq, fwd, model, mc_samples, rng=rng, integrator=integrator)
            total -= value.item()
            events += len(seq)
    if events == 0:
        raise ContractError("no sequences with two or more events to evaluate")
    return total / events


def evaluate_model(model, dataset, thinning_cfg, max_predictions=None, record=None):
    """Full MetricReport on a test dataset.

    For every event with at least one predecessor, predicts (time, mark)
    from the true prefix with the deterministic predictor; accumulates
    RMSE and error rate, the per-event log-likelihood over full
    sequences, and the time-rescaling KS test under the model intensity.
    ``max_predictions`` caps the prediction workload (prefix forwards are
    quadratic in sequence length); the log-likelihood and KS parts always
    use the full dataset.  Pass a list as ``record`` to collect
    per-prediction rows for the predictions CSV.
    """
    if not dataset.sequences:
        raise ContractError("empty test dataset")
    weights = model.weights()
    pred_t, true_t, pred_m, true_m = [], [], [], []
    done = 0
    for seq_id, seq in enumerate(dataset.sequences):
        for i in range(1, len(seq)):
            if max_predictions is not None and done >= max_predictions:
                break
            t_last, rep = model.cond_state(seq.times[:i], seq.marks[:i])
            p = predict_next(weights, t_last, rep, thinning_cfg)
            pred_t.append(p.time)
            true_t.append(float(seq.times[i]))
            pred_m.append(p.mark)
            true_m.append(int(seq.marks[i]))
            if record is not None:
                record.append((seq_id, i + 1, float(seq.times[i]), p.time, int(seq.marks[i]), p.mark))
            done += 1
        if max_predictions is not None and done >= max_predictions:
            break
    if not pred_t:
        raise ContractError("test dataset has no events with a predecessor to predict")

    ll = model_loglik_per_event(dataset, model)
    gof = time_rescaling_gof(dataset, model_gap_compensator(model))
    return MetricReport(
        loglik_per_event=ll,
        rmse=rmse(pred_t, true_t),
        error_rate=error_rate(pred_m, true_m),
        ks_stat=gof.ks_stat,
        ks_p_value=gof.p_value,
        n_events=dataset.total_events(),
        n_predictions=len(pred_t),
    )


def evaluate_oracle(oracle, dataset):
    """Oracle self-evaluation: exact per-event LL plus time-rescaling GOF."""
    if not dataset.sequences:
        raise ContractError("empty test dataset")
    total = sum(oracle.log_likelihood(seq) for seq in dataset.sequences)
    events = dataset.total_events()
    gof = time_rescaling_gof(dataset, oracle_gap_compensator(oracle))
    return MetricReport(
        loglik_per_event=total / events,
        rmse=float("nan"),
        error_rate=float("nan"),
        ks_stat=gof.ks_stat,
        ks_p_value=gof.p_value,
        n_events=events,
        n_predictions=0,
    )


def write_metrics_json(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictions_csv(rows, path):
    """rows: iterable of (seq_id, event_index, true_t, pred_t, true_m, pred_m)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("seq_id,event_index,true_t,pred_t,true_m,pred_m\n")
        for seq_id, idx, tt, pt, tm, pm in rows:
            fh.write(f"{seq_id},{idx},{tt!r},{pt!r},{tm},{pm}\n")
