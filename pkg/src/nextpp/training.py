"""Maximum-likelihood training: Monte Carlo NLL, Gaussian KL, latent
continuity penalty, Adam, checkpointing.

The negative log-likelihood of a sequence is

    -sum_i log lambda(t_i, m_i | history before t_i)
    + integral over [t_1, t_L] of the total intensity,

where the log term for event i conditions on the fused row of event i-1
(a learned row for the first event) and the integral is estimated with a
fixed number of uniform Monte Carlo samples per inter-event interval
(trapezoid nodes as a deterministic alternative).  The three loss terms
are summed with unit weights.
"""

import hashlib
import json
import logging
import struct
import time as _time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import intensity as inten
from .errors import CheckpointError, ContractError, NumericError, ParseError, TrainingDivergedError
from .events import inter_event_intervals
from .evolution import ChannelOutput
from .model import ModelConfig, NextppModel
from .rng import Rng

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"NEXTPPCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    mc_samples: int = 20
    seed: int = 0
    integrator: str = "mc"  # "mc" or "trapezoid"
    latent_noise: bool = True
    model_dim: int = 16
    latent_dim: int = 8
    layer_count: int = 2
    head_count: int = 2
    step_count: int = 8
    block_ratio: float = 1.0
    dropout: float = 0.1
    disable_neural_evolution: bool = False
    disable_cross_attention: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:  # 0 permitted as a degenerate no-op case
            raise ContractError("learning rate must be >= 0")
        if self.mc_samples < 1:
            raise ContractError("mc_samples must be >= 1")
        if self.integrator not in ("mc", "trapezoid"):
            raise ContractError(f"unknown integrator {self.integrator!r}")

    def model_config(self, mark_count):
        return ModelConfig(
            mark_count=mark_count,
            model_dim=self.model_dim,
            latent_dim=self.latent_dim,
            layer_count=self.layer_count,
            head_count=self.head_count,
            step_count=self.step_count,
            block_ratio=self.block_ratio,
            dropout=self.dropout,
            disable_neural_evolution=self.disable_neural_evolution,
            disable_cross_attention=self.disable_cross_attention,
        )


@dataclass(frozen=True)
class LossBreakdown:
    mle: float
    kl: float
    cont: float
    total: float
    event_count: int

    @staticmethod
    def make(mle, kl, cont, event_count):
        return LossBreakdown(mle=mle, kl=kl, cont=cont, total=mle + kl + cont, event_count=event_count)


@dataclass
class TrainRun:
    config: TrainConfig
    trace: list  # one LossBreakdown per completed epoch
    model: NextppModel
    wall_seconds: float
    checkpoints: list = field(default_factory=list)


# -- loss terms -------------------------------------------------------------


def nll(seq, fwd, model, mc_samples, rng=None, integrator="mc"):
    """Negative log-likelihood of one sequence given its forward pass.

    Returns a scalar graph node.  The intensity integral runs over
    [t_1, t_L]; each of the L-1 inter-event intervals is estimated with
    ``mc_samples`` uniform draws ("mc") or ``mc_samples`` trapezoid panels
    ("trapezoid", deterministic).
    """
    length = len(seq)
    if length < 2:
        raise ContractError("nll needs a sequence with at least two events")
    params = model.intensity
    delta = inter_event_intervals(seq)
    g = inten.gamma(params)

    try:
        cond = fwd.cond_rows(model.c0)  # (L, D)
        base_log = cond @ params.readout.T + params.bias + params.base  # (L, M)
        x_log = base_log + ad.Tensor(delta[:, None]) * params.decay.reshape(1, -1)
        lam_log = ad.gather_cols(ad.scaled_softplus(x_log, g), seq.marks)
        log_term = ad.log(lam_log).sum()

        spans = delta[1:]  # (L-1,) interval lengths
        c_int = ad.rows(fwd.c_rows, 0, length - 1)
        base_int = c_int @ params.readout.T + params.bias + params.base  # (L-1, M)
        if integrator == "mc":
            u = rng.uniform((length - 1, mc_samples))
            elapsed = u * spans[:, None]
            node_w = np.full(mc_samples, 1.0 / mc_samples)
        else:
            frac = np.linspace(0.0, 1.0, mc_samples + 1)
            elapsed = spans[:, None] * frac[None, :]
            node_w = np.full(mc_samples + 1, 1.0 / mc_samples)
            node_w[0] = node_w[-1] = 0.5 / mc_samples
        x_int = (
            ad.Tensor(elapsed[:, :, None]) * params.decay.reshape(1, 1, -1)
            + ad.reshape(base_int, (length - 1, 1, params.mark_count))
        )
        lam_tot = ad.scaled_softplus(x_int, g).sum(axis=2)  # (L-1, nodes)
        per_interval = (lam_tot * ad.Tensor(node_w[None, :])).sum(axis=1)
        integral = (per_interval * ad.Tensor(spans)).sum()
    except NumericError as err:
        _diagnose_intervals(seq, fwd, model)
        raise NumericError(f"nll: {err}") from err

    return integral - log_term


def _diagnose_intervals(seq, fwd, model):
    """Name the first interval whose intensity pre-activation is non-finite."""
    w = model.weights()
    c = fwd.c_rows.data
    for i in range(len(seq) - 1):
        x = w.readout @ c[i] + w.bias + w.base
        if not np.all(np.isfinite(x)):
            raise NumericError(f"nll: non-finite intensity on interval {i + 1} (after event {i + 1})")


def _latent_matrices(latents):
    if isinstance(latents, ChannelOutput):
        return latents.mean, latents.log_std, latents.z0, latents.z1
    means = ad.vstack([s.mean.reshape(1, -1) for s in latents])
    stds = ad.vstack([s.log_std.reshape(1, -1) for s in latents])
    z0 = ad.vstack([s.z0.reshape(1, -1) for s in latents])
    z1 = ad.vstack([s.z1.reshape(1, -1) for s in latents])
    return means, stds, z0, z1


def kl_loss(latents):
    """Summed KL(N(mean, diag sigma^2) || N(0, I)) over all latent states.

    Accepts a ChannelOutput or a list of LatentState.  Closed form per
    coordinate: (mean^2 + sigma^2 - 2 log sigma - 1) / 2; never negative.
    """
    mean, log_std, _, _ = _latent_matrices(latents)
    sigma_sq = ad.exp(2.0 * log_std)
    per = mean * mean + sigma_sq - 2.0 * log_std - 1.0
    return 0.5 * per.sum()


def continuity_loss(latents):
    """Sum of squared gaps between each evolved state and the next initial state."""
    _, _, z0, z1 = _latent_matrices(latents)
    n = z0.shape[0]
    if n < 2:
        return ad.Tensor(0.0)
    gap = ad.rows(z1, 0, n - 1) - ad.rows(z0, 1, n)
    return (gap * gap).sum()


def sequence_loss(seq, model, cfg, rng, training=True):
    """Forward one sequence and assemble (total_node, LossBreakdown floats)."""
    fwd = model.forward(seq, rng=rng, training=training, latent_noise=cfg.latent_noise and training)
    mle = nll(seq, fwd, model, cfg.mc_samples, rng=rng, integrator=cfg.integrator)
    if model.config.disable_neural_evolution:
        total = mle
        kl_v = cont_v = 0.0
    else:
        kl = kl_loss(fwd.channel)
        cont = continuity_loss(fwd.channel)
        total = mle + kl + cont
        kl_v, cont_v = kl.item(), cont.item()
    return total, LossBreakdown.make(mle.item(), kl_v, cont_v, len(seq))


# -- optimizer ---------------------------------------------------------------


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * (g * g)
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -- training loop -----------------------------------------------------------


def empirical_mark_rates(sequences, mark_count):
    """Events per unit time per mark, over each sequence's [t_1, t_L] window."""
    counts = np.zeros(mark_count)
    span = 0.0
    for seq in sequences:
        for m in seq.marks:
            counts[m] += 1
        span += float(seq.times[-1] - seq.times[0])
    return counts / max(span, 1e-12)


def train(dataset, cfg, out_dir=None, initial_state=None):
    """Fit a NextppModel to the dataset's length>=2 sequences by Adam.

    Deterministic under a fixed cfg.seed.  Writes a checkpoint per epoch
    plus a loss-trace CSV when out_dir is given.  Aborts with
    TrainingDivergedError (keeping the last good checkpoint) if the loss
    goes non-finite.
    """
    usable = [s for s in dataset.sequences if len(s) >= 2]
    if not usable:
        raise ContractError("training needs at least one sequence with two or more events")
    if len(usable) < len(dataset.sequences):
        log.warning("excluding %d length-1 sequence(s) from training", len(dataset.sequences) - len(usable))

    model = NextppModel(
        cfg.model_config(dataset.mark_count),
        seed=cfg.seed,
        empirical_rates=empirical_mark_rates(usable, dataset.mark_count),
    )
    if initial_state is not None:
        model.load_state(initial_state)
    params = model.parameters()
    opt = Adam(params, lr=cfg.learning_rate)
    rng = Rng(cfg.seed + 1)

    if out_dir is not None:
        out_dir = Path(out_dir)
    run = TrainRun(config=cfg, trace=[], model=model, wall_seconds=0.0)
    started = _time.monotonic()
    last_ckpt = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(usable))
        epoch_mle = epoch_kl = epoch_cont = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            ad.zero_gradients(params)
            batch_total = 0.0
            for idx in batch:
                try:
                    total, parts = sequence_loss(usable[idx], model, cfg, rng)
                    total.backward()
                except NumericError as err:
                    raise TrainingDivergedError(
                        f"training diverged at epoch {epoch + 1}: {err}", last_checkpoint=last_ckpt
                    ) from err
                batch_total += parts.total
                epoch_mle += parts.mle
                epoch_kl += parts.kl
                epoch_cont += parts.cont
            if not np.isfinite(batch_total):
                raise TrainingDivergedError(
                    f"training diverged at epoch {epoch + 1}: non-finite batch loss", last_checkpoint=last_ckpt
                )
            grads = ad.collect_gradients(params)
            scale = 1.0 / len(batch)
            opt.step({k: g * scale for k, g in grads.items()})
        n = len(usable)
        run.trace.append(LossBreakdown.make(epoch_mle / n, epoch_kl / n, epoch_cont / n, dataset.total_events()))
        if out_dir is not None:
            last_ckpt = str(out_dir / f"checkpoint_epoch{epoch + 1:04d}.ckpt")
            checkpoint_save(model, last_ckpt)
            run.checkpoints.append(last_ckpt)
    run.wall_seconds = _time.monotonic() - started
    if out_dir is not None:
        write_loss_csv(run.trace, out_dir / "loss.csv")
        final = str(out_dir / "checkpoint.ckpt")
        checkpoint_save(model, final)
        run.checkpoints.append(final)
    return run


def write_loss_csv(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mle,kl,cont,total\n")
        for i, row in enumerate(trace, start=1):
            fh.write(f"{i},{row.mle!r},{row.kl!r},{row.cont!r},{row.total!r}\n")


# -- checkpoints -------------------------------------------------------------


def config_hash(config_dict):
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def checkpoint_save(model, path):
    """Versioned binary container: header JSON + raw float64 parameter bytes."""
    arrays = model.state_arrays()
    cfg_dict = asdict(model.config)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "params": [{"name": k, "shape": list(arrays[k].shape)} for k in sorted(arrays)],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in sorted(arrays):
            fh.write(np.ascontiguousarray(arrays[k]).tobytes())


def checkpoint_load(path, expected_config=None):
    """Load (arrays, config_dict); bit-exact inverse of checkpoint_save.

    Raises CheckpointError on a version mismatch, truncated file, or (when
    expected_config is given) mismatched model dimensions.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise ParseError(f"cannot read checkpoint {path}: {err}") from err
    if len(raw) < 20 or raw[:8] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a nextpp checkpoint")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version} unsupported (expected {CHECKPOINT_VERSION})")
    (hlen,) = struct.unpack_from("<Q", raw, 12)
    if len(raw) < 20 + hlen:
        raise ParseError(f"{path}: truncated header")
    try:
        header = json.loads(raw[20 : 20 + hlen])
    except json.JSONDecodeError as err:
        raise ParseError(f"{path}: corrupt header: {err}") from err
    offset = 20 + hlen
    arrays = {}
    for meta in header["params"]:
        shape = tuple(meta["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + nbytes > len(raw):
            raise ParseError(f"{path}: truncated parameter data for {meta['name']}")
        arrays[meta["name"]] = np.frombuffer(raw[offset : offset + nbytes], dtype=np.float64).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise ParseError(f"{path}: trailing bytes after parameter data")
    config = header["config"]
    if expected_config is not None:
        expected = asdict(expected_config) if isinstance(expected_config, ModelConfig) else dict(expected_config)
        for key in ("mark_count", "model_dim", "latent_dim", "layer_count", "head_count"):
            if key in expected and expected[key] != config.get(key):
                raise CheckpointError(
                    f"{path}: checkpoint {key}={config.get(key)} incompatible with requested {key}={expected[key]}"
                )
    return arrays, config


def load_model(path):
    """Rebuild a NextppModel from a checkpoint file."""
    arrays, cfg = checkpoint_load(path)
    model = NextppModel(ModelConfig(**cfg), seed=0)
    model.load_state(arrays)
    return model
