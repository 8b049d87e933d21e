"""Flat key = value run configuration.

One file drives every CLI command: ``key = value`` per line, ``#``
comments, unknown keys rejected.  Every run writes its fully resolved
configuration next to its outputs, and that file alone is enough to
rerun the command.
"""

import numpy as np

from .errors import ValidationError


def _bool(s):
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _matrix(s):
    return [_floats(row) for row in s.split(";") if row.strip()]


def _opt_float(s):
    return None if s == "" else float(s)


def _opt_int(s):
    return None if s == "" else int(s)


# name -> (caster, default)
SCHEMA = {
    # reproducibility
    "seed": (int, 0),
    # model dimensions
    "model_dim": (int, 16),
    "latent_dim": (int, 8),
    "layer_count": (int, 2),
    "head_count": (int, 2),
    "step_count": (int, 8),
    "dropout": (float, 0.1),
    # training
    "lr": (float, 1e-3),
    "epochs": (int, 50),
    "batch_size": (int, 32),
    "mc_samples": (int, 20),
    "integrator": (str, "mc"),
    "latent_noise": (_bool, True),
    "alpha": (float, 1.0),
    "disable_neural_evolution": (_bool, False),
    "disable_cross_attention": (_bool, False),
    # thinning / prediction
    "horizon": (_opt_float, None),  # blank -> 10 x mean inter-event interval
    "bound_margin": (float, 1e-3),
    "bound_grid_points": (int, 64),
    "max_rejections": (int, 10000),
    "bound_safety": (float, 1.05),
    "max_predictions": (_opt_int, None),
    # synthetic generation
    "kind": (str, "hawkes"),
    "poisson_rates": (_floats, [0.2, 0.2]),
    "hawkes_mu": (_floats, [0.2, 0.2]),
    "hawkes_a": (_matrix, [[0.6, 0.1], [0.1, 0.6]]),
    "hawkes_b": (float, 1.0),
    "horizon_T": (float, 100.0),
    "n_train": (int, 400),
    "n_dev": (int, 50),
    "n_test": (int, 100),
    # command context (paths etc.), so a resolved file can rerun a command
    "command": (str, ""),
    "data": (str, ""),
    "checkpoint": (str, ""),
    "prefix": (str, ""),
    "oracle": (str, ""),
    "out": (str, ""),
    "count": (int, 1),
}


class RunConfig:
    def __init__(self, values=None):
        self._values = {k: default for k, (_, default) in SCHEMA.items()}
        if values:
            for k, v in values.items():
                self.set(k, v)

    def set(self, key, value):
        if key not in SCHEMA:
            raise ValidationError(f"unknown config key: {key!r}")
        self._values[key] = value

    def set_text(self, key, text):
        if key not in SCHEMA:
            raise ValidationError(f"unknown config key: {key!r}")
        caster = SCHEMA[key][0]
        try:
            self._values[key] = caster(text.strip())
        except ValueError as err:
            raise ValidationError(f"bad value for {key!r}: {err}") from err

    def __getattr__(self, key):
        try:
            return self.__dict__["_values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def __getitem__(self, key):
        return self._values[key]

    def as_dict(self):
        return dict(self._values)


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return ";".join(",".join(repr(float(x)) for x in row) for row in v)
        return ",".join(repr(float(x)) for x in v)
    return str(v)


def load_config(path, base=None):
    cfg = base if base is not None else RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, _, text = stripped.partition("=")
            try:
                cfg.set_text(key.strip(), text)
            except ValidationError as err:
                raise ValidationError(f"{path}:{lineno}: {err}") from err
    return cfg


def save_config(cfg, path):
    # `out` names the run's own location and is supplied per invocation, so
    # resolved files stay byte-identical across reruns into different dirs
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(SCHEMA):
            if key != "out":
                fh.write(f"{key} = {_format_value(cfg[key])}\n")


def resolve_horizon(cfg, dataset):
    """Default lookahead window: 10 x the dataset's mean inter-event interval."""
    if cfg.horizon is not None:
        return float(cfg.horizon)
    gaps = []
    for seq in dataset.sequences:
        if len(seq) >= 2:
            gaps.append(np.diff(seq.times))
    if not gaps:
        raise ValidationError("cannot infer a horizon from single-event sequences; set `horizon`")
    return 10.0 * float(np.concatenate(gaps).mean())
