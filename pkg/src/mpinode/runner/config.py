"""Experiment configuration: a line-oriented ``key = value`` file with ``[section]`` headers.

Sections and keys::

    [experiment]  method, seed, scale, out_dir, run_id, eval_typical, eval_mixed,
                  data_seed_typical, data_seed_mixed
    [train]       epochs, ics_per_epoch, K, lr_max, lr_min, grad_clip, t_train,
                  train_grid_dt, sampling, sampler, n_val
    [weights]     lambda_phys, lambda_cont, lambda_reg
    [net]         hidden (comma list), wrapper, wrapper_bound
    [solver_train], [solver_eval]
                  rtol, atol, initial_step, max_steps, min_step
    [system]      system, then one line per coefficient
    [sweep]       kind, knob, values, seeds, widths, depths, parallel, workers

Values given in the file override the method preset; command-line flags
override the file.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

from .. import systems
from ..errors import ConfigError, ContractError
from ..losses import LossWeights
from ..trainer import TrainConfig

OUT_ENV = "MPINODE_OUT"
DEFAULT_OUT = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig
    system: systems.SystemParams = systems.lotka_volterra()
    eval_typical: int = 16
    eval_mixed: int = 16
    data_seed_typical: int = 1001
    data_seed_mixed: int = 2002
    out_dir: str = DEFAULT_OUT
    run_id: str = ""
    scale: str = "full"
    sweep: dict = dc_field(default_factory=dict)

    @property
    def method(self):
        return self.train.method

    @property
    def seed(self):
        return self.train.seed

    @property
    def run_name(self):
        return self.run_id or f"{self.method}_seed{self.seed}"

    @property
    def run_dir(self):
        return Path(self.out_dir) / self.run_name

    def with_train(self, **changes):
        return replace(self, train=replace(self.train, **changes))


def parse_sections(text):
    """``{section: {key: (value, line_number)}}``; keys before any header land in ``experiment``."""
    sections = {"experiment": {}}
    current = "experiment"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"unknown section [{current}]", lineno)
            sections.setdefault(current, {})
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        allowed = _SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
        sections[current][key] = (value, lineno)
    return sections


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in s.split(",") if v.strip())


def _bool(s):
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


_SOLVER_KEYS = {"rtol": float, "atol": float, "initial_step": float, "max_steps": int,
                "min_step": float}
_KEYS = {
    "experiment": {"method": str, "seed": int, "scale": str, "out_dir": str, "run_id": str,
                   "eval_typical": int, "eval_mixed": int, "data_seed_typical": int,
                   "data_seed_mixed": int},
    "train": {"epochs": int, "ics_per_epoch": int, "K": int, "lr_max": float, "lr_min": float,
              "grad_clip": float, "t_train": float, "train_grid_dt": float, "sampling": str,
              "sampler": str, "n_val": int},
    "weights": {"lambda_phys": float, "lambda_cont": float, "lambda_reg": float},
    "net": {"hidden": _ints, "wrapper": str, "wrapper_bound": float},
    "solver_train": _SOLVER_KEYS,
    "solver_eval": _SOLVER_KEYS,
    "system": None,
    "sweep": {"kind": str, "knob": str, "values": _floats, "seeds": _ints, "widths": _ints,
              "depths": _ints, "parallel": _bool, "workers": int},
}
_SECTIONS = {name: (set(keys) if keys is not None else None) for name, keys in _KEYS.items()}


def _typed(sections, name):
    out = {}
    for key, (value, lineno) in sections.get(name, {}).items():
        conv = _KEYS[name][key] if _KEYS[name] is not None else str
        try:
            out[key] = conv(value)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {err}", lineno) from None
    return out


def _line_of(sections, name, key=None):
    entries = sections.get(name, {})
    if key in entries:
        return entries[key][1]
    return min((ln for _, ln in entries.values()), default=None)


def build_config(sections, seed=None, out=None, scale=None, method=None) -> ExperimentConfig:
    exp = _typed(sections, "experiment")
    method = method or exp.get("method", "MPI")
    scale = scale or exp.get("scale", "full")
    if seed is not None:
        exp["seed"] = seed
    train_kw = _typed(sections, "train")
    net = _typed(sections, "net")
    if "hidden" in net:
        train_kw["hidden"] = net["hidden"]
    for key in ("wrapper", "wrapper_bound"):
        if key in net:
            train_kw[key] = net[key]
    try:
        base = TrainConfig.preset(method, scale)
    except ConfigError as err:
        where = _line_of(sections, "experiment", "method" if "method" in str(err) else "scale")
        raise ConfigError(str(err), where) from None
    try:
        weights = _typed(sections, "weights")
        if weights:
            cur = base.weights
            train_kw["weights"] = LossWeights(
                weights.get("lambda_phys", cur.lambda_phys),
                weights.get("lambda_cont", cur.lambda_cont),
                weights.get("lambda_reg", cur.lambda_reg),
            )
        for name in ("solver_train", "solver_eval"):
            vals = _typed(sections, name)
            if vals:
                train_kw[name] = replace(getattr(base, name), **vals)
        train_kw["seed"] = exp.get("seed", 0)
        train = replace(base, **train_kw)
        train.net_spec  # validates the network section
    except (ConfigError, ContractError, TypeError) as err:
        raise ConfigError(str(err), _line_of(sections, "train") or _line_of(sections, "net")) from None
    system = systems.lotka_volterra()
    sys_sec = _typed(sections, "system")
    if sys_sec:
        name = sys_sec.pop("system", systems.LOTKA_VOLTERRA)
        try:
            defaults = {systems.LOTKA_VOLTERRA: systems.lotka_volterra(),
                        systems.LORENZ63: systems.lorenz63(),
                        systems.FITZHUGH_NAGUMO: systems.fitzhugh_nagumo()}[name].as_dict()
            defaults.update({k: float(v) for k, v in sys_sec.items()})
            system = systems.SystemParams.from_dict(name, defaults)
        except (KeyError, ValueError) as err:
            raise ConfigError(f"invalid [system] section: {err}", _line_of(sections, "system")) from None
        if system.system != systems.LOTKA_VOLTERRA:
            raise ConfigError("experiments are defined for Lotka-Volterra only",
                              _line_of(sections, "system"))
    n_eval = 8 if scale == "desk" else 16
    out_dir = out or os.environ.get(OUT_ENV) or exp.get("out_dir", DEFAULT_OUT)
    cfg = ExperimentConfig(
        train=train, system=system,
        eval_typical=exp.get("eval_typical", n_eval), eval_mixed=exp.get("eval_mixed", n_eval),
        data_seed_typical=exp.get("data_seed_typical", 1001),
        data_seed_mixed=exp.get("data_seed_mixed", 2002),
        out_dir=str(out_dir), run_id=exp.get("run_id", ""), scale=scale,
        sweep=_typed(sections, "sweep"),
    )
    if min(cfg.eval_typical, cfg.eval_mixed) < 1:
        raise ConfigError("evaluation sets need at least one IC", _line_of(sections, "experiment"))
    return cfg


def load_config(path=None, seed=None, out=None, scale=None, method=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8") if path else ""
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return build_config(parse_sections(text), seed=seed, out=out, scale=scale, method=method)


def dump_config(cfg: ExperimentConfig) -> str:
    """Render a config in the file format; ``load`` of the result reproduces ``cfg``."""
    t = cfg.train
    lines = ["[experiment]", f"method = {t.method}", f"seed = {t.seed}", f"scale = {cfg.scale}",
             f"run_id = {cfg.run_name}", f"eval_typical = {cfg.eval_typical}",
             f"eval_mixed = {cfg.eval_mixed}", f"data_seed_typical = {cfg.data_seed_typical}",
             f"data_seed_mixed = {cfg.data_seed_mixed}", "", "[train]"]
    for key in ("epochs", "ics_per_epoch", "K", "lr_max", "lr_min", "grad_clip", "t_train",
                "train_grid_dt", "sampling", "sampler", "n_val"):
        lines.append(f"{key} = {getattr(t, key)!r}" if isinstance(getattr(t, key), float)
                     else f"{key} = {getattr(t, key)}")
    w = t.weights
    lines += ["", "[weights]", f"lambda_phys = {w.lambda_phys!r}",
              f"lambda_cont = {w.lambda_cont!r}", f"lambda_reg = {w.lambda_reg!r}",
              "", "[net]", f"hidden = {','.join(str(h) for h in t.hidden)}",
              f"wrapper = {t.wrapper}"]
    if t.wrapper_bound is not None:
        lines.append(f"wrapper_bound = {t.wrapper_bound!r}")
    for name in ("solver_train", "solver_eval"):
        s = getattr(t, name)
        lines += ["", f"[{name}]", f"rtol = {s.rtol!r}", f"atol = {s.atol!r}",
                  f"initial_step = {s.initial_step!r}", f"max_steps = {s.max_steps}",
                  f"min_step = {s.min_step!r}"]
    lines += ["", "[system]", f"system = {cfg.system.system}"]
    lines += [f"{k} = {v!r}" for k, v in cfg.system.as_dict().items()]
    return "\n".join(lines) + "\n"
