"""Experiment configuration: flat ``key = value`` files, presets and validation."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace

from .bench import CASE_IDS, get_case
from .stopping import SOURCE_CONDITION, RegularizationSchedule

OUTPUT_ENV = "BREGMAN_CONTROL_OUTPUT"


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "ex2"
    dof: int | None = None
    schedule: str = "constant"
    alpha: float | None = None
    ratio: float = 1.0
    alpha_bound: float | None = None
    deltas: tuple = (1e-1, 1e-2, 1e-3)
    tau: float | None = None
    taus: tuple = ()
    kappa: float | str | None = None
    seeds: tuple = (0,)
    k_max: int = 750
    output: str = ""
    store_controls: bool = False
    full_scale: bool = False
    verify_only: bool = False
    noise_check: bool = False
    run_to_k_max: bool = False
    consistent_sign: bool = False
    lift_boundary: bool = True
    tol_inner: float = 1e-10
    max_newton: int = 50
    jobs: int = 1

    def resolved(self) -> "ExperimentConfig":
        """Fill unset fields from the benchmark preset and validate."""
        if self.case not in CASE_IDS:
            raise ConfigError(f"unknown case; choose from {', '.join(CASE_IDS)}", "case")
        case = get_case(self.case)
        cfg = replace(
            self,
            dof=self.dof if self.dof is not None else (case.full_dof if self.full_scale else case.dof),
            alpha=self.alpha if self.alpha is not None else case.alpha,
            tau=self.tau if self.tau is not None else case.tau,
            kappa=self.kappa if self.kappa is not None else case.kappa,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if not self.deltas:
            raise ConfigError("delta list is empty", "deltas")
        if any(not d >= 0 for d in self.deltas):
            raise ConfigError("noise levels must be nonnegative", "deltas")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError("tau must be positive", "tau")
        if any(not t > 0 for t in self.taus):
            raise ConfigError("tau values must be positive", "taus")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1", "k_max")
        if not self.seeds:
            raise ConfigError("seed list is empty", "seeds")
        if self.kappa is not None and self.kappa != SOURCE_CONDITION and not self.kappa > 0:
            raise ConfigError("kappa must be positive or SC", "kappa")
        if self.dof is not None and self.dof < 3:
            raise ConfigError("dof must be at least 3", "dof")
        if not self.tol_inner > 0:
            raise ConfigError("tol_inner must be positive", "tol_inner")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1", "jobs")
        try:
            self.schedule_obj()
        except ValueError as exc:
            raise ConfigError(str(exc), "schedule") from None

    def schedule_obj(self) -> RegularizationSchedule:
        return RegularizationSchedule(self.schedule, self.alpha if self.alpha is not None else 1.0,
                                      self.ratio, self.alpha_bound)

    def output_dir(self):
        root = os.environ.get(OUTPUT_ENV, "results")
        return os.path.join(root, self.output or self.case)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {_format(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        cfg = base if base is not None else cls()
        updates = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            updates[key] = (value, lineno)
        return cfg.with_overrides(updates)

    def with_overrides(self, items):
        """Apply ``{key: value_string}`` or ``{key: (value_string, line)}`` overrides."""
        types = {f.name: f for f in fields(self)}
        changes = {}
        for key, value in items.items():
            line = None
            if isinstance(value, tuple):
                value, line = value
            if key not in types:
                raise ConfigError("unknown key", key, line)
            try:
                changes[key] = _parse(key, value)
            except ValueError as exc:
                raise ConfigError(str(exc), key, line) from None
        return replace(self, **changes)


_INT = {"dof", "k_max", "max_newton", "jobs"}
_FLOAT = {"alpha", "ratio", "alpha_bound", "tau", "tol_inner"}
_BOOL = {"store_controls", "full_scale", "verify_only", "noise_check", "run_to_k_max",
         "consistent_sign", "lift_boundary"}
_FLOAT_LIST = {"deltas", "taus"}
_INT_LIST = {"seeds"}


def _parse(key, value):
    if value.lower() in ("none", "") and key in _INT | _FLOAT | {"kappa"}:
        return None
    if key in _INT:
        return int(value)
    if key in _FLOAT:
        return float(value)
    if key in _BOOL:
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if key in _FLOAT_LIST:
        return tuple(float(v) for v in value.split(",") if v.strip())
    if key in _INT_LIST:
        return tuple(int(v) for v in value.split(",") if v.strip())
    if key == "kappa":
        return SOURCE_CONDITION if value.upper() == SOURCE_CONDITION else float(value)
    return value


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format(x) for x in v)
    return str(v)


def preset(case_id) -> ExperimentConfig:
    """Published parameters for one benchmark, at desk-scale resolution."""
    c = get_case(case_id)
    return ExperimentConfig(case=case_id, dof=c.dof, alpha=c.alpha, tau=c.tau, kappa=c.kappa)

