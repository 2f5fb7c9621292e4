"""Run configuration: YAML documents with per-size sampling defaults."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

PIPELINES = (
    "spectrum",
    "equilibrium_sweep",
    "distribution",
    "dynamics",
    "fss",
    "transient",
    "steady",
)

# per size: eigenstates from the middle of the spectrum, equilibrium
# realizations, dynamics realizations
SAMPLING_DEFAULTS = {
    8: (22, 10_000, 5_000),
    10: (80, 10_000, 3_000),
    12: (200, 5_000, 200),
    14: (400, 2_000, 1_000),
    16: (800, 500, 1_000),
    18: (1_000, 100, None),
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def _require(mapping, section):
    if not isinstance(mapping, dict):
        raise ConfigError(f"section '{section}' must be a mapping, got {type(mapping).__name__}")
    return dict(mapping)


def _reject_leftovers(mapping, section):
    if mapping:
        key = sorted(mapping)[0]
        where = f"{section}.{key}" if section else key
        raise ConfigError(f"unknown key '{where}'")


def _floats(raw, name):
    try:
        values = [float(v) for v in raw]
    except (TypeError, ValueError):
        raise ConfigError(f"'{name}' must be a list of numbers") from None
    if not values:
        raise ConfigError(f"'{name}' must not be empty")
    return tuple(values)


@dataclass(frozen=True)
class ModelBlock:
    n_sites: tuple[int, ...] = (12,)
    h: tuple[float, ...] = (1.0,)
    d_two: float = 0.0
    d_three: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if not self.n_sites:
            raise ConfigError("'model.n_sites' must not be empty")
        for n in self.n_sites:
            if not 2 <= n <= 18:
                raise ConfigError(f"'model.n_sites' entries must lie in [2, 18], got {n}")
        for h in self.h:
            if h < 0:
                raise ConfigError(f"'model.h' entries must be non-negative, got {h}")
        if self.d_two < 0 or self.d_three < 0:
            raise ConfigError("chiral couplings must be non-negative")
        if self.boundary not in ("periodic", "open"):
            raise ConfigError(f"'model.boundary' must be periodic or open, got '{self.boundary}'")


OBSERVABLES = ("ggm", "ggm1", "gap_ratio", "zz_profile")


@dataclass(frozen=True)
class SamplingBlock:
    # counts are either one integer for every size or a {N: count} mapping
    n_eps: int | tuple[tuple[int, int], ...] | None = None
    n_r: int | tuple[tuple[int, int], ...] | None = None
    n_r_dyn: int | tuple[tuple[int, int], ...] | None = None
    master_seed: int = 0
    observables: tuple[str, ...] = ("ggm", "ggm1", "gap_ratio")

    def __post_init__(self):
        for name in ("n_eps", "n_r", "n_r_dyn"):
            value = getattr(self, name)
            if value is None:
                continue
            counts = [v for _, v in value] if isinstance(value, tuple) else [value]
            if any(v < 1 for v in counts):
                raise ConfigError(f"'sampling.{name}' counts must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("'sampling.master_seed' must fit in 64 bits")
        if not self.observables:
            raise ConfigError("'sampling.observables' must not be empty")
        for obs in self.observables:
            if obs not in OBSERVABLES:
                raise ConfigError(
                    f"'sampling.observables' entries must come from "
                    f"{', '.join(OBSERVABLES)}; got '{obs}'"
                )


@dataclass(frozen=True)
class SolverBlock:
    dense_dim_max: int = 3500
    theta_floor: float = 0.2
    residual_bound: float = 1e-6
    degeneracy_tol: float = 1e-12

    def __post_init__(self):
        if self.dense_dim_max < 1:
            raise ConfigError("'solver.dense_dim_max' must be positive")
        if not 0 < self.theta_floor < 1:
            raise ConfigError("'solver.theta_floor' must lie in (0, 1)")
        if self.residual_bound <= 0 or self.degeneracy_tol <= 0:
            raise ConfigError("solver tolerances must be positive")


@dataclass(frozen=True)
class DynamicsBlock:
    t_min: float = 1e-2
    t_max: float = 1e5
    points_per_decade: int = 20
    window: tuple[float, float | None] = (1e4, None)
    eps_m: float = 1e-10
    ggm_mode: str = "single_site"

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ConfigError("'dynamics' grid needs 0 < t_min < t_max")
        if self.points_per_decade < 1:
            raise ConfigError("'dynamics.points_per_decade' must be positive")
        lo, hi = self.window
        if lo <= 0 or (hi is not None and hi <= lo):
            raise ConfigError("'dynamics.window' must satisfy 0 < lo < hi")
        if self.eps_m <= 0:
            raise ConfigError("'dynamics.eps_m' must be positive")
        if self.ggm_mode not in ("single_site", "exact"):
            raise ConfigError(f"'dynamics.ggm_mode' must be single_site or exact, got '{self.ggm_mode}'")


@dataclass(frozen=True)
class ExperimentConfig:
    pipeline: str
    model: ModelBlock = field(default_factory=ModelBlock)
    sampling: SamplingBlock = field(default_factory=SamplingBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    dynamics: DynamicsBlock = field(default_factory=DynamicsBlock)
    output: str = "runs"

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(
                f"'pipeline' must be one of {', '.join(PIPELINES)}; got '{self.pipeline}'"
            )

    def _resolved(self, n_sites, column, name):
        explicit = getattr(self.sampling, name)
        if isinstance(explicit, tuple):
            for size, count in explicit:
                if size == n_sites:
                    return count
            raise ConfigError(f"'sampling.{name}' mapping has no entry for N={n_sites}")
        if explicit is not None:
            return explicit
        try:
            value = SAMPLING_DEFAULTS[n_sites][column]
        except KeyError:
            raise ConfigError(
                f"no tabulated default for N={n_sites}; set 'sampling.{name}' explicitly"
            ) from None
        if value is None:
            raise ConfigError(
                f"no tabulated default for N={n_sites}; set 'sampling.{name}' explicitly"
            )
        return value

    def n_eps_for(self, n_sites: int) -> int:
        return self._resolved(n_sites, 0, "n_eps")

    def n_r_for(self, n_sites: int) -> int:
        return self._resolved(n_sites, 1, "n_r")

    def n_r_dyn_for(self, n_sites: int) -> int:
        return self._resolved(n_sites, 2, "n_r_dyn")


def _parse_model(raw):
    raw = _require(raw, "model")
    kwargs = {}
    if "n_sites" in raw:
        sizes = raw.pop("n_sites")
        try:
            kwargs["n_sites"] = tuple(int(n) for n in sizes)
        except (TypeError, ValueError):
            raise ConfigError("'model.n_sites' must be a list of integers") from None
    if "h" in raw:
        kwargs["h"] = _floats(raw.pop("h"), "model.h")
    for key in ("d_two", "d_three"):
        if key in raw:
            kwargs[key] = float(raw.pop(key))
    if "boundary" in raw:
        kwargs["boundary"] = str(raw.pop("boundary"))
    _reject_leftovers(raw, "model")
    return ModelBlock(**kwargs)


def _parse_sampling(raw):
    raw = _require(raw, "sampling")
    kwargs = {}
    for key in ("n_eps", "n_r", "n_r_dyn"):
        if key in raw:
            value = raw.pop(key)
            if value is None:
                kwargs[key] = None
            elif isinstance(value, dict):
                kwargs[key] = tuple(sorted((int(n), int(v)) for n, v in value.items()))
            else:
                kwargs[key] = int(value)
    if "master_seed" in raw:
        kwargs["master_seed"] = int(raw.pop("master_seed"))
    if "observables" in raw:
        names = raw.pop("observables")
        if isinstance(names, str):
            names = [names]
        if not isinstance(names, (list, tuple)):
            raise ConfigError("'sampling.observables' must be a list of names")
        kwargs["observables"] = tuple(str(name) for name in names)
    _reject_leftovers(raw, "sampling")
    return SamplingBlock(**kwargs)


def _parse_solver(raw):
    raw = _require(raw, "solver")
    kwargs = {}
    if "dense_dim_max" in raw:
        kwargs["dense_dim_max"] = int(raw.pop("dense_dim_max"))
    for key in ("theta_floor", "residual_bound", "degeneracy_tol"):
        if key in raw:
            kwargs[key] = float(raw.pop(key))
    _reject_leftovers(raw, "solver")
    return SolverBlock(**kwargs)


def _parse_dynamics(raw):
    raw = _require(raw, "dynamics")
    kwargs = {}
    for key in ("t_min", "t_max", "eps_m"):
        if key in raw:
            kwargs[key] = float(raw.pop(key))
    if "points_per_decade" in raw:
        kwargs["points_per_decade"] = int(raw.pop("points_per_decade"))
    if "window" in raw:
        window = raw.pop("window")
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise ConfigError("'dynamics.window' must be a [lo, hi] pair (hi may be null)")
        lo, hi = window
        kwargs["window"] = (float(lo), None if hi is None else float(hi))
    if "ggm_mode" in raw:
        kwargs["ggm_mode"] = str(raw.pop("ggm_mode"))
    _reject_leftovers(raw, "dynamics")
    return DynamicsBlock(**kwargs)


def parse_config(source: str) -> ExperimentConfig:
    """Build a validated config from a YAML file path or a YAML string."""
    text = source
    if os.path.exists(source):
        with open(source) as handle:
            text = handle.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    raw = _require(raw, "")
    if "pipeline" not in raw:
        raise ConfigError("'pipeline' is required")
    pipeline = str(raw.pop("pipeline"))
    kwargs = {}
    for section, parser in (
        ("model", _parse_model),
        ("sampling", _parse_sampling),
        ("solver", _parse_solver),
        ("dynamics", _parse_dynamics),
    ):
        if section in raw:
            kwargs[section] = parser(raw.pop(section))
    if "output" in raw:
        kwargs["output"] = str(raw.pop("output"))
    _reject_leftovers(raw, "")
    return ExperimentConfig(pipeline=pipeline, **kwargs)


def _count_doc(value):
    if isinstance(value, tuple):
        return {size: count for size, count in value}
    return value


def serialize_config(config: ExperimentConfig) -> str:
    """YAML text that parses back to an equal config."""
    doc = {
        "pipeline": config.pipeline,
        "model": {
            "n_sites": list(config.model.n_sites),
            "h": list(config.model.h),
            "d_two": config.model.d_two,
            "d_three": config.model.d_three,
            "boundary": config.model.boundary,
        },
        "sampling": {
            "n_eps": _count_doc(config.sampling.n_eps),
            "n_r": _count_doc(config.sampling.n_r),
            "n_r_dyn": _count_doc(config.sampling.n_r_dyn),
            "master_seed": config.sampling.master_seed,
            "observables": list(config.sampling.observables),
        },
        "solver": {
            "dense_dim_max": config.solver.dense_dim_max,
            "theta_floor": config.solver.theta_floor,
            "residual_bound": config.solver.residual_bound,
            "degeneracy_tol": config.solver.degeneracy_tol,
        },
        "dynamics": {
            "t_min": config.dynamics.t_min,
            "t_max": config.dynamics.t_max,
            "points_per_decade": config.dynamics.points_per_decade,
            "window": list(config.dynamics.window),
            "eps_m": config.dynamics.eps_m,
            "ggm_mode": config.dynamics.ggm_mode,
        },
        "output": config.output,
    }
    return yaml.safe_dump(doc, sort_keys=False)


def apply_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply dotted key=value pairs, e.g. model.d_two=0.5 or sampling.n_r=40."""
    if not overrides:
        return config
    doc = yaml.safe_load(serialize_config(config))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        dotted, _, text = item.partition("=")
        keys = dotted.strip().split(".")
        target = doc
        for key in keys[:-1]:
            if not isinstance(target.get(key), dict):
                raise ConfigError(f"override path '{dotted}' does not name a section")
            target = target[key]
        if keys[-1] not in target:
            raise ConfigError(f"unknown key '{dotted}'")
        target[keys[-1]] = yaml.safe_load(text)
    return parse_config(yaml.safe_dump(doc))
