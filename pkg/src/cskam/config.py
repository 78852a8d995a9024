"""Run configuration: ``key = value`` files with ``[section]`` blocks (TOML)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .models import FAMILIES

COMMANDS = ("solve", "continue", "breakdown", "greene", "basins", "bundle",
            "rotation-scan", "reproduce")


@dataclass
class ModelBlock:
    family: str = "dissipative_sm"
    lam: float | None = None
    mu: float = 0.0
    epsilon: float = 0.0
    a: float = 0.0
    eps1: float | None = None
    eps2: float | None = None
    harmonics: list | None = None
    e: float = 0.0549
    lambda_diss: float | None = None
    kd: float | None = None
    substeps: int = 512
    lam1: float = 0.5
    lam2: float = 0.9

    def build(self, epsilon: float | None = None):
        from .models import build_model
        kw = {"epsilon": self.epsilon if epsilon is None else epsilon}
        fam = self.family
        if fam in ("conservative_sm", "dissipative_sm", "two_harmonic", "nontwist_sm"):
            lam = self.lam
            if lam is None:
                lam = 1.0 if fam == "conservative_sm" else 0.9
            kw["lam"] = lam
            if lam != 1.0 or fam == "nontwist_sm":
                kw["mu"] = self.mu
            if fam == "nontwist_sm":
                kw["a"] = self.a
            if fam == "two_harmonic" or self.eps1 is not None or self.eps2 is not None:
                kw["eps1"] = 1.0 if self.eps1 is None else self.eps1
                kw["eps2"] = 0.0 if self.eps2 is None else self.eps2
            elif self.harmonics is not None:
                kw["harmonics"] = self.harmonics
        elif fam == "spin_orbit":
            kw.update(e=self.e, substeps=self.substeps)
            if self.kd is not None:
                kw["kd"] = self.kd
            elif self.lambda_diss is not None:
                kw["lambda_diss"] = self.lambda_diss
        elif fam == "two_factor_4d":
            kw.update(lam1=self.lam1, lam2=self.lam2)
        return build_model(fam, **kw)


@dataclass
class SolverBlock:
    tol: float = 1e-11
    tail_tol: float = 1e-9
    max_iter: int = 30
    n_modes_init: int = 64
    m_sobolev: float = 2.0
    max_modes: int = 2 ** 14


@dataclass
class ContinuationBlock:
    eps_start: float = 0.0
    eps_end: float = 1.0
    step: float = 0.05
    max_step: float = 0.02
    min_step: float = 1e-6
    grow: float = 1.3
    shrink: float = 0.5
    mode_cap: int = 2 ** 14
    sobolev_orders: list = field(default_factory=lambda: [1, 2, 3])
    track_bundle: bool = False
    m: float = 2.0
    min_points: int = 6
    growth: float = 3.0


@dataclass
class GreeneBlock:
    eps_grid: list = field(default_factory=lambda: [0.90, 0.92, 0.94, 0.96, 0.98, 1.0])
    q_min: int = 5
    q_max: int = 233
    threshold: float | None = None
    persistence: int = 3
    tol: float = 1e-3
    n_samples: int = 8
    tongues: list = field(default_factory=list)
    tongue_samples: int = 32


@dataclass
class BasinsBlock:
    n: int = 100
    x_min: float = 0.0
    x_max: float = 2 * math.pi
    y_min: float = -math.pi
    y_max: float = math.pi
    transient: int = 2000
    kept: int = 2000
    tol: float = 1e-4
    mode: str = "grid"


@dataclass
class ScanBlock:
    parameter: str = "a"
    start: float = -1.0
    stop: float = 1.0
    count: int = 101
    y0: float = 0.0
    x0: float = 0.0
    transient: int = 2000
    kept: int = 4000


@dataclass
class BundleBlock:
    n_iter: int = 10_000
    theta0: float = 0.0
    report: bool = False


@dataclass
class OutputBlock:
    dir: str = "."
    prefix: str = ""
    timings: bool = False


@dataclass
class RunConfig:
    command: str = "solve"
    omega: str | float = "golden"
    seed: int = 0
    jobs: int = 1
    artifact: str = ""
    model: ModelBlock = field(default_factory=ModelBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    continuation: ContinuationBlock = field(default_factory=ContinuationBlock)
    greene: GreeneBlock = field(default_factory=GreeneBlock)
    basins: BasinsBlock = field(default_factory=BasinsBlock)
    scan: ScanBlock = field(default_factory=ScanBlock)
    bundle: BundleBlock = field(default_factory=BundleBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def solver_options(self):
        from .newton import SolverOptions
        s = self.solver
        return SolverOptions(tol=s.tol, tail_tol=s.tail_tol, max_iter=s.max_iter,
                             max_modes=s.max_modes, m_sobolev=s.m_sobolev)

    def policy(self):
        from .continuation import ContinuationPolicy
        c = self.continuation
        return ContinuationPolicy(step=c.step, grow=c.grow, shrink=c.shrink,
                                  min_step=c.min_step, max_step=c.max_step,
                                  n_modes_init=self.solver.n_modes_init,
                                  max_modes=c.mode_cap,
                                  sobolev_orders=tuple(c.sobolev_orders),
                                  track_bundle=c.track_bundle,
                                  solver=self.solver_options())

    def omega_value(self):
        from .fourier import DiophantineFrequency
        try:
            return DiophantineFrequency.parse(self.omega)
        except ValueError as exc:
            raise ConfigError(f"omega: {exc}") from None

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if hasattr(v, "__dataclass_fields__"):
                out[f.name] = {g.name: getattr(v, g.name) for g in fields(v)
                               if getattr(v, g.name) is not None}
            else:
                out[f.name] = v
        return out


_ALIASES = {"lambda": "lam", "eps": "epsilon"}


def _coerce(where: str, value, default, annotation: str):
    if value is None:
        return None
    if "float" in annotation and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if annotation == "int" and isinstance(value, float) and value.is_integer():
        return int(value)
    expected = {"int": int, "float": float, "bool": bool, "str": str}.get(annotation)
    if expected is not None and not isinstance(value, expected):
        raise ConfigError(f"{where}: expected {annotation}, got {value!r}")
    if expected is int and isinstance(value, bool):
        raise ConfigError(f"{where}: expected int, got {value!r}")
    return value


def _fill(obj, data: dict, section: str, source: str):
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        name = _ALIASES.get(key, key)
        where = f"{source}: [{section}] {key}" if section else f"{source}: {key}"
        if name not in known:
            raise ConfigError(f"{where}: unknown key")
        f = known[name]
        current = getattr(obj, name)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a [{key}] block")
            _fill(current, value, key if not section else f"{section}.{key}", source)
            continue
        if isinstance(value, dict):
            raise ConfigError(f"{where}: unexpected block")
        setattr(obj, name, _coerce(where, value, current, str(f.type)))


def config_from_dict(data: dict, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    _fill(cfg, data, "", source)
    validate(cfg, source)
    return cfg


def load_config(path) -> RunConfig:
    path = str(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path)


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return config_from_dict(data, source)


def validate(cfg: RunConfig, source: str = "<config>"):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"{source}: command: unknown command {cfg.command!r}")
    if cfg.model.family not in FAMILIES:
        raise ConfigError(f"{source}: [model] family: unknown family {cfg.model.family!r}")
    cfg.omega_value()
    if cfg.solver.n_modes_init & (cfg.solver.n_modes_init - 1):
        raise ConfigError(f"{source}: [solver] n_modes_init: must be a power of two")
    if cfg.basins.mode not in ("grid", "random"):
        raise ConfigError(f"{source}: [basins] mode: expected 'grid' or 'random'")


def dump_config(cfg: RunConfig) -> str:
    """Serialise to the same ``key = value`` format (round-trips through parse)."""
    from .io import format_block, _fmt
    top, blocks = [], []
    for k, v in cfg.to_dict().items():
        if isinstance(v, dict):
            blocks.append(format_block(k, v))
        else:
            top.append(f"{k} = {_fmt(v)}")
    return "\n".join(top) + "\n\n" + "\n".join(blocks)
