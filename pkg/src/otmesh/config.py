"""Run configuration: INI-style sections with a version key, parsed into dataclasses.

Example::

    [otmesh]
    version = 1

    [mesh]
    generator = unit_square     ; or: path = initial.otm
    n = 16
    k = 3

    [state]
    preset = tanh-shock         ; or: path = state.otf
    x0 = 0.5
    width = 0.02

    [monitor]
    option = density_gradient
    beta = 1.0

    [adapt]
    max_adapt = 2

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .monge_ampere import MAParams
from .monitor import MonitorConfig
from .shock_reg import C0, ETA_T, ZETA

CONFIG_VERSION = 1
GENERATORS = ("unit_square", "rectangle", "channel", "double_ramp")
DENSITIES = ("uniform", "gaussian-ring", "oblique-band", "manufactured")


class ConfigError(ValueError):
    pass


@dataclass
class MeshSpec:
    path: Path | None = None
    generator: str = "unit_square"
    n: int = 16
    nx: int | None = None
    ny: int | None = None
    k: int = 3
    geometry: str | None = None  # preset name; defaults to the generator's own
    segments: list = field(default_factory=list)  # explicit segment records
    wall_tags: tuple = ()


@dataclass
class StateSpec:
    path: Path | None = None
    preset: str | None = "uniform"
    params: dict = field(default_factory=dict)


@dataclass
class DensitySpec:
    """Analytic target density for the density-only solve mode."""

    preset: str = "uniform"
    params: dict = field(default_factory=dict)


@dataclass
class HomotopyParams:
    lam1: float = 1.0
    lam2: float = 1.5
    zeta: float = ZETA
    eta_t: float = ETA_T
    c0: float = C0
    xi_choice: str = "density"
    enabled: bool = False


@dataclass
class OutputSpec:
    directory: Path = Path("out")
    vtk: bool = False
    write_density: bool = True


@dataclass
class AdaptConfig:
    mesh: MeshSpec = field(default_factory=MeshSpec)
    state: StateSpec = field(default_factory=StateSpec)
    density: DensitySpec = field(default_factory=DensitySpec)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    ma: MAParams = field(default_factory=MAParams)
    homotopy: HomotopyParams = field(default_factory=HomotopyParams)
    output: OutputSpec = field(default_factory=OutputSpec)
    max_adapt: int = 1
    tol_adapt: float = 1e-3
    source: Path | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("tol_fp", "tol_bc", "tau"):
            if not getattr(self.ma, name) > 0.0:
                raise ConfigError(f"ma.{name} must be positive")
        if not 0.5 <= self.ma.damping <= 1.0:
            raise ConfigError("ma.damping must lie in [0.5, 1]")
        if self.ma.max_fp < 1:
            raise ConfigError("ma.max_fp must be at least 1")
        if self.max_adapt < 1:
            raise ConfigError("adapt.max_adapt must be at least 1")
        if not self.tol_adapt > 0.0:
            raise ConfigError("adapt.tol_adapt must be positive")
        if self.mesh.path is None and self.mesh.generator not in GENERATORS:
            raise ConfigError(f"unknown mesh generator {self.mesh.generator!r}; choose from {GENERATORS}")
        if self.density.preset not in DENSITIES:
            raise ConfigError(f"unknown density preset {self.density.preset!r}; choose from {DENSITIES}")

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        d = clean(asdict(self))
        d["version"] = CONFIG_VERSION
        return d


def _coerce(template, raw: str):
    if isinstance(template, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw.strip()


def _fill(obj, section, skip=()):
    """Set dataclass fields from an INI section, checking names and types."""
    names = {f.name: f for f in fields(obj)}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in names:
            raise ConfigError(f"[{section.name}] unknown key {key!r}")
        cur = getattr(obj, key)
        try:
            if cur is None:
                val = None if raw.strip().lower() == "none" else _guess(raw)
            else:
                val = _coerce(cur, raw)
        except ValueError as exc:
            raise ConfigError(f"[{section.name}] {key}: {exc}") from None
        setattr(obj, key, val)


def _guess(raw: str):
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw.strip()


def _params(section, reserved) -> dict:
    return {k: _guess(v) for k, v in section.items() if k not in reserved}


def parse_config(text: str, base: Path | None = None) -> AdaptConfig:
    """Parse configuration text; paths are made absolute against ``base``."""
    base = Path(".") if base is None else Path(base)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    if not cp.has_section("otmesh") or "version" not in cp["otmesh"]:
        raise ConfigError("missing [otmesh] section with a version key")
    if cp["otmesh"]["version"].strip() != str(CONFIG_VERSION):
        raise ConfigError(f"unsupported config version {cp['otmesh']['version']!r}")
    known = {"otmesh", "mesh", "state", "density", "monitor", "ma", "homotopy", "output", "adapt"}
    extra = set(cp.sections()) - known
    if extra:
        raise ConfigError(f"unknown section(s) {sorted(extra)}")

    mesh = MeshSpec()
    if cp.has_section("mesh"):
        s = cp["mesh"]
        _fill(mesh, s, skip=("path", "segments", "wall_tags"))
        if "path" in s:
            mesh.path = base / s["path"].strip()
        if "segments" in s:
            mesh.segments = [ln.strip() for ln in s["segments"].splitlines() if ln.strip()]
        if "wall_tags" in s:
            mesh.wall_tags = tuple(int(t) for t in s["wall_tags"].replace(",", " ").split())

    state = StateSpec()
    if cp.has_section("state"):
        s = cp["state"]
        if "path" in s:
            state.path, state.preset = base / s["path"].strip(), None
        elif "preset" in s:
            state.preset = s["preset"].strip()
        state.params = _params(s, ("path", "preset"))

    dens = DensitySpec()
    if cp.has_section("density"):
        s = cp["density"]
        dens.preset = s.get("preset", "uniform").strip()
        dens.params = _params(s, ("preset",))

    monitor = MonitorConfig()
    if cp.has_section("monitor"):
        _fill(monitor, cp["monitor"])
    try:
        monitor.__post_init__()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    ma = MAParams()
    if cp.has_section("ma"):
        _fill(ma, cp["ma"])
    hom = HomotopyParams()
    if cp.has_section("homotopy"):
        _fill(hom, cp["homotopy"])
    out = OutputSpec()
    if cp.has_section("output"):
        s = cp["output"]
        _fill(out, s, skip=("directory",))
        if "directory" in s:
            out.directory = base / s["directory"].strip()
    else:
        out.directory = base / out.directory

    max_adapt, tol_adapt = 1, 1e-3
    if cp.has_section("adapt"):
        s = cp["adapt"]
        bad = set(s) - {"max_adapt", "tol_adapt"}
        if bad:
            raise ConfigError(f"[adapt] unknown key(s) {sorted(bad)}")
        try:
            max_adapt = int(s.get("max_adapt", max_adapt))
            tol_adapt = float(s.get("tol_adapt", tol_adapt))
        except ValueError as exc:
            raise ConfigError(f"[adapt] {exc}") from None
    return AdaptConfig(mesh, state, dens, monitor, ma, hom, out, max_adapt, tol_adapt)


def load_config(path) -> AdaptConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(text, path.parent)
    cfg.source = path
    return cfg
