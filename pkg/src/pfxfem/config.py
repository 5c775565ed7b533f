"""Scenario configuration: INI-style text with flat key/value sections.

Example::

    [scenario]
    name = continuity
    mode = pf_xfem

    [geometry]
    x_range = -0.4, 0.4
    y_range = -0.5, 0.5
    nx = 12
    ny = 15

    [material]
    E = 20
    nu = 0.3
    Gc = 1e-4
    l = 0.012

    [numerics]
    m = 15
    delta_star = 3h

    [loading]
    du = 1e-4
    n_steps = 1
    reaction = top

    [bc.top]
    box = -0.4, 0.4, 0.5, 0.5
    ux = 0
    uy = u

    [cracks]
    crack.1 = -0.4, 0, 0.4, 0

Displacement and traction components are arithmetic expressions in
``x``, ``y`` (coordinates) and ``u`` (load parameter of the current step).
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .material import Material

MODES = ("pf_xfem", "pf_reference")

_ALLOWED_FUNCS = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "where": np.where,
}
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Compare,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Lt,
    ast.LtE,
    ast.Gt,
    ast.GtE,
)


class ConfigError(ValueError):
    pass


def compile_expression(text: str, key: str = "expression"):
    """Compile an arithmetic expression of ``x, y, u`` into a vectorized callable."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"{key}: cannot parse expression {text!r}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"{key}: construct {type(node).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in ("x", "y", "u", "pi") and node.id not in _ALLOWED_FUNCS:
            raise ConfigError(f"{key}: unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_FUNCS):
            raise ConfigError(f"{key}: only {sorted(_ALLOWED_FUNCS)} may be called")
    code = compile(tree, f"<{key}>", "eval")

    def fn(x, y, u):
        env = dict(_ALLOWED_FUNCS, x=np.asarray(x, float), y=np.asarray(y, float), u=float(u), pi=math.pi)
        return np.asarray(eval(code, {"__builtins__": {}}, env), dtype=float)  # noqa: S307

    fn.source = text.strip()
    return fn


@dataclass(frozen=True)
class Geometry:
    x_range: tuple
    y_range: tuple
    nx: int
    ny: int
    remove_box: tuple | None = None

    @property
    def h(self) -> float:
        return max((self.x_range[1] - self.x_range[0]) / self.nx, (self.y_range[1] - self.y_range[0]) / self.ny)


@dataclass(frozen=True)
class Numerics:
    delta_star: str = ""
    p: int = 1
    m: int | None = None
    a: float = 5.0
    alpha_E: float = 100.0
    d_star: float = 0.2
    d_crop: float = 0.9
    d_cut: float = 0.95
    d_extract: float = 0.98
    A_star: float | None = None
    tol: float = 1e-2
    max_iter: int = 200
    B: float = 1e3
    k_res: float = 1e-8
    crop: bool = True
    init_radius: str = "0"


@dataclass(frozen=True)
class BoundarySpec:
    name: str
    box: tuple
    first: str | None = None  # ux or tx expression
    second: str | None = None  # uy or ty expression


@dataclass(frozen=True)
class Loading:
    du: float
    n_steps: int
    u0: float = 0.0
    reaction: str = ""
    dirichlet: tuple = ()
    tractions: tuple = ()


@dataclass(frozen=True)
class InitialCracks:
    cracks: tuple = ()
    notches: tuple = ()


@dataclass(frozen=True)
class PartitionSpec:
    fixed: bool = False
    tips_box: tuple | None = None


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    stride: int = 1
    fields: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    geometry: Geometry
    material: Material
    numerics: Numerics
    loading: Loading
    cracks: InitialCracks = field(default_factory=InitialCracks)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    mode: str = "pf_xfem"

    @property
    def h(self) -> float:
        return self.geometry.h

    def length(self, text: str) -> float:
        """Evaluate a length given as a number or a multiple of ``h`` (``"2h"``)."""
        return parse_length(text, self.h)

    @property
    def delta_star(self) -> float:
        return self.length(self.numerics.delta_star)

    @property
    def m(self) -> int:
        from .mesh import refinement_factor

        if self.numerics.m is not None:
            return self.numerics.m
        return refinement_factor(self.h, self.material.l, self.numerics.p, self.numerics.a)

    @property
    def A_star(self) -> float:
        if self.numerics.A_star is not None:
            return self.numerics.A_star
        return self.h * self.material.l / 5.0

    def with_mode(self, mode: str) -> "ScenarioConfig":
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        return replace(self, mode=mode)


def parse_length(text: str, h: float) -> float:
    t = str(text).strip().replace(" ", "")
    try:
        if t.endswith("h"):
            coef = t[:-1].rstrip("*")
            return (float(coef) if coef else 1.0) * h
        return float(t)
    except ValueError as exc:
        raise ConfigError(f"cannot read length {text!r}") from exc


# ---------------------------------------------------------------------------
# parsing


def _floats(text: str, n: int | None, key: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(";", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{key}: values must be finite")
    return vals


def _int(text: str, key: str) -> int:
    try:
        v = float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc
    if v != int(v):
        raise ConfigError(f"{key}: expected an integer, got {text!r}")
    return int(v)


def _float(text: str, key: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{key}: must be finite")
    return v


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _check_keys(section, allowed, name):
    for k in section:
        if k not in allowed:
            raise ConfigError(f"[{name}]: unknown key {k!r}")


def _require(section, key, name):
    if key not in section:
        raise ConfigError(f"[{name}]: missing key {key!r}")
    return section[key]


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate scenario text; errors name the key at fault."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    known = {"scenario", "geometry", "material", "numerics", "loading", "cracks", "partition", "output"}
    for s in cp.sections():
        if s not in known and not s.startswith("bc.") and not s.startswith("traction."):
            raise ConfigError(f"unknown section [{s}]")
    for s in ("geometry", "material", "numerics", "loading"):
        if not cp.has_section(s):
            raise ConfigError(f"missing section [{s}]")

    sc = cp["scenario"] if cp.has_section("scenario") else {}
    _check_keys(sc, {"name", "mode"}, "scenario")
    name = sc.get("name", "scenario")
    mode = sc.get("mode", "pf_xfem")
    if mode not in MODES:
        raise ConfigError(f"[scenario] mode: must be one of {MODES}, got {mode!r}")

    g = cp["geometry"]
    _check_keys(g, {"x_range", "y_range", "nx", "ny", "remove_box"}, "geometry")
    geom = Geometry(
        _floats(_require(g, "x_range", "geometry"), 2, "x_range"),
        _floats(_require(g, "y_range", "geometry"), 2, "y_range"),
        _int(_require(g, "nx", "geometry"), "nx"),
        _int(_require(g, "ny", "geometry"), "ny"),
        _floats(g["remove_box"], 4, "remove_box") if "remove_box" in g else None,
    )
    if geom.nx < 1 or geom.ny < 1:
        raise ConfigError("[geometry] nx, ny: must be >= 1")
    if geom.x_range[1] <= geom.x_range[0] or geom.y_range[1] <= geom.y_range[0]:
        raise ConfigError("[geometry] ranges must be increasing")

    mt = cp["material"]
    _check_keys(mt, {"E", "nu", "Gc", "l"}, "material")
    try:
        mat = Material(*(_float(_require(mt, k, "material"), k) for k in ("E", "nu", "Gc", "l")))
    except ValueError as exc:
        raise ConfigError(f"[material] {exc}") from exc

    nm = cp["numerics"]
    types = {f.name: f.type for f in fields(Numerics)}
    _check_keys(nm, set(types), "numerics")
    kw = {}
    for k, v in nm.items():
        if k in ("delta_star", "init_radius"):
            parse_length(v, geom.h)
            kw[k] = v.strip()
        elif k in ("p", "m", "max_iter"):
            kw[k] = _int(v, k)
        elif k == "crop":
            kw[k] = _bool(v, k)
        else:
            kw[k] = _float(v, k)
    if "delta_star" not in kw:
        raise ConfigError("[numerics]: missing key 'delta_star' (no default; e.g. '2h')")
    num = Numerics(**kw)
    if num.p != 1:
        raise ConfigError(f"[numerics] p: unsupported degree {num.p} (only p = 1 is implemented)")
    if num.m is not None and num.m < 1:
        raise ConfigError("[numerics] m: must be >= 1")
    if not (0 < num.d_star < num.d_crop < num.d_cut < num.d_extract < 1):
        raise ConfigError(
            "[numerics] thresholds must satisfy 0 < d_star < d_crop < d_cut < d_extract < 1"
        )
    if parse_length(num.delta_star, geom.h) <= 0:
        raise ConfigError("[numerics] delta_star: must be positive")
    for k in ("a", "alpha_E", "tol", "B"):
        if getattr(num, k) <= 0:
            raise ConfigError(f"[numerics] {k}: must be positive")
    if num.max_iter < 1:
        raise ConfigError("[numerics] max_iter: must be >= 1")
    if not 0 <= num.k_res < 1:
        raise ConfigError("[numerics] k_res: must be in [0, 1)")

    ld = cp["loading"]
    _check_keys(ld, {"du", "n_steps", "u0", "reaction"}, "loading")
    bcs, trs = [], []
    for s in cp.sections():
        if s.startswith("bc.") or s.startswith("traction."):
            sec = cp[s]
            bname = s.split(".", 1)[1]
            a, b = ("ux", "uy") if s.startswith("bc.") else ("tx", "ty")
            _check_keys(sec, {"box", a, b}, s)
            spec = BoundarySpec(
                bname, _floats(_require(sec, "box", s), 4, f"{s}.box"), sec.get(a), sec.get(b)
            )
            if spec.first is None and spec.second is None:
                raise ConfigError(f"[{s}]: at least one of {a}, {b} required")
            for key, ex in ((a, spec.first), (b, spec.second)):
                if ex is not None:
                    compile_expression(ex, f"{s}.{key}")
            (bcs if s.startswith("bc.") else trs).append(spec)
    load = Loading(
        _float(_require(ld, "du", "loading"), "du"),
        _int(_require(ld, "n_steps", "loading"), "n_steps"),
        _float(ld.get("u0", "0"), "u0"),
        ld.get("reaction", bcs[0].name if bcs else ""),
        tuple(bcs),
        tuple(trs),
    )
    if load.n_steps < 0:
        raise ConfigError("[loading] n_steps: must be >= 0")
    if load.reaction and load.reaction not in {b.name for b in bcs}:
        raise ConfigError(f"[loading] reaction: no boundary condition named {load.reaction!r}")

    cracks, notches = [], []
    if cp.has_section("cracks"):
        for k, v in cp["cracks"].items():
            if k.startswith("crack."):
                x1, y1, x2, y2 = _floats(v, 4, k)
                if math.hypot(x2 - x1, y2 - y1) <= 0:
                    raise ConfigError(f"[cracks] {k}: zero-length crack")
                cracks.append(((x1, y1), (x2, y2)))
            elif k.startswith("notch."):
                notches.append(_floats(v, 2, k))
            else:
                raise ConfigError(f"[cracks]: unknown key {k!r}")
    ic = InitialCracks(tuple(cracks), tuple(tuple(n) for n in notches))

    part = PartitionSpec()
    if cp.has_section("partition"):
        ps = cp["partition"]
        _check_keys(ps, {"fixed", "tips_box"}, "partition")
        part = PartitionSpec(
            _bool(ps.get("fixed", "false"), "fixed"),
            _floats(ps["tips_box"], 4, "tips_box") if "tips_box" in ps else None,
        )
        if part.fixed and part.tips_box is None:
            raise ConfigError("[partition] fixed partition needs tips_box")

    out = OutputSpec()
    if cp.has_section("output"):
        os_ = cp["output"]
        _check_keys(os_, {"directory", "stride", "fields"}, "output")
        out = OutputSpec(
            os_.get("directory", "out"),
            _int(os_.get("stride", "1"), "stride"),
            _bool(os_.get("fields", "true"), "fields"),
        )
        if out.stride < 1:
            raise ConfigError("[output] stride: must be >= 1")

    return ScenarioConfig(name, geom, mat, num, load, ic, part, out, mode)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def scenario_dir() -> Path:
    return Path(str(resources.files("pfxfem") / "scenarios"))


def shipped_scenarios() -> dict:
    """Scenario name -> path of every config shipped with the package."""
    return {p.stem: p for p in sorted(scenario_dir().glob("*.cfg"))}


def resolve_config(name_or_path) -> Path:
    """An existing file path, or the name of a shipped scenario (with or without ``.cfg``)."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    stem = p.name[:-4] if p.name.endswith(".cfg") else p.name
    shipped = shipped_scenarios()
    if stem in shipped and len(p.parts) == 1:
        return shipped[stem]
    raise FileNotFoundError(f"no config file or shipped scenario named {str(name_or_path)!r}")


# ---------------------------------------------------------------------------
# rendering


def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, str) else v


def _join(vals) -> str:
    return ", ".join(_fmt(v) for v in vals)


def render_config(cfg: ScenarioConfig) -> str:
    """Text form that :func:`parse_config` reads back to an equal config."""
    g, mt, nm, ld = cfg.geometry, cfg.material, cfg.numerics, cfg.loading
    lines = ["[scenario]", f"name = {cfg.name}", f"mode = {cfg.mode}", ""]
    lines += ["[geometry]", f"x_range = {_join(g.x_range)}", f"y_range = {_join(g.y_range)}", f"nx = {g.nx}", f"ny = {g.ny}"]
    if g.remove_box is not None:
        lines.append(f"remove_box = {_join(g.remove_box)}")
    lines += ["", "[material]", f"E = {mt.E!r}", f"nu = {mt.nu!r}", f"Gc = {mt.Gc!r}", f"l = {mt.l!r}", "", "[numerics]"]
    default = Numerics()
    for f in fields(Numerics):
        v = getattr(nm, f.name)
        if f.name != "delta_star" and v == getattr(default, f.name):
            continue
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    lines += ["", "[loading]", f"du = {ld.du!r}", f"n_steps = {ld.n_steps}", f"u0 = {ld.u0!r}"]
    if ld.reaction:
        lines.append(f"reaction = {ld.reaction}")
    for prefix, specs, (a, b) in (("bc", ld.dirichlet, ("ux", "uy")), ("traction", ld.tractions, ("tx", "ty"))):
        for s in specs:
            lines += ["", f"[{prefix}.{s.name}]", f"box = {_join(s.box)}"]
            if s.first is not None:
                lines.append(f"{a} = {s.first}")
            if s.second is not None:
                lines.append(f"{b} = {s.second}")
    if cfg.cracks.cracks or cfg.cracks.notches:
        lines += ["", "[cracks]"]
        for i, (p, q) in enumerate(cfg.cracks.cracks, 1):
            lines.append(f"crack.{i} = {_join(p + q)}")
        for i, n in enumerate(cfg.cracks.notches, 1):
            lines.append(f"notch.{i} = {_join(n)}")
    if cfg.partition != PartitionSpec():
        lines += ["", "[partition]", f"fixed = {'true' if cfg.partition.fixed else 'false'}"]
        if cfg.partition.tips_box is not None:
            lines.append(f"tips_box = {_join(cfg.partition.tips_box)}")
    o = cfg.output
    lines += ["", "[output]", f"directory = {o.directory}", f"stride = {o.stride}", f"fields = {'true' if o.fields else 'false'}"]
    return "\n".join(lines) + "\n"


def boundary_conditions(cfg: ScenarioConfig):
    """Compiled Dirichlet and traction conditions for the assembler."""
    from .assembly import DirichletBC, TractionBC

    d = []
    for s in cfg.loading.dirichlet:
        d.append(
            DirichletBC(
                s.name,
                s.box,
                compile_expression(s.first, f"bc.{s.name}.ux") if s.first is not None else None,
                compile_expression(s.second, f"bc.{s.name}.uy") if s.second is not None else None,
            )
        )
    t = []
    for s in cfg.loading.tractions:
        t.append(
            TractionBC(
                s.name,
                s.box,
                compile_expression(s.first, f"traction.{s.name}.tx") if s.first is not None else None,
                compile_expression(s.second, f"traction.{s.name}.ty") if s.second is not None else None,
            )
        )
    return d, t
