"""Reader and writer for the INI-style run configuration.

The dialect is plain ``[section]`` headers with ``key=value`` lines. Values
may be numbers (scientific notation allowed), booleans, bare words, brace
lists ``{a, b}`` nested to any depth, and parenthesized tuples ``(a, b)``.
A value may continue over several lines while braces are open.
"""

import hashlib
import re
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import ValidationError
from .propagators.foerster import PREFACTORS as FOERSTER_PREFACTORS
from .spectroscopy import PATHWAYS

TASKS = ("population_dynamics", "linear_absorption", "two_dimensional_spectra")
POPULATION_METHODS = ("heom", "redfield_full", "redfield_secular", "foerster")
SECONDS_TO_FS = 1e15


class ConfigError(ValidationError):
    """Malformed or inconsistent configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class ConfigWarning(UserWarning):
    """Accepted but unused or suspicious configuration content."""


# ---------------------------------------------------------------- value grammar

_TOKEN = re.compile(r"\s*(?:([{}(),])|([^{}(),]+))")


def _scalar(text):
    s = text.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def parse_value(text, line=None):
    """Parse one right-hand side into Python scalars, lists and tuples.

    Braces give lists, parentheses give tuples; ``{}`` is an empty list and
    an empty right-hand side is the empty string.
    """
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        tokens.append(m.group(1) or m.group(2).strip())
        pos = m.end()
    if not tokens:
        return ""
    closing = {"{": "}", "(": ")"}

    def parse(i):
        tok = tokens[i]
        if tok in closing:
            close = closing[tok]
            items = []
            i += 1
            if i < len(tokens) and tokens[i] == close:
                return ([] if tok == "{" else ()), i + 1
            while True:
                if i >= len(tokens):
                    raise ConfigError(f"unclosed '{tok}' in {text!r}", line)
                item, i = parse(i)
                items.append(item)
                if i >= len(tokens):
                    raise ConfigError(f"unclosed '{tok}' in {text!r}", line)
                if tokens[i] == close:
                    return (items if tok == "{" else tuple(items)), i + 1
                if tokens[i] != ",":
                    raise ConfigError(f"expected ',' or '{close}' in {text!r}", line)
                i += 1
        if tok in "}),":
            raise ConfigError(f"unexpected '{tok}' in {text!r}", line)
        return _scalar(tok), i + 1

    value, end = parse(0)
    if end != len(tokens):
        raise ConfigError(f"trailing content after value in {text!r}", line)
    return value


def format_value(value) -> str:
    """Inverse of :func:`parse_value` for the types it produces."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, np.ndarray)):
        return "{" + ", ".join(format_value(v) for v in value) + "}"
    if isinstance(value, tuple):
        return "(" + ", ".join(format_value(v) for v in value) + ")"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def read_sections(text):
    """Split text into ``{section: {key: (raw_value, line)}}`` preserving order."""
    sections = {}
    current = None
    pending = None  # (key, parts, start_line, depth)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].rstrip() if not pending else raw.rstrip()
        if pending:
            key, parts, start, depth = pending
            parts.append(line.strip())
            depth += line.count("{") + line.count("(") - line.count("}") - line.count(")")
            if depth <= 0:
                sections[current][key] = (" ".join(parts), start)
                pending = None
            else:
                pending = (key, parts, start, depth)
            continue
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigError(f"malformed section header {stripped!r}", lineno)
            current = stripped[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected key=value, got {stripped!r}", lineno)
        if current is None:
            raise ConfigError("key before any [section] header", lineno)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
        depth = value.count("{") + value.count("(") - value.count("}") - value.count(")")
        if depth > 0:
            pending = (key, [value], lineno, depth)
        else:
            sections[current][key] = (value, lineno)
    if pending:
        raise ConfigError(f"unclosed brace in value of {pending[0]!r}", pending[2])
    return sections


# ---------------------------------------------------------------- typed sections


@dataclass
class ProgramSection:
    task: str = "population_dynamics"
    observations: list = field(default_factory=list)
    observe_steps: int = 1
    method: str = "heom"
    initial_site: int = 0
    initial_exciton: int = -1
    foerster_prefactor: str = "linear"


@dataclass
class FilteringSection:
    strategy: str = "none"
    first_layer: int = -1


@dataclass
class SolverSection:
    """``step_size`` is in seconds as written; see :attr:`dt_fs`."""

    stepper_type: str = "rk_rk4"
    step_size: float = 1e-15
    steps: int = 1000
    track_flows: bool = False
    flow_filename: str = ""
    substeps: int = 1

    @property
    def dt_fs(self) -> float:
        return self.step_size * SECONDS_TO_FS


@dataclass
class SystemSection:
    ado_depth: int = 3
    sites: int = 1
    hamiltonian: list = field(default_factory=list)


@dataclass
class BathsSection:
    max_per_site: int = 1
    number: int = 0
    coupling: list = field(default_factory=list)
    reorganization: list = field(default_factory=list)
    invnu: list = field(default_factory=list)
    Omega: list = field(default_factory=list)
    matsubaras: int = 1
    temperature: float = 300.0


@dataclass
class DipoleSection:
    directions: list = field(default_factory=list)
    centers: list = field(default_factory=list)
    strengths: list = field(default_factory=list)
    tensor_prefactors: list = field(default_factory=list)
    tensor_components: list = field(default_factory=list)


@dataclass
class SpectraSection:
    steps_t_1: int = 0
    steps_t_3: int = 0
    steps_t_delay: int = 0
    pathways: list = field(default_factory=list)
    delays: list = field(default_factory=list)
    polarization: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    zero_pad: int = 4
    write_components: bool = False


@dataclass
class DisorderSection:
    sigma: float = 0.0
    samples: int = 1
    seed: int = 0


# INI key -> attribute where they differ ("lambda" is a Python keyword)
_KEY_ALIASES = {("baths", "lambda"): "reorganization"}
_SECTIONS = {
    "program": ProgramSection,
    "filtering": FilteringSection,
    "solver": SolverSection,
    "system": SystemSection,
    "baths": BathsSection,
    "dipole": DipoleSection,
    "spectra": SpectraSection,
    "disorder": DisorderSection,
}
_REQUIRED = ("program", "system", "baths")


@dataclass
class RunConfig:
    """Typed configuration plus anything unrecognized.

    ``present`` records which sections appeared in the source so that
    serialization does not invent optional sections; ``unknown`` keeps
    unrecognized ``(section, key) -> raw text`` entries.
    """

    program: ProgramSection = field(default_factory=ProgramSection)
    filtering: FilteringSection = field(default_factory=FilteringSection)
    solver: SolverSection = field(default_factory=SolverSection)
    system: SystemSection = field(default_factory=SystemSection)
    baths: BathsSection = field(default_factory=BathsSection)
    dipole: DipoleSection = field(default_factory=DipoleSection)
    spectra: SpectraSection = field(default_factory=SpectraSection)
    disorder: DisorderSection = field(default_factory=DisorderSection)
    present: tuple = ()
    unknown: dict = field(default_factory=dict)
    source_lines: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_sites(self) -> int:
        return self.system.sites

    def digest(self) -> str:
        """SHA-256 of the canonical serialization (first 16 hex digits)."""
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]

    def with_overrides(self, method=None, seed=None) -> "RunConfig":
        cfg = self
        if method is not None:
            cfg = replace(cfg, program=replace(cfg.program, method=method))
        if seed is not None:
            cfg = replace(cfg, disorder=replace(cfg.disorder, seed=int(seed)))
        validate(cfg)
        return cfg


def _coerce(section, key, default, value, line):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key} must be true or false, got {value!r}", line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}", line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"[{section}] {key} must be a number, got {value!r}", line)
        return float(value)
    if isinstance(default, str):
        return "" if value == "" else str(value)
    if isinstance(default, list):
        if value == "":
            return []
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {key} must be a brace list, got {value!r}", line)
        return value
    return value


def parse_config(text) -> RunConfig:
    """Parse configuration text and validate it.

    Raises
    ------
    ConfigError
        Malformed syntax, wrong types or inconsistent dimensions, with the
        offending line number.
    """
    raw = read_sections(text)
    for name in _REQUIRED:
        if name not in raw:
            raise ConfigError(f"missing required section [{name}]")
    values, unknown, lines = {}, {}, {}
    for section, entries in raw.items():
        cls = _SECTIONS.get(section)
        if cls is None:
            for key, (value, line) in entries.items():
                unknown[(section, key)] = value
                warnings.warn(f"line {line}: unknown section [{section}] kept but ignored", ConfigWarning, stacklevel=2)
            continue
        defaults = cls()
        names = {f.name for f in fields(cls)}
        kw = {}
        for key, (value, line) in entries.items():
            attr = _KEY_ALIASES.get((section, key), key)
            lines[(section, attr)] = line
            if attr not in names:
                unknown[(section, key)] = value
                warnings.warn(f"line {line}: unknown key {key!r} in [{section}] kept but ignored", ConfigWarning, stacklevel=2)
                continue
            kw[attr] = _coerce(section, key, getattr(defaults, attr), parse_value(value, line), line)
        values[section] = cls(**kw)
    cfg = RunConfig(
        **values,
        present=tuple(s for s in raw if s in _SECTIONS),
        unknown=unknown,
        source_lines=lines,
    )
    validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def _matrix(value, rows, cols, what, line, cfg_rows_name):
    if not isinstance(value, list) or any(not isinstance(r, list) for r in value):
        raise ConfigError(f"{what} must be a brace list of rows", line)
    if len(value) != rows:
        raise ConfigError(f"{what} has {len(value)} rows but {cfg_rows_name} = {rows}", line)
    for i, r in enumerate(value):
        if len(r) != cols:
            raise ConfigError(f"{what} row {i} has {len(r)} entries, expected {cols}", line)
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{what} entry {x!r} is not a number", line)
    return np.array(value, dtype=float)


def _numbers(value, n, what, line):
    if not isinstance(value, list) or any(isinstance(x, (bool, list, tuple, str)) for x in value):
        raise ConfigError(f"{what} must be a flat list of numbers", line)
    if len(value) != n:
        raise ConfigError(f"{what} has {len(value)} entries, expected {n}", line)
    return np.array(value, dtype=float)


def validate(cfg: RunConfig):
    """Check cross-field invariants; raises :class:`ConfigError`."""
    ln = lambda sec, key: cfg.source_lines.get((sec, key))  # noqa: E731
    p, s, b, d, sp, so = cfg.program, cfg.system, cfg.baths, cfg.dipole, cfg.spectra, cfg.solver
    if p.task not in TASKS:
        raise ConfigError(f"unknown task {p.task!r}; choose from {', '.join(TASKS)}", ln("program", "task"))
    if p.method not in POPULATION_METHODS:
        raise ConfigError(f"unknown method {p.method!r}; choose from {', '.join(POPULATION_METHODS)}", ln("program", "method"))
    if p.foerster_prefactor not in FOERSTER_PREFACTORS:
        raise ConfigError(
            f"unknown foerster_prefactor {p.foerster_prefactor!r}; choose from {', '.join(FOERSTER_PREFACTORS)}",
            ln("program", "foerster_prefactor"),
        )
    if p.observe_steps < 1:
        raise ConfigError("observe_steps must be >= 1", ln("program", "observe_steps"))
    for obs in p.observations:
        if not (isinstance(obs, tuple) and len(obs) == 2 and all(isinstance(x, str) and x for x in obs)):
            raise ConfigError(f"observation {obs!r} must be (kind, filename)", ln("program", "observations"))
    if s.sites < 1:
        raise ConfigError("sites must be >= 1", ln("system", "sites"))
    if s.ado_depth < 0:
        raise ConfigError("ado_depth must be >= 0", ln("system", "ado_depth"))
    H = _matrix(s.hamiltonian, s.sites, s.sites, "hamiltonian", ln("system", "hamiltonian"), "sites")
    if not np.allclose(H, H.T, atol=1e-9):
        raise ConfigError("hamiltonian is not symmetric", ln("system", "hamiltonian"))
    if not 0 <= p.initial_site < s.sites:
        raise ConfigError(f"initial_site {p.initial_site} outside 0..{s.sites - 1}", ln("program", "initial_site"))
    if p.initial_exciton >= s.sites:
        raise ConfigError(f"initial_exciton {p.initial_exciton} outside 0..{s.sites - 1}", ln("program", "initial_exciton"))
    if so.step_size <= 0 or so.steps < 0 or so.substeps < 1:
        raise ConfigError("step_size must be > 0, steps >= 0, substeps >= 1", ln("solver", "step_size"))
    if cfg.filtering.strategy != "none":
        raise ConfigError(f"filtering strategy {cfg.filtering.strategy!r} is not supported", ln("filtering", "strategy"))
    # baths
    coupling = b.coupling
    entries = 0
    for i, c in enumerate(coupling):
        sites = c if isinstance(c, list) else [c]
        if len(sites) != 1:
            raise ConfigError(f"bath {i} couples to {len(sites)} sites; only one site per bath is supported", ln("baths", "coupling"))
        for m in sites:
            if isinstance(m, bool) or not isinstance(m, int) or not 0 <= m < s.sites:
                raise ConfigError(f"bath {i} couples to invalid site {m!r}", ln("baths", "coupling"))
        entries += len(sites)
    if entries != b.number:
        raise ConfigError(f"baths.number = {b.number} but coupling lists {entries} entries", ln("baths", "number"))
    for key in ("reorganization", "invnu", "Omega"):
        arr = _numbers(getattr(b, key), b.number, f"baths.{'lambda' if key == 'reorganization' else key}", ln("baths", key))
        if key != "Omega" and np.any(arr <= 0) and key == "invnu":
            raise ConfigError("invnu must be > 0", ln("baths", key))
        if key == "reorganization" and np.any(arr < 0):
            raise ConfigError("lambda must be >= 0", ln("baths", key))
    per_site = np.bincount([c[0] if isinstance(c, list) else c for c in coupling], minlength=s.sites)
    if per_site.size and per_site.max(initial=0) > b.max_per_site:
        raise ConfigError(f"a site has {per_site.max()} baths but max_per_site = {b.max_per_site}", ln("baths", "coupling"))
    if b.temperature <= 0:
        raise ConfigError("temperature must be > 0 K", ln("baths", "temperature"))
    if b.matsubaras < 0:
        raise ConfigError("matsubaras must be >= 0", ln("baths", "matsubaras"))
    # dipoles
    needs_dipoles = p.task != "population_dynamics"
    if d.directions or needs_dipoles:
        if not d.directions:
            raise ConfigError(f"task {p.task} needs [dipole] directions")
        _matrix(d.directions, s.sites, 3, "dipole directions", ln("dipole", "directions"), "sites")
        if d.centers:
            _matrix(d.centers, s.sites, 3, "dipole centers", ln("dipole", "centers"), "sites")
        if d.strengths:
            _numbers(d.strengths, s.sites, "dipole strengths", ln("dipole", "strengths"))
    if len(d.tensor_prefactors) != len(d.tensor_components):
        raise ConfigError(
            f"{len(d.tensor_prefactors)} tensor_prefactors for {len(d.tensor_components)} tensor_components",
            ln("dipole", "tensor_prefactors"),
        )
    for comp in d.tensor_components:
        if not (isinstance(comp, list) and len(comp) == 4 and all(isinstance(x, int) and 0 <= x <= 2 for x in comp)):
            raise ConfigError(f"tensor component {comp!r} must be four axes in 0..2", ln("dipole", "tensor_components"))
    # spectra
    if p.task == "two_dimensional_spectra":
        for name in sp.pathways:
            if name not in PATHWAYS:
                raise ConfigError(f"unknown pathway {name!r}; choose from {', '.join(PATHWAYS)}", ln("spectra", "pathways"))
        if not sp.pathways:
            raise ConfigError("two_dimensional_spectra needs a non-empty pathways list", ln("spectra", "pathways"))
        if sp.steps_t_1 < 2 or sp.steps_t_3 != sp.steps_t_1:
            raise ConfigError(
                f"steps_t_1 = {sp.steps_t_1} and steps_t_3 = {sp.steps_t_3} must be equal and >= 2",
                ln("spectra", "steps_t_3"),
            )
        if p.method == "foerster":
            raise ConfigError("foerster rates cannot drive spectra", ln("program", "method"))
    if p.task == "linear_absorption":
        if sp.steps_t_1 < 2:
            raise ConfigError("linear_absorption needs steps_t_1 >= 2", ln("spectra", "steps_t_1"))
        if p.method == "foerster":
            raise ConfigError("foerster rates cannot drive spectra", ln("program", "method"))
    if len(sp.polarization) != 4:
        raise ConfigError("polarization needs four angles (degrees)", ln("spectra", "polarization"))
    if sp.zero_pad < 1:
        raise ConfigError("zero_pad must be >= 1", ln("spectra", "zero_pad"))
    dz = cfg.disorder
    if dz.sigma < 0 or dz.samples < 1:
        raise ConfigError("disorder needs sigma >= 0 and samples >= 1", ln("disorder", "sigma"))
    if so.track_flows:
        warnings.warn("track_flows is accepted but flow tracking is not implemented", ConfigWarning, stacklevel=3)


def serialize(cfg: RunConfig) -> str:
    """Render a configuration that :func:`parse_config` reads back as equal."""
    out = []
    inverse = {v: k for (sec, k), v in _KEY_ALIASES.items()}
    for name in cfg.present:
        section = getattr(cfg, name)
        out.append(f"[{name}]")
        for f in fields(section):
            key = inverse.get(f.name, f.name) if (name, inverse.get(f.name)) in _KEY_ALIASES else f.name
            out.append(f"{key}={format_value(getattr(section, f.name))}")
        out.extend(f"{k}={v}" for (sec, k), v in cfg.unknown.items() if sec == name)
        out.append("")
    for sec in dict.fromkeys(sec for sec, _ in cfg.unknown if sec not in cfg.present):
        out.append(f"[{sec}]")
        out.extend(f"{k}={v}" for (s, k), v in cfg.unknown.items() if s == sec)
        out.append("")
    return "\n".join(out)


def reference_listing() -> str:
    """The bundled seven-site FMO listing (two-dimensional spectra task)."""
    return (Path(__file__).parent / "data" / "fmo_listing.cfg").read_text(encoding="utf-8")
