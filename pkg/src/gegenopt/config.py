"""INI run configuration.

Every key is optional.  Missing mesh and refinement keys take the
published settings of the named benchmark.  Example::

    [problem]
    name = breakwell

    [mesh]
    alpha = 0.5
    N = 18

    [adapt]
    enabled = true
    rho = 1.5

    [solver]
    feas_tol = 1e-8

    [output]
    solution = breakwell.sol
    csv = breakwell.csv
    samples_per_element = 20
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .adaptive import AdaptParams
from .benchmarks import BENCHMARK_SETTINGS, registered_names
from .errors import ConfigurationError
from .gegenbauer import check_alpha
from .nlp import SolveOptions, available_solvers
from .transcription import Mesh

_SECTIONS = {"problem", "mesh", "adapt", "solver", "output", "sweep"}
_MESH_KEYS = {"alpha", "k", "n", "lx", "lu", "m", "mbar", "interfaces", "row_mode"}
_ADAPT_KEYS = {f.name.lower(): f.name for f in fields(AdaptParams)} | {"enabled": "enabled"}
_SOLVER_KEYS = {"name", "feas_tol", "opt_tol", "max_iter", "max_inner", "init"}
_OUTPUT_KEYS = {"solution", "csv", "samples_per_element", "trace"}
_SWEEP_KEYS = {"alphas", "n", "l", "fixed_edges", "workers", "table"}


def parse_floats(text: str, what: str) -> list[float]:
    items = [s.strip() for s in text.replace(";", ",").split(",")]
    try:
        return [float(s) for s in items if s]
    except ValueError:
        raise ConfigurationError(f"{what}: expected a comma-separated list of numbers, got {text!r}") from None


def _parse_ints(text: str, what: str) -> list[int]:
    vals = parse_floats(text, what)
    if any(v != int(v) for v in vals):
        raise ConfigurationError(f"{what}: expected integers, got {text!r}")
    return [int(v) for v in vals]


def auto_L(N: int) -> int:
    """Default state/control degree used by sweeps."""
    return math.ceil(N / 2) + 1


@dataclass
class SweepConfig:
    alphas: list = field(default_factory=list)
    N: list = field(default_factory=list)
    L: Optional[list] = None  # None means ceil(N/2) + 1
    fixed_edges: list = field(default_factory=list)  # original time
    workers: int = 1
    table: Optional[str] = None

    def L_for(self, i: int, N: int) -> int:
        return auto_L(N) if self.L is None else self.L[i]


@dataclass
class RunConfig:
    problem: str
    alpha: float
    K: int
    N: int
    Lx: int
    Lu: int
    M: int
    Mbar: int
    interfaces: list  # interior interfaces in original time
    row_mode: str
    adapt: AdaptParams
    adapt_enabled: bool
    solver: Optional[str]
    nlp: SolveOptions
    init: float
    solution_path: Optional[str] = None
    csv_path: Optional[str] = None
    trace_path: Optional[str] = None
    samples_per_element: int = 20
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def initial_mesh(self, t0: float, tf: float, alpha: Optional[float] = None, N=None, Lx=None, Lu=None) -> Mesh:
        a = self.alpha if alpha is None else alpha
        N, Lx, Lu = N or self.N, self.Lx if Lx is None else Lx, self.Lu if Lu is None else Lu
        if self.interfaces:
            tau = [(2.0 * t - t0 - tf) / (tf - t0) for t in self.interfaces]
            if any(not -1.0 < x < 1.0 for x in tau) or sorted(tau) != tau:
                raise ConfigurationError("interfaces must be increasing and strictly inside the horizon")
            return Mesh.from_interfaces(tau, N, Lx, Lu, self.M, self.Mbar, a, self.row_mode)
        return Mesh.uniform(self.K, N, Lx, Lu, self.M, self.Mbar, a, self.row_mode)


def _get(sec, key, conv, default, what):
    if key not in sec:
        return default
    raw = sec[key]
    try:
        return conv(raw)
    except ValueError:
        raise ConfigurationError(f"{what}.{key}: cannot parse {raw!r}") from None


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(s)


def _check_keys(cp, name, allowed):
    if name in cp:
        extra = set(cp[name]) - set(allowed)
        if extra:
            raise ConfigurationError(f"[{name}] unknown keys: {', '.join(sorted(extra))}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    unknown = set(cp.sections()) - _SECTIONS
    if unknown:
        raise ConfigurationError(f"{source}: unknown sections {', '.join(sorted(unknown))}")
    for name, allowed in (
        ("problem", {"name"}),
        ("mesh", _MESH_KEYS),
        ("adapt", set(_ADAPT_KEYS)),
        ("solver", _SOLVER_KEYS),
        ("output", _OUTPUT_KEYS),
        ("sweep", _SWEEP_KEYS),
    ):
        _check_keys(cp, name, allowed)

    def sec(name):
        return cp[name] if name in cp else {}

    pname = sec("problem").get("name", "").strip()
    if pname not in BENCHMARK_SETTINGS:
        raise ConfigurationError(f"unknown problem {pname!r}; registered: {', '.join(registered_names())}")
    d = dict(BENCHMARK_SETTINGS[pname])

    m = sec("mesh")
    alpha = _get(m, "alpha", float, d["alpha"], "mesh")
    try:
        check_alpha(alpha)
    except Exception as exc:
        raise ConfigurationError(f"mesh.alpha: {exc}") from None
    K = _get(m, "k", int, 1, "mesh")
    N = _get(m, "n", int, d["N"], "mesh")
    Lx = _get(m, "lx", int, d["Lx"], "mesh")
    Lu = _get(m, "lu", int, d["Lu"], "mesh")
    M = _get(m, "m", int, d["M"], "mesh")
    Mbar = _get(m, "mbar", int, d["Mbar"], "mesh")
    interfaces = parse_floats(m["interfaces"], "mesh.interfaces") if "interfaces" in m else []
    row_mode = m.get("row_mode", "fixed").strip()
    if row_mode not in ("fixed", "bound-min"):
        raise ConfigurationError(f"mesh.row_mode must be 'fixed' or 'bound-min', got {row_mode!r}")
    if K < 1 or N < 1 or M < 1 or Mbar < 1 or Lx < 0 or Lu < 0:
        raise ConfigurationError("mesh degrees and element count out of range")

    a = sec("adapt")
    kw = {}
    for f in fields(AdaptParams):
        conv = str if f.name == "check_mode" else type(f.default)
        default = d.get(f.name, f.default) if f.name != "Mbar" else Mbar
        kw[f.name] = _get(a, f.name.lower(), conv, default, "adapt")
    enabled = _get(a, "enabled", _bool, True, "adapt")
    try:
        adapt = AdaptParams(**kw)
    except ConfigurationError as exc:
        raise ConfigurationError(f"[adapt] {exc}") from None

    s = sec("solver")
    solver = s.get("name", "").strip() or None
    if solver is not None and solver not in available_solvers():
        raise ConfigurationError(f"unknown solver {solver!r}; available: {', '.join(available_solvers())}")
    base = SolveOptions()
    nlp = SolveOptions(
        feas_tol=_get(s, "feas_tol", float, base.feas_tol, "solver"),
        opt_tol=_get(s, "opt_tol", float, base.opt_tol, "solver"),
        max_iter=_get(s, "max_iter", int, base.max_iter, "solver"),
        max_inner=_get(s, "max_inner", int, base.max_inner, "solver"),
    )
    if nlp.feas_tol <= 0 or nlp.opt_tol <= 0 or nlp.max_iter < 1 or nlp.max_inner < 1:
        raise ConfigurationError("solver tolerances and iteration limits must be positive")
    init = _get(s, "init", float, d["init"], "solver")

    o = sec("output")
    spe = _get(o, "samples_per_element", int, 20, "output")
    if spe < 2:
        raise ConfigurationError("output.samples_per_element must be at least 2")

    w = sec("sweep")
    sweep = SweepConfig(
        alphas=parse_floats(w["alphas"], "sweep.alphas") if "alphas" in w else [],
        N=_parse_ints(w["n"], "sweep.N") if "n" in w else [N],
        L=None,
        fixed_edges=parse_floats(w["fixed_edges"], "sweep.fixed_edges") if "fixed_edges" in w else [],
        workers=_get(w, "workers", int, 1, "sweep"),
        table=w.get("table") or None,
    )
    if "l" in w and w["l"].strip().lower() != "auto":
        sweep.L = _parse_ints(w["l"], "sweep.L")
        if len(sweep.L) != len(sweep.N):
            raise ConfigurationError("sweep.L must list one degree per entry of sweep.N")
    if sweep.workers < 1:
        raise ConfigurationError("sweep.workers must be positive")

    return RunConfig(
        problem=pname,
        alpha=alpha,
        K=K,
        N=N,
        Lx=Lx,
        Lu=Lu,
        M=M,
        Mbar=Mbar,
        interfaces=interfaces,
        row_mode=row_mode,
        adapt=adapt,
        adapt_enabled=enabled,
        solver=solver,
        nlp=nlp,
        init=init,
        solution_path=o.get("solution") or None,
        csv_path=o.get("csv") or None,
        trace_path=o.get("trace") or None,
        samples_per_element=spe,
        sweep=sweep,
    )


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(p))
