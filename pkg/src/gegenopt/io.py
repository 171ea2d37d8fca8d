"""Structured-text solution files and CSV trajectory samples.

A solution file starts with a versioned header line followed by the
sections ``[MESH]``, ``[COEFFS]``, ``[OBJECTIVE]``, ``[TRACE]`` and
``[WARNINGS]``.  Reals are written with 17 significant digits, which
round-trips IEEE doubles exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .gegenbauer import Element, basis_row
from .problem import tau_to_t
from .transcription import ElementConfig, Mesh, SpectralSolution

HEADER = "gegenopt-solution"
VERSION = 1
SECTIONS = ("MESH", "COEFFS", "OBJECTIVE", "TRACE", "WARNINGS")


def _f(v: float) -> str:
    return format(float(v), ".17g")


def _row(values) -> str:
    return " ".join(_f(v) for v in np.ravel(values))


@dataclass
class SolutionRecord:
    """Everything stored in a solution file."""

    problem: str
    t0: float
    tf: float
    mesh: Mesh
    blocks: list
    objective: float
    status: str
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def to_solution(self, problem) -> SpectralSolution:
        from .transcription import Transcription

        z = Transcription(problem, self.mesh).pack(self.blocks)
        return SpectralSolution(problem, self.mesh, z, self.objective, self.status, list(self.warnings))


def write_solution(sol: SpectralSolution, path, trace=()) -> None:
    """Write ``sol`` and the iteration trace lines to ``path``."""
    p, mesh = sol.problem, sol.mesh
    lines = [f"{HEADER} {VERSION}", "[MESH]"]
    lines += [
        f"problem {p.name}",
        f"t0 {_f(p.t0)}",
        f"tf {_f(p.tf)}",
        f"alpha {_f(mesh.alpha)}",
        f"row_mode {mesh.row_mode}",
        f"K {mesh.K}",
    ]
    t_pts = tau_to_t(mesh.points, p.t0, p.tf)
    lines.append("interfaces_t " + _row(t_pts))
    for k, cfg in enumerate(mesh.elements):
        el = cfg.element
        lines.append(f"element {k} {_f(el.left)} {_f(el.right)} {cfg.N} {cfg.Lx} {cfg.Lu} {cfg.M} {cfg.Mbar}")
    lines.append("[COEFFS]")
    for k, (A, B) in enumerate(sol.blocks):
        for r in range(A.shape[0]):
            lines.append(f"a {k} {r} " + _row(A[r]))
        for s in range(B.shape[0]):
            lines.append(f"b {k} {s} " + _row(B[s]))
    lines += ["[OBJECTIVE]", f"J {_f(sol.objective)}", f"status {sol.status}"]
    lines.append("[TRACE]")
    lines += [str(t if isinstance(t, str) else t.to_text()) for t in trace]
    lines.append("[WARNINGS]")
    lines += [w.replace("\n", " ") for w in sol.warnings]
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path) -> SolutionRecord:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith(HEADER + " "):
        raise ConfigurationError(f"{path}: not a solution file")
    version = int(text[0].split()[1])
    if version != VERSION:
        raise ConfigurationError(f"{path}: unsupported solution file version {version}")
    sections: dict[str, list[str]] = {}
    current = None
    for line in text[1:]:
        if line.startswith("[") and line.endswith("]") and line[1:-1] in SECTIONS:
            current = line[1:-1]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise ConfigurationError(f"{path}: missing sections {', '.join(missing)}")

    meta, elements = {}, []
    for line in sections["MESH"]:
        key, _, rest = line.partition(" ")
        if key == "element":
            f = rest.split()
            elements.append(
                ElementConfig(Element(float(f[1]), float(f[2])), int(f[3]), int(f[4]), int(f[5]), int(f[6]), int(f[7]))
            )
        else:
            meta[key] = rest
    mesh = Mesh(tuple(elements), float(meta["alpha"]), meta.get("row_mode", "fixed"))
    a_rows: dict = {}
    b_rows: dict = {}
    for line in sections["COEFFS"]:
        f = line.split()
        target = a_rows if f[0] == "a" else b_rows
        target[(int(f[1]), int(f[2]))] = np.array([float(v) for v in f[3:]])
    blocks = []
    for k in range(mesh.K):
        A = np.array([a_rows[key] for key in sorted(a_rows) if key[0] == k])
        B = np.array([b_rows[key] for key in sorted(b_rows) if key[0] == k])
        blocks.append((A, B))
    obj = dict(line.split(" ", 1) for line in sections["OBJECTIVE"] if line)
    return SolutionRecord(
        problem=meta.get("problem", ""),
        t0=float(meta["t0"]),
        tf=float(meta["tf"]),
        mesh=mesh,
        blocks=blocks,
        objective=float(obj["J"]),
        status=obj.get("status", ""),
        trace=[s for s in sections["TRACE"] if s],
        warnings=[s for s in sections["WARNINGS"] if s],
    )


def element_samples(sol: SpectralSolution, per_element: int = 20):
    """Linearly spaced samples in every element, each from its own coefficients.

    Returns ``(t, x, u)`` with ``K * per_element`` columns.
    """
    if per_element < 2:
        raise ConfigurationError("need at least two samples per element")
    p, mesh = sol.problem, sol.mesh
    ts, xs, us = [], [], []
    for cfg, (A, B) in zip(mesh.elements, sol.blocks):
        el = cfg.element
        tau = np.linspace(el.left, el.right, per_element)
        ts.append(tau_to_t(tau, p.t0, p.tf))
        xs.append(A @ basis_row(mesh.alpha, cfg.Lx, el, tau).T)
        us.append(B @ basis_row(mesh.alpha, cfg.Lu, el, tau).T)
    return np.concatenate(ts), np.hstack(xs), np.hstack(us)


def write_csv_samples(sol: SpectralSolution, path, per_element: int = 20) -> None:
    t, x, u = element_samples(sol, per_element)
    header = ["t"] + [f"x{i + 1}" for i in range(x.shape[0])] + [f"u{i + 1}" for i in range(u.shape[0])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for j in range(t.size):
            w.writerow([_f(t[j]), *(_f(v) for v in x[:, j]), *(_f(v) for v in u[:, j])])
