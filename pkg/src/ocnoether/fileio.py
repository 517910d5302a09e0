"""Readers and writers for problem files, symmetry files and trajectory CSVs.

Problem file::

    [problem]
    states = 1
    controls = 1
    interval = 0 1
    lagrangian = "u1^2"
    dynamics x1 = "u1"
    boundary x1(a) = 0
    boundary x1(b) = 1

Symmetry file: a ``[generators]`` section with ``T``, ``X<i>``, ``U<j>``,
``Psi<i>`` (omitted keys are 0) or a ``[group]`` section with ``ht``,
``hx<i>``, ``hu<j>``, ``hpsi<i>`` (omitted keys are the identity).
``#`` starts a comment.
"""

from __future__ import annotations

import csv
import io
import re
from pathlib import Path

import numpy as np

from .errors import DimensionError, FileFormatError, ParseError
from .problem import Boundary, OCProblem, Trajectory, control_names, costate_names, state_names
from .symbolic import Const, VarAlphabet, Var, parse, to_string
from .symmetry import GroupAction, Generators, generators_from_group

_KEY_RE = re.compile(r"^\s*([^=]+?)\s*=\s*(.*?)\s*$")
_DYN_RE = re.compile(r"^dynamics\s+x(\d+)$")
_BND_RE = re.compile(r"^boundary\s+x(\d+)\s*\(\s*([ab])\s*\)$")


def _lines(text: str, path=None):
    """Yield (lineno, section, key, value) for every key line."""
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            yield no, section, None, None
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise FileFormatError(f"expected 'key = value', got {raw.strip()!r}", no, path)
        if section is None:
            raise FileFormatError("key outside of any section", no, path)
        key, value = m.group(1), m.group(2)
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        yield no, section, key, value


def _expr(value, no, alphabet, path):
    try:
        return parse(value, alphabet)
    except ParseError as exc:
        raise FileFormatError(f"bad expression {value!r}: {exc}", no, path) from None


def _int(value, no, path):
    try:
        return int(value)
    except ValueError:
        raise FileFormatError(f"expected an integer, got {value!r}", no, path) from None


def _real(value, no, path):
    try:
        return float(value)
    except ValueError:
        raise FileFormatError(f"expected a real number, got {value!r}", no, path) from None


# ---------------------------------------------------------------------------
# problem files


def parse_problem(text: str, path=None, name: str = "") -> OCProblem:
    """Build an OCProblem from problem-file text.

    Raises
    ------
    FileFormatError
        Syntax errors, missing keys, undeclared states, bad expressions.
    """
    head, dyn, bnd = {}, {}, {}
    seen_problem = False
    for no, section, key, value in _lines(text, path):
        if key is None:
            if section != "problem":
                raise FileFormatError(f"unknown section [{section}]", no, path)
            seen_problem = True
            continue
        if (m := _DYN_RE.match(key)):
            i = int(m.group(1))
            if i in dyn:
                raise FileFormatError(f"duplicate dynamics for x{i}", no, path)
            dyn[i] = (value, no)
        elif (m := _BND_RE.match(key)):
            slot = (int(m.group(1)), m.group(2))
            if slot in bnd:
                raise FileFormatError(f"duplicate boundary for x{slot[0]}({slot[1]})", no, path)
            bnd[slot] = (value, no)
        elif key in ("states", "controls", "interval", "lagrangian"):
            if key in head:
                raise FileFormatError(f"duplicate key {key!r}", no, path)
            head[key] = (value, no)
        else:
            raise FileFormatError(f"unknown key {key!r}", no, path)
    if not seen_problem:
        raise FileFormatError("missing [problem] section", None, path)
    for key in ("states", "controls", "interval", "lagrangian"):
        if key not in head:
            raise FileFormatError(f"missing key {key!r}", None, path)
    n = _int(*head["states"], path)
    m = _int(*head["controls"], path)
    if n < 1 or m < 1:
        raise FileFormatError("states and controls must be at least 1", head["states"][1], path)
    value, no = head["interval"]
    parts = value.split()
    if len(parts) != 2:
        raise FileFormatError(f"interval needs two reals, got {value!r}", no, path)
    a, b = (_real(v, no, path) for v in parts)
    if not a < b:
        raise FileFormatError(f"interval must satisfy a < b, got {value!r}", no, path)
    alphabet = VarAlphabet.canonical(n, m)
    L = _expr(*head["lagrangian"], alphabet, path)
    for i, (_, no) in dyn.items():
        if not 1 <= i <= n:
            raise FileFormatError(f"dynamics for undeclared state x{i}", no, path)
    missing = [f"x{i}" for i in range(1, n + 1) if i not in dyn]
    if missing:
        raise FileFormatError(f"missing dynamics for {', '.join(missing)}", None, path)
    phi = tuple(_expr(*dyn[i], alphabet, path) for i in range(1, n + 1))
    bounds = []
    for (i, _), (_, no) in bnd.items():
        if not 1 <= i <= n:
            raise FileFormatError(f"boundary for undeclared state x{i}", no, path)
    for i in range(1, n + 1):
        ends = {}
        for end in "ab":
            if (i, end) in bnd:
                value, no = bnd[(i, end)]
                ends[end] = None if value == "free" else _real(value, no, path)
            else:
                ends[end] = None
        bounds.append(Boundary(ends["a"], ends["b"]))
    try:
        return OCProblem(n, m, a, b, L, phi, tuple(bounds), name)
    except DimensionError as exc:
        raise FileFormatError(str(exc), None, path) from None


def _fmt_real(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def format_problem(p: OCProblem) -> str:
    """Problem-file text that re-parses to ``p``."""
    out = ["[problem]", f"states = {p.n}", f"controls = {p.m}",
           f"interval = {_fmt_real(p.a)} {_fmt_real(p.b)}",
           f'lagrangian = "{to_string(p.L)}"']
    for i, f in enumerate(p.phi, start=1):
        out.append(f'dynamics x{i} = "{to_string(f)}"')
    for i, bd in enumerate(p.boundary, start=1):
        for end, v in (("a", bd.a), ("b", bd.b)):
            out.append(f"boundary x{i}({end}) = {'free' if v is None else _fmt_real(v)}")
    return "\n".join(out) + "\n"


def read_problem(path) -> OCProblem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read problem file: {exc.strerror}", None, str(path)) from None
    return parse_problem(text, str(path), path.stem)


# ---------------------------------------------------------------------------
# symmetry files


def parse_symmetry(text: str, n: int, m: int, path=None, with_group: bool = False):
    """Generators from symmetry-file text for an (n, m) problem.

    A ``[group]`` section is converted with ``generators_from_group``.
    With ``with_group`` the result is ``(generators, group)`` where group
    is None for a ``[generators]`` section.
    """
    sections, entries = [], {}
    for no, section, key, value in _lines(text, path):
        if key is None:
            if section not in ("generators", "group"):
                raise FileFormatError(f"unknown section [{section}]", no, path)
            if sections:
                raise FileFormatError("a symmetry file holds exactly one section", no, path)
            sections.append(section)
            continue
        if key in entries:
            raise FileFormatError(f"duplicate key {key!r}", no, path)
        entries[key] = (value, no)
    if not sections:
        raise FileFormatError("missing [generators] or [group] section", None, path)
    kind = sections[0]
    phase = ["t"] + state_names(n) + control_names(m) + costate_names(n)
    if kind == "generators":
        keys = ["T"] + [f"X{i}" for i in range(1, n + 1)] + [f"U{j}" for j in range(1, m + 1)] \
            + [f"Psi{i}" for i in range(1, n + 1)]
        alphabet = VarAlphabet(phase)
        default = {k: Const(0) for k in keys}
    else:
        keys = ["ht"] + [f"hx{i}" for i in range(1, n + 1)] + [f"hu{j}" for j in range(1, m + 1)] \
            + [f"hpsi{i}" for i in range(1, n + 1)]
        alphabet = VarAlphabet(phase + ["s"])
        default = {k: Var(v) for k, v in zip(keys, phase)}
    for key, (_, no) in entries.items():
        if key not in default:
            raise FileFormatError(
                f"key {key!r} does not fit a problem with {n} state(s) and {m} control(s)", no, path)
    comps = [(_expr(*entries[k], alphabet, path) if k in entries else default[k]) for k in keys]
    T, X, U, P = comps[0], tuple(comps[1:1 + n]), tuple(comps[1 + n:1 + n + m]), tuple(comps[1 + n + m:])
    label = Path(path).stem if path else ""
    try:
        if kind == "generators":
            gen, group = Generators(T, X, U, P, label), None
        else:
            group = GroupAction(T, X, U, P, label)
            gen = generators_from_group(group)
    except (DimensionError, ValueError) as exc:
        raise FileFormatError(str(exc), None, path) from None
    return (gen, group) if with_group else gen


def symmetry_dimensions(text: str):
    """Largest state and control indices mentioned in a symmetry file."""
    n = m = 0
    for _, _, key, _ in _lines(text):
        if key is None:
            continue
        if (mt := re.fullmatch(r"(?:X|Psi|hx|hpsi)(\d+)", key)):
            n = max(n, int(mt.group(1)))
        elif (mt := re.fullmatch(r"(?:U|hu)(\d+)", key)):
            m = max(m, int(mt.group(1)))
    return n, m


def read_symmetry(path, p: OCProblem, with_group: bool = False):
    """Read a symmetry file for problem ``p``; dimensions must agree."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read symmetry file: {exc.strerror}", None, str(path)) from None
    n, m = symmetry_dimensions(text)
    if n > p.n or m > p.m:
        raise FileFormatError(
            f"symmetry file refers to x{n}/u{m} but the problem has n={p.n}, m={p.m}", None, str(path))
    return parse_symmetry(text, p.n, p.m, str(path), with_group)


def format_generators(gen: Generators, comment: str | None = None) -> str:
    """Symmetry-file text (a [generators] section) for ``gen``."""
    out = []
    if comment:
        out += [f"# {line}" for line in comment.splitlines()]
    out.append("[generators]")
    out.append(f'T = "{to_string(gen.T)}"')
    out += [f'X{i} = "{to_string(e)}"' for i, e in enumerate(gen.X, start=1)]
    out += [f'U{j} = "{to_string(e)}"' for j, e in enumerate(gen.U, start=1)]
    out += [f'Psi{i} = "{to_string(e)}"' for i, e in enumerate(gen.Psi, start=1)]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# trajectory CSV


def trajectory_header(n: int, m: int) -> list:
    return ["t"] + state_names(n) + control_names(m) + costate_names(n)


def format_trajectory(tr: Trajectory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(tr.n, tr.m))
    data = np.column_stack([tr.grid, tr.x, tr.u, tr.psi])
    for row in data:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_trajectory(tr: Trajectory, path):
    Path(path).write_text(format_trajectory(tr))


def parse_trajectory(text: str, n: int, m: int, horizon=None, path=None, singular=()) -> Trajectory:
    """Trajectory from CSV text with header exactly t,x1..,u1..,psi1.."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise FileFormatError("empty trajectory file", None, path)
    header = [c.strip() for c in rows[0]]
    want = trajectory_header(n, m)
    if header != want:
        raise FileFormatError(f"header must be {','.join(want)}, got {','.join(header)}", 1, path)
    data = []
    for no, r in enumerate(rows[1:], start=2):
        if len(r) != len(want):
            raise FileFormatError(f"expected {len(want)} columns, got {len(r)}", no, path)
        try:
            data.append([float(c) for c in r])
        except ValueError:
            raise FileFormatError("non-numeric entry", no, path) from None
    arr = np.asarray(data, dtype=float)
    if arr.shape[0] < 3:
        raise FileFormatError("need at least 3 samples", None, path)
    if not np.all(np.isfinite(arr)):
        raise FileFormatError("non-finite entry", None, path)
    try:
        return Trajectory(arr[:, 0], arr[:, 1:1 + n], arr[:, 1 + n:1 + n + m], arr[:, 1 + n + m:],
                          horizon=horizon, singular=singular,
                          metadata={"source": str(path) if path else "csv"})
    except (ValueError, DimensionError) as exc:
        raise FileFormatError(str(exc), None, path) from None


def read_trajectory(path, p: OCProblem) -> Trajectory:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileFormatError(f"cannot read trajectory file: {exc.strerror}", None, str(path)) from None
    return parse_trajectory(text, p.n, p.m, (p.a, p.b), str(path))
