"""Plain-text model files: polynomial dynamics, control step, boxes, network path.

Example::

    states: x
    controls: u
    dynamics:
      x' = u
    control_step: 0.1
    init:
      x in [0.9, 1.1]
    target:
      x in [0.3, 0.4]
    property: reach
    network: feedback.nn
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .interval import Interval
from .neural_network import NeuralNetwork, nn_load
from .ode_flowpipe import PolynomialODE
from .polynomial import SparsePolynomial
from .verifier import NNCSModel, TargetSpec

__all__ = ["ModelFileError", "ModelSpec", "parse_expression", "parse_model", "parse_model_text", "format_model"]

SECTIONS = ("states", "controls", "dynamics", "control_step", "init", "target", "property", "network")
_HEADER = re.compile(r"^\s*(" + "|".join(SECTIONS) + r")\s*:(.*)$")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_PROPERTY_KINDS = {"reach": "reachability", "avoid": "safety"}


class ModelFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        loc = path or "<model>"
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}")


@dataclass(frozen=True)
class ModelSpec:
    model: NNCSModel
    target: TargetSpec | None = None


# ---------------------------------------------------------------------------
# expressions

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z0-9_]*)|(\S))")


class _ExprParser:
    """Recursive descent over ``+ - * / ^ ( )``; every value is a polynomial."""

    def __init__(self, text: str, names: dict[str, int], line: int | None, col0: int, path: str | None):
        self.names = names
        self.nv = len(names)
        self.line, self.path = line, path
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                break
            if m.group(1):
                self.toks.append(("num", m.group(1), col0 + m.start(1)))
            elif m.group(2):
                self.toks.append(("id", m.group(2), col0 + m.start(2)))
            elif m.group(3):
                self.toks.append(("op", m.group(3), col0 + m.start(3)))
            pos = m.end()
        self.toks.append(("end", "", col0 + len(text.rstrip())))
        self.i = 0

    def fail(self, msg: str, col: int) -> ModelFileError:
        return ModelFileError(msg, self.line, col + 1, self.path)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def parse(self) -> SparsePolynomial:
        if self.peek()[0] == "end":
            raise self.fail("empty expression", self.peek()[2])
        p = self.sum()
        kind, val, col = self.peek()
        if kind != "end":
            raise self.fail(f"unexpected {val!r}", col)
        return p

    def sum(self) -> SparsePolynomial:
        p = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.product()
            p = p + q if op == "+" else p - q
        return p

    def product(self) -> SparsePolynomial:
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            _, op, col = self.take()
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if q.degree() > 0:
                    raise self.fail("non-polynomial expression: division by a non-constant", col)
                c = q.constant_term()
                if c == 0.0:
                    raise self.fail("division by zero", col)
                p = p.scale(1.0 / c)
        return p

    def unary(self) -> SparsePolynomial:
        if self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            p = self.unary()
            return -p if op == "-" else p
        return self.power()

    def power(self) -> SparsePolynomial:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            _, _, col = self.take()
            neg = False
            if self.peek()[1] == "-" and self.peek()[0] == "op":
                self.take()
                neg = True
            kind, val, ecol = self.take()
            if kind != "num" or neg or not re.fullmatch(r"\d+", val):
                raise self.fail("non-polynomial expression: exponent must be a non-negative integer literal", ecol)
            return base ** int(val)
        return base

    def atom(self) -> SparsePolynomial:
        kind, val, col = self.take()
        if kind == "num":
            return SparsePolynomial.constant(self.nv, float(val))
        if kind == "id":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                raise self.fail(f"non-polynomial expression: function call {val!r}", col)
            if val not in self.names:
                raise self.fail(f"unknown identifier {val!r}", col)
            return SparsePolynomial.variable(self.nv, self.names[val])
        if kind == "op" and val == "(":
            p = self.sum()
            k2, v2, c2 = self.take()
            if v2 != ")":
                raise self.fail("expected ')'", c2)
            return p
        if kind == "end":
            raise self.fail("unexpected end of expression", col)
        raise self.fail(f"unexpected {val!r}", col)


def parse_expression(
    text: str, names: list[str] | tuple[str, ...], line: int | None = None, column: int = 0, path: str | None = None
) -> SparsePolynomial:
    """Polynomial over ``names`` (in that variable order) denoted by ``text``."""
    return _ExprParser(text, {n: i for i, n in enumerate(names)}, line, column, path).parse()


# ---------------------------------------------------------------------------
# model files


def _split_names(text: str, lineno: int, path: str | None) -> list[str]:
    names = [s.strip() for s in text.split(",")] if text.strip() else []
    for nm in names:
        if not _IDENT.match(nm):
            raise ModelFileError(f"invalid variable name {nm!r}", lineno, None, path)
    return names


_BOX_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s+in\s+\[\s*([^,\]]+?)\s*,\s*([^\]]+?)\s*\]\s*$")


def _parse_box(lines, names: list[str], what: str, path: str | None) -> tuple[Interval, ...]:
    seen: dict[str, Interval] = {}
    for lineno, text in lines:
        m = _BOX_LINE.match(text)
        if not m:
            raise ModelFileError(f"expected 'name in [lo, hi]' in {what} section", lineno, None, path)
        nm = m.group(1)
        if nm not in names:
            raise ModelFileError(f"unknown identifier {nm!r}", lineno, m.start(1) + 1, path)
        if nm in seen:
            raise ModelFileError(f"{nm!r} bounded twice in {what} section", lineno, m.start(1) + 1, path)
        try:
            lo, hi = float(m.group(2)), float(m.group(3))
            seen[nm] = Interval(lo, hi)
        except ValueError as exc:
            raise ModelFileError(f"bad interval for {nm!r}: {exc}", lineno, None, path) from None
    missing = [nm for nm in names if nm not in seen]
    if missing:
        raise ModelFileError(f"dimension mismatch: {what} section lacks {', '.join(missing)}", None, None, path)
    return tuple(seen[nm] for nm in names)


def parse_model_text(
    text: str,
    path: str | None = None,
    base_dir: str | Path | None = None,
    load_network: bool = True,
    network: NeuralNetwork | None = None,
) -> ModelSpec:
    sections: dict[str, tuple[int, str, list[tuple[int, str]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _HEADER.match(line)
        if m:
            name = m.group(1)
            if name in sections:
                raise ModelFileError(f"duplicate section {name!r}", lineno, None, path)
            sections[name] = (lineno, m.group(2).strip(), [])
            current = name
            continue
        if current is None:
            raise ModelFileError(f"expected a section header, got {line.strip()!r}", lineno, None, path)
        sections[current][2].append((lineno, line))

    def need(name: str):
        if name not in sections:
            raise ModelFileError(f"missing section '{name}:'", None, None, path)
        return sections[name]

    def inline_only(name: str) -> tuple[int, str]:
        lineno, inline, body = sections[name]
        if body:
            raise ModelFileError(f"section '{name}:' takes a single inline value", body[0][0], None, path)
        return lineno, inline

    ln, states_txt, body = need("states")
    if body:
        raise ModelFileError("section 'states:' takes a single inline value", body[0][0], None, path)
    states = _split_names(states_txt, ln, path)
    if not states:
        raise ModelFileError("no states declared", ln, None, path)
    controls: list[str] = []
    if "controls" in sections:
        ln, txt = inline_only("controls")
        controls = _split_names(txt, ln, path)
    allnames = states + controls
    dup = {n for n in allnames if allnames.count(n) > 1}
    if dup:
        raise ModelFileError(f"duplicate variable name {sorted(dup)[0]!r}", None, None, path)

    ln, inline, body = need("dynamics")
    if inline:
        body = [(ln, inline)] + body
    rhs: dict[str, SparsePolynomial] = {}
    for lineno, line in body:
        m = re.match(r"^(\s*)([A-Za-z_][A-Za-z0-9_]*)\s*'\s*=(.*)$", line)
        if not m:
            raise ModelFileError("expected \"name' = expression\"", lineno, None, path)
        nm = m.group(2)
        if nm not in states:
            where = "a control input" if nm in controls else "an undeclared state"
            raise ModelFileError(f"derivative given for {where} {nm!r}", lineno, m.start(2) + 1, path)
        if nm in rhs:
            raise ModelFileError(f"dynamics for {nm!r} given twice", lineno, m.start(2) + 1, path)
        rhs[nm] = parse_expression(m.group(3), allnames, lineno, m.start(3), path)
    missing = [s for s in states if s not in rhs]
    if missing:
        raise ModelFileError(f"dimension mismatch: no dynamics for {', '.join(missing)}", None, None, path)
    ode = PolynomialODE(tuple(rhs[s] for s in states), len(controls))

    ln, txt = inline_only("control_step") if "control_step" in sections else need("control_step")[:2]
    try:
        delta_c = float(txt)
    except ValueError:
        raise ModelFileError(f"control step must be a number, got {txt!r}", ln, None, path) from None
    if not delta_c > 0:
        raise ModelFileError("control step must be positive", ln, None, path)

    ln, inline, body = need("init")
    X0 = _parse_box(([(ln, inline)] if inline else []) + body, states, "init", path)

    target = None
    if "target" in sections:
        ln, inline, body = sections["target"]
        box = _parse_box(([(ln, inline)] if inline else []) + body, states, "target", path)
        kind = "reachability"
        if "property" in sections:
            pl, ptxt = inline_only("property")
            if ptxt not in _PROPERTY_KINDS:
                raise ModelFileError(f"property must be 'reach' or 'avoid', got {ptxt!r}", pl, None, path)
            kind = _PROPERTY_KINDS[ptxt]
        target = TargetSpec(box, kind)
    elif "property" in sections:
        raise ModelFileError("'property:' given without a 'target:' section", sections["property"][0], None, path)

    net_path = None
    if "network" in sections:
        ln, net_path = inline_only("network")
        if not net_path:
            raise ModelFileError("empty network path", ln, None, path)
    if network is None and net_path is not None and load_network:
        full = Path(net_path)
        if not full.is_absolute() and base_dir is not None:
            full = Path(base_dir) / full
        if not full.exists():
            raise FileNotFoundError(f"network file not found: {full}")
        network = nn_load(full)
    if controls and network is None and load_network:
        raise ModelFileError("model declares controls but no 'network:' section", None, None, path)
    try:
        model = NNCSModel(ode, network, delta_c, X0, tuple(states), tuple(controls), net_path)
    except ValueError as exc:
        raise ModelFileError(f"dimension mismatch: {exc}", None, None, path) from None
    return ModelSpec(model, target)


def parse_model(path: str | Path, load_network: bool = True) -> ModelSpec:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    return parse_model_text(path.read_text(), str(path), path.parent, load_network)


def _fmt_box(names, box) -> list[str]:
    return [f"  {n} in [{b.lo!r}, {b.hi!r}]" for n, b in zip(names, box)]


def format_model(spec: ModelSpec | NNCSModel, target: TargetSpec | None = None) -> str:
    """Canonical text form; ``parse_model_text(format_model(s))`` reproduces ``s``."""
    if isinstance(spec, ModelSpec):
        model, target = spec.model, spec.target
    else:
        model = spec
    names = list(model.state_names) + list(model.control_names)
    out = [f"states: {', '.join(model.state_names)}"]
    if model.control_names:
        out.append(f"controls: {', '.join(model.control_names)}")
    out.append("dynamics:")
    out += [f"  {n}' = {p.format(names)}" for n, p in zip(model.state_names, model.ode.rhs)]
    out.append(f"control_step: {model.delta_c!r}")
    out.append("init:")
    out += _fmt_box(model.state_names, model.X0)
    if target is not None:
        out.append("target:")
        out += _fmt_box(model.state_names, target.box)
        out.append(f"property: {'reach' if target.kind == 'reachability' else 'avoid'}")
    if model.network_path:
        out.append(f"network: {model.network_path}")
    return "\n".join(out) + "\n"
