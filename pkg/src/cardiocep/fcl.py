"""Parser, canonical printer, and validator for a small FCL dialect.

The accepted language is the IEC 61131-7 style subset documented in
``docs/fcl-grammar.md``: one FUNCTION_BLOCK with REAL inputs/outputs,
FUZZIFY/DEFUZZIFY blocks whose TERMs are plain singletons or 2-3 point
piecewise definitions (shoulders and triangles), a MIN/MIN/MAX rule block,
and AND-only rules.  OR, NOT, trapezoids, gaussians, and anything else
outside the subset are rejected with a diagnostic rather than skipped.

Keywords are case-insensitive; identifiers are case-sensitive.  The
canonical printer emits LF line endings and two-space indentation, and
``parse_fcl(print_fcl(m))`` is structurally equal to ``m``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    Clause,
    FuzzyModel,
    InferenceSettings,
    LinguisticVariable,
    Rule,
    TermShape,
    TriangularTerm,
    VariableKind,
    left_shoulder,
    right_shoulder,
    singleton,
    triangle,
)
from .engine import membership

import numpy as np


class FclError(Exception):
    """Base class for FCL front-end failures."""


class FclSyntaxError(FclError):
    def __init__(self, line: int, column: int, expected: str, found: str):
        super().__init__(f"{line}:{column}: expected {expected}, found {found}")
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found


class FclSemanticError(FclError):
    def __init__(self, subject: str, message: str, line: int | None = None):
        where = f"{line}: " if line is not None else ""
        super().__init__(f"{where}{subject}: {message}")
        self.subject = subject
        self.line = line


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str
    gap: tuple[float, float] | None = None

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


_KEYWORDS = {
    "FUNCTION_BLOCK", "END_FUNCTION_BLOCK",
    "VAR_INPUT", "VAR_OUTPUT", "END_VAR", "REAL",
    "FUZZIFY", "END_FUZZIFY", "DEFUZZIFY", "END_DEFUZZIFY",
    "TERM", "RANGE", "UNITS", "METHOD", "DEFAULT", "RESOLUTION",
    "RULEBLOCK", "END_RULEBLOCK", "RULE",
    "IF", "THEN", "IS", "AND", "ACT", "ACCU", "WITH",
    "MIN", "MAX", "COG",
    # Reserved so they fail loudly instead of lexing as identifiers.
    "OR", "NOT",
}

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"\d+(\.\d+)?")


@dataclass(frozen=True)
class _Token:
    kind: str  # keyword name, or IDENT / NUMBER / STRING / punctuation / EOF
    text: str
    line: int
    column: int
    value: float | None = None


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1 if ch == "-" else i
            m = _NUMBER_RE.match(text, j)
            lexeme = text[i:m.end()]
            tokens.append(_Token("NUMBER", lexeme, line, start_col, float(lexeme)))
            col += m.end() - i
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            word = m.group()
            kind = word.upper() if word.upper() in _KEYWORDS else "IDENT"
            tokens.append(_Token(kind, word, line, start_col))
            i, col = m.end(), col + len(word)
            continue
        if ch == "'":
            j = text.find("'", i + 1)
            if j < 0 or "\n" in text[i:j]:
                raise FclSyntaxError(line, start_col, "closing quote", "end of line")
            tokens.append(_Token("STRING", text[i + 1:j], line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if text.startswith(":=", i):
            tokens.append(_Token(":=", ":=", line, start_col))
            i, col = i + 2, col + 2
            continue
        if text.startswith("..", i):
            tokens.append(_Token("..", "..", line, start_col))
            i, col = i + 2, col + 2
            continue
        if ch in "(),;:":
            tokens.append(_Token(ch, ch, line, start_col))
            i, col = i + 1, col + 1
            continue
        raise FclSyntaxError(line, start_col, "a token", repr(ch))
    last_line = tokens[-1].line if tokens else 1
    tokens.append(_Token("EOF", "", last_line, 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.pos]

    def _fail(self, expected: str) -> FclSyntaxError:
        tok = self.cur
        found = "end of input" if tok.kind == "EOF" else repr(tok.text)
        return FclSyntaxError(tok.line, tok.column, expected, found)

    def take(self, kind: str, expected: str | None = None) -> _Token:
        if self.cur.kind != kind:
            raise self._fail(expected or f"'{kind}'")
        tok = self.cur
        self.pos += 1
        return tok

    def accept(self, kind: str) -> _Token | None:
        if self.cur.kind == kind:
            return self.take(kind)
        return None

    def ident(self, what: str) -> _Token:
        return self.take("IDENT", f"{what} identifier")

    def number(self, what: str) -> _Token:
        return self.take("NUMBER", f"{what} number")

    # ---- grammar productions -------------------------------------------

    def parse_program(self) -> FuzzyModel:
        self.take("FUNCTION_BLOCK", "'FUNCTION_BLOCK'")
        name = self.ident("function block").text

        inputs = self._var_block("VAR_INPUT")
        outputs = self._var_block("VAR_OUTPUT")
        if len(outputs) != 1:
            raise FclSemanticError(name, f"expected exactly one output variable, found {len(outputs)}")
        output_name = outputs[0][0]

        fuzzify_blocks: dict[str, LinguisticVariable] = {}
        while self.cur.kind == "FUZZIFY":
            var = self._membership_block("FUZZIFY", "END_FUZZIFY")
            if var.name in fuzzify_blocks:
                raise FclSemanticError(var.name, "duplicate FUZZIFY block")
            fuzzify_blocks[var.name] = var

        out_var, settings = self._defuzzify_block()
        rules_name_unused, rules = self._ruleblock()

        input_names = [n for n, _ in inputs]
        if len(set(input_names)) != len(input_names):
            dup = next(n for n in input_names if input_names.count(n) > 1)
            raise FclSemanticError(dup, "duplicate input variable declaration")
        if output_name in input_names:
            raise FclSemanticError(output_name, "declared as both input and output")
        if out_var.name != output_name:
            raise FclSemanticError(out_var.name, f"DEFUZZIFY block does not match output variable {output_name!r}")

        self.take("END_FUNCTION_BLOCK", "'END_FUNCTION_BLOCK'")
        self.take("EOF", "end of input")

        ordered_inputs: list[LinguisticVariable] = []
        for var_name, _ in inputs:
            block = fuzzify_blocks.pop(var_name, None)
            if block is None:
                raise FclSemanticError(var_name, "input variable has no FUZZIFY block")
            ordered_inputs.append(block)
        if fuzzify_blocks:
            stray = next(iter(fuzzify_blocks))
            raise FclSemanticError(stray, "FUZZIFY block for undeclared variable")

        model = FuzzyModel(name, tuple(ordered_inputs), out_var, tuple(rules), settings)
        _check_references(model)
        return model

    def _var_block(self, opener: str) -> list[tuple[str, int]]:
        self.take(opener, f"'{opener}'")
        decls: list[tuple[str, int]] = []
        while self.cur.kind != "END_VAR":
            tok = self.ident("variable")
            self.take(":", "':'")
            self.take("REAL", "'REAL'")
            self.take(";", "';'")
            decls.append((tok.text, tok.line))
        self.take("END_VAR", "'END_VAR'")
        if not decls:
            raise self._fail("at least one variable declaration")
        return decls

    def _range_and_units(self, var_name: str) -> tuple[float, float, str]:
        self.take("RANGE", "'RANGE'")
        self.take(":=", "':='")
        self.take("(", "'('")
        lo_tok = self.number("range lower bound")
        self.take("..", "'..'")
        hi_tok = self.number("range upper bound")
        self.take(")", "')'")
        self.take(";", "';'")
        if not lo_tok.value < hi_tok.value:
            raise FclSemanticError(
                var_name, f"universe [{lo_tok.text}, {hi_tok.text}] is empty", lo_tok.line
            )
        unit = ""
        if self.cur.kind == "UNITS":
            self.take("UNITS")
            unit = self.take("STRING", "quoted unit string").text
            self.take(";", "';'")
        return lo_tok.value, hi_tok.value, unit

    def _term(self, var_name: str, lo: float, hi: float) -> TriangularTerm:
        self.take("TERM", "'TERM'")
        name_tok = self.ident("term")
        name = name_tok.text
        self.take(":=", "':='")
        if self.cur.kind == "NUMBER":
            value = self.number("singleton value").value
            self.take(";", "';'")
            term = singleton(name, value)
        else:
            points: list[tuple[float, float]] = []
            while self.cur.kind == "(":
                self.take("(")
                x = self.number("point abscissa").value
                self.take(",", "','")
                mu = self.number("point membership").value
                self.take(")", "')'")
                points.append((x, mu))
            self.take(";", "';' after term definition")
            term = _term_from_points(name, points, lo, hi, name_tok.line)
        if term.support[0] < lo or term.support[1] > hi:
            raise FclSemanticError(
                name,
                f"support [{term.support[0]}, {term.support[1]}] outside universe [{lo}, {hi}]",
                name_tok.line,
            )
        return term

    def _membership_block(self, opener: str, closer: str) -> LinguisticVariable:
        self.take(opener)
        name = self.ident("variable").text
        lo, hi, unit = self._range_and_units(name)
        terms: list[TriangularTerm] = []
        while self.cur.kind == "TERM":
            terms.append(self._term(name, lo, hi))
        if not terms:
            raise self._fail("at least one TERM")
        self.take(closer, f"'{closer}'")
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise FclSemanticError(name, f"duplicate term {dup!r}")
        return LinguisticVariable(name, lo, hi, tuple(terms), unit)

    def _defuzzify_block(self) -> tuple[LinguisticVariable, InferenceSettings]:
        self.take("DEFUZZIFY", "'DEFUZZIFY'")
        name = self.ident("variable").text
        lo, hi, unit = self._range_and_units(name)
        terms: list[TriangularTerm] = []
        while self.cur.kind == "TERM":
            terms.append(self._term(name, lo, hi))
        if not terms:
            raise self._fail("at least one TERM")
        self.take("METHOD", "'METHOD'")
        self.take(":", "':'")
        self.take("COG", "'COG'")
        self.take(";", "';'")
        self.take("DEFAULT", "'DEFAULT'")
        self.take(":=", "':='")
        default = self.number("default value").value
        self.take(";", "';'")
        resolution = 1000
        if self.cur.kind == "RESOLUTION":
            self.take("RESOLUTION")
            self.take(":=", "':='")
            res_tok = self.number("resolution")
            self.take(";", "';'")
            if res_tok.value != int(res_tok.value) or res_tok.value < 100:
                raise FclSemanticError(
                    name, f"resolution must be an integer >= 100, got {res_tok.text}", res_tok.line
                )
            resolution = int(res_tok.value)
        self.take("END_DEFUZZIFY", "'END_DEFUZZIFY'")
        names = [t.name for t in terms]
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise FclSemanticError(name, f"duplicate term {dup!r}")
        var = LinguisticVariable(name, lo, hi, tuple(terms), unit)
        settings = InferenceSettings(resolution=resolution, default_output=default)
        return var, settings

    def _ruleblock(self) -> tuple[str, list[Rule]]:
        self.take("RULEBLOCK", "'RULEBLOCK'")
        name = self.ident("rule block").text
        for op, val in (("AND", "MIN"), ("ACT", "MIN"), ("ACCU", "MAX")):
            self.take(op, f"'{op}'")
            self.take(":", "':'")
            self.take(val, f"'{val}'")
            self.take(";", "';'")
        rules: list[Rule] = []
        while self.cur.kind == "RULE":
            rules.append(self._rule())
        if not rules:
            raise self._fail("at least one RULE")
        self.take("END_RULEBLOCK", "'END_RULEBLOCK'")
        ids = [r.id for r in rules]
        for rid in ids:
            if ids.count(rid) > 1:
                raise FclSemanticError(rid, "duplicate rule id")
        return name, rules

    def _clause(self) -> Clause:
        var = self.ident("variable").text
        self.take("IS", "'IS'")
        term = self.ident("term").text
        return Clause(var, term)

    def _rule(self) -> Rule:
        self.take("RULE")
        num_tok = self.number("rule number")
        if num_tok.value != int(num_tok.value) or num_tok.value < 0:
            raise FclSemanticError("RULE", f"rule number must be a non-negative integer, got {num_tok.text}", num_tok.line)
        rule_id = f"RULE_{int(num_tok.value)}"
        self.take(":", "':'")
        self.take("IF", "'IF'")
        antecedent = [self._clause()]
        while self.accept("AND"):
            antecedent.append(self._clause())
        self.take("THEN", "'THEN' or 'AND'")
        consequent = self._clause()
        weight = 1.0
        if self.accept("WITH"):
            w_tok = self.number("rule weight")
            weight = w_tok.value
            if not 0.0 < weight <= 1.0:
                raise FclSemanticError(rule_id, f"weight {w_tok.text} outside (0, 1]", w_tok.line)
        self.take(";", "';' after rule")
        seen: set[str] = set()
        for cl in antecedent:
            if cl.variable in seen:
                raise FclSemanticError(rule_id, f"variable {cl.variable!r} appears twice in antecedent", num_tok.line)
            seen.add(cl.variable)
        return Rule(rule_id, tuple(antecedent), consequent, weight)


def _term_from_points(
    name: str, points: list[tuple[float, float]], lo: float, hi: float, line: int
) -> TriangularTerm:
    xs = [p[0] for p in points]
    mus = [p[1] for p in points]
    if any(mu not in (0.0, 1.0) for mu in mus):
        raise FclSemanticError(name, "point memberships must be 0 or 1", line)
    if sorted(xs) != xs or len(set(xs)) != len(xs):
        raise FclSemanticError(name, "point abscissas must be strictly increasing", line)
    if len(points) == 3 and mus == [0.0, 1.0, 0.0]:
        return triangle(name, xs[0], xs[1], xs[2])
    if len(points) == 2 and mus == [1.0, 0.0]:
        if xs[0] < lo:
            raise FclSemanticError(name, f"shoulder knee {xs[0]} below universe floor {lo}", line)
        return left_shoulder(name, lo, xs[0], xs[1])
    if len(points) == 2 and mus == [0.0, 1.0]:
        if xs[1] > hi:
            raise FclSemanticError(name, f"shoulder knee {xs[1]} above universe ceiling {hi}", line)
        return right_shoulder(name, xs[0], xs[1], hi)
    raise FclSemanticError(
        name,
        "term must be a singleton value, a (x,1) (x,0) / (x,0) (x,1) shoulder, "
        "or a (x,0) (x,1) (x,0) triangle",
        line,
    )


def _check_references(model: FuzzyModel) -> None:
    input_names = set(model.input_names())
    for rule in model.rules:
        for cl in rule.antecedent:
            if cl.variable not in input_names:
                raise FclSemanticError(rule.id, f"antecedent references unknown input variable {cl.variable!r}")
            var = model.variable(cl.variable)
            if cl.term not in var.term_names():
                raise FclSemanticError(rule.id, f"term {cl.term!r} not declared on variable {cl.variable!r}")
        if rule.consequent.variable != model.output.name:
            raise FclSemanticError(
                rule.id, f"consequent must reference output variable {model.output.name!r}"
            )
        if rule.consequent.term not in model.output.term_names():
            raise FclSemanticError(
                rule.id, f"term {rule.consequent.term!r} not declared on output variable"
            )


def parse_fcl(text: str) -> FuzzyModel:
    """Parse FCL text into a validated :class:`FuzzyModel`.

    Raises :class:`FclSyntaxError` with line/column/expectation for
    malformed text and :class:`FclSemanticError` (naming the offending
    rule, variable, or term) for dangling references, empty universes,
    or duplicate rule ids.
    """
    return _Parser(_lex(text)).parse_program()


# ---- canonical printer ---------------------------------------------------


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    out = repr(float(x))
    if "e" in out or "E" in out:
        raise ValueError(f"value {x!r} not printable without scientific notation")
    return out


def _fmt_term(term: TriangularTerm) -> str:
    # Shoulders print as two points; their plateau edge is implied by the
    # universe bound, which is where the parser re-anchors it.
    a, b, c = term.a, term.b, term.c
    if term.shape is TermShape.SINGLETON:
        return _fmt_num(b)
    if term.shape is TermShape.LEFT_SHOULDER:
        return f"({_fmt_num(b)}, 1) ({_fmt_num(c)}, 0)"
    if term.shape is TermShape.RIGHT_SHOULDER:
        return f"({_fmt_num(a)}, 0) ({_fmt_num(b)}, 1)"
    return f"({_fmt_num(a)}, 0) ({_fmt_num(b)}, 1) ({_fmt_num(c)}, 0)"


_RULE_ID_RE = re.compile(r"^RULE_(\d+)$")


def print_fcl(model: FuzzyModel) -> str:
    """Render a model as canonical FCL (LF endings, two-space indentation).

    The model must be expressible in the subset: rule ids of the form
    ``RULE_<n>`` and a concrete DEFAULT value in its settings.  Round trip
    holds: ``parse_fcl(print_fcl(m))`` equals ``m``.
    """
    if model.settings.default_output is None:
        raise ValueError("model has no DEFAULT output value; required by the FCL subset")
    out: list[str] = [f"FUNCTION_BLOCK {model.name}", ""]

    out.append("  VAR_INPUT")
    for var in model.inputs:
        out.append(f"    {var.name} : REAL;")
    out.append("  END_VAR")
    out.append("")
    out.append("  VAR_OUTPUT")
    out.append(f"    {model.output.name} : REAL;")
    out.append("  END_VAR")

    for var in model.inputs:
        out.append("")
        out.append(f"  FUZZIFY {var.name}")
        _emit_var_body(out, var)
        out.append("  END_FUZZIFY")

    out.append("")
    out.append(f"  DEFUZZIFY {model.output.name}")
    _emit_var_body(out, model.output)
    out.append("    METHOD : COG;")
    out.append(f"    DEFAULT := {_fmt_num(model.settings.default_output)};")
    out.append(f"    RESOLUTION := {model.settings.resolution};")
    out.append("  END_DEFUZZIFY")

    out.append("")
    out.append("  RULEBLOCK rules")
    out.append("    AND : MIN;")
    out.append("    ACT : MIN;")
    out.append("    ACCU : MAX;")
    for rule in model.rules:
        m = _RULE_ID_RE.match(rule.id)
        if not m:
            raise ValueError(f"rule id {rule.id!r} not expressible as 'RULE <n>'")
        clauses = " AND ".join(f"{cl.variable} IS {cl.term}" for cl in rule.antecedent)
        line = (
            f"    RULE {m.group(1)} : IF {clauses} "
            f"THEN {rule.consequent.variable} IS {rule.consequent.term}"
        )
        if rule.weight != 1.0:
            line += f" WITH {_fmt_num(rule.weight)}"
        out.append(line + ";")
    out.append("  END_RULEBLOCK")

    out.append("")
    out.append("END_FUNCTION_BLOCK")
    return "\n".join(out) + "\n"


def _emit_var_body(out: list[str], var: LinguisticVariable) -> None:
    out.append(f"    RANGE := ({_fmt_num(var.lo)} .. {_fmt_num(var.hi)});")
    if var.unit:
        out.append(f"    UNITS '{var.unit}';")
    for term in var.terms:
        out.append(f"    TERM {term.name} := {_fmt_term(term)};")


# ---- validator -----------------------------------------------------------

_COVERAGE_GRID_POINTS = 1001


def validate_model(model: FuzzyModel) -> list[Diagnostic]:
    """Check every model invariant and report findings as diagnostics.

    Structural violations (dangling references, duplicate ids, supports
    escaping the universe) are errors; universe coverage gaps are warnings,
    reported per maximal uncovered interval of a 1001-point grid.
    Crisp-coded variables are exempt from coverage (singletons cover only
    their exact codes by design).
    """
    diags: list[Diagnostic] = []

    ids = list(model.rule_ids())
    for rid in sorted(set(ids)):
        if ids.count(rid) > 1:
            diags.append(Diagnostic("error", rid, f"duplicate rule id {rid!r}"))

    input_names = set(model.input_names())
    for rule in model.rules:
        seen: set[str] = set()
        for cl in rule.antecedent:
            if cl.variable in seen:
                diags.append(Diagnostic("error", rule.id, f"variable {cl.variable!r} repeated in antecedent"))
            seen.add(cl.variable)
            if cl.variable not in input_names:
                diags.append(Diagnostic("error", rule.id, f"unknown input variable {cl.variable!r}"))
            else:
                var = model.variable(cl.variable)
                if cl.term not in var.term_names():
                    diags.append(Diagnostic("error", rule.id, f"unknown term {cl.term!r} on variable {cl.variable!r}"))
        if rule.consequent.variable != model.output.name:
            diags.append(Diagnostic("error", rule.id, f"consequent must reference {model.output.name!r}"))
        elif rule.consequent.term not in model.output.term_names():
            diags.append(Diagnostic("error", rule.id, f"unknown output term {rule.consequent.term!r}"))

    for var in (*model.inputs, model.output):
        for term in var.terms:
            lo, hi = term.support
            if lo < var.lo or hi > var.hi:
                diags.append(Diagnostic(
                    "error", f"{var.name}.{term.name}",
                    f"support [{lo}, {hi}] outside universe [{var.lo}, {var.hi}]",
                ))
        if var.kind is VariableKind.CRISP_CODED:
            continue
        diags.extend(_coverage_gaps(var))

    return diags


def _coverage_gaps(var: LinguisticVariable) -> list[Diagnostic]:
    grid = np.linspace(var.lo, var.hi, _COVERAGE_GRID_POINTS)
    covered = np.zeros(grid.shape, dtype=bool)
    for term in var.terms:
        covered |= membership(term, grid) > 0.0
    if covered.all():
        return []
    diags: list[Diagnostic] = []
    uncovered = ~covered
    start = None
    for idx, gap_here in enumerate(uncovered):
        if gap_here and start is None:
            start = idx
        elif not gap_here and start is not None:
            diags.append(_gap_diag(var, grid, start, idx - 1))
            start = None
    if start is not None:
        diags.append(_gap_diag(var, grid, start, len(grid) - 1))
    return diags


def _gap_diag(var: LinguisticVariable, grid: np.ndarray, i: int, j: int) -> Diagnostic:
    lo, hi = float(grid[i]), float(grid[j])
    return Diagnostic(
        "warning", var.name,
        f"no term has positive membership on [{lo:g}, {hi:g}]",
        gap=(lo, hi),
    )
