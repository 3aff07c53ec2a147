"""
Reward Spec Language
Parser and canonical renderer for .rspec, .scn and baseline documents
"""

import ast
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from lark import Lark, Token, Transformer, v_args
from lark.exceptions import LarkError, UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken, VisitError

from app.core.checks import RiskBaseline
from app.core.exceptions import SpecError, SpecSyntaxError, SpecValidationError, UnknownFeature, UnknownKey
from app.core.expressions import (
    Binary,
    BinaryOp,
    Call,
    Compare,
    CompareOp,
    Cond,
    Const,
    Expr,
    FUNCTION_ARITY,
    Function,
    Neg,
    Ref,
    constant_value,
    iter_nodes,
)
from app.core.spec_model import (
    PER_REWARD_STEP,
    Accrual,
    AccrualMode,
    AttributeDef,
    AttributeKind,
    DesignProvenance,
    EpisodeConfig,
    FeatureSource,
    OutcomeTag,
    RewardSpec,
    Severity,
    SourceKind,
    TerminalKind,
    TerminalRule,
    ValidationFinding,
    validate_spec,
)
from app.core.trajectory import KMH_PER_MPS, EventRate, ScenarioSpec
from app.utils.helpers import format_number
from app.utils.logger import setup_logger

logger = setup_logger(__name__)

FORMAT_VERSION = 1

GRAMMAR = r"""
    start: HEADER NAME item*
    ?item: pair | block
    block: BLOCK_KIND NAME? "{" pair* "}"
    pair: NAME "=" value

    ?value: sum | list | STRING
    list: "[" [list_item ("," list_item)*] "]"
    ?list_item: NAME -> word
              | STRING
              | NUMBER -> number

    ?sum: product
        | sum "+" product -> add
        | sum "-" product -> sub
    ?product: unary
        | product "*" unary -> mul
        | product "/" unary -> div
    ?unary: "-" unary -> neg
        | atom
    ?atom: NUMBER -> number
        | NAME -> ref
        | call
        | "(" sum ")"
    call: NAME "(" [arg ("," arg)*] ")"
    ?arg: sum
        | sum CMP sum -> comparison
        | sum "=" sum -> equality

    HEADER.2: /(reward_spec|scenario|baselines)(?![a-z0-9_])/
    BLOCK_KIND.2: /(episode|attribute|terminal|features|event|params|baseline)(?![a-z0-9_])/
    CMP: "<=" | ">=" | "==" | "<" | ">"
    NAME: /[a-z][a-z0-9_]*/
    NUMBER: /-?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?/
    COMMENT: /#[^\n]*/

    %import common.ESCAPED_STRING -> STRING
    %import common.WS
    %ignore WS
    %ignore COMMENT
"""

_parser = Lark(GRAMMAR, parser="lalr", propagate_positions=True)

_TOKEN_TEXT = {
    "LBRACE": "{", "RBRACE": "}", "LPAR": "(", "RPAR": ")", "LSQB": "[", "RSQB": "]",
    "EQUAL": "=", "COMMA": ",", "PLUS": "+", "MINUS": "-", "STAR": "*", "SLASH": "/",
    "$END": "end of input",
}

_FUNCTIONS = {f.value: f for f in Function}
_CMP_OPS = {"<": CompareOp.LT, "<=": CompareOp.LE, "==": CompareOp.EQ, ">=": CompareOp.GE, ">": CompareOp.GT}


# Parse tree → generic document

@dataclass(frozen=True)
class RawCall:
    """Call to a name outside the expression function set (feature sources, accruals)"""

    name: str
    args: Tuple[Any, ...]
    line: Optional[int] = None
    col: Optional[int] = None


@dataclass(frozen=True)
class Word:
    text: str
    line: Optional[int] = None
    col: Optional[int] = None


@dataclass(frozen=True)
class Pair:
    key: str
    value: Any
    line: int
    col: int


@dataclass(frozen=True)
class Block:
    kind: str
    name: Optional[str]
    pairs: Tuple[Pair, ...]
    line: int
    col: int


@dataclass(frozen=True)
class Document:
    kind: str
    name: str
    pairs: Tuple[Pair, ...]
    blocks: Tuple[Block, ...]


def _pos(meta) -> Tuple[Optional[int], Optional[int]]:
    if getattr(meta, "empty", True):
        return None, None
    return meta.line, meta.column


def _number(token: Token) -> float:
    value = float(token)
    if not math.isfinite(value):
        raise SpecSyntaxError(f"number out of range: {token}", token.line, token.column)
    return value


def _string_token(value: Any) -> Any:
    if isinstance(value, Token) and value.type == "STRING":
        return ast.literal_eval(str(value))
    return value


def _as_expr(value: Any) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, RawCall):
        raise SpecSyntaxError(f"unknown function '{value.name}'", value.line, value.col, [*_FUNCTIONS, "cond"])
    if isinstance(value, Compare):
        raise SpecSyntaxError("comparison is only allowed as the first argument of cond")
    raise SpecSyntaxError("expected an expression")


@v_args(meta=True)
class _DocumentBuilder(Transformer):
    def start(self, meta, children):
        header, name, *items = children
        pairs = tuple(i for i in items if isinstance(i, Pair))
        blocks = tuple(i for i in items if isinstance(i, Block))
        return Document(str(header), str(name), pairs, blocks)

    def block(self, meta, children):
        kind = children[0]
        name = children[1] if len(children) > 1 and isinstance(children[1], Token) else None
        pairs = tuple(c for c in children if isinstance(c, Pair))
        return Block(str(kind), str(name) if name else None, pairs, kind.line, kind.column)

    def pair(self, meta, children):
        key, value = children
        return Pair(str(key), _string_token(value), key.line, key.column)

    def list(self, meta, children):
        return [_string_token(c) for c in children if c is not None]

    def word(self, meta, children):
        (token,) = children
        return Word(str(token), token.line, token.column)

    def number(self, meta, children):
        (token,) = children
        return Const(_number(token), (token.line, token.column))

    def ref(self, meta, children):
        (token,) = children
        return Ref(str(token), (token.line, token.column))

    def _binary(self, op, meta, children):
        left, right = children
        return Binary(op, _as_expr(left), _as_expr(right), _pos(meta))

    def add(self, meta, children):
        return self._binary(BinaryOp.ADD, meta, children)

    def sub(self, meta, children):
        return self._binary(BinaryOp.SUB, meta, children)

    def mul(self, meta, children):
        return self._binary(BinaryOp.MUL, meta, children)

    def div(self, meta, children):
        return self._binary(BinaryOp.DIV, meta, children)

    def neg(self, meta, children):
        (operand,) = children
        return Neg(_as_expr(operand), _pos(meta))

    def comparison(self, meta, children):
        left, op, right = children
        return Compare(_CMP_OPS[str(op)], _as_expr(left), _as_expr(right))

    def equality(self, meta, children):
        left, right = children
        return Compare(CompareOp.EQ, _as_expr(left), _as_expr(right))

    def call(self, meta, children):
        name, *args = children
        args = [a for a in args if a is not None]
        line, col = name.line, name.column
        if str(name) == "cond":
            if len(args) != 3 or not isinstance(args[0], Compare):
                raise SpecSyntaxError("cond takes (comparison, then, else)", line, col)
            return Cond(args[0], _as_expr(args[1]), _as_expr(args[2]), (line, col))
        fn = _FUNCTIONS.get(str(name))
        if fn is None:
            return RawCall(str(name), tuple(args), line, col)
        arity = FUNCTION_ARITY[fn]
        if (arity is None and len(args) < 2) or (arity is not None and len(args) != arity):
            expected = "at least 2" if arity is None else str(arity)
            raise SpecSyntaxError(f"{fn.value} takes {expected} arguments, got {len(args)}", line, col)
        return Call(fn, tuple(_as_expr(a) for a in args), (line, col))


def _line_col(text: str, offset: int) -> Tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    return line, offset - (text.rfind("\n", 0, offset) + 1) + 1


def _decode(data: Union[bytes, str]) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        prefix = data[:e.start].decode("utf-8", errors="replace")
        line, col = _line_col(prefix, len(prefix))
        raise SpecSyntaxError("document is not valid UTF-8", line, col) from None


def _expected_names(names: Iterable[str]) -> List[str]:
    return sorted({_TOKEN_TEXT.get(n, n) for n in names})


def parse_document(data: Union[bytes, str]) -> Document:
    """Parse any of the three document kinds into a generic block structure"""
    text = _decode(data)
    try:
        tree = _parser.parse(text)
        return _DocumentBuilder().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, SpecError):
            raise e.orig_exc from None
        if isinstance(e.orig_exc, RecursionError):
            raise SpecSyntaxError("expression nested too deeply") from None
        raise SpecSyntaxError(f"malformed document: {e.orig_exc}") from None
    except UnexpectedEOF as e:
        line, col = _line_col(text, len(text))
        raise SpecSyntaxError("unexpected end of input", line, col, _expected_names(e.expected)) from None
    except UnexpectedCharacters as e:
        raise SpecSyntaxError(f"unexpected character {text[e.pos_in_stream]!r}", e.line, e.column, _expected_names(e.allowed or ())) from None
    except UnexpectedToken as e:
        if e.token.type == "$END":
            line, col = _line_col(text, len(text))
        else:
            line, col = e.line, e.column
        raise SpecSyntaxError(f"unexpected {e.token!r}" if e.token.type != "$END" else "unexpected end of input", line, col, _expected_names(e.expected)) from None
    except UnexpectedInput as e:
        raise SpecSyntaxError(str(e).splitlines()[0], getattr(e, "line", None), getattr(e, "column", None)) from None
    except RecursionError:
        raise SpecSyntaxError("expression nested too deeply") from None
    except LarkError as e:
        raise SpecSyntaxError(str(e)) from None


# Value coercion

def _fail(message: str, where: Union[Pair, Block]) -> SpecSyntaxError:
    return SpecSyntaxError(message, where.line, where.col)


def _number_value(pair: Pair) -> float:
    if isinstance(pair.value, Expr):
        value = constant_value(pair.value)
        if value is not None and math.isfinite(value):
            return value
    raise _fail(f"'{pair.key}' expects a number", pair)


def _word_value(pair: Pair) -> str:
    if isinstance(pair.value, Ref):
        return pair.value.name
    if isinstance(pair.value, Word):
        return pair.value.text
    raise _fail(f"'{pair.key}' expects an identifier", pair)


def _bool_value(pair: Pair) -> bool:
    word = _word_value(pair)
    if word not in ("true", "false"):
        raise _fail(f"'{pair.key}' expects true or false", pair)
    return word == "true"


def _string_value(pair: Pair) -> str:
    if not isinstance(pair.value, str):
        raise _fail(f"'{pair.key}' expects a quoted string", pair)
    return pair.value


def _words_value(pair: Pair) -> List[str]:
    if not isinstance(pair.value, list) or not all(isinstance(v, Word) for v in pair.value):
        raise _fail(f"'{pair.key}' expects a list of identifiers", pair)
    return [v.text for v in pair.value]


def _enum_value(enum_cls, text: str, where) -> Any:
    try:
        return enum_cls(text)
    except ValueError:
        allowed = [m.value for m in enum_cls]
        raise SpecSyntaxError(f"'{text}' is not one of {', '.join(allowed)}", where.line, where.col) from None


def _pairs_by_key(pairs: Sequence[Pair], allowed: Iterable[str], where: str) -> Dict[str, Pair]:
    allowed = set(allowed)
    found: Dict[str, Pair] = {}
    for pair in pairs:
        if pair.key not in allowed:
            raise UnknownKey(pair.key, where, pair.line, pair.col)
        if pair.key in found:
            raise _fail(f"duplicate key '{pair.key}' in {where}", pair)
        found[pair.key] = pair
    return found


def _require(found: Dict[str, Pair], key: str, block: Union[Block, Document]) -> Pair:
    if key not in found:
        line = getattr(block, "line", 1)
        col = getattr(block, "col", 1)
        raise SpecSyntaxError(f"missing required key '{key}'", line, col)
    return found[key]


def _check_format_version(found: Dict[str, Pair]) -> None:
    pair = found.get("format_version")
    if pair is not None and _number_value(pair) != FORMAT_VERSION:
        raise _fail(f"unsupported format_version (only {FORMAT_VERSION} is understood)", pair)


def _expect_header(doc: Document, kinds: Sequence[str]) -> None:
    if doc.kind not in kinds:
        raise SpecSyntaxError(f"expected a {' or '.join(kinds)} document, found {doc.kind}", 1, 1)


def _single_block(doc: Document, kind: str) -> Optional[Block]:
    blocks = [b for b in doc.blocks if b.kind == kind]
    if len(blocks) > 1:
        raise _fail(f"duplicate {kind} block", blocks[1])
    return blocks[0] if blocks else None


# Reward specs

def _feature_source(pair: Pair) -> FeatureSource:
    value = pair.value
    if not isinstance(value, RawCall):
        raise _fail("feature bindings name a source such as speed(kmh) or event(kind)", pair)
    kind = _enum_value(SourceKind, value.name, pair)
    args = []
    for arg in value.args:
        if not isinstance(arg, Ref):
            raise _fail(f"{value.name} takes an identifier argument", pair)
        args.append(arg.name)
    if len(args) > 1:
        raise _fail(f"{value.name} takes at most one argument", pair)
    try:
        return FeatureSource(kind, args[0] if args else None)
    except ValueError as e:
        raise _fail(str(e), pair) from None


def _accrual(pair: Pair) -> Accrual:
    value = pair.value
    if isinstance(value, Ref) and value.name in (AccrualMode.PER_REWARD_STEP.value, AccrualMode.PER_DECISION_STEP.value):
        return Accrual(AccrualMode(value.name))
    if isinstance(value, RawCall) and value.name == AccrualMode.ON_EVENT.value and len(value.args) == 1 and isinstance(value.args[0], Ref):
        return Accrual(AccrualMode.ON_EVENT, _enum_value(TerminalKind, value.args[0].name, pair))
    raise _fail("accrual is per_reward_step, per_decision_step or on_event(kind)", pair)


def _checked_expr(pair: Pair, features: Dict[str, FeatureSource]) -> Expr:
    expr = _as_expr(pair.value)
    for node in iter_nodes(expr):
        if isinstance(node, Ref) and node.name not in features:
            line, col = node.loc if node.loc else (pair.line, pair.col)
            raise UnknownFeature(node.name, line, col)
    return expr


def _tags(found: Dict[str, Pair]) -> frozenset:
    pair = found.get("tags")
    if pair is None:
        return frozenset()
    return frozenset(_enum_value(OutcomeTag, t, pair) for t in _words_value(pair))


def _episode(block: Optional[Block]) -> EpisodeConfig:
    if block is None:
        return EpisodeConfig()
    found = _pairs_by_key(
        block.pairs,
        ("reward_step_s", "decision_step_s", "discount", "episodic", "time_limit_s", "termination"),
        "episode",
    )
    number = lambda key: _number_value(found[key]) if key in found else None  # noqa: E731
    time_limit = None
    if "time_limit_s" in found:
        pair = found["time_limit_s"]
        if isinstance(pair.value, Ref) and pair.value.name == "none":
            time_limit = math.inf
        else:
            time_limit = _number_value(pair)
    termination = None
    if "termination" in found:
        pair = found["termination"]
        termination = frozenset(_enum_value(TerminalKind, w, pair) for w in _words_value(pair))
    return EpisodeConfig(
        reward_step_s=number("reward_step_s"),
        decision_step_s=number("decision_step_s"),
        discount=number("discount"),
        episodic=_bool_value(found["episodic"]) if "episodic" in found else True,
        time_limit_s=time_limit,
        termination_criteria=termination,
    )


def _raise_on_errors(findings: List[ValidationFinding]) -> None:
    errors = [f for f in findings if f.severity is Severity.ERROR]
    if errors:
        raise SpecValidationError(errors)


def build_spec(doc: Document) -> RewardSpec:
    _expect_header(doc, ("reward_spec",))
    top = _pairs_by_key(doc.pairs, ("format_version", "source", "design_provenance", "declared_shaping"), "reward_spec")
    _check_format_version(top)

    features: Dict[str, FeatureSource] = {}
    features_block = _single_block(doc, "features")
    if features_block is not None:
        for pair in features_block.pairs:
            if pair.key in features:
                raise _fail(f"feature '{pair.key}' declared twice", pair)
            features[pair.key] = _feature_source(pair)

    attributes = []
    rules = []
    for block in doc.blocks:
        if block.kind in ("features", "episode"):
            continue
        if block.kind == "attribute":
            if block.name is None:
                raise _fail("attribute blocks need a name", block)
            found = _pairs_by_key(block.pairs, ("weight", "expr", "kind", "tags", "accrual"), f"attribute {block.name}")
            attributes.append(
                AttributeDef(
                    id=block.name,
                    weight=_number_value(_require(found, "weight", block)),
                    expr=_checked_expr(_require(found, "expr", block), features),
                    kind=_enum_value(AttributeKind, _word_value(_require(found, "kind", block)), found["kind"]),
                    outcome_tags=_tags(found),
                    accrual=_accrual(found["accrual"]) if "accrual" in found else PER_REWARD_STEP,
                )
            )
        elif block.kind == "terminal":
            if block.name is None:
                raise _fail("terminal blocks name their event kind", block)
            found = _pairs_by_key(block.pairs, ("expr", "tags"), f"terminal {block.name}")
            rules.append(
                TerminalRule(
                    on=_enum_value(TerminalKind, block.name, block),
                    expr=_checked_expr(_require(found, "expr", block), features),
                    outcome_tags=_tags(found),
                )
            )
        else:
            raise _fail(f"{block.kind} blocks do not belong in a reward spec", block)

    provenance = None
    if "design_provenance" in top:
        provenance = _enum_value(DesignProvenance, _word_value(top["design_provenance"]), top["design_provenance"])
    spec = RewardSpec(
        id=doc.name,
        source=_string_value(top["source"]) if "source" in top else "",
        features=features,
        per_step_attributes=tuple(attributes),
        terminal_rules=tuple(rules),
        episode=_episode(_single_block(doc, "episode")),
        design_provenance=provenance,
        declared_shaping_ids=frozenset(_words_value(top["declared_shaping"])) if "declared_shaping" in top else frozenset(),
    )
    _raise_on_errors(validate_spec(spec))
    return spec


def parse_spec(data: Union[bytes, str]) -> RewardSpec:
    """Parse a .rspec document"""
    return build_spec(parse_document(data))


@dataclass(frozen=True)
class SpecDocument:
    """Raw text of a reward spec, its parsed model and where each construct sits"""

    text: str
    spec: RewardSpec
    locations: Dict[str, Tuple[int, int]]

    def location(self, construct: str) -> Optional[Tuple[int, int]]:
        """Keys look like 'attribute:speed', 'terminal:collision' or 'feature:speed'"""
        return self.locations.get(construct)


def parse_spec_document(data: Union[bytes, str]) -> SpecDocument:
    text = _decode(data)
    doc = parse_document(text)
    spec = build_spec(doc)
    locations: Dict[str, Tuple[int, int]] = {}
    for block in doc.blocks:
        if block.kind == "features":
            for pair in block.pairs:
                locations[f"feature:{pair.key}"] = (pair.line, pair.col)
        elif block.name is not None:
            locations[f"{block.kind}:{block.name}"] = (block.line, block.col)
        else:
            locations[block.kind] = (block.line, block.col)
    return SpecDocument(text=text, spec=spec, locations=locations)


# Scenarios and baselines

_EVENT_KEYS = ("per_km", "per_trip", "per_drive", "on_crash")


def _baseline(block: Block) -> RiskBaseline:
    if block.name is None:
        raise _fail("baseline blocks need an id", block)
    found = _pairs_by_key(block.pairs, ("label", "km_per_collision", "provenance"), f"baseline {block.name}")
    km = _number_value(_require(found, "km_per_collision", block))
    if km <= 0:
        raise _fail("km_per_collision must be positive", found["km_per_collision"])
    return RiskBaseline(
        id=block.name,
        label=_string_value(found["label"]) if "label" in found else block.name,
        km_per_collision=km,
        provenance=_string_value(found["provenance"]) if "provenance" in found else "",
    )


def build_scenario(doc: Document) -> ScenarioSpec:
    _expect_header(doc, ("scenario",))
    top = _pairs_by_key(
        doc.pairs,
        ("format_version", "path_length_km", "speed_mps", "speed_kmh", "success_time_s",
         "time_limit_s", "idle_cutoff_s", "overlap_s"),
        "scenario",
    )
    _check_format_version(top)
    numbers = {key: _number_value(pair) for key, pair in top.items() if key != "format_version"}
    for key, value in numbers.items():
        if value < 0:
            raise _fail(f"'{key}' must not be negative", top[key])
    if "success_time_s" in numbers and numbers["success_time_s"] <= 0:
        raise _fail("'success_time_s' must be positive", top["success_time_s"])
    if "speed_mps" in numbers and "speed_kmh" in numbers:
        raise _fail("give speed_mps or speed_kmh, not both", top["speed_kmh"])
    speed = numbers.get("speed_mps", numbers.get("speed_kmh", 0.0) / KMH_PER_MPS)

    events = []
    params: Dict[str, float] = {}
    for block in doc.blocks:
        if block.kind == "event":
            if block.name is None:
                raise _fail("event blocks name their event kind", block)
            if any(e.kind == block.name for e in events):
                raise _fail(f"duplicate event block '{block.name}'", block)
            found = _pairs_by_key(block.pairs, _EVENT_KEYS, f"event {block.name}")
            rates = {key: _number_value(pair) for key, pair in found.items()}
            for key, value in rates.items():
                if value < 0:
                    raise _fail(f"'{key}' must not be negative", found[key])
            events.append(EventRate(block.name, **rates))
        elif block.kind == "params":
            for pair in block.pairs:
                if pair.key in params:
                    raise _fail(f"duplicate parameter '{pair.key}'", pair)
                params[pair.key] = _number_value(pair)
        elif block.kind == "baseline":
            _baseline(block)
        else:
            raise _fail(f"{block.kind} blocks do not belong in a scenario", block)

    return ScenarioSpec(
        id=doc.name,
        path_length_km=numbers.get("path_length_km", 0.0),
        speed_mps=speed,
        success_time_s=numbers.get("success_time_s"),
        events=tuple(events),
        overlap_s=numbers.get("overlap_s", 0.0),
        time_limit_s=numbers.get("time_limit_s"),
        idle_cutoff_s=numbers.get("idle_cutoff_s"),
        params=params,
    )


def parse_scenario(data: Union[bytes, str]) -> ScenarioSpec:
    """Parse a .scn document"""
    return build_scenario(parse_document(data))


def parse_baselines(data: Union[bytes, str]) -> List[RiskBaseline]:
    """Baseline blocks from a baselines or scenario document"""
    doc = parse_document(data)
    _expect_header(doc, ("baselines", "scenario"))
    if doc.kind == "baselines":
        _pairs_by_key(doc.pairs, ("format_version",), "baselines")
        for block in doc.blocks:
            if block.kind != "baseline":
                raise _fail(f"{block.kind} blocks do not belong in a baselines document", block)
    return [_baseline(b) for b in doc.blocks if b.kind == "baseline"]


def load_spec(path: Union[str, Path]) -> RewardSpec:
    return parse_spec(Path(path).read_bytes())


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    return parse_scenario(Path(path).read_bytes())


def load_baselines(path: Union[str, Path]) -> List[RiskBaseline]:
    return parse_baselines(Path(path).read_bytes())


# Rendering

_PRECEDENCE = {BinaryOp.ADD: 1, BinaryOp.SUB: 1, BinaryOp.MUL: 2, BinaryOp.DIV: 2}
_UNARY = 3
_ATOM = 4


def _precedence(expr: Expr) -> int:
    if isinstance(expr, Binary):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Neg):
        return _UNARY
    if isinstance(expr, Const) and (expr.value < 0 or math.copysign(1.0, expr.value) < 0):
        return _UNARY
    return _ATOM


def render_expr(expr: Expr) -> str:
    if isinstance(expr, Const):
        text = format_number(expr.value)
        if math.copysign(1.0, expr.value) < 0 and not text.startswith("-"):
            text = "-" + text
        return text
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Neg):
        operand = render_expr(expr.operand)
        if isinstance(expr.operand, Const) or _precedence(expr.operand) < _UNARY:
            return f"-({operand})"
        return f"-{operand}"
    if isinstance(expr, Binary):
        prec = _PRECEDENCE[expr.op]
        left = render_expr(expr.left)
        right = render_expr(expr.right)
        if _precedence(expr.left) < prec:
            left = f"({left})"
        if _precedence(expr.right) <= prec:
            right = f"({right})"
        return f"{left} {expr.op.value} {right}"
    if isinstance(expr, Call):
        return f"{expr.fn.value}({', '.join(render_expr(a) for a in expr.args)})"
    if isinstance(expr, Cond):
        test = f"{render_expr(expr.test.left)} {expr.test.op.value} {render_expr(expr.test.right)}"
        return f"cond({test}, {render_expr(expr.then)}, {render_expr(expr.otherwise)})"
    raise TypeError(f"not an expression node: {expr!r}")


def _render_string(value: str) -> str:
    return json.dumps(value, ensure_ascii=False)


def _render_list(words: Iterable[str]) -> str:
    return "[" + ", ".join(sorted(words)) + "]"


def _render_pairs(pairs: Dict[str, str], indent: str = "") -> List[str]:
    return [f"{indent}{key} = {pairs[key]}" for key in sorted(pairs)]


def _render_block(head: str, pairs: Dict[str, str]) -> List[str]:
    return ["", f"{head} {{", *_render_pairs(pairs, "  "), "}"]


def render_spec(spec: RewardSpec) -> bytes:
    """Canonical .rspec text: sorted keys within blocks, shortest exact numerals"""
    top = {
        "format_version": str(FORMAT_VERSION),
        "source": _render_string(spec.source),
        "declared_shaping": _render_list(spec.declared_shaping_ids),
    }
    if spec.design_provenance is not None:
        top["design_provenance"] = spec.design_provenance.value
    lines = [f"reward_spec {spec.id}", *_render_pairs(top)]

    if spec.features:
        lines += _render_block("features", {name: str(source) for name, source in spec.features.items()})

    episode = spec.episode
    pairs = {"episodic": "true" if episode.episodic else "false"}
    for key in ("reward_step_s", "decision_step_s", "discount"):
        value = getattr(episode, key)
        if value is not None:
            pairs[key] = format_number(value)
    if episode.time_limit_s is not None:
        pairs["time_limit_s"] = format_number(episode.time_limit_s) if math.isfinite(episode.time_limit_s) else "none"
    if episode.termination_criteria is not None:
        pairs["termination"] = _render_list(k.value for k in episode.termination_criteria)
    lines += _render_block("episode", pairs)

    for attr in spec.per_step_attributes:
        pairs = {
            "weight": format_number(attr.weight),
            "expr": render_expr(attr.expr),
            "kind": attr.kind.value,
            "tags": _render_list(t.value for t in attr.outcome_tags),
            "accrual": str(attr.accrual),
        }
        lines += _render_block(f"attribute {attr.id}", pairs)

    for rule in spec.terminal_rules:
        pairs = {"expr": render_expr(rule.expr)}
        if rule.outcome_tags:
            pairs["tags"] = _render_list(t.value for t in rule.outcome_tags)
        lines += _render_block(f"terminal {rule.on.value}", pairs)

    return ("\n".join(lines) + "\n").encode("utf-8")


def _render_baselines(baselines: Iterable[RiskBaseline]) -> List[str]:
    lines: List[str] = []
    for baseline in sorted(baselines, key=lambda b: b.id):
        lines += _render_block(
            f"baseline {baseline.id}",
            {
                "label": _render_string(baseline.label),
                "km_per_collision": format_number(baseline.km_per_collision),
                "provenance": _render_string(baseline.provenance),
            },
        )
    return lines


def render_scenario(scn: ScenarioSpec, baselines: Iterable[RiskBaseline] = ()) -> bytes:
    """Canonical .scn text"""
    top = {"format_version": str(FORMAT_VERSION), "path_length_km": format_number(scn.path_length_km)}
    if scn.speed_mps:
        top["speed_mps"] = format_number(scn.speed_mps)
    if scn.overlap_s:
        top["overlap_s"] = format_number(scn.overlap_s)
    for key in ("success_time_s", "time_limit_s", "idle_cutoff_s"):
        value = getattr(scn, key)
        if value is not None:
            top[key] = format_number(value)
    lines = [f"scenario {scn.id}", *_render_pairs(top)]
    for rate in sorted(scn.events, key=lambda e: e.kind):
        pairs = {key: format_number(getattr(rate, key)) for key in _EVENT_KEYS if getattr(rate, key)}
        lines += _render_block(f"event {rate.kind}", pairs)
    if scn.params:
        lines += _render_block("params", {k: format_number(v) for k, v in scn.params.items()})
    lines += _render_baselines(baselines)
    return ("\n".join(lines) + "\n").encode("utf-8")


def render_baselines(name: str, baselines: Iterable[RiskBaseline]) -> bytes:
    lines = [f"baselines {name}", f"format_version = {FORMAT_VERSION}", *_render_baselines(baselines)]
    return ("\n".join(lines) + "\n").encode("utf-8")
