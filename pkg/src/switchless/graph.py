"""Execution graphs: a flat node array built client-side and run in one transition.

Nodes are calls, iterators, maps, and control-flow markers whose jump targets
are resolved by validation. Branch and loop conditions are format strings
("d>d", "d<d&&d==d", ...) compiled to postfix token sequences and evaluated
on a small stack against the bound argument slots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BundleError, PredicateError, RegistryError, ValidationError
from .values import INTEGER_TAGS, Slot, Vector, TAG_BOOL, TAG_FLOAT, TAG_HANDLE

SCALAR = "s"
VECTOR = "v"

MAX_NESTING_DEPTH = 8
DEFAULT_LOOP_GUARD = 1 << 20


@dataclass(frozen=True)
class Param:
    """Descriptor tying one argument position to a Slot or Vector."""

    kind: str
    target: object
    tag: str
    stride: int = 1


def var(slot: Slot) -> Param:
    """Scalar argument: the same cell on every iteration."""
    return Param(SCALAR, slot, slot.tag)


def vec(vector: Vector, stride: int = 1) -> Param:
    """List argument: advances one element (times stride) per iteration."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return Param(VECTOR, vector, vector.tag, stride)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

_BINARY_OPS = ("<=", ">=", "==", "!=", "&&", "||", "<", ">")
_PRECEDENCE = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, ">": 4, "<=": 4, ">=": 4, "!": 5}
_OPERAND_LETTERS = "dufb"


def _tokenize_fmt(fmt: str):
    tokens = []
    i = 0
    while i < len(fmt):
        ch = fmt[i]
        if ch.isspace():
            i += 1
            continue
        two = fmt[i : i + 2]
        if two in ("<=", ">=", "==", "!=", "&&", "||"):
            tokens.append(("op", two))
            i += 2
        elif ch in "<>!":
            tokens.append(("op", ch))
            i += 1
        elif ch in "()":
            tokens.append((ch, ch))
            i += 1
        elif ch in _OPERAND_LETTERS:
            tokens.append(("tag", ch))
            i += 1
        elif ch == TAG_HANDLE:
            raise PredicateError("handle ('p') operands are not comparable")
        else:
            raise PredicateError(f"unexpected character {ch!r} in predicate format")
    return tokens


def _compile_fmt(fmt: str):
    """Shunting-yard: infix format string to postfix tokens."""
    output = []
    opstack = []
    operand_index = 0
    for kind, text in _tokenize_fmt(fmt):
        if kind == "tag":
            output.append(("val", operand_index, text))
            operand_index += 1
        elif kind == "(":
            opstack.append("(")
        elif kind == ")":
            while opstack and opstack[-1] != "(":
                output.append(("op", opstack.pop()))
            if not opstack:
                raise PredicateError("unbalanced ')' in predicate format")
            opstack.pop()
        else:  # operator
            prec = _PRECEDENCE[text]
            while opstack and opstack[-1] != "(":
                top = opstack[-1]
                # '!' is right-associative; everything else is left-associative.
                if _PRECEDENCE[top] > prec or (_PRECEDENCE[top] == prec and text != "!"):
                    output.append(("op", opstack.pop()))
                else:
                    break
            opstack.append(text)
    while opstack:
        top = opstack.pop()
        if top == "(":
            raise PredicateError("unbalanced '(' in predicate format")
        output.append(("op", top))

    depth = 0
    for tok in output:
        if tok[0] == "val":
            depth += 1
        elif tok[1] == "!":
            if depth < 1:
                raise PredicateError("'!' lacks an operand")
        else:
            if depth < 2:
                raise PredicateError(f"operator {tok[1]!r} lacks operands")
            depth -= 1
    if depth != 1:
        raise PredicateError("predicate does not reduce to a single boolean")
    return tuple(output), operand_index


def _as_bool(kind, value):
    if kind != TAG_BOOL:
        raise PredicateError("logical operator applied to a non-boolean value")
    return bool(value)


def _compare(op: str, left, right):
    lk, lv = left
    rk, rv = right
    if lk == TAG_BOOL or rk == TAG_BOOL:
        if op not in ("==", "!=") or lk != rk:
            raise PredicateError(f"cannot apply {op!r} to boolean operands")
    elif lk == TAG_FLOAT or rk == TAG_FLOAT:
        if lk != rk:
            # Widening is defined among integer tags only.
            raise PredicateError("cannot mix floating-point and integer operands")
    else:
        if lk not in INTEGER_TAGS or rk not in INTEGER_TAGS:
            raise PredicateError(f"operands {lk!r},{rk!r} are not comparable")
    if op == "<":
        return lv < rv
    if op == ">":
        return lv > rv
    if op == "<=":
        return lv <= rv
    if op == ">=":
        return lv >= rv
    if op == "==":
        return lv == rv
    return lv != rv


class Predicate:
    """A branch/loop condition over tagged scalar operands."""

    def __init__(self, fmt: str, operands):
        self.fmt = fmt
        self.operands = list(operands)
        self.tokens, n_placeholders = _compile_fmt(fmt)
        if n_placeholders != len(self.operands):
            raise PredicateError(
                f"format {fmt!r} has {n_placeholders} placeholders but {len(self.operands)} operands given"
            )

    def evaluate(self, bindings) -> bool:
        """Postfix stack evaluation over (value, tag) pairs; no side effects."""
        bindings = list(bindings)
        if len(bindings) != sum(1 for t in self.tokens if t[0] == "val"):
            raise PredicateError("binding count does not match placeholder count")
        stack = []
        for tok in self.tokens:
            if tok[0] == "val":
                _, idx, letter = tok
                value, tag = bindings[idx]
                if tag != letter:
                    raise PredicateError(f"placeholder {letter!r} bound to a {tag!r}-tagged slot")
                stack.append((tag, value))
            else:
                op = tok[1]
                if op == "!":
                    kind, value = stack.pop()
                    stack.append((TAG_BOOL, not _as_bool(kind, value)))
                elif op in ("&&", "||"):
                    rk, rv = stack.pop()
                    lk, lv = stack.pop()
                    lb, rb = _as_bool(lk, lv), _as_bool(rk, rv)
                    stack.append((TAG_BOOL, (lb and rb) if op == "&&" else (lb or rb)))
                else:
                    right = stack.pop()
                    left = stack.pop()
                    stack.append((TAG_BOOL, _compare(op, left, right)))
        kind, value = stack.pop()
        return _as_bool(kind, value)


def eval_predicate(pred: Predicate, bindings) -> bool:
    return pred.evaluate(bindings)


# ---------------------------------------------------------------------------
# Nodes
# ---------------------------------------------------------------------------


@dataclass
class CallNode:
    function_id: int
    params: list

    kind = "call"


@dataclass
class IteratorNode:
    function_id: int
    n_iters: object  # Slot or int, resolved at execution time
    params: list

    kind = "for_each"


@dataclass
class MapNode:
    function_id: int
    n_iters: object
    inputs: list
    output: Param

    kind = "map"


@dataclass
class IfBeginNode:
    predicate: Predicate
    else_idx: int | None = None
    end_idx: int = -1

    kind = "if_begin"


@dataclass
class ElseNode:
    end_idx: int = -1

    kind = "else"


@dataclass
class IfEndNode:
    kind = "if_end"


@dataclass
class ForBeginNode:
    n_iters: object
    end_idx: int = -1

    kind = "for_begin"


@dataclass
class ForEndNode:
    begin_idx: int = -1

    kind = "for_end"


@dataclass
class WhileBeginNode:
    predicate: Predicate
    end_idx: int = -1

    kind = "while_begin"


@dataclass
class WhileEndNode:
    begin_idx: int = -1

    kind = "while_end"


@dataclass
class ExecutionGraph:
    nodes: list
    validated: bool = False

    def __len__(self):
        return len(self.nodes)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _params_of(node):
    if isinstance(node, CallNode):
        return node.params
    if isinstance(node, IteratorNode):
        return node.params
    if isinstance(node, MapNode):
        return node.inputs + [node.output]
    return []


def validate_graph(graph: ExecutionGraph, registry) -> list[tuple[int, str]]:
    """Resolve jump targets and collect every defect with its node index.

    Returns an empty list on success, in which case the graph is marked
    validated in place. `registry` only needs a `lookup(fid)` method.
    """
    defects: list[tuple[int, str]] = []
    stack: list[tuple[str, int]] = []

    for idx, node in enumerate(graph.nodes):
        if isinstance(node, (CallNode, IteratorNode, MapNode)):
            try:
                _, arity = registry.lookup(node.function_id)
            except RegistryError as exc:
                defects.append((idx, str(exc)))
                continue
            params = _params_of(node)
            if len(params) != arity:
                defects.append((idx, f"function {node.function_id} expects {arity} params, got {len(params)}"))
            if isinstance(node, IteratorNode) and not any(p.kind == VECTOR for p in node.params):
                defects.append((idx, "iterator requires at least one vector param"))
            if isinstance(node, MapNode) and node.output.kind != VECTOR:
                defects.append((idx, "map output must be a vector"))
        elif isinstance(node, IfBeginNode):
            stack.append(("if", idx))
            node.else_idx = None
        elif isinstance(node, ElseNode):
            if not stack or stack[-1][0] != "if":
                defects.append((idx, "else without a matching if"))
            else:
                begin = stack[-1][1]
                if graph.nodes[begin].else_idx is not None:
                    defects.append((idx, "duplicate else for one if"))
                else:
                    graph.nodes[begin].else_idx = idx
        elif isinstance(node, IfEndNode):
            if not stack or stack[-1][0] != "if":
                defects.append((idx, "if_end without a matching if"))
            else:
                _, begin = stack.pop()
                graph.nodes[begin].end_idx = idx
                if graph.nodes[begin].else_idx is not None:
                    graph.nodes[graph.nodes[begin].else_idx].end_idx = idx
        elif isinstance(node, ForBeginNode):
            stack.append(("for", idx))
        elif isinstance(node, ForEndNode):
            if not stack or stack[-1][0] != "for":
                defects.append((idx, "for_end without a matching for_begin"))
            else:
                _, begin = stack.pop()
                graph.nodes[begin].end_idx = idx
                node.begin_idx = begin
        elif isinstance(node, WhileBeginNode):
            stack.append(("while", idx))
        elif isinstance(node, WhileEndNode):
            if not stack or stack[-1][0] != "while":
                defects.append((idx, "while_end without a matching while_begin"))
            else:
                _, begin = stack.pop()
                graph.nodes[begin].end_idx = idx
                node.begin_idx = begin
        else:
            defects.append((idx, f"unknown node type {type(node).__name__}"))

        if len(stack) > MAX_NESTING_DEPTH:
            defects.append((idx, f"control nesting exceeds depth {MAX_NESTING_DEPTH}"))

    for marker, idx in stack:
        defects.append((idx, f"unclosed {marker} marker"))

    if not defects:
        graph.validated = True
    return defects


# ---------------------------------------------------------------------------
# Builder
# ---------------------------------------------------------------------------


class GraphBuilder:
    """Collects nodes between bundle_begin and bundle_end.

    Arity errors are reported at append time; marker matching is left to
    validation so every defect can be reported together.
    """

    def __init__(self, registry):
        self.registry = registry
        self.nodes: list = []
        self.closed = False

    def _check_open(self):
        if self.closed:
            raise BundleError("bundle already ended")

    def _arity(self, function_id: int) -> int:
        _, arity = self.registry.lookup(function_id)
        return arity

    def add_call(self, function_id: int, params):
        self._check_open()
        params = list(params)
        arity = self._arity(function_id)
        if len(params) != arity:
            raise RegistryError(f"function {function_id} expects {arity} params, got {len(params)}")
        self.nodes.append(CallNode(function_id, params))

    def begin_for(self, n_iters):
        self._check_open()
        self.nodes.append(ForBeginNode(n_iters))

    def end_for(self):
        self._check_open()
        self.nodes.append(ForEndNode())

    def for_each(self, function_id: int, n_iters, params):
        self._check_open()
        params = list(params)
        arity = self._arity(function_id)
        if len(params) != arity:
            raise RegistryError(f"function {function_id} expects {arity} params, got {len(params)}")
        if not any(p.kind == VECTOR for p in params):
            raise BundleError("for_each requires at least one vector param")
        self.nodes.append(IteratorNode(function_id, n_iters, params))

    def map(self, function_id: int, n_iters, inputs, output: Param):
        self._check_open()
        inputs = list(inputs)
        arity = self._arity(function_id)
        if len(inputs) + 1 != arity:
            raise RegistryError(f"function {function_id} expects {arity} params, got {len(inputs) + 1}")
        if output.kind != VECTOR:
            raise BundleError("map output must be a vector")
        self.nodes.append(MapNode(function_id, n_iters, inputs, output))

    def if_begin(self, predicate: Predicate):
        self._check_open()
        self.nodes.append(IfBeginNode(predicate))

    def else_begin(self):
        self._check_open()
        self.nodes.append(ElseNode())

    def if_end(self):
        self._check_open()
        self.nodes.append(IfEndNode())

    def while_begin(self, predicate: Predicate):
        self._check_open()
        self.nodes.append(WhileBeginNode(predicate))

    def while_end(self):
        self._check_open()
        self.nodes.append(WhileEndNode())

    def build(self) -> ExecutionGraph:
        """Validate and return the graph without submitting it."""
        self._check_open()
        graph = ExecutionGraph(self.nodes)
        defects = validate_graph(graph, self.registry)
        if defects:
            raise ValidationError(defects)
        self.closed = True
        return graph


# ---------------------------------------------------------------------------
# Debug dump format: `slot` lines then `node` lines, one per line.
# ---------------------------------------------------------------------------


class _SlotTable:
    def __init__(self):
        self.index: dict[int, int] = {}
        self.entries: list = []

    def ref(self, target) -> int:
        key = id(target)
        if key not in self.index:
            self.index[key] = len(self.entries)
            self.entries.append(target)
        return self.index[key]


def _fmt_param(p: Param, table: _SlotTable) -> str:
    slot = table.ref(p.target)
    if p.kind == VECTOR:
        return f"v:{p.tag}@{slot}*{p.stride}"
    return f"s:{p.tag}@{slot}"


def _fmt_params(params, table):
    return ",".join(_fmt_param(p, table) for p in params) if params else "-"


def _fmt_n(n, table) -> str:
    if isinstance(n, Slot):
        return f"@{table.ref(n)}"
    return str(int(n))


def dump_graph(graph: ExecutionGraph) -> str:
    """One slot or node per line; parseable back with parse_dump."""
    if not graph.validated:
        raise ValidationError([(-1, "dump requires a validated graph")])
    table = _SlotTable()
    node_lines = []
    for idx, node in enumerate(graph.nodes):
        if isinstance(node, CallNode):
            line = f"call fid={node.function_id} params={_fmt_params(node.params, table)}"
        elif isinstance(node, IteratorNode):
            line = (
                f"for_each fid={node.function_id} n={_fmt_n(node.n_iters, table)} "
                f"params={_fmt_params(node.params, table)}"
            )
        elif isinstance(node, MapNode):
            line = (
                f"map fid={node.function_id} n={_fmt_n(node.n_iters, table)} "
                f"in={_fmt_params(node.inputs, table)} out={_fmt_param(node.output, table)}"
            )
        elif isinstance(node, IfBeginNode):
            else_part = node.else_idx if node.else_idx is not None else "-"
            line = (
                f'if_begin pred="{node.predicate.fmt}" ops={_fmt_params(node.predicate.operands, table)} '
                f"else={else_part} end={node.end_idx}"
            )
        elif isinstance(node, ElseNode):
            line = f"else end={node.end_idx}"
        elif isinstance(node, IfEndNode):
            line = "if_end"
        elif isinstance(node, ForBeginNode):
            line = f"for_begin n={_fmt_n(node.n_iters, table)} end={node.end_idx}"
        elif isinstance(node, ForEndNode):
            line = f"for_end begin={node.begin_idx}"
        elif isinstance(node, WhileBeginNode):
            line = (
                f'while_begin pred="{node.predicate.fmt}" '
                f"ops={_fmt_params(node.predicate.operands, table)} end={node.end_idx}"
            )
        else:
            line = f"while_end begin={node.begin_idx}"
        node_lines.append(f"node {idx} {line}")

    slot_lines = []
    for i, target in enumerate(table.entries):
        if isinstance(target, Vector):
            slot_lines.append(f"slot {i} vector {target.tag} {len(target)}")
        else:
            slot_lines.append(f"slot {i} scalar {target.tag}")
    return "\n".join(slot_lines + node_lines) + "\n"


def _parse_param(text: str, slots) -> Param:
    kind, rest = text.split(":", 1)
    tag, ref = rest.split("@", 1)
    if kind == VECTOR:
        idx, stride = ref.split("*", 1)
        return Param(VECTOR, slots[int(idx)], tag, int(stride))
    return Param(SCALAR, slots[int(ref)], tag)


def _parse_params(text: str, slots):
    if text == "-":
        return []
    return [_parse_param(part, slots) for part in text.split(",")]


def _parse_n(text: str, slots):
    if text.startswith("@"):
        return slots[int(text[1:])]
    return int(text)


def _fields(parts):
    out = {}
    for part in parts:
        key, value = part.split("=", 1)
        out[key] = value.strip('"')
    return out


def parse_dump(text: str) -> ExecutionGraph:
    """Rebuild a graph (with fresh zeroed slots) from dump_graph output."""
    slots: list = []
    nodes: list = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head == "slot":
            parts = rest.split()
            if parts[1] == "vector":
                slots.append(Vector([0] * int(parts[3]), parts[2]))
            else:
                slots.append(Slot(0, parts[2]))
            continue
        if head != "node":
            raise ValueError(f"unparseable dump line: {raw!r}")
        parts = rest.split()
        kind = parts[1]
        f = _fields(parts[2:])
        if kind == "call":
            nodes.append(CallNode(int(f["fid"]), _parse_params(f["params"], slots)))
        elif kind == "for_each":
            nodes.append(IteratorNode(int(f["fid"]), _parse_n(f["n"], slots), _parse_params(f["params"], slots)))
        elif kind == "map":
            nodes.append(
                MapNode(int(f["fid"]), _parse_n(f["n"], slots), _parse_params(f["in"], slots), _parse_param(f["out"], slots))
            )
        elif kind == "if_begin":
            pred = Predicate(f["pred"], _parse_params(f["ops"], slots))
            node = IfBeginNode(pred)
            node.else_idx = None if f["else"] == "-" else int(f["else"])
            node.end_idx = int(f["end"])
            nodes.append(node)
        elif kind == "else":
            nodes.append(ElseNode(int(f["end"])))
        elif kind == "if_end":
            nodes.append(IfEndNode())
        elif kind == "for_begin":
            nodes.append(ForBeginNode(_parse_n(f["n"], slots), int(f["end"])))
        elif kind == "for_end":
            nodes.append(ForEndNode(int(f["begin"])))
        elif kind == "while_begin":
            pred = Predicate(f["pred"], _parse_params(f["ops"], slots))
            node = WhileBeginNode(pred)
            node.end_idx = int(f["end"])
            nodes.append(node)
        elif kind == "while_end":
            nodes.append(WhileEndNode(int(f["begin"])))
        else:
            raise ValueError(f"unknown node kind {kind!r}")
    graph = ExecutionGraph(nodes, validated=True)
    return graph


def structurally_equal(a: ExecutionGraph, b: ExecutionGraph) -> bool:
    """Same node kinds, ids, offsets, predicates, and slot wiring shape."""
    return dump_graph(a) == dump_graph(b)
