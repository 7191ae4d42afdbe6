"""Lexer, AST, and recursive-descent parser for .lp sources.

The language declares tapes sized by their end value (one past the
largest value the tape is expected to hold), an input and an output
state carrying index-tape lists, plain states, and rules of the form

    lhs [when predicate] = branch (and branch | or branch)* ;

where a branch names a target state (or true / false / a function call)
plus an optional ``after { ... }`` action block.  Functions take tape
and state parameters and return a state; calls appear as branch targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

KEYWORDS = {
    "after", "and", "const", "end", "false", "func", "input", "is_end",
    "left", "machine", "not", "or", "output", "return", "right", "scan",
    "state", "tape", "true", "use", "when", "write",
}

PUNCT = (
    ":=", "==", "!=", "<=", ">=", "<", ">", "=", "(", ")", "{", "}",
    ",", ";", "+", "-", "*", "#",
)


class LoproError(ValueError):
    """A diagnostic with a file:line:col location."""

    def __init__(self, message: str, filename: str = "<source>",
                 line: int = 0, col: int = 0):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.message = message
        self.filename = filename
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | keyword | punct | eof
    text: str
    line: int
    col: int


def tokenize(text: str, filename: str = "<source>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            tokens.append(Token("number", text[start:i], line, col))
            col += i - start
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            kind = "keyword" if word in KEYWORDS else "ident"
            tokens.append(Token(kind, word, line, col))
            col += i - start
            continue
        for p in PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise LoproError(f"unexpected character {ch!r}", filename, line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class ENum:
    value: int


@dataclass(frozen=True)
class EName:
    name: str


@dataclass(frozen=True)
class EEnd:
    tape: str


@dataclass(frozen=True)
class EBin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class PIsEnd:
    tape: str


@dataclass(frozen=True)
class PScan:
    tape: str
    op: str  # == or !=
    sym: str  # "0" | "1" | "#"


@dataclass(frozen=True)
class PCmp:
    tape: str
    op: str  # == != < <= > >=
    rhs: object  # expression


@dataclass(frozen=True)
class PNot:
    inner: object


@dataclass(frozen=True)
class PAnd:
    items: tuple


@dataclass(frozen=True)
class POr:
    items: tuple


@dataclass(frozen=True)
class MoveStmt:
    tape: str
    direction: str  # L | R


@dataclass(frozen=True)
class WriteStmt:
    tape: str
    sym: str


@dataclass(frozen=True)
class AssignStmt:
    tape: str
    rhs: object  # expression; a bare tape name means copy


@dataclass(frozen=True)
class Target:
    kind: str  # true | false | name | call
    name: str = ""
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Branch:
    target: Target
    stmts: tuple
    line: int
    col: int


@dataclass(frozen=True)
class Rule:
    lhs: str
    when: object  # predicate or None
    combinator: str  # single | and | or
    branches: tuple[Branch, ...]
    line: int
    col: int


@dataclass(frozen=True)
class TapeDecl:
    name: str
    end_expr: object
    line: int
    col: int


@dataclass(frozen=True)
class Param:
    kind: str  # tape | state
    name: str
    end_expr: object = None  # optional declared end for tape params


@dataclass(frozen=True)
class Func:
    name: str
    params: tuple[Param, ...]
    tapes: tuple[TapeDecl, ...]
    states: tuple[str, ...]
    rules: tuple[Rule, ...]
    returns: str
    line: int
    col: int


@dataclass(frozen=True)
class MachineBlock:
    tapes: tuple[TapeDecl, ...]
    input_state: tuple[str, tuple[str, ...]] | None
    output_state: tuple[str, tuple[str, ...]] | None
    states: tuple[str, ...]
    rules: tuple[Rule, ...]
    line: int
    col: int


@dataclass
class Program:
    filename: str
    uses: list[str] = field(default_factory=list)
    consts: list[tuple[str, object, int, int]] = field(default_factory=list)
    funcs: dict[str, Func] = field(default_factory=dict)
    machine: MachineBlock | None = None


# --- parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind in ("keyword", "punct")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            shown = tok.text if tok.kind != "eof" else "end of file"
            self.fail(f"expected {text!r}, found {shown!r}", tok)
        return self.next()

    def ident(self, what: str = "name") -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(f"expected {what}, found {tok.text!r}", tok)
        return self.next().text

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise LoproError(message, self.filename, tok.line, tok.col)

    # -- top level --

    def program(self) -> Program:
        prog = Program(self.filename)
        while self.peek().kind != "eof":
            tok = self.peek()
            if self.accept("use"):
                prog.uses.append(self.ident("module name"))
                self.expect(";")
            elif self.accept("const"):
                name = self.ident("constant name")
                self.expect("=")
                prog.consts.append((name, self.expr(), tok.line, tok.col))
                self.expect(";")
            elif self.at("func"):
                f = self.func()
                if f.name in prog.funcs:
                    self.fail(f"duplicate function {f.name!r}", tok)
                prog.funcs[f.name] = f
            elif self.at("machine"):
                if prog.machine is not None:
                    self.fail("duplicate machine block", tok)
                prog.machine = self.machine_block()
            else:
                self.fail(
                    f"expected use, const, func, or machine, found {tok.text!r}", tok
                )
        return prog

    def func(self) -> Func:
        start = self.expect("func")
        name = self.ident("function name")
        self.expect("(")
        params: list[Param] = []
        if not self.at(")"):
            while True:
                if self.accept("tape"):
                    pname = self.ident("tape parameter name")
                    end_expr = self.expr() if self.accept("end") else None
                    params.append(Param("tape", pname, end_expr))
                elif self.accept("state"):
                    params.append(Param("state", self.ident("state parameter name")))
                else:
                    self.fail("expected 'tape' or 'state' parameter")
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("{")
        tapes: list[TapeDecl] = []
        states: list[str] = []
        rules: list[Rule] = []
        returns = None
        while not self.at("}"):
            tok = self.peek()
            if self.at("tape"):
                tapes.append(self.tape_decl())
            elif self.at("state"):
                states.extend(self.state_decl())
            elif self.accept("return"):
                if returns is not None:
                    self.fail("duplicate return", tok)
                returns = self.ident("state name")
                self.expect(";")
            elif tok.kind == "ident":
                rules.append(self.rule())
            else:
                self.fail(f"unexpected {tok.text!r} in function body", tok)
        self.expect("}")
        if returns is None:
            self.fail(f"function {name!r} has no return", start)
        return Func(
            name, tuple(params), tuple(tapes), tuple(states), tuple(rules),
            returns, start.line, start.col,
        )

    def machine_block(self) -> MachineBlock:
        start = self.expect("machine")
        self.expect("{")
        tapes: list[TapeDecl] = []
        input_state = None
        output_state = None
        states: list[str] = []
        rules: list[Rule] = []
        while not self.at("}"):
            tok = self.peek()
            if self.at("tape"):
                tapes.append(self.tape_decl())
            elif self.at("input") or self.at("output"):
                kind = self.next().text
                self.expect("state")
                name = self.ident("state name")
                self.expect("(")
                indexes: list[str] = []
                if not self.at(")"):
                    while True:
                        indexes.append(self.ident("tape name"))
                        if not self.accept(","):
                            break
                self.expect(")")
                self.expect(";")
                decl = (name, tuple(indexes))
                if kind == "input":
                    if input_state is not None:
                        self.fail("duplicate input state", tok)
                    input_state = decl
                else:
                    if output_state is not None:
                        self.fail("duplicate output state", tok)
                    output_state = decl
            elif self.at("state"):
                states.extend(self.state_decl())
            elif tok.kind == "ident":
                rules.append(self.rule())
            else:
                self.fail(f"unexpected {tok.text!r} in machine block", tok)
        self.expect("}")
        return MachineBlock(
            tuple(tapes), input_state, output_state, tuple(states),
            tuple(rules), start.line, start.col,
        )

    def tape_decl(self) -> TapeDecl:
        start = self.expect("tape")
        name = self.ident("tape name")
        self.expect("end")
        expr = self.expr()
        self.expect(";")
        return TapeDecl(name, expr, start.line, start.col)

    def state_decl(self) -> list[str]:
        self.expect("state")
        names = [self.ident("state name")]
        while self.accept(","):
            names.append(self.ident("state name"))
        self.expect(";")
        return names

    # -- rules --

    def rule(self) -> Rule:
        tok = self.peek()
        lhs = self.ident("state name")
        when = None
        if self.accept("when"):
            when = self.pred()
        self.expect("=")
        branches = [self.branch()]
        combinator = "single"
        while self.at("or") or self.at("and"):
            word = self.next().text
            if combinator == "single":
                combinator = word
            elif combinator != word:
                self.fail("cannot mix 'and' and 'or' branches in one rule")
            branches.append(self.branch())
        self.expect(";")
        return Rule(lhs, when, combinator, tuple(branches), tok.line, tok.col)

    def branch(self) -> Branch:
        tok = self.peek()
        if self.accept("true"):
            target = Target("true")
        elif self.accept("false"):
            target = Target("false")
        else:
            name = self.ident("state or function name")
            if self.accept("("):
                args: list[str] = []
                if not self.at(")"):
                    while True:
                        args.append(self.ident("argument name"))
                        if not self.accept(","):
                            break
                self.expect(")")
                target = Target("call", name, tuple(args))
            else:
                target = Target("name", name)
        stmts: list = []
        if self.accept("after"):
            self.expect("{")
            while not self.at("}"):
                stmts.append(self.stmt())
            self.expect("}")
        return Branch(target, tuple(stmts), tok.line, tok.col)

    def stmt(self):
        tok = self.peek()
        if self.accept("right") or self.accept("left"):
            direction = "R" if tok.text == "right" else "L"
            self.expect("(")
            tape = self.ident("tape name")
            self.expect(")")
            self.expect(";")
            return MoveStmt(tape, direction)
        if self.accept("write"):
            self.expect("(")
            tape = self.ident("tape name")
            self.expect(",")
            sym = self.symbol()
            self.expect(")")
            self.expect(";")
            return WriteStmt(tape, sym)
        if tok.kind == "ident":
            tape = self.ident("tape name")
            self.expect(":=")
            rhs = self.expr()
            self.expect(";")
            return AssignStmt(tape, rhs)
        self.fail(f"expected a statement, found {tok.text!r}", tok)

    def symbol(self) -> str:
        tok = self.peek()
        if tok.text in ("0", "1", "#"):
            self.next()
            return tok.text
        self.fail(f"expected a tape symbol (0, 1, or #), found {tok.text!r}", tok)

    # -- predicates --

    def pred(self):
        items = [self.pred_and()]
        while self.accept("or"):
            items.append(self.pred_and())
        return items[0] if len(items) == 1 else POr(tuple(items))

    def pred_and(self):
        items = [self.pred_not()]
        while self.accept("and"):
            items.append(self.pred_not())
        return items[0] if len(items) == 1 else PAnd(tuple(items))

    def pred_not(self):
        if self.accept("not"):
            return PNot(self.pred_not())
        if self.accept("("):
            inner = self.pred()
            self.expect(")")
            return inner
        return self.atom()

    def atom(self):
        tok = self.peek()
        if self.accept("is_end"):
            self.expect("(")
            tape = self.ident("tape name")
            self.expect(")")
            return PIsEnd(tape)
        if self.accept("scan"):
            self.expect("(")
            tape = self.ident("tape name")
            self.expect(")")
            op = self.peek().text
            if op not in ("==", "!="):
                self.fail(f"expected == or != after scan(), found {op!r}")
            self.next()
            return PScan(tape, op, self.symbol())
        if tok.kind == "ident":
            tape = self.next().text
            op = self.peek().text
            if op not in ("==", "!=", "<", "<=", ">", ">="):
                self.fail(f"expected a comparison operator, found {op!r}")
            self.next()
            return PCmp(tape, op, self.expr())
        self.fail(f"expected a predicate, found {tok.text!r}", tok)

    # -- expressions --

    def expr(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            op = self.next().text
            left = EBin(op, left, self.term())
        return left

    def term(self):
        left = self.factor()
        while self.at("*"):
            self.next()
            left = EBin("*", left, self.factor())
        return left

    def factor(self):
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            return ENum(int(tok.text))
        if self.accept("end"):
            self.expect("(")
            tape = self.ident("tape name")
            self.expect(")")
            return EEnd(tape)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "ident":
            self.next()
            return EName(tok.text)
        self.fail(f"expected an expression, found {tok.text!r}", tok)


def parse_module(text: str, filename: str = "<source>") -> Program:
    """Parse a source file that need not contain a machine block."""
    return _Parser(tokenize(text, filename), filename).program()


def parse(text: str, filename: str = "<source>") -> Program:
    """Parse a complete program; the machine block is mandatory."""
    prog = parse_module(text, filename)
    if prog.machine is None:
        raise LoproError("missing machine block", filename, 1, 1)
    return prog
