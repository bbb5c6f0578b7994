"""Text formats: rule files, an N-Triples subset, assignment files.

Rule lines look like::

    (?x, <urn:anc>, ?z) :- (?x, <urn:par>, ?y), (?y, <urn:anc>, ?z) .

with one rule per line. Slots are ``<iri>``, ``"literal"``, ``_:name`` or
``?var``. Data files are an N-Triples subset, one triple per line,
terminated by ``.``; literals are quoted strings with optional datatype or
language tag kept verbatim. Assignment files map 1-based data file line
numbers to server ids. Lines that are empty or start with ``#`` are
skipped everywhere. All errors carry the offending line number.
"""
from __future__ import annotations

import re

from .model import Atom, Dictionary, Fact, Program, Rule, rule_is_safe

_TERM = r'(?:<[^<>"\s]*>|_:[A-Za-z0-9_.-]+|"(?:[^"\\]|\\.)*"(?:\^\^<[^<>"\s]*>|@[A-Za-z0-9-]+)?|\?[A-Za-z_][A-Za-z0-9_]*)'
_ATOM = rf"\(\s*({_TERM})\s*,\s*({_TERM})\s*,\s*({_TERM})\s*\)"
_ATOM_RX = re.compile(_ATOM)
_RULE_RX = re.compile(rf"^\s*{_ATOM}\s*:-\s*(.+?)\s*\.\s*$")

_NT_IRI = r'<[^<>"\s]*>'
_NT_BLANK = r"_:[A-Za-z0-9_.-]+"
_NT_LITERAL = r'"(?:[^"\\]|\\.)*"(?:\^\^<[^<>"\s]*>|@[A-Za-z0-9-]+)?'
_TRIPLE_RX = re.compile(
    rf"^\s*({_NT_IRI}|{_NT_BLANK})\s+({_NT_IRI})\s+({_NT_IRI}|{_NT_BLANK}|{_NT_LITERAL})\s*\.\s*$"
)
_ASSIGN_RX = re.compile(r"^\s*(\d+)\s+(\d+)\s*$")


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _skippable(line: str) -> bool:
    stripped = line.strip()
    return not stripped or stripped.startswith("#")


def _term(token: str, dictionary: Dictionary):
    if token.startswith("?"):
        return token[1:]
    return dictionary.encode(token)


def parse_rule_line(line: str, dictionary: Dictionary, lineno: int = 0) -> Rule:
    m = _RULE_RX.match(line)
    if not m:
        raise ParseError("malformed rule", lineno)
    head: Atom = tuple(_term(t, dictionary) for t in m.group(1, 2, 3))
    body_src = m.group(4)
    body: list[Atom] = []
    pos = 0
    while pos < len(body_src):
        am = _ATOM_RX.match(body_src, pos)
        if not am:
            raise ParseError("malformed body atom", lineno)
        body.append(tuple(_term(t, dictionary) for t in am.group(1, 2, 3)))
        pos = am.end()
        rest = body_src[pos:].lstrip()
        if not rest:
            break
        if not rest.startswith(","):
            raise ParseError("expected ',' between body atoms", lineno)
        pos = len(body_src) - len(rest) + 1
    if not body:
        raise ParseError("rule needs at least one body atom", lineno)
    rule = Rule(head, tuple(body))
    if not rule_is_safe(rule):
        raise ParseError("unsafe rule: head variable missing from body", lineno)
    return rule


def parse_rules(text: str, dictionary: Dictionary) -> Program:
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if _skippable(line):
            continue
        rules.append(parse_rule_line(line, dictionary, lineno))
    try:
        return Program(tuple(rules))
    except ValueError as exc:
        raise ParseError(str(exc), 0) from exc


def parse_triple_line(line: str, dictionary: Dictionary, lineno: int = 0) -> Fact:
    m = _TRIPLE_RX.match(line)
    if not m:
        raise ParseError("malformed triple", lineno)
    s, p, o = m.group(1, 2, 3)
    return (dictionary.encode(s), dictionary.encode(p), dictionary.encode(o))


def parse_triples(text: str, dictionary: Dictionary) -> tuple[list[Fact], list[int]]:
    """Parse a data file; returns facts in file order plus their line numbers."""
    facts: list[Fact] = []
    lines: list[int] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if _skippable(line):
            continue
        facts.append(parse_triple_line(line, dictionary, lineno))
        lines.append(lineno)
    return facts, lines


def parse_assignment(text: str) -> dict[int, int]:
    """Parse ``<data-line-number> <server-id>`` pairs; duplicates are errors."""
    out: dict[int, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if _skippable(line):
            continue
        m = _ASSIGN_RX.match(line)
        if not m:
            raise ParseError("malformed assignment, expected '<line> <server>'", lineno)
        data_line, sid = int(m.group(1)), int(m.group(2))
        if data_line in out:
            raise ParseError(f"duplicate assignment for data line {data_line}", lineno)
        out[data_line] = sid
    return out
