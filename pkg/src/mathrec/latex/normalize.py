"""Canonical LaTeX normalization.

The pipeline is: string-level rewrite rules (``rules.tsv``), tokenization,
then a structural pass that braces every command argument listed in
``arity.tsv`` and turns ``{a \\over b}`` into ``\\frac``.  Output tokens are
joined with single spaces, which makes the result a fixed point of
:func:`normalize`.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Union

from mathrec.errors import UnbalancedBraces

logger = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"\\[a-zA-Z]+|\\[^a-zA-Z\s]|\S")

INFIX_FRACTIONS = {r"\over": r"\frac", r"\choose": r"\binom"}


@dataclass(frozen=True)
class RewriteRule:
    pattern: re.Pattern
    replacement: str

    def apply(self, text: str) -> str:
        def substitute(match: re.Match) -> str:
            start = match.start()
            run = 0
            while start - run - 1 >= 0 and text[start - run - 1] == "\\":
                run += 1
            if run % 2:
                return match.group(0)
            return self.replacement

        return self.pattern.sub(substitute, text)


def _data_lines(name: str) -> list[str]:
    text = resources.files("mathrec.latex").joinpath(name).read_text(encoding="utf-8")
    return text.splitlines()


def parse_rules(lines: Iterable[str]) -> list[RewriteRule]:
    """Parse ``pattern<TAB>replacement`` lines; ``#`` lines are comments."""
    rules = []
    for lineno, line in enumerate(lines, 1):
        if not line or line.startswith("#"):
            continue
        if "\t" not in line:
            raise ValueError(f"rule line {lineno} has no TAB separator: {line!r}")
        pattern, replacement = line.split("\t", 1)
        rules.append(RewriteRule(re.compile(pattern), replacement))
    return rules


def load_rules(path: Union[str, Path, None] = None) -> list[RewriteRule]:
    if path is None:
        return list(_default_rules())
    return parse_rules(Path(path).read_text(encoding="utf-8").splitlines())


@lru_cache(maxsize=None)
def _default_rules() -> tuple[RewriteRule, ...]:
    return tuple(parse_rules(_data_lines("rules.tsv")))


@lru_cache(maxsize=None)
def command_arity() -> dict[str, int]:
    table = {}
    for line in _data_lines("arity.tsv"):
        if not line or line.startswith("#"):
            continue
        name, n = line.split("\t")
        table[name] = int(n)
    return table


def split_tokens(text: str) -> list[str]:
    """Split LaTeX into commands, escaped symbols and single characters."""
    return TOKEN_RE.findall(text)


class _Group(list):
    """A brace group in the parse tree."""


def _parse(tokens: list[str]) -> _Group:
    root = _Group()
    stack = [root]
    for tok in tokens:
        if tok == "{":
            group = _Group()
            stack[-1].append(group)
            stack.append(group)
        elif tok == "}":
            if len(stack) == 1:
                raise UnbalancedBraces("unexpected '}'")
            stack.pop()
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise UnbalancedBraces(f"{len(stack) - 1} unclosed '{{'")
    return root


def _split_infix(nodes: list) -> list:
    for i, node in enumerate(nodes):
        if isinstance(node, str) and node in INFIX_FRACTIONS:
            left = _Group(nodes[:i])
            right = _Group(_split_infix(nodes[i + 1 :]))
            return [INFIX_FRACTIONS[node], left, right]
    return nodes


def _canonical(nodes: list) -> _Group:
    nodes = _split_infix(list(nodes))
    arity = command_arity()
    out = _Group()
    i = 0
    while i < len(nodes):
        unit, i = _consume(nodes, i, arity)
        out.extend(unit)
    return out


def _consume(nodes: list, i: int, arity: dict[str, int]) -> tuple[list, int]:
    """Emit the unit starting at ``nodes[i]`` with its arguments braced."""
    node = nodes[i]
    i += 1
    if isinstance(node, _Group):
        return [_canonical(node)], i
    out = [node]
    n_args = arity.get(node, 0)
    if n_args == 0:
        return out, i
    if node == r"\sqrt" and i < len(nodes) and nodes[i] == "[":
        # optional index: copy through the matching ']'
        while i < len(nodes):
            opt = nodes[i]
            i += 1
            out.append(_canonical(opt) if isinstance(opt, _Group) else opt)
            if opt == "]":
                break
    for _ in range(n_args):
        if i >= len(nodes):
            break
        if isinstance(nodes[i], _Group):
            out.append(_canonical(nodes[i]))
            i += 1
        else:
            arg, i = _consume(nodes, i, arity)
            out.append(_Group(arg))
    return out, i


def _flatten(nodes: list, out: list[str]) -> list[str]:
    for node in nodes:
        if isinstance(node, _Group):
            out.append("{")
            _flatten(node, out)
            out.append("}")
        else:
            out.append(node)
    return out


def normalize(raw: str, rules: Union[list[RewriteRule], None] = None) -> str:
    """Return the canonical, single-space-separated form of ``raw``.

    Raises :class:`UnbalancedBraces` when braces do not pair up.  Empty or
    whitespace-only input gives ``""``.
    """
    text = raw
    for rule in _default_rules() if rules is None else rules:
        text = rule.apply(text)
    tokens = split_tokens(text)
    if not tokens:
        return ""
    tree = _canonical(_parse(tokens))
    return " ".join(_flatten(tree, []))


def try_normalize(raw: str) -> Union[str, None]:
    """Normalize, logging and returning ``None`` for unusable lines."""
    try:
        return normalize(raw)
    except UnbalancedBraces as exc:
        logger.warning("skipping unbalanced formula %r: %s", raw[:80], exc)
        return None
