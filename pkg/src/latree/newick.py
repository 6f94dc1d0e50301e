"""Newick text format for semi-labeled trees.

Standard Newick grammar with one convention on top: regular nodes are the
only nodes carrying labels (integers, on leaves or internal nodes), latent
nodes are unlabeled internal nodes. Branch lengths are mandatory for every
non-root node and the text ends with ";".

Serialization roots the tree at the smallest regular label and orders
children by the minimum regular label in their subtree, so equal trees
always serialize to equal text.
"""

from __future__ import annotations

from .errors import NewickParseError
from .tree import NodeId, SemiLabeledTree, _format_float

_PUNCT = "(),:;"


def serialize(tree: SemiLabeledTree) -> str:
    """Render a tree as Newick text, e.g. the single edge 1-2 of length 7 as ``(2:7)1;``."""
    root = NodeId.regular(tree.regular_labels[0])

    order: list[tuple[NodeId, NodeId | None]] = [(root, None)]
    for node, parent in order:
        for child in tree.neighbors(node):
            if child != parent:
                order.append((child, node))
    big = tree.regular_labels[-1] + 1
    minlab = {node: (big if node.is_latent else node.index) for node, _ in order}
    for node, parent in reversed(order):
        if parent is not None and minlab[node] < minlab[parent]:
            minlab[parent] = minlab[node]

    out: list[str] = []
    stack: list[tuple[str, object, object]] = [("enter", root, None)]
    while stack:
        op, x, parent = stack.pop()
        if op == "text":
            out.append(x)  # type: ignore[arg-type]
            continue
        kids = sorted(
            ((minlab[c], c, w) for c, w in tree.neighbors(x).items() if c != parent)
        )
        name = "" if x.is_latent else str(x.index)
        if not kids:
            out.append(name)
            continue
        ops: list[tuple[str, object, object]] = [("text", "(", None)]
        for i, (_, c, w) in enumerate(kids):
            if i:
                ops.append(("text", ",", None))
            ops.append(("enter", c, x))
            ops.append(("text", ":" + _format_float(w), None))
        ops.append(("text", ")" + name, None))
        stack.extend(reversed(ops))
    out.append(";")
    return "".join(out)


def parse(text: str) -> SemiLabeledTree:
    """Parse Newick text into a tree.

    Grammar violations raise :class:`NewickParseError` with the offending
    line and column; a grammatically valid text that does not describe a
    valid semi-labeled tree (say, an unlabeled chain node) fails in the
    tree constructor instead.
    """
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos]

    def fail(message: str, tok) -> NewickParseError:
        return NewickParseError(message, tok[2], tok[3])

    # Each parsed node is (children, label); children are (node, length).
    Node = tuple  # alias for readability only
    frames: list[list[tuple[Node, float]]] = []
    done: Node | None = None  # most recently completed subtree
    state = "node"

    while True:
        kind, value, line, col = tok = tokens[pos]
        pos += 1
        if state == "node":
            if kind == "(":
                frames.append([])
            elif kind == "word":
                done = ((), _label(value, tok))
                state = "after"
            else:
                raise fail(f"expected a node, found {value!r}", tok)
        elif state == "after":
            if kind == ":":
                num = tokens[pos]
                pos += 1
                if num[0] != "word":
                    raise fail(f"expected a branch length, found {num[1]!r}", num)
                try:
                    length = float(num[1])
                except ValueError:
                    raise fail(f"invalid branch length {num[1]!r}", num) from None
                if not frames:
                    raise fail("branch length on the root", tok)
                frames[-1].append((done, length))
                done = None
                state = "branch"
            elif kind == ";":
                if frames:
                    raise fail("unbalanced '(': tree ended early", tok)
                break
            elif kind in (",", ")"):
                raise fail("missing branch length (lengths are mandatory)", tok)
            else:
                raise fail(f"expected ':', ';' after a node, found {value!r}", tok)
        elif state == "branch":
            if kind == ",":
                state = "node"
            elif kind == ")":
                if not frames:
                    raise fail("unbalanced ')'", tok)
                children = frames.pop()
                label = None
                if peek()[0] == "word":
                    label = _label(peek()[1], peek())
                    pos += 1
                done = (tuple(children), label)
                state = "after"
            else:
                raise fail(f"expected ',' or ')', found {value!r}", tok)

    end = tokens[pos]
    if end[0] != "end":
        raise fail(f"trailing content after ';': {end[1]!r}", end)
    return _build(done)


def _label(word: str, tok) -> int:
    if not word.isdigit():
        raise NewickParseError(
            f"regular labels must be integers, found {word!r}", tok[2], tok[3]
        )
    return int(word)


def _build(root) -> SemiLabeledTree:
    edges: list[tuple[NodeId, NodeId, float]] = []
    nodes: list[NodeId] = []
    next_latent = 1

    stack = [(root, None)]
    while stack:
        (children, label), parent_edge = stack.pop()
        if label is None:
            node = NodeId.latent(next_latent)
            next_latent += 1
        else:
            node = NodeId.regular(label)
        nodes.append(node)
        if parent_edge is not None:
            parent, length = parent_edge
            edges.append((parent, node, length))
        for child, length in children:
            stack.append((child, (node, length)))
    return SemiLabeledTree(edges, nodes=nodes)


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch in _PUNCT:
            tokens.append((ch, ch, line, col))
            col += 1
            i += 1
        else:
            j = i
            while j < len(text) and text[j] not in _PUNCT and not text[j].isspace():
                j += 1
            tokens.append(("word", text[i:j], line, col))
            col += j - i
            i = j
    tokens.append(("end", "", line, col))
    if not any(t[0] == ";" for t in tokens):
        raise NewickParseError("unexpected end of input: missing ';'", line, col)
    return tokens
