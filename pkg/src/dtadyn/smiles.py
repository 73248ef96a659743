"""SMILES subset parser producing featurized molecular graphs.

Atoms become nodes and bonds become unweighted edges; the graph carries
one-hot atom features and the self-loop-augmented, symmetrically normalized
adjacency the graph encoder consumes.  Out of scope by design:
stereochemistry (/ \\ @), isotopes, and multi-fragment "." inputs — these
raise UnsupportedFeature naming the construct.  Bracket-atom charges and
explicit hydrogen counts are parsed and discarded; only connectivity and
atom identity matter downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class SmilesError(ValueError):
    pass


class LexError(SmilesError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnsupportedFeature(SmilesError):
    pass


class ParseError(SmilesError):
    pass


class UnclosedBranch(ParseError):
    pass


class UnmatchedRingClosure(ParseError):
    pass


class EmptyMolecule(ParseError):
    pass


ORGANIC_SUBSET = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
BOND_ORDERS = {"-": 1.0, "=": 2.0, "#": 3.0, ":": 1.5}

# Fixed element list for the one-hot block; everything else lands in "other".
ELEMENTS = ("C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B",
            "Si", "Se", "Na", "K", "Li")
MAX_DEGREE = 6
MAX_VALENCE = 6
FEATURE_WIDTH = len(ELEMENTS) + 1 + (MAX_DEGREE + 1) + (MAX_VALENCE + 1) + 1


@dataclass(frozen=True)
class Token:
    kind: str  # "atom" | "bond" | "open" | "close" | "ring"
    pos: int
    symbol: str = ""       # atom element symbol
    aromatic: bool = False  # atom flag
    order: float = 0.0      # bond order
    number: int = -1        # ring-closure number


@dataclass(frozen=True)
class Atom:
    symbol: str
    aromatic: bool


@dataclass
class MolecularGraph:
    """Parsed ligand graph; features and normalized adjacency are filled by
    featurize() and normalize_adjacency()."""

    atoms: list[Atom]
    edges: list[tuple[int, int]]
    bond_orders: list[float]
    node_features: np.ndarray | None = None
    norm_adjacency: np.ndarray | None = None

    @property
    def atom_count(self) -> int:
        return len(self.atoms)

    @property
    def bond_count(self) -> int:
        return len(self.edges)


def tokenize(text: str) -> list[Token]:
    """Lex a SMILES string into atom/bond/branch/ring tokens."""
    if not text:
        raise EmptyMolecule("empty SMILES string")
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "[":
            token, i = _lex_bracket(text, i)
            tokens.append(token)
            continue
        two = text[i : i + 2]
        if two in ("Cl", "Br"):
            tokens.append(Token("atom", i, symbol=two))
            i += 2
            continue
        if ch in "BCNOPSFI":
            tokens.append(Token("atom", i, symbol=ch))
        elif ch in AROMATIC_ORGANIC:
            tokens.append(Token("atom", i, symbol=ch.upper(), aromatic=True))
        elif ch in BOND_ORDERS:
            tokens.append(Token("bond", i, order=BOND_ORDERS[ch]))
        elif ch == "(":
            tokens.append(Token("open", i))
        elif ch == ")":
            tokens.append(Token("close", i))
        elif ch.isdigit():
            tokens.append(Token("ring", i, number=int(ch)))
        elif ch == "%":
            if i + 2 >= n or not text[i + 1 : i + 3].isdigit():
                raise LexError("'%' must be followed by two digits", i)
            tokens.append(Token("ring", i, number=int(text[i + 1 : i + 3])))
            i += 2
        elif ch in "/\\":
            raise UnsupportedFeature(f"stereo bond {ch!r} is not supported")
        elif ch == ".":
            raise UnsupportedFeature("multi-fragment '.' molecules are not supported")
        else:
            raise LexError(f"unrecognized character {ch!r}", i)
        i += 1
    return tokens


def _lex_bracket(text: str, start: int) -> tuple[Token, int]:
    """Lex one [...] atom starting at '['; charges and H counts are discarded."""
    end = text.find("]", start)
    if end < 0:
        raise LexError("unterminated bracket atom", start)
    body = text[start + 1 : end]
    i = 0
    if not body:
        raise LexError("empty bracket atom", start)
    if body[0].isdigit():
        raise UnsupportedFeature(f"isotope label in [{body}] is not supported")
    if body[0].isupper():
        # a lowercase second letter is part of the element symbol; explicit
        # hydrogen counts are always uppercase 'H'
        symbol = body[0]
        i = 1
        if i < len(body) and body[i].islower():
            symbol += body[i]
            i += 1
        aromatic = False
    elif body[0].islower():
        # aromatic bracket atom: c, n, o, p, s, se, as
        symbol = body[0]
        i = 1
        if body[:2] in ("se", "as"):
            symbol = body[:2]
            i = 2
        aromatic = True
        symbol = symbol.capitalize()
    else:
        raise LexError(f"bad bracket atom [{body}]", start)
    # remainder: optional @-chirality (unsupported), H count, charge
    while i < len(body):
        ch = body[i]
        if ch == "@":
            raise UnsupportedFeature(f"chirality in [{body}] is not supported")
        if ch == "H":
            i += 1
            while i < len(body) and body[i].isdigit():
                i += 1
        elif ch in "+-":
            i += 1
            while i < len(body) and (body[i].isdigit() or body[i] == ch):
                i += 1
        else:
            raise LexError(f"bad bracket atom content {ch!r} in [{body}]", start)
    return Token("atom", start, symbol=symbol, aromatic=aromatic), end + 1


def parse(tokens: list[Token]) -> MolecularGraph:
    """Build the atom/bond graph: implicit single bonds between adjacent
    atoms, branches via a stack, ring closures pairing equal numbers."""
    atoms: list[Atom] = []
    edges: list[tuple[int, int]] = []
    orders: list[float] = []
    edge_set: set[tuple[int, int]] = set()
    stack: list[int] = []
    open_rings: dict[int, tuple[int, float | None]] = {}
    prev: int | None = None
    pending: float | None = None

    def add_edge(a: int, b: int, order: float | None):
        if a == b:
            raise UnmatchedRingClosure("ring closure bonds an atom to itself")
        key = (min(a, b), max(a, b))
        if key in edge_set:
            raise UnmatchedRingClosure(f"duplicate bond between atoms {a} and {b}")
        if order is None:
            order = 1.5 if atoms[a].aromatic and atoms[b].aromatic else 1.0
        edge_set.add(key)
        edges.append(key)
        orders.append(order)

    for tok in tokens:
        if tok.kind == "atom":
            idx = len(atoms)
            atoms.append(Atom(tok.symbol, tok.aromatic))
            if prev is not None:
                add_edge(prev, idx, pending)
            pending = None
            prev = idx
        elif tok.kind == "bond":
            if prev is None:
                raise ParseError("bond symbol before any atom")
            pending = tok.order
        elif tok.kind == "open":
            if prev is None:
                raise ParseError("branch opened before any atom")
            stack.append(prev)
        elif tok.kind == "close":
            if not stack:
                raise UnclosedBranch("')' without a matching '('")
            prev = stack.pop()
        elif tok.kind == "ring":
            if prev is None:
                raise UnmatchedRingClosure("ring closure before any atom")
            if tok.number in open_rings:
                other, opened_order = open_rings.pop(tok.number)
                order = pending if pending is not None else opened_order
                add_edge(other, prev, order)
            else:
                open_rings[tok.number] = (prev, pending)
            pending = None
    if stack:
        raise UnclosedBranch(f"{len(stack)} unclosed '('")
    if open_rings:
        raise UnmatchedRingClosure(
            f"unclosed ring closure number(s): {sorted(open_rings)}"
        )
    if pending is not None:
        raise ParseError("dangling bond symbol at end of input")
    if not atoms:
        raise EmptyMolecule("no atoms in token stream")
    return MolecularGraph(atoms=atoms, edges=edges, bond_orders=orders)


def featurize(graph: MolecularGraph) -> MolecularGraph:
    """Fill per-atom one-hot features: element, degree, valence, aromatic."""
    n = graph.atom_count
    degree = [0] * n
    valence = [0.0] * n
    for (a, b), order in zip(graph.edges, graph.bond_orders):
        degree[a] += 1
        degree[b] += 1
        valence[a] += order
        valence[b] += order
    feats = np.zeros((n, FEATURE_WIDTH), dtype=np.float64)
    for i, atom in enumerate(graph.atoms):
        if atom.symbol in ELEMENTS:
            feats[i, ELEMENTS.index(atom.symbol)] = 1.0
        else:
            feats[i, len(ELEMENTS)] = 1.0  # "other"
        deg_base = len(ELEMENTS) + 1
        feats[i, deg_base + min(degree[i], MAX_DEGREE)] = 1.0
        val_base = deg_base + MAX_DEGREE + 1
        feats[i, val_base + min(int(valence[i]), MAX_VALENCE)] = 1.0
        feats[i, -1] = 1.0 if atom.aromatic else 0.0
    return replace(graph, node_features=feats)


def normalize_adjacency(graph: MolecularGraph) -> MolecularGraph:
    """Self-loop-augmented symmetric normalization of the adjacency matrix."""
    n = graph.atom_count
    a_tilde = np.eye(n, dtype=np.float64)
    for i, j in graph.edges:
        a_tilde[i, j] = 1.0
        a_tilde[j, i] = 1.0
    inv_sqrt_deg = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    norm = a_tilde * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]
    return replace(graph, norm_adjacency=norm)


def smiles_to_graph(text: str) -> MolecularGraph:
    """tokenize -> parse -> featurize -> normalize_adjacency."""
    return normalize_adjacency(featurize(parse(tokenize(text))))


def graph_to_text(graph: MolecularGraph) -> str:
    """Debug serialization: N and C, then feature rows, then edge list."""
    feats = graph.node_features
    if feats is None:
        raise ValueError("graph has no node features; call featurize() first")
    lines = [f"{graph.atom_count} {feats.shape[1]}"]
    for row in feats:
        lines.append(" ".join(format(v, "g") for v in row))
    lines.append("edges:")
    for i, j in graph.edges:
        lines.append(f"{i} {j}")
    return "\n".join(lines) + "\n"
