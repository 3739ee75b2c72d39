"""Binary tree container shared by both tree algorithms.

Nodes hold the training-member indices, a split rule when internal, and
algorithm-specific payload (a survival curve for conditional-inference
leaves, rate statistics for relative-risk nodes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CovariateSchema
from .errors import RoutingError, SchemaError
from .estimators import CumulativeHazard, SurvivalCurve

TREE_FORMAT = "ltrc-tree"
TREE_VERSION = 1


@dataclass(frozen=True)
class SplitRule:
    """``x <= cut`` goes left for ordered covariates; nominal splits list both sides.

    Nominal levels absent from both ``left_levels`` and ``right_levels`` were
    never seen at the node during fitting and cannot be routed.
    """

    var: int
    cut: float | None = None
    left_levels: frozenset = frozenset()
    right_levels: frozenset = frozenset()

    @property
    def nominal(self) -> bool:
        return self.cut is None

    def goes_left(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.nominal:
            return x <= self.cut
        lv = np.fromiter(self.left_levels, float, len(self.left_levels))
        rv = np.fromiter(self.right_levels, float, len(self.right_levels))
        left = np.isin(x, lv)
        unseen = ~left & ~np.isin(x, rv)
        if np.any(unseen):
            raise RoutingError(np.flatnonzero(unseen))
        return left

    def describe(self, schema: CovariateSchema, side="left") -> str:
        col = schema.columns[self.var]
        if self.nominal:
            levels = self.left_levels if side == "left" else self.right_levels
            labels = ", ".join(col.levels[int(v)] for v in sorted(levels))
            return f"{col.name} in {{{labels}}}"
        op = "<=" if side == "left" else ">"
        if col.kind == "ordinal":
            k = int(np.floor(self.cut))
            return f"{col.name} {op} {col.levels[k]}"
        return f"{col.name} {op} {self.cut:.6g}"

    def to_dict(self) -> dict:
        if self.nominal:
            return {"var": self.var, "left_levels": sorted(int(v) for v in self.left_levels),
                    "right_levels": sorted(int(v) for v in self.right_levels)}
        return {"var": self.var, "cut": self.cut}

    @classmethod
    def from_dict(cls, doc) -> "SplitRule":
        if "cut" in doc:
            return cls(int(doc["var"]), float(doc["cut"]))
        return cls(int(doc["var"]), None, frozenset(float(v) for v in doc["left_levels"]),
                   frozenset(float(v) for v in doc["right_levels"]))


@dataclass(eq=False)
class Node:
    id: int
    depth: int
    members: np.ndarray
    events: int
    rule: SplitRule | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    # conditional-inference payload
    p_value: float | None = None
    statistic: float | None = None
    curve: SurvivalCurve | None = None
    # relative-risk payload
    exposure: float | None = None
    theta: float | None = None
    deviance: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return self.rule is None

    @property
    def n(self) -> int:
        if self.members.size == 0 and "n" in self.extra:
            return int(self.extra["n"])
        return int(self.members.shape[0])

    def walk(self):
        """Pre-order traversal."""
        yield self
        if not self.is_leaf:
            yield from self.left.walk()
            yield from self.right.walk()

    def leaves(self):
        return [nd for nd in self.walk() if nd.is_leaf]

    def make_leaf(self):
        self.rule = None
        self.left = None
        self.right = None


class Tree:
    """Fitted tree; ``algorithm`` is ``"ltrcit"`` or ``"ltrcart"``."""

    def __init__(self, algorithm: str, schema: CovariateSchema, root: Node,
                 controls: dict | None = None, baseline: CumulativeHazard | None = None,
                 member_ids=None, prune_table=None):
        self.algorithm = algorithm
        self.schema = schema
        self.root = root
        self.controls = dict(controls or {})
        self.baseline = baseline
        self.member_ids = None if member_ids is None else tuple(member_ids)
        self.prune_table = prune_table

    def renumber(self):
        for k, nd in enumerate(self.root.walk(), start=1):
            nd.id = k
        return self

    def nodes(self):
        return list(self.root.walk())

    def leaves(self):
        return self.root.leaves()

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def split_variables(self) -> set[str]:
        return {self.schema.columns[nd.rule.var].name for nd in self.root.walk() if not nd.is_leaf}

    def node_by_id(self, node_id):
        for nd in self.root.walk():
            if nd.id == node_id:
                return nd
        raise KeyError(node_id)

    # ------------------------------------------------------------- routing
    def apply(self, X) -> np.ndarray:
        """Terminal node id for each row of ``X``; raises RoutingError listing bad rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0], dtype=np.int64)
        bad: list[int] = []

        def descend(node, idx):
            if idx.size == 0:
                return
            if node.is_leaf:
                out[idx] = node.id
                return
            try:
                go = node.rule.goes_left(X[idx, node.rule.var])
            except RoutingError as exc:
                rows = idx[exc.args[0]]
                bad.extend(rows.tolist())
                keep = np.setdiff1d(np.arange(idx.size), exc.args[0])
                idx = idx[keep]
                go = node.rule.goes_left(X[idx, node.rule.var])
            descend(node.left, idx[go])
            descend(node.right, idx[~go])

        descend(self.root, np.arange(X.shape[0]))
        if bad:
            raise RoutingError(sorted(bad))
        return out

    def route(self, row) -> Node:
        leaf_id = int(self.apply(np.asarray(row, dtype=float).reshape(1, -1))[0])
        return self.node_by_id(leaf_id)

    # ------------------------------------------------------- serialization
    def _node_dict(self, nd: Node) -> dict:
        d = {"id": nd.id, "depth": nd.depth, "n": nd.n, "events": nd.events}
        for key in ("p_value", "statistic", "exposure", "theta", "deviance"):
            val = getattr(nd, key)
            if val is not None:
                d[key] = float(val)
        if nd.is_leaf:
            if nd.curve is not None:
                d["curve"] = nd.curve.to_dict()
            if self.member_ids is not None:
                d["members"] = [self.member_ids[i] for i in nd.members]
        else:
            d["rule"] = nd.rule.to_dict()
            d["left"] = self._node_dict(nd.left)
            d["right"] = self._node_dict(nd.right)
        return d

    def to_dict(self) -> dict:
        doc = {"format": TREE_FORMAT, "version": TREE_VERSION, "algorithm": self.algorithm,
               "schema": self.schema.to_dict(), "controls": self.controls,
               "root": self._node_dict(self.root)}
        if self.baseline is not None:
            doc["baseline"] = self.baseline.to_dict()
        if self.prune_table is not None:
            doc["prune_table"] = self.prune_table
        return doc

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, doc) -> "Tree":
        if doc.get("format") != TREE_FORMAT or doc.get("version") != TREE_VERSION:
            raise SchemaError("not a version-1 ltrc-tree document")
        schema = CovariateSchema.from_dict(doc["schema"])
        ids: list = []  # training ids, renumbered in leaf order

        def build(d):
            nd = Node(d["id"], d["depth"], np.arange(0), d["events"],
                      p_value=d.get("p_value"), statistic=d.get("statistic"),
                      exposure=d.get("exposure"), theta=d.get("theta"), deviance=d.get("deviance"))
            nd.extra["n"] = d["n"]
            if "curve" in d:
                nd.curve = SurvivalCurve.from_dict(d["curve"])
            if "rule" in d:
                nd.rule = SplitRule.from_dict(d["rule"])
                nd.left = build(d["left"])
                nd.right = build(d["right"])
                nd.members = np.concatenate([nd.left.members, nd.right.members])
            elif "members" in d:
                nd.members = np.arange(len(ids), len(ids) + len(d["members"]))
                ids.extend(d["members"])
            return nd

        root = build(doc["root"])
        baseline = CumulativeHazard.from_dict(doc["baseline"]) if "baseline" in doc else None
        return cls(doc["algorithm"], schema, root, doc.get("controls"), baseline,
                   member_ids=ids if ids else None, prune_table=doc.get("prune_table"))

    @classmethod
    def from_json(cls, path) -> "Tree":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def _leaf_label(self, nd: Node) -> str:
        n = nd.n
        if nd.theta is not None:
            return f"node {nd.id}\\nn={n} events={nd.events}\\ntheta={nd.theta:.4g}"
        label = f"node {nd.id}\\nn={n} events={nd.events}"
        if nd.curve is not None and nd.curve.values.size:
            below = np.flatnonzero(nd.curve.values <= 0.5)
            if below.size:
                label += f"\\nmedian={nd.curve.knots[below[0]]:.4g}"
        return label

    def to_dot(self) -> str:
        lines = ["digraph tree {", '  node [shape=box, fontname="Helvetica"];']
        for nd in self.root.walk():
            if nd.is_leaf:
                lines.append(f'  n{nd.id} [label="{self._leaf_label(nd)}", style=rounded];')
            else:
                col = self.schema.columns[nd.rule.var].name
                extra = f"\\np={nd.p_value:.3g}" if nd.p_value is not None else ""
                lines.append(f'  n{nd.id} [label="node {nd.id}: {col}{extra}"];')
                for child, side in ((nd.left, "left"), (nd.right, "right")):
                    text = nd.rule.describe(self.schema, side).replace('"', "'")
                    lines.append(f'  n{nd.id} -> n{child.id} [label="{text}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        out = [f"{self.algorithm} tree: {self.n_leaves} terminal node(s)"]

        def rec(nd, indent):
            pad = "  " * indent
            if nd.is_leaf:
                out.append(pad + "* " + self._leaf_label(nd).replace("\\n", ", "))
                return
            for child, side in ((nd.left, "left"), (nd.right, "right")):
                out.append(f"{pad}[{nd.id}] {nd.rule.describe(self.schema, side)}")
                rec(child, indent + 1)

        rec(self.root, 0)
        return "\n".join(out) + "\n"

    def __repr__(self):
        return f"Tree({self.algorithm!r}, leaves={self.n_leaves}, splits={sorted(self.split_variables())})"
