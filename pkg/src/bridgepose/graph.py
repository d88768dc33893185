"""Model graph: nodes on a (level, column) grid plus typed edges.

The network is laid out on a grid.  Level 1 is the full (half-input)
resolution row and is populated at every column; deeper levels exist only in
"sweep" columns.  Each column plays one role:

* ``plain``  - a single level-1 node (entry, junction and exit columns),
* ``down``   - a top-to-bottom downsampling sweep (levels 1..L),
* ``up``     - a bottom-to-top upsampling sweep (levels 1..L), always
  immediately after its paired down column.

The default 7-column layout is ``[plain, down, up, plain, down, up, plain]``:
two hourglass-shaped pyramids joined by a junction column.  Edge kinds:

* ``forward``    - same level, adjacent columns (identity wiring),
* ``downsample`` - level l-1 -> l inside a down column (stride-2 conv),
* ``upsample``   - level l+1 -> l inside an up column (nearest x2 + 1x1 conv),
* ``bridge``     - same level, from an up column to the next pyramid's down
  column, plus one bridge from the junction column to the final column.

Nodes with two inputs fuse them: columns of the first pyramid concatenate
(1x1 conv back to the node width), every later fusion adds.  The first input
of a fusion is the sweep path (downsample/upsample/forward), the second is
the history path (skip or bridge).
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import ModelConfig
from .errors import GraphError

PLAIN, DOWN, UP = "plain", "down", "up"


@dataclass(frozen=True, order=True)
class NodeId:
    level: int
    column: int

    def __str__(self):
        return f"n{self.level}_{self.column}"


@dataclass(frozen=True, order=True)
class Edge:
    src: NodeId
    dst: NodeId
    kind: str  # forward | downsample | upsample | bridge

    def __str__(self):
        return f"{self.kind}_{self.src.level}_{self.src.column}__{self.dst.level}_{self.dst.column}"


def column_roles(levels: int, columns: int) -> tuple[str, ...]:
    """Assign a role to every column.

    With fewer than two columns, or a single level, the grid degenerates to a
    chain of plain nodes.  Otherwise down/up pairs are placed and any extra
    plain columns are distributed junction-first, then entry, then exit.
    """
    if levels == 1 or columns < 2:
        return (PLAIN,) * columns
    n_pairs = 2 if columns >= 4 else 1
    extras = columns - 2 * n_pairs
    counts = [0, 0, 0]  # junction, entry, exit
    for i in range(extras):
        counts[i % 3] += 1
    if n_pairs == 1:
        # a single pyramid: no junction slot, extras trail it
        return (DOWN, UP) + (PLAIN,) * extras
    junction, entry, exit_ = counts
    return (
        (PLAIN,) * entry
        + (DOWN, UP)
        + (PLAIN,) * junction
        + (DOWN, UP)
        + (PLAIN,) * exit_
    )


def default_hsa_placements(config: ModelConfig) -> tuple[tuple[int, int], ...]:
    """Deepest node of every down column plus the last two level-1 nodes."""
    roles = column_roles(config.levels, config.columns)
    cands: list[tuple[int, int]] = []
    for col, role in enumerate(roles, start=1):
        if role == DOWN:
            cands.append((config.levels, col))
    for col in (config.columns - 1, config.columns):
        if col >= 1:
            cands.append((1, col))
    seen, out = set(), []
    for c in cands:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return tuple(out)


_IN_ORDER = {"downsample": 0, "upsample": 0, "forward": 1, "bridge": 2}


class ModelGraph:
    """Validated node/edge structure with fusion and attention assignments."""

    def __init__(self, config: ModelConfig, nodes, edges, roles):
        self.config = config
        self.nodes: tuple[NodeId, ...] = tuple(sorted(nodes))
        self.edges: tuple[Edge, ...] = tuple(sorted(edges))
        self.roles: tuple[str, ...] = tuple(roles)
        node_set = set(self.nodes)

        incoming: dict[NodeId, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            if e.src not in node_set or e.dst not in node_set:
                raise GraphError(f"edge {e} references a missing node")
            if e.kind not in _IN_ORDER:
                raise GraphError(f"edge {e} has unknown kind {e.kind!r}")
            if e.kind in ("forward", "bridge") and e.src.level != e.dst.level:
                raise GraphError(f"edge {e} must stay on one level")
            incoming[e.dst].append(e)
        for n, ins in incoming.items():
            ins.sort(key=lambda e: (_IN_ORDER[e.kind], e.src))
            if len(ins) > 2:
                raise GraphError(f"node {n} has {len(ins)} inputs; fusion is binary")
        self._incoming = {n: tuple(ins) for n, ins in incoming.items()}

        for e in self.edges:
            if e.kind == "bridge":
                if config.spatial(e.src.level) != config.spatial(e.dst.level):
                    raise GraphError(
                        f"bridge {e} joins mismatched spatial sizes "
                        f"{config.spatial(e.src.level)} vs {config.spatial(e.dst.level)}"
                    )

        up_cols = [c for c, r in enumerate(self.roles, start=1) if r == UP]
        self._first_up = up_cols[0] if up_cols else 0

        placements = config.hsa_placements
        if placements is None:
            placements = default_hsa_placements(config)
        hsa_nodes = tuple(NodeId(lvl, col) for lvl, col in placements)
        if config.hsa_enabled:
            missing = [n for n in hsa_nodes if n not in node_set]
            if missing:
                raise GraphError(
                    "hsa placement on missing node(s): "
                    + ", ".join(str(n) for n in missing)
                )
            self.hsa_nodes: tuple[NodeId, ...] = hsa_nodes
        else:
            self.hsa_nodes = ()

        self.topo_order: tuple[NodeId, ...] = self._topological_order()

    def _topological_order(self) -> tuple[NodeId, ...]:
        order = []
        by_col: dict[int, list[NodeId]] = {}
        for n in self.nodes:
            by_col.setdefault(n.column, []).append(n)
        for col in sorted(by_col):
            col_nodes = sorted(by_col[col], key=lambda n: n.level)
            role = self.roles[col - 1] if col - 1 < len(self.roles) else PLAIN
            if role == UP:
                col_nodes = col_nodes[::-1]
            order.extend(col_nodes)
        seen = set()
        for n in order:
            for e in self._incoming[n]:
                if e.src not in seen:
                    raise GraphError(f"edge {e} violates evaluation order")
            seen.add(n)
        return tuple(order)

    def in_edges(self, node: NodeId) -> tuple[Edge, ...]:
        return self._incoming[node]

    def fusion_mode(self, node: NodeId) -> str | None:
        """'concat' | 'add' for two-input nodes, None otherwise."""
        if len(self._incoming[node]) != 2:
            return None
        return "concat" if node.column <= self._first_up else "add"

    @property
    def bridge_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.kind == "bridge")

    @property
    def entry(self) -> NodeId:
        return NodeId(1, 1)

    @property
    def output(self) -> NodeId:
        return NodeId(1, self.config.columns)

    def width(self, level: int) -> int:
        return self.config.width(level)

    def spatial(self, level: int) -> int:
        return self.config.spatial(level)


def build_graph(config: ModelConfig) -> ModelGraph:
    """Construct the grid, edges and fusion layout for a config."""
    config.validate()
    levels, columns = config.levels, config.columns
    roles = column_roles(levels, columns)

    nodes = [NodeId(1, col) for col in range(1, columns + 1)]
    for col, role in enumerate(roles, start=1):
        if role in (DOWN, UP):
            nodes.extend(NodeId(lvl, col) for lvl in range(2, levels + 1))

    edges = []
    for col in range(2, columns + 1):
        edges.append(Edge(NodeId(1, col - 1), NodeId(1, col), "forward"))
    for col, role in enumerate(roles, start=1):
        if role == DOWN:
            for lvl in range(2, levels + 1):
                edges.append(Edge(NodeId(lvl - 1, col), NodeId(lvl, col), "downsample"))
        elif role == UP:
            paired_down = col - 1
            edges.append(Edge(NodeId(levels, paired_down), NodeId(levels, col), "forward"))
            for lvl in range(1, levels):
                edges.append(Edge(NodeId(lvl + 1, col), NodeId(lvl, col), "upsample"))
                if lvl >= 2:
                    edges.append(Edge(NodeId(lvl, paired_down), NodeId(lvl, col), "forward"))

    if config.bridges_enabled:
        down_cols = [c for c, r in enumerate(roles, start=1) if r == DOWN]
        up_cols = [c for c, r in enumerate(roles, start=1) if r == UP]
        for i in range(1, len(down_cols)):
            src_col, dst_col = up_cols[i - 1], down_cols[i]
            for lvl in range(2, levels + 1):
                edges.append(Edge(NodeId(lvl, src_col), NodeId(lvl, dst_col), "bridge"))
        if down_cols and roles[-1] == PLAIN:
            mid_candidates = [
                c for c in range(up_cols[0] + 1, down_cols[-1])
                if roles[c - 1] == PLAIN
            ]
            if mid_candidates:
                edges.append(Edge(NodeId(1, mid_candidates[0]), NodeId(1, columns), "bridge"))

    return ModelGraph(config, nodes, edges, roles)


def empty_graph(config: ModelConfig | None = None) -> ModelGraph:
    """A graph with no nodes at all (complexity of nothing is zero)."""
    if config is None:
        config = ModelConfig(hsa_enabled=False)
    return ModelGraph(config, (), (), ())
