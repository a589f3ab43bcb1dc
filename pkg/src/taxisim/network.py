"""Road network construction: endpoint snapping, twin directed roads,
major-road marking, and source/sink point placement.

Every input polyline that survives filtering becomes a pair of directed
twin roads (two lanes each). Intersections are inferred by clustering
polyline endpoints that lie within a snap tolerance of each other; the
intersection sits at the average of the merged endpoints.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import ProjectedPoint, polyline_length

DEFAULT_SPEED_LIMIT_KMH = 60.0
DEFAULT_SNAP_TOLERANCE_KM = 0.005
MAJOR_ROAD_MIN_LENGTH_KM = 0.2

# spawn/sink positions avoid the first and last 10% of a road
POINT_FRACTION_MIN = 0.1
POINT_FRACTION_MAX = 0.9


@dataclass
class Intersection:
    id: int
    position: ProjectedPoint
    in_roads: list[int] = field(default_factory=list)
    out_roads: list[int] = field(default_factory=list)


@dataclass
class Road:
    id: int
    from_node: int
    to_node: int
    twin: int
    polyline: list[ProjectedPoint]
    length: float  # km
    lane_count: int = 2
    speed_limit: float = DEFAULT_SPEED_LIMIT_KMH  # km/h, mutable only by a crash
    is_major: bool = False
    source_points: list[float] = field(default_factory=list)  # fractions of length
    sink_points: list[float] = field(default_factory=list)


class RoadNetwork:
    """Directed graph of intersections and twin-paired two-lane roads."""

    def __init__(self):
        self.intersections: dict[int, Intersection] = {}
        self.roads: dict[int, Road] = {}

    def add_intersection(self, position: ProjectedPoint) -> Intersection:
        node = Intersection(id=len(self.intersections), position=position)
        self.intersections[node.id] = node
        return node

    def add_twin_roads(
        self,
        from_node: int,
        to_node: int,
        polyline: list[ProjectedPoint],
        speed_limit: float = DEFAULT_SPEED_LIMIT_KMH,
    ) -> tuple[Road, Road]:
        rid = len(self.roads)
        length = polyline_length(polyline)
        fwd = Road(rid, from_node, to_node, rid + 1, list(polyline), length, speed_limit=speed_limit)
        rev = Road(rid + 1, to_node, from_node, rid, list(reversed(polyline)), length, speed_limit=speed_limit)
        self.roads[fwd.id] = fwd
        self.roads[rev.id] = rev
        self.intersections[from_node].out_roads.append(fwd.id)
        self.intersections[from_node].in_roads.append(rev.id)
        self.intersections[to_node].out_roads.append(rev.id)
        self.intersections[to_node].in_roads.append(fwd.id)
        return fwd, rev

    def sort_adjacency(self) -> None:
        for node in self.intersections.values():
            node.in_roads.sort()
            node.out_roads.sort()

    def twin_of(self, road_id: int) -> Road:
        return self.roads[self.roads[road_id].twin]

    def source_point_list(self) -> list[tuple[int, float]]:
        """All (road_id, fraction) spawn positions, in deterministic order."""
        out = []
        for rid in sorted(self.roads):
            for frac in self.roads[rid].source_points:
                out.append((rid, frac))
        return out

    def sink_point_list(self) -> list[tuple[int, float]]:
        out = []
        for rid in sorted(self.roads):
            for frac in self.roads[rid].sink_points:
                out.append((rid, frac))
        return out

    def bounding_box(self) -> tuple[float, float, float, float]:
        xs = [p.x for n in self.intersections.values() for p in [n.position]]
        ys = [p.y for n in self.intersections.values() for p in [n.position]]
        for road in self.roads.values():
            xs.extend(p.x for p in road.polyline)
            ys.extend(p.y for p in road.polyline)
        if not xs:
            return (0.0, 0.0, 0.0, 0.0)
        return (min(xs), min(ys), max(xs), max(ys))


def _cluster_endpoints(
    endpoints: list[ProjectedPoint], tolerance: float
) -> tuple[list[int], list[ProjectedPoint]]:
    """Union endpoints within tolerance of each other (transitively).

    Returns (cluster index per endpoint, cluster centers). Cluster ids are
    numbered by first appearance so the result is order-deterministic.
    A coarse spatial hash keeps the pair search near-linear.
    """
    n = len(endpoints)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    cell = tolerance if tolerance > 0 else 1e-9
    grid: dict[tuple[int, int], list[int]] = {}
    for i, p in enumerate(endpoints):
        grid.setdefault((math.floor(p.x / cell), math.floor(p.y / cell)), []).append(i)
    for i, p in enumerate(endpoints):
        cx, cy = math.floor(p.x / cell), math.floor(p.y / cell)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in grid.get((cx + dx, cy + dy), ()):
                    if j <= i:
                        continue
                    q = endpoints[j]
                    if math.hypot(p.x - q.x, p.y - q.y) <= tolerance:
                        union(i, j)

    cluster_ids: list[int] = []
    root_to_cluster: dict[int, int] = {}
    members: list[list[int]] = []
    for i in range(n):
        r = find(i)
        if r not in root_to_cluster:
            root_to_cluster[r] = len(members)
            members.append([])
        c = root_to_cluster[r]
        cluster_ids.append(c)
        members[c].append(i)
    centers = [
        ProjectedPoint(
            sum(endpoints[i].x for i in m) / len(m),
            sum(endpoints[i].y for i in m) / len(m),
        )
        for m in members
    ]
    return cluster_ids, centers


def build_network(
    road_records: list[list[ProjectedPoint]],
    snap_tolerance: float = DEFAULT_SNAP_TOLERANCE_KM,
    speed_limit: float = DEFAULT_SPEED_LIMIT_KMH,
) -> RoadNetwork:
    """Snap record endpoints into intersections and emit twin road pairs.

    Records whose two endpoints fall into the same cluster do not connect
    two intersections and are dropped. Intersections that end up with no
    roads are not created. An empty result is a valid (empty) network.
    """
    records = [r for r in road_records if len(r) >= 2]
    endpoints: list[ProjectedPoint] = []
    for rec in records:
        endpoints.append(rec[0])
        endpoints.append(rec[-1])
    cluster_ids, centers = _cluster_endpoints(endpoints, snap_tolerance)

    kept: list[tuple[list[ProjectedPoint], int, int]] = []
    used_clusters: list[int] = []
    seen = set()
    for k, rec in enumerate(records):
        c_from = cluster_ids[2 * k]
        c_to = cluster_ids[2 * k + 1]
        if c_from == c_to:
            continue  # both ends snap together: not a connection
        kept.append((rec, c_from, c_to))
        for c in (c_from, c_to):
            if c not in seen:
                seen.add(c)
                used_clusters.append(c)

    net = RoadNetwork()
    node_of: dict[int, int] = {}
    for c in used_clusters:
        node_of[c] = net.add_intersection(centers[c]).id
    for rec, c_from, c_to in kept:
        # pin endpoints to the snapped intersection centers
        poly = [centers[c_from]] + [ProjectedPoint(p.x, p.y) for p in rec[1:-1]] + [centers[c_to]]
        net.add_twin_roads(node_of[c_from], node_of[c_to], poly, speed_limit=speed_limit)
    net.sort_adjacency()
    return net


def mark_major_roads(network: RoadNetwork) -> RoadNetwork:
    """Mark long roads major, then propagate to roads joining two major roads.

    A road longer than 0.2 km is major. Then, to fixpoint: a road whose two
    endpoint intersections each touch some other major road (not itself or
    its twin) becomes major. Twins always share the flag.
    """
    roads = network.roads
    for road in roads.values():
        if road.length > MAJOR_ROAD_MIN_LENGTH_KM:
            road.is_major = True
    changed = True
    while changed:
        changed = False
        for road in roads.values():
            if road.is_major:
                continue
            if _touches_other_major(network, road.from_node, road) and _touches_other_major(
                network, road.to_node, road
            ):
                road.is_major = True
                roads[road.twin].is_major = True
                changed = True
    return network


def _touches_other_major(network: RoadNetwork, node_id: int, road: Road) -> bool:
    node = network.intersections[node_id]
    for rid in node.in_roads + node.out_roads:
        if rid == road.id or rid == road.twin:
            continue
        if network.roads[rid].is_major:
            return True
    return False


def place_source_sink_points(network: RoadNetwork, rng: random.Random) -> RoadNetwork:
    """Assign spawn (source) and destination (sink) positions to roads.

    Dead-end intersections (exactly one in-road and one out-road) get a
    source pinned at fraction 0.1 of the out-road and a sink at 0.9 of the
    in-road. Then a breadth-first search over the undirected road pairs,
    started at an rng-chosen intersection, finds the edges that close an
    enclosed area (the non-tree edges); each closing pair gets one source
    and one sink per direction at independent uniform fractions in
    [0.1, 0.9]. A forest therefore yields only the dead-end points.
    """
    for node in network.intersections.values():
        if len(node.in_roads) == 1 and len(node.out_roads) == 1:
            out_road = network.roads[node.out_roads[0]]
            in_road = network.roads[node.in_roads[0]]
            out_road.source_points.append(POINT_FRACTION_MIN)
            in_road.sink_points.append(POINT_FRACTION_MAX)

    node_ids = sorted(network.intersections)
    if not node_ids:
        return network
    start = node_ids[rng.randrange(len(node_ids))]

    visited: set[int] = set()
    tree_edges: set[int] = set()
    closing_edges: list[int] = []
    closed_seen: set[int] = set()

    def bfs(root: int) -> None:
        visited.add(root)
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for rid in network.intersections[u].out_roads:  # ascending road id
                road = network.roads[rid]
                key = min(rid, road.twin)
                v = road.to_node
                if v not in visited:
                    visited.add(v)
                    tree_edges.add(key)
                    queue.append(v)
                elif key not in tree_edges and key not in closed_seen:
                    closed_seen.add(key)
                    closing_edges.append(key)

    bfs(start)
    for nid in node_ids:  # disconnected components, if any
        if nid not in visited:
            bfs(nid)

    for key in closing_edges:
        for rid in (key, network.roads[key].twin):
            road = network.roads[rid]
            road.source_points.append(rng.uniform(POINT_FRACTION_MIN, POINT_FRACTION_MAX))
            road.sink_points.append(rng.uniform(POINT_FRACTION_MIN, POINT_FRACTION_MAX))
    return network


def generate_synthetic_grid(
    rows: int,
    cols: int,
    cell_km: float,
    rng: random.Random,
    speed_limit: float = DEFAULT_SPEED_LIMIT_KMH,
) -> RoadNetwork:
    """Rectangular rows x cols grid with majors marked and points placed."""
    if rows < 2 or cols < 2:
        raise ConfigError(f"grid needs rows, cols >= 2 (got {rows}x{cols})")
    if cell_km <= 0:
        raise ConfigError(f"grid cell size must be positive (got {cell_km})")
    net = RoadNetwork()
    for i in range(rows):
        for j in range(cols):
            net.add_intersection(ProjectedPoint(j * cell_km, i * cell_km))
    for i in range(rows):
        for j in range(cols):
            node = i * cols + j
            if j + 1 < cols:
                right = i * cols + (j + 1)
                net.add_twin_roads(
                    node,
                    right,
                    [net.intersections[node].position, net.intersections[right].position],
                    speed_limit=speed_limit,
                )
            if i + 1 < rows:
                down = (i + 1) * cols + j
                net.add_twin_roads(
                    node,
                    down,
                    [net.intersections[node].position, net.intersections[down].position],
                    speed_limit=speed_limit,
                )
    net.sort_adjacency()
    mark_major_roads(net)
    place_source_sink_points(net, rng)
    return net
