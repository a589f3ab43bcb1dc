"""Per-road travel-time tracking and quickest-route search.

Each vehicle occupying a road owns one open record of its progress; closed
records stay relevant for a rolling window (5 minutes by default). A road's
average traffic time is the mean of its records' full-road-equivalent
times, floored by the free-flow time length/limit*3600. Routing runs
Dijkstra over those averages, with partial first and last edges costed by
their remaining fraction.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .errors import NoRouteError
from .network import RoadNetwork

log = logging.getLogger(__name__)

TRAFFIC_WINDOW_S = 300.0

# Fidelity constant for the clock-wraparound branch of the open-record
# estimate. The simulation clock is monotonic, so the branch never runs;
# the constant exists so the published arithmetic is representable.
GLOBAL_TIME_LIMIT_S = 86400.0


class RoadPosition(NamedTuple):
    road_id: int
    fraction: float  # of road length, in [0, 1]


@dataclass
class TrafficTimeRecord:
    vehicle_id: int
    road_id: int
    starting_position: float  # fraction in [0, 1]
    current_position: float
    starting_time: float  # s
    ending_position: float = 0.0
    ending_time: float | None = None  # None while the record is open

    @property
    def is_open(self) -> bool:
        return self.ending_time is None


def get_traffic_time(
    record: TrafficTimeRecord,
    now: float,
    global_time_limit: float = GLOBAL_TIME_LIMIT_S,
) -> float | None:
    """Full-road-equivalent traversal time of one record, or None.

    Closed records divide elapsed time by covered fraction; a zero covered
    fraction carries no information and yields None. Open records use time
    since entry; a car that entered but has not moved yet is extrapolated
    by clamping the position delta into [0.1, 0.5], which bounds the
    estimate between 2x and 10x the elapsed time.
    """
    if record.ending_time is not None:
        if record.ending_position == record.starting_position:
            return None
        return (record.ending_time - record.starting_time) / (
            record.ending_position - record.starting_position
        )
    position_diff = record.current_position - record.starting_position
    if record.starting_time <= now:
        time_diff = now - record.starting_time
    else:
        time_diff = global_time_limit - (record.starting_time - now)
    if position_diff == 0:
        if time_diff == 0:
            return None  # just entered; nothing to estimate
        position_diff = min(0.5, max(0.1, 1.0 / time_diff))
    return time_diff / position_diff


def min_traffic_time(length: float, speed_limit: float) -> float:
    """Free-flow traversal time of a whole road, s."""
    return length / speed_limit * 3600.0


@dataclass
class RoadTrafficStats:
    road_id: int
    records: list[TrafficTimeRecord] = field(default_factory=list)

    def prune(self, now: float, window: float = TRAFFIC_WINDOW_S) -> None:
        """Drop closed records that ended more than one window ago."""
        cutoff = now - window
        self.records = [
            r for r in self.records if r.ending_time is None or r.ending_time >= cutoff
        ]


class TrafficTimeStore:
    """All roads' records plus the open-record index per vehicle.

    Single-writer: only the simulation tick mutates it. Averages prune the
    queried road first, so the rolling window holds regardless of when the
    engine last ran a full prune.
    """

    def __init__(self, window: float = TRAFFIC_WINDOW_S):
        self.window = window
        self.by_road: dict[int, RoadTrafficStats] = {}
        self._open_by_vehicle: dict[int, TrafficTimeRecord] = {}

    def stats_for(self, road_id: int) -> RoadTrafficStats:
        stats = self.by_road.get(road_id)
        if stats is None:
            stats = RoadTrafficStats(road_id)
            self.by_road[road_id] = stats
        return stats

    def open_record(
        self, vehicle_id: int, road_id: int, fraction: float, now: float
    ) -> TrafficTimeRecord:
        existing = self._open_by_vehicle.get(vehicle_id)
        assert existing is None, (
            f"vehicle {vehicle_id} already has an open record on road {existing and existing.road_id}"
        )
        if existing is not None:  # release mode: keep going, but say so
            log.warning("duplicate open record for vehicle %d; closing the stale one", vehicle_id)
            self.close_record(vehicle_id, existing.road_id, existing.current_position, now)
        record = TrafficTimeRecord(
            vehicle_id=vehicle_id,
            road_id=road_id,
            starting_position=fraction,
            current_position=fraction,
            starting_time=now,
        )
        self.stats_for(road_id).records.append(record)
        self._open_by_vehicle[vehicle_id] = record
        return record

    def update_record(self, vehicle_id: int, fraction: float) -> None:
        record = self._open_by_vehicle.get(vehicle_id)
        if record is not None:
            record.current_position = fraction

    def close_record(self, vehicle_id: int, road_id: int, fraction: float, now: float) -> None:
        record = self._open_by_vehicle.pop(vehicle_id, None)
        if record is None or record.road_id != road_id:
            assert record is None, f"open record road mismatch for vehicle {vehicle_id}"
            return
        record.current_position = fraction
        record.ending_position = fraction
        record.ending_time = now

    def prune(self, now: float) -> None:
        for stats in self.by_road.values():
            stats.prune(now, self.window)

    def average_traffic_time(self, road, now: float) -> float:
        """Rolling average traversal time for a road, floored at free flow."""
        floor = min_traffic_time(road.length, road.speed_limit)
        stats = self.by_road.get(road.id)
        if stats is None:
            return floor
        stats.prune(now, self.window)
        total = 0.0
        count = 0
        for record in stats.records:
            t = get_traffic_time(record, now)
            if t is not None:
                total += t
                count += 1
        if count == 0:
            return floor
        return max(total / count, floor)


@dataclass(frozen=True)
class Route:
    """Ordered road ids from an origin position to a destination position."""

    roads: tuple[int, ...]
    cost: float  # estimated seconds at computation time


def shortest_route(
    network: RoadNetwork,
    weight: Callable[[int], float],
    origin: RoadPosition,
    dest: RoadPosition,
) -> Route:
    """Minimum average-traffic-time route between two on-road positions.

    The origin road contributes (1 - origin fraction) of its weight, the
    destination road contributes its fraction; a same-road destination
    ahead of the origin costs the spanned fraction directly. Ties break
    toward smaller intersection ids, then smaller road ids, by expansion
    order.
    """
    weights = {rid: weight(rid) for rid in network.roads}  # consistent snapshot
    origin_road = network.roads[origin.road_id]
    dest_road = network.roads[dest.road_id]

    if origin.road_id == dest.road_id and dest.fraction >= origin.fraction:
        return Route(
            roads=(origin.road_id,),
            cost=(dest.fraction - origin.fraction) * weights[origin.road_id],
        )

    start_node = origin_road.to_node
    goal_node = dest_road.from_node
    start_cost = (1.0 - origin.fraction) * weights[origin.road_id]

    dist: dict[int, float] = {start_node: start_cost}
    prev_road: dict[int, int] = {}
    heap: list[tuple[float, int]] = [(start_cost, start_node)]
    settled: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == goal_node:
            break
        for rid in network.intersections[u].out_roads:  # ascending road id
            road = network.roads[rid]
            nd = d + weights[rid]
            v = road.to_node
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev_road[v] = rid
                heapq.heappush(heap, (nd, v))

    if goal_node not in settled:
        raise NoRouteError(
            f"no route from road {origin.road_id}@{origin.fraction:.3f} "
            f"to road {dest.road_id}@{dest.fraction:.3f}"
        )

    middle: list[int] = []
    node = goal_node
    while node != start_node:
        rid = prev_road[node]
        middle.append(rid)
        node = network.roads[rid].from_node
    middle.reverse()

    roads = (origin.road_id, *middle, dest.road_id)
    cost = dist[goal_node] + dest.fraction * weights[dest.road_id]
    return Route(roads=roads, cost=cost)
