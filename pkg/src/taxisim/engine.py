"""Discrete-time traffic engine: 0.3 s ticks over one mutable world.

Each step runs fixed sub-phases so that identical seeds give identical
trajectories: light switching, per-vehicle sensing/lane-change/motion in
ascending vehicle id, road transitions, arrivals, Poisson spawning, and
traffic-record upkeep. One seeded RNG stream drives every random draw.

Vehicles are points; per-lane offsets stay strictly ordered at all times
(no passing within a lane), which is also the engine's no-collision
argument. Where a computed move would land a vehicle exactly on its
leader, the engine places it one float ulp behind instead.
"""

from __future__ import annotations

import enum
import math
import random
from bisect import insort
from dataclasses import dataclass

from .driver import (
    LANE_CHANGE_COOLDOWN_S,
    LANE_LOOKAHEAD_KM,
    DriverContext,
    IdmParams,
    LaneDecision,
    UnitMode,
    acceleration_factor,
    advance,
    lane_change_decision,
)
from .errors import ConfigError, NoRouteError
from .navigation import Route, RoadPosition, TrafficTimeStore, shortest_route
from .network import RoadNetwork

_INF = math.inf


def poisson_sample(rng: random.Random, lam: float) -> int:
    """Inverse-transform Poisson draw consuming one uniform."""
    u = rng.random()
    p = math.exp(-lam)
    f = p
    k = 0
    while u > f:
        k += 1
        p *= lam / k
        f += p
    return k


class VehicleKind(enum.Enum):
    CAR = "car"
    TAXI = "taxi"
    CRASHED_CAR = "crashed_car"


class Vehicle:
    __slots__ = (
        "id",
        "kind",
        "road_id",
        "lane",
        "offset",
        "speed",
        "route",
        "route_idx",
        "dest",
        "dest_offset_km",
        "dest_is_crash",
        "lane_change_cooldown",
        "arrived",
    )

    def __init__(self, vid: int, kind: VehicleKind, road_id: int, lane: int, offset: float):
        self.id = vid
        self.kind = kind
        self.road_id = road_id
        self.lane = lane
        self.offset = offset  # km from road start
        self.speed = 0.0  # km/h
        self.route: tuple[int, ...] = ()
        self.route_idx = 0
        self.dest: RoadPosition | None = None
        self.dest_offset_km = 0.0
        self.dest_is_crash = False
        self.lane_change_cooldown = 0.0
        self.arrived = False

    def position(self, network: RoadNetwork) -> RoadPosition:
        road = network.roads[self.road_id]
        return RoadPosition(self.road_id, min(1.0, self.offset / road.length))

    def __repr__(self):
        return f"<{self.kind.value} {self.id} road={self.road_id} lane={self.lane} off={self.offset:.4f}>"


class TrafficLight:
    """Round-robin green over an intersection's in-roads, one fixed period."""

    __slots__ = ("node_id", "in_roads", "phase_duration", "green_idx", "green_road", "next_switch")

    def __init__(self, node_id: int, in_roads: list[int], phase_duration: float):
        self.node_id = node_id
        self.in_roads = tuple(sorted(in_roads))
        self.phase_duration = phase_duration
        self.green_idx = 0
        self.green_road = self.in_roads[0]
        self.next_switch = phase_duration

    def update(self, t: float) -> None:
        while t >= self.next_switch:
            self.green_idx = (self.green_idx + 1) % len(self.in_roads)
            self.green_road = self.in_roads[self.green_idx]
            self.next_switch += self.phase_duration


@dataclass
class SimClock:
    dt: float = 0.3
    tick: int = 0
    t: float = 0.0

    def advance(self) -> None:
        self.tick += 1
        self.t = self.tick * self.dt


@dataclass(frozen=True)
class CrashEvent:
    road_id: int
    fraction: float
    time: float = 300.0
    reduced_limit: float = 10.0


class World:
    """Full mutable simulation state for one run."""

    def __init__(
        self,
        network: RoadNetwork,
        rng: random.Random,
        params: IdmParams,
        dt: float = 0.3,
        lambda_general: float = 0.00002,
        lambda_major: float = 0.00006,
        window: float = 300.0,
        check_invariants: bool = True,
    ):
        self.network = network
        self.rng = rng
        self.params = params
        self.clock = SimClock(dt=dt)
        self.lambda_general = lambda_general
        self.lambda_major = lambda_major
        self.stats = TrafficTimeStore(window=window)
        self.vehicles: dict[int, Vehicle] = {}
        self.check_invariants = check_invariants

        n_roads = max(network.roads) + 1 if network.roads else 0
        self.lanes: list[tuple[list[Vehicle], list[Vehicle]]] = [
            ([], []) for _ in range(n_roads)
        ]
        self._road_of: list = [network.roads.get(rid) for rid in range(n_roads)]

        self.lights: dict[int, TrafficLight] = {}
        self._lights_list: list[TrafficLight] = []
        self.light_at_end: list[TrafficLight | None] = [None] * n_roads

        self.sources: list[tuple[int, float, float, float]] = []  # road, frac, km, lambda
        self.sinks: list[RoadPosition] = []

        self.crash: CrashEvent | None = None
        self.crash_applied = False
        self.arrival_log: list[tuple[int, float]] = []

        self.n_initial = 0
        self.n_spawned = 0
        self.n_removed = 0
        self._next_id = 0

    # -- construction helpers -------------------------------------------------

    def new_vehicle(self, kind: VehicleKind, road_id: int, lane: int, offset: float) -> Vehicle:
        veh = Vehicle(self._next_id, kind, road_id, lane, offset)
        self._next_id += 1
        self.vehicles[veh.id] = veh
        insort(self.lanes[road_id][lane], veh, key=lambda v: v.offset)
        return veh

    def remove_vehicle(self, veh: Vehicle) -> None:
        self.lanes[veh.road_id][veh.lane].remove(veh)
        del self.vehicles[veh.id]
        self.n_removed += 1

    def taxis(self) -> list[Vehicle]:
        return [v for v in self.vehicles.values() if v.kind is VehicleKind.TAXI]

    # -- routing --------------------------------------------------------------

    def route_weight(self, road_id: int) -> float:
        return self.stats.average_traffic_time(self.network.roads[road_id], self.clock.t)

    def plan_route(self, origin: RoadPosition, dest: RoadPosition) -> Route:
        return shortest_route(self.network, self.route_weight, origin, dest)

    def assign_destination(self, veh: Vehicle, dest: RoadPosition, is_crash: bool = False) -> None:
        """Set a destination and route from the vehicle's current position."""
        route = self.plan_route(veh.position(self.network), dest)
        veh.dest = dest
        veh.dest_is_crash = is_crash
        veh.dest_offset_km = dest.fraction * self.network.roads[dest.road_id].length
        veh.route = route.roads
        veh.route_idx = 0
        veh.arrived = False

    def random_sink(self) -> RoadPosition:
        return self.sinks[self.rng.randrange(len(self.sinks))]


def initialize_world(
    network: RoadNetwork,
    config,
    seed: int,
    check_invariants: bool = True,
) -> World:
    """Seeded world with lights, the initial fleet, and routed destinations.

    Cars are placed uniformly over (road, lane, offset) with the configured
    share on major roads (the remainder goes to non-major roads when any
    exist, otherwise to all roads); taxis go uniformly over all roads.
    Placements landing within the standstill gap of an existing vehicle are
    rejection-resampled.
    """
    rng = random.Random(seed)
    params = IdmParams(unit_mode=UnitMode(config.unit_mode))
    world = World(
        network,
        rng,
        params,
        dt=config.dt,
        lambda_general=config.lambda_general,
        lambda_major=config.lambda_major,
        window=config.window,
        check_invariants=check_invariants,
    )

    lo, hi = config.light_phase_range
    for nid in sorted(network.intersections):
        node = network.intersections[nid]
        if not node.in_roads:
            continue
        light = TrafficLight(nid, node.in_roads, rng.uniform(lo, hi))
        world.lights[nid] = light
        world._lights_list.append(light)
    for road in network.roads.values():
        world.light_at_end[road.id] = world.lights.get(road.to_node)

    world.sinks = [RoadPosition(rid, frac) for rid, frac in network.sink_point_list()]
    for rid, frac in network.source_point_list():
        road = network.roads[rid]
        lam = config.lambda_major if road.is_major else config.lambda_general
        world.sources.append((rid, frac, frac * road.length, lam))

    if not world.sinks and (config.cars > 0 or config.taxis > 0):
        raise ConfigError("network has no sink points; vehicles would have no destinations")

    major_pool = sorted(r.id for r in network.roads.values() if r.is_major)
    minor_pool = sorted(r.id for r in network.roads.values() if not r.is_major)
    all_pool = sorted(network.roads)
    n_major_cars = round(config.cars * config.major_share)
    if n_major_cars > 0 and not major_pool:
        raise ConfigError("major-road share requested but the network has no major roads")

    def place(kind: VehicleKind, pool: list[int]) -> Vehicle | None:
        for _ in range(200):
            rid = pool[rng.randrange(len(pool))]
            road = network.roads[rid]
            lane = rng.randrange(2)
            offset = rng.uniform(0.0, road.length)
            lane_list = world.lanes[rid][lane]
            if any(abs(v.offset - offset) < params.dist_gap for v in lane_list):
                continue
            return world.new_vehicle(kind, rid, lane, offset)
        raise ConfigError("could not place a vehicle without overlap; map too small for the fleet")

    def place_and_route(kind: VehicleKind, pool: list[int]) -> None:
        veh = place(kind, pool)
        dest = world.random_sink()
        try:
            world.assign_destination(veh, dest)
        except NoRouteError:
            world.remove_vehicle(veh)
            return
        world.stats.open_record(veh.id, veh.road_id, veh.offset / network.roads[veh.road_id].length, 0.0)

    for i in range(config.cars):
        if i < n_major_cars:
            pool = major_pool
        else:
            pool = minor_pool if minor_pool else all_pool
        place_and_route(VehicleKind.CAR, pool)
    for _ in range(config.taxis):
        place_and_route(VehicleKind.TAXI, all_pool)

    world.n_initial = len(world.vehicles)
    return world


def apply_crash(world: World, crash: CrashEvent) -> Vehicle:
    """Drop the crash road's directed limit and park a crashed car on lane 0.

    Only the stated direction is touched; the twin road and every other
    road keep their limits. The crashed car never moves again and opens a
    stuck traffic record that inflates the road's average traffic time.
    """
    road = world.network.roads.get(crash.road_id)
    if road is None:
        raise ConfigError(f"crash road {crash.road_id} does not exist")
    road.speed_limit = crash.reduced_limit
    offset = crash.fraction * road.length
    occupied = {v.offset for v in world.lanes[road.id][0]}
    while offset in occupied:
        offset = math.nextafter(offset, 0.0)
    veh = world.new_vehicle(VehicleKind.CRASHED_CAR, road.id, 0, offset)
    world.n_spawned += 1
    world.stats.open_record(veh.id, road.id, offset / road.length, world.clock.t)
    world.crash = crash
    world.crash_applied = True
    return veh


# -- the tick ------------------------------------------------------------------


def step(world: World) -> None:
    """Advance the world by one dt tick through the fixed sub-phases."""
    t = world.clock.t
    dt = world.clock.dt
    params = world.params
    network = world.network
    roads = world._road_of
    lanes = world.lanes
    light_at_end = world.light_at_end

    # (1) lights
    for light in world._lights_list:
        if t >= light.next_switch:
            light.update(t)

    # (2) vehicles, ascending id
    crossers: list[Vehicle] = []
    arrivals: list[Vehicle] = []
    for veh in world.vehicles.values():
        if veh.kind is VehicleKind.CRASHED_CAR or veh.arrived:
            continue
        road = roads[veh.road_id]
        lane = veh.lane
        lane_list = lanes[veh.road_id][lane]
        if veh.lane_change_cooldown > 0.0:
            veh.lane_change_cooldown = max(0.0, veh.lane_change_cooldown - dt)

        front, gap, front_is_across = _sense_front(world, veh, road, lane_list)

        # lane change, then re-sense on the new lane
        if front is not None and veh.lane_change_cooldown == 0.0:
            other_list = lanes[veh.road_id][1 - lane]
            own_avg = _lane_average_speed(lane_list, veh.offset, road.speed_limit, exclude=veh)
            other_avg = _lane_average_speed(other_list, veh.offset, road.speed_limit)
            gap_ahead, gap_behind = _adjacent_gaps(other_list, veh.offset)
            decision = lane_change_decision(
                own_avg, other_avg, True, gap_ahead, gap_behind, veh.lane_change_cooldown
            )
            if decision is LaneDecision.SWITCH:
                lane_list.remove(veh)
                veh.lane = lane = 1 - lane
                lane_list = other_list
                insort(lane_list, veh, key=lambda v: v.offset)
                veh.lane_change_cooldown = LANE_CHANGE_COOLDOWN_S
                front, gap, front_is_across = _sense_front(world, veh, road, lane_list)

        light = light_at_end[veh.road_id]
        must_stop = light is not None and light.green_road != veh.road_id
        ctx = DriverContext(
            speed=veh.speed,
            lane_speed_limit=road.speed_limit,
            front_gap=gap,
            delta_speed=(veh.speed - front.speed) if front is not None else 0.0,
            stop_line_distance=(road.length - veh.offset) if must_stop else None,
            must_stop=must_stop,
        )
        accel = acceleration_factor(ctx, params)
        result = advance(veh.speed, accel, dt, road.speed_limit, gap)
        veh.speed = result.new_speed

        tentative = veh.offset + result.moving_distance
        arrived = False
        if veh.route_idx + 1 == len(veh.route) and tentative >= veh.dest_offset_km:
            tentative = veh.dest_offset_km
            arrived = True
        if front is not None and not front_is_across and tentative >= front.offset:
            tentative = math.nextafter(front.offset, veh.offset)
            if tentative < veh.offset:
                tentative = veh.offset
            if arrived and tentative < veh.dest_offset_km:
                arrived = False
        veh.offset = tentative
        if arrived:
            veh.arrived = True
            arrivals.append(veh)
        elif tentative >= road.length:
            crossers.append(veh)

    # (3) road transitions for vehicles that crossed offset = length
    if crossers:
        _process_transitions(world, crossers, t)

    # (4) arrivals
    for veh in arrivals:
        road = roads[veh.road_id]
        if veh.kind is VehicleKind.CAR:
            world.stats.close_record(veh.id, veh.road_id, veh.dest.fraction, t)
            world.remove_vehicle(veh)
        elif veh.dest_is_crash:
            world.stats.close_record(veh.id, veh.road_id, veh.dest.fraction, t)
            world.remove_vehicle(veh)
            world.arrival_log.append((veh.id, t))
        else:
            try:
                world.assign_destination(veh, world.random_sink())
            except NoRouteError:
                world.stats.close_record(veh.id, veh.road_id, veh.offset / road.length, t)
                world.remove_vehicle(veh)

    # (5) Poisson spawning at source points
    rng = world.rng
    dist_gap = params.dist_gap
    for rid, frac, pos_km, lam in world.sources:
        if poisson_sample(rng, lam) == 0:
            continue
        lane = rng.randrange(2)
        lane_list = lanes[rid][lane]
        if any(abs(v.offset - pos_km) < dist_gap for v in lane_list):
            continue  # slot occupied: defer silently
        dest = world.random_sink()
        veh = world.new_vehicle(VehicleKind.CAR, rid, lane, pos_km)
        world.n_spawned += 1
        try:
            world.assign_destination(veh, dest)
        except NoRouteError:
            world.remove_vehicle(veh)
            continue
        world.stats.open_record(veh.id, rid, frac, t)

    # (6) open-record positions, pruning, clock
    open_index = world.stats._open_by_vehicle
    for vid, veh in world.vehicles.items():
        record = open_index.get(vid)
        if record is not None:
            fraction = veh.offset / roads[veh.road_id].length
            record.current_position = fraction if fraction < 1.0 else 1.0
    if world.clock.tick % 1000 == 0:
        world.stats.prune(t)
    world.clock.advance()

    if world.check_invariants:
        validate_world(world)


def _sense_front(world: World, veh: Vehicle, road, lane_list) -> tuple[Vehicle | None, float, bool]:
    """Nearest vehicle ahead on the same lane, looking one road along the
    route when the road end is clear and the light is green."""
    i = lane_list.index(veh)
    if i + 1 < len(lane_list):
        front = lane_list[i + 1]
        return front, front.offset - veh.offset, False
    light = world.light_at_end[veh.road_id]
    if (
        light is not None
        and light.green_road == veh.road_id
        and veh.route_idx + 1 < len(veh.route)
    ):
        next_list = world.lanes[veh.route[veh.route_idx + 1]][veh.lane]
        if next_list:
            front = next_list[0]
            return front, (road.length - veh.offset) + front.offset, True
    return None, _INF, False


def _lane_average_speed(lane_list, offset: float, speed_limit: float, exclude=None) -> float:
    """Mean speed of vehicles within the lookahead window ahead; the lane's
    speed limit when the window is empty."""
    horizon = offset + LANE_LOOKAHEAD_KM
    total = 0.0
    count = 0
    for v in lane_list:
        if v.offset <= offset or v is exclude:
            continue
        if v.offset > horizon:
            break
        total += v.speed
        count += 1
    if count == 0:
        return speed_limit
    return total / count


def _adjacent_gaps(lane_list, offset: float) -> tuple[float, float]:
    """Clearance ahead of and behind `offset` on a lane (inf when empty)."""
    gap_ahead = _INF
    gap_behind = _INF
    for v in lane_list:
        if v.offset >= offset:
            gap_ahead = v.offset - offset
            break
        gap_behind = offset - v.offset
    return gap_ahead, gap_behind


def _process_transitions(world: World, crossers: list[Vehicle], t: float) -> None:
    """Move vehicles past a road end onto the next road of their route.

    Candidates are handled leaders-first per source lane so queue order is
    preserved; each entry lands strictly behind everything already on the
    target lane, and a blocked or red-light crossing parks the vehicle just
    short of the stop line instead.
    """
    network = world.network
    roads = world._road_of
    lanes = world.lanes
    light_at_end = world.light_at_end
    crossers.sort(key=lambda v: (v.road_id, v.lane, -v.offset, v.id))

    entry_bound: dict[tuple[int, int], float] = {}
    abort_bound: dict[tuple[int, int], float] = {}

    for veh in crossers:
        lanes[veh.road_id][veh.lane].remove(veh)
        while True:
            road = roads[veh.road_id]
            if veh.offset < road.length:
                insort(lanes[veh.road_id][veh.lane], veh, key=lambda v: v.offset)
                break
            light = light_at_end[veh.road_id]
            green = light is not None and light.green_road == veh.road_id
            has_next = veh.route_idx + 1 < len(veh.route)
            entered = False
            if green and has_next:
                next_rid = veh.route[veh.route_idx + 1]
                key = (next_rid, veh.lane)
                bound = entry_bound.get(key)
                if bound is None:
                    next_list = lanes[next_rid][veh.lane]
                    bound = next_list[0].offset if next_list else _INF
                entry = veh.offset - road.length
                if entry >= bound:
                    entry = math.nextafter(bound, -_INF)
                if entry >= 0.0:
                    world.stats.close_record(veh.id, veh.road_id, 1.0, t)
                    veh.road_id = next_rid
                    veh.route_idx += 1
                    veh.offset = entry
                    entry_bound[key] = entry
                    world.stats.open_record(veh.id, next_rid, 0.0, t)
                    entered = True
            if not entered:
                # wait at the stop line (red light, exhausted route, or a
                # vehicle parked at the very start of the next road)
                key = (veh.road_id, veh.lane)
                bound = abort_bound.get(key, road.length)
                veh.offset = math.nextafter(bound, 0.0)
                abort_bound[key] = veh.offset
                veh.speed = 0.0
                insort(lanes[veh.road_id][veh.lane], veh, key=lambda v: v.offset)
                break


def validate_world(world: World) -> None:
    """Always-on invariant pass: ordering, bounds, lights, conservation."""
    roads = world._road_of
    total = 0
    for rid, (lane0, lane1) in enumerate(world.lanes):
        road = roads[rid]
        for lane_list in (lane0, lane1):
            total += len(lane_list)
            prev = -1.0
            for v in lane_list:
                if not (v.offset > prev):
                    raise AssertionError(
                        f"lane order violated on road {rid}: {v} not past offset {prev}"
                    )
                prev = v.offset
                if not (0.0 <= v.offset <= road.length):
                    raise AssertionError(f"offset out of bounds: {v} on road of length {road.length}")
                if not (0.0 <= v.speed <= road.speed_limit + 1e-12):
                    raise AssertionError(
                        f"speed out of bounds: {v} speed={v.speed} limit={road.speed_limit}"
                    )
    if total != len(world.vehicles):
        raise AssertionError(f"lane lists hold {total} vehicles, dict holds {len(world.vehicles)}")
    expected = world.n_initial + world.n_spawned - world.n_removed
    if len(world.vehicles) != expected:
        raise AssertionError(
            f"conservation violated: {len(world.vehicles)} present, expected {expected}"
        )
    for light in world._lights_list:
        if light.green_road not in light.in_roads:
            raise AssertionError(f"light at node {light.node_id} green for a foreign road")
        if not (15.0 <= light.phase_duration <= 30.0):
            raise AssertionError(f"light phase duration out of range: {light.phase_duration}")
