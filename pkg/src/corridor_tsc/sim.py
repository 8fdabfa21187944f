"""Mesoscopic point-queue simulator of a signalized arterial corridor.

The corridor has M four-phase intersections on an east-west main line.
Main-line links form two opposite chains of M+1 links (terminal zones W
and E at the ends); each intersection also has one north and one south
approach link. Vehicles are discrete: they traverse a link at free-flow
speed, then wait in one of three movement queues (left/straight/right) at
the downstream signal, and discharge at a saturation rate while their
movement has green, entering the next link of their route unless its
storage is exhausted (spillback) or they leave the network.

Everything is integer-exact: vehicle conservation holds at every one
second tick, and a given (seed, action sequence) reproduces a trajectory
bit for bit.
"""

from collections import deque

import numpy as np

from .scenarios import ScenarioConfig

LEFT, STRAIGHT, RIGHT = 0, 1, 2
EXIT = -1
NS, EW = 0, 1

MOVEMENT_NAMES = ("left", "straight", "right")
_PHASE_NAMES = {
    (NS, STRAIGHT): "NS_straight",
    (NS, RIGHT): "NS_right",
    (NS, LEFT): "NS_left",
    (EW, STRAIGHT): "EW_straight",
    (EW, RIGHT): "EW_right",
    (EW, LEFT): "EW_left",
}

_DEMAND_CHUNK_S = 1800


def _bit(axis, movement):
    return 1 << (axis * 3 + movement)


class SignalController:
    """Four-phase signal; the north-south split is the single control.

    Phase order per cycle: P1 NS straight/right, P2 NS left, P3 EW
    straight/right, P4 EW left, each followed by yellow + all-red. The
    split s is the NS green total: g(P1) = s - left_phase, g(P2) =
    left_phase; the EW side gets g(P3) = budget - s - left_phase and
    g(P4) = left_phase, where budget = cycle - 4*(yellow + all_red).
    Split changes latch at the next cycle boundary.
    """

    def __init__(self, intersection, scenario: ScenarioConfig):
        self.intersection = intersection
        self.cycle = scenario.cycle_s
        self.left_phase = scenario.left_phase_s
        self.yellow = scenario.yellow_s
        self.all_red = scenario.all_red_s
        self.offset = scenario.offset_of(intersection)
        self.split_lb = scenario.split_lb
        self.split_ub = scenario.split_ub
        self.split = scenario.initial_split
        self.pending_split = None
        self._validate(self.split)
        self.schedule = self._build_schedule(self.split)

    @property
    def green_budget(self):
        return self.cycle - 4 * (self.yellow + self.all_red)

    def green_times(self, split=None):
        s = self.split if split is None else split
        return {
            "P1": s - self.left_phase,
            "P2": self.left_phase,
            "P3": self.green_budget - s - self.left_phase,
            "P4": self.left_phase,
        }

    def _validate(self, split):
        if not (self.split_lb <= split <= self.split_ub):
            raise ValueError(f"split {split} outside [{self.split_lb}, {self.split_ub}]")
        if any(g <= 0 for g in self.green_times(split).values()):
            raise ValueError(f"split {split} leaves a non-positive green time")

    def _build_schedule(self, split):
        g = self.green_times(split)
        pause = self.yellow + self.all_red
        sched = np.zeros(self.cycle, dtype=np.uint8)
        pos = 0
        for glen, mask in (
            (g["P1"], _bit(NS, STRAIGHT) | _bit(NS, RIGHT)),
            (g["P2"], _bit(NS, LEFT)),
            (g["P3"], _bit(EW, STRAIGHT) | _bit(EW, RIGHT)),
            (g["P4"], _bit(EW, LEFT)),
        ):
            sched[pos : pos + glen] = mask
            pos += glen + pause
        assert pos == self.cycle
        return sched

    def set_split(self, split):
        """Request a new split; takes effect at the next cycle boundary."""
        split = int(split)
        self._validate(split)
        self.pending_split = split

    def mask_at(self, t):
        lt = (t - self.offset) % self.cycle
        if lt == 0 and self.pending_split is not None:
            if self.pending_split != self.split:
                self.split = self.pending_split
                self.schedule = self._build_schedule(self.split)
            self.pending_split = None
        return self.schedule[lt]


def green_movements(controller, t):
    """Movement names with green at absolute time t; empty during yellow/all-red."""
    mask = int(controller.mask_at(t))
    return {name for key, name in _PHASE_NAMES.items() if mask & _bit(*key)}


class Link:
    __slots__ = (
        "name",
        "axis",
        "length",
        "fft",
        "capacity",
        "signal",
        "queues",
        "in_transit",
        "occ",
        "acc",
        "next_link",
        "rates",
        "shift",
        "exit_zone",
    )

    def __init__(self, name, axis, scenario):
        self.name = name
        self.axis = axis
        self.length = scenario.link_length_m
        self.fft = int(scenario.free_flow_time_s)
        self.capacity = scenario.storage_capacity
        self.signal = None  # controller index, or None for terminal links
        self.exit_zone = None
        self.queues = (deque(), deque(), deque())
        self.in_transit = deque()
        self.occ = 0
        self.acc = [0.0, 0.0, 0.0]
        self.next_link = [None, None, None]
        self.rates = (scenario.sat_rate_turn, scenario.sat_rate_straight, scenario.sat_rate_turn)
        self.shift = axis * 3

    def queue_length(self, movement=STRAIGHT):
        return len(self.queues[movement])


class CorridorGeometry:
    """Link layout and static routing for one corridor instance."""

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        n = scenario.n_intersections
        self.n_intersections = n
        self.eb = [Link(f"EB{i}", EW, scenario) for i in range(n + 1)]
        self.wb = [Link(f"WB{j}", EW, scenario) for j in range(n + 1)]
        self.north = [Link(f"N{m + 1}", NS, scenario) for m in range(n)]
        self.south = [Link(f"S{m + 1}", NS, scenario) for m in range(n)]
        for i in range(n):
            self.eb[i].signal = i
            self.eb[i].next_link[STRAIGHT] = self.eb[i + 1]
        self.eb[n].exit_zone = "E"
        for j in range(n):
            self.wb[j].signal = n - 1 - j
            self.wb[j].next_link[STRAIGHT] = self.wb[j + 1]
        self.wb[n].exit_zone = "W"
        for m in range(n):
            self.north[m].signal = m
            self.north[m].next_link[LEFT] = self.eb[m + 1]
            self.north[m].next_link[RIGHT] = self.wb[n - m]
            self.south[m].signal = m
            self.south[m].next_link[LEFT] = self.wb[n - m]
            self.south[m].next_link[RIGHT] = self.eb[m + 1]
        # observation order: the eastbound chain W->E, then westbound E->W
        self.main_line = self.eb + self.wb
        self.links = self.eb + self.wb + self.north + self.south
        self.by_name = {lk.name: lk for lk in self.links}
        self.entry_link = {"W": self.eb[0], "E": self.wb[0]}
        for m in range(n):
            self.entry_link[f"N{m + 1}"] = self.north[m]
            self.entry_link[f"S{m + 1}"] = self.south[m]

    @property
    def n_main_line(self):
        return len(self.main_line)

    def main_line_weights(self):
        s = self.scenario
        return np.array(
            [s.w_eastbound] * len(self.eb) + [s.w_westbound] * len(self.wb), dtype=np.float64
        )

    def build_route(self, origin, dest):
        """Static shortest path as (link, movement) legs; EXIT ends off-network."""
        n = self.n_intersections
        if origin == dest:
            raise ValueError(f"origin equals destination: {origin}")

        def side(zone):
            if zone and zone[0] in "NS" and zone[1:].isdigit():
                m = int(zone[1:]) - 1
                if 0 <= m < n:
                    return zone[0], m
            return None

        def east_legs(start, stop_m, last_mv):
            # eastbound from eb[start], turning/exiting at intersection stop_m
            legs = [(self.eb[i], STRAIGHT) for i in range(start, stop_m)]
            legs.append((self.eb[stop_m], last_mv))
            return legs

        def west_legs(start, stop_m, last_mv):
            stop_j = n - 1 - stop_m
            legs = [(self.wb[j], STRAIGHT) for j in range(start, stop_j)]
            legs.append((self.wb[stop_j], last_mv))
            return legs

        o_side, d_side = side(origin), side(dest)
        if origin == "W":
            if dest == "E":
                return [(self.eb[i], STRAIGHT) for i in range(n)] + [(self.eb[n], EXIT)]
            if d_side:
                kind, m = d_side
                return east_legs(0, m, LEFT if kind == "N" else RIGHT)
        elif origin == "E":
            if dest == "W":
                return [(self.wb[j], STRAIGHT) for j in range(n)] + [(self.wb[n], EXIT)]
            if d_side:
                kind, m = d_side
                return west_legs(0, m, RIGHT if kind == "N" else LEFT)
        elif o_side:
            kind, m = o_side
            first = self.north[m] if kind == "N" else self.south[m]
            to_east = LEFT if kind == "N" else RIGHT
            to_west = RIGHT if kind == "N" else LEFT
            if dest == "E":
                legs = [(first, to_east)]
                legs += [(self.eb[i], STRAIGHT) for i in range(m + 1, n)]
                legs.append((self.eb[n], EXIT))
                return legs
            if dest == "W":
                legs = [(first, to_west)]
                legs += [(self.wb[j], STRAIGHT) for j in range(n - m, n)]
                legs.append((self.wb[n], EXIT))
                return legs
            if d_side:
                dkind, dm = d_side
                if dm == m:
                    if dkind != kind:
                        return [(first, STRAIGHT)]
                    raise ValueError(f"no route from {origin} to {dest}")
                if dm > m:
                    legs = [(first, to_east)]
                    legs += east_legs(m + 1, dm, LEFT if dkind == "N" else RIGHT)
                else:
                    legs = [(first, to_west)]
                    legs += west_legs(n - m, dm, RIGHT if dkind == "N" else LEFT)
                return legs
        raise ValueError(f"cannot route {origin} -> {dest}")


class CorridorSim:
    """Executable simulator state over a CorridorGeometry."""

    def __init__(self, scenario: ScenarioConfig, seed=0, check_conservation=False):
        self.geom = CorridorGeometry(scenario)
        self.scenario = scenario
        self.controllers = [
            SignalController(m, scenario) for m in range(scenario.n_intersections)
        ]
        self.rng = np.random.default_rng(seed)
        self.time = 0
        self.entered = 0
        self.exited = 0
        self.generated = 0
        self.check_conservation = check_conservation
        pairs = []
        for key, rate in sorted(scenario.od_flows.items()):
            if rate <= 0.0:
                continue
            origin, dest = key.split("->")
            pairs.append((origin, dest, rate, self.geom.build_route(origin, dest)))
        self._pair_origins = [p[0] for p in pairs]
        self._pair_rates = np.array([p[2] for p in pairs], dtype=np.float64)
        self._pair_routes = [tuple(p[3]) for p in pairs]
        self._route_index = {id(r): i for i, r in enumerate(self._pair_routes)}
        origins = sorted({p[0] for p in pairs})
        self._origins = origins
        self._pending = {o: deque() for o in origins}
        self._origin_queue = {o: deque() for o in origins}
        self._demand_horizon = 0

    # -- demand ------------------------------------------------------------

    def _ramp(self, t):
        ramp = self.scenario.demand_ramp_s
        if ramp <= 0:
            return np.ones_like(t, dtype=np.float64)
        return np.minimum(1.0, t / ramp)

    def arrival_rate_per_tick(self, pair_index, t):
        """Expected arrivals (veh) for one OD pair in the 1 s tick at time t."""
        return float(self._pair_rates[pair_index] / 3600.0 * self._ramp(np.float64(t)))

    def _generate_demand_chunk(self):
        """Draw Poisson arrivals for the next fixed-length window of seconds.

        Chunk boundaries are absolute times, so the rng stream does not
        depend on how run_interval calls are sliced.
        """
        h = self._demand_horizon
        ts = np.arange(h, h + _DEMAND_CHUNK_S, dtype=np.float64)
        if self._pair_rates.size:
            lam = np.outer(self._ramp(ts), self._pair_rates / 3600.0)
            counts = self.rng.poisson(lam)
            ti, pj = counts.nonzero()
            reps = counts[ti, pj]
            times = np.repeat(h + ti, reps)
            pair_idx = np.repeat(pj, reps)
            for when, pi in zip(times.tolist(), pair_idx.tolist()):
                self._pending[self._pair_origins[pi]].append((when, self._pair_routes[pi]))
        self._demand_horizon = h + _DEMAND_CHUNK_S

    # -- public controls ----------------------------------------------------

    def set_split(self, intersection, split):
        self.controllers[intersection].set_split(split)

    def splits(self):
        return np.array([c.split for c in self.controllers], dtype=np.float64)

    def queue_length(self, link_name):
        """Ground-truth straight-movement queue on a link (unclipped)."""
        return len(self.geom.by_name[link_name].queues[STRAIGHT])

    def main_line_queues(self):
        return np.array(
            [len(lk.queues[STRAIGHT]) for lk in self.geom.main_line], dtype=np.int64
        )

    def on_network(self):
        return sum(lk.occ for lk in self.geom.links)

    def waiting_at_origins(self):
        return sum(len(q) for q in self._origin_queue.values())

    def assert_conservation(self):
        on_net = self.on_network()
        if self.entered - self.exited != on_net:
            raise AssertionError(
                f"conservation violated at t={self.time}: entered={self.entered} "
                f"exited={self.exited} on_network={on_net}"
            )
        if self.generated != self.entered + self.waiting_at_origins():
            raise AssertionError(f"origin accounting violated at t={self.time}")

    # -- core dynamics -------------------------------------------------------

    def tick(self):
        t = self.time
        geom = self.geom
        masks = [c.mask_at(t) for c in self.controllers]

        # 1) demand injection: due arrivals move to origin queues, then onto
        #    the entry link while it has storage space
        if t >= self._demand_horizon:
            self._generate_demand_chunk()
        for origin in self._origins:
            pending = self._pending[origin]
            oq = self._origin_queue[origin]
            while pending and pending[0][0] <= t:
                oq.append(pending.popleft()[1])
                self.generated += 1
            if oq:
                entry = geom.entry_link[origin]
                arrive = t + entry.fft
                while oq and entry.occ < entry.capacity:
                    entry.in_transit.append((arrive, oq.popleft(), 0))
                    entry.occ += 1
                    self.entered += 1

        for lk in geom.links:
            # 2) free-flow arrivals join their movement queue (or exit at a
            #    terminal link's downstream zone)
            transit = lk.in_transit
            while transit and transit[0][0] <= t:
                _, route, leg = transit.popleft()
                mv = route[leg][1]
                if mv == EXIT:
                    lk.occ -= 1
                    self.exited += 1
                else:
                    lk.queues[mv].append((route, leg))

            # 3) signalized discharge at the saturation rate, blocked by
            #    downstream storage (spillback); fractional capacity carries
            #    across ticks only while vehicles keep flowing
            sig = lk.signal
            if sig is None:
                continue
            mask = masks[sig]
            if not mask:
                continue
            shift = lk.shift
            for mv in (LEFT, STRAIGHT, RIGHT):
                if not (mask >> (shift + mv)) & 1:
                    continue
                q = lk.queues[mv]
                if not q:
                    # no banking of green time: capacity without demand is lost
                    if lk.acc[mv]:
                        lk.acc[mv] = 0.0
                    continue
                acc = lk.acc[mv] + lk.rates[mv]
                avail = int(acc)
                if avail:
                    nxt = lk.next_link[mv]
                    room = (nxt.capacity - nxt.occ) if nxt is not None else avail
                    n = min(avail, len(q), room)
                    if n:
                        acc -= n
                        lk.occ -= n
                        if nxt is None:
                            self.exited += n
                            for _ in range(n):
                                q.popleft()
                        else:
                            arrive = t + nxt.fft
                            nxt.occ += n
                            append = nxt.in_transit.append
                            for _ in range(n):
                                route, leg = q.popleft()
                                append((arrive, route, leg + 1))
                    if n < avail:
                        acc = 0.0  # starved or blocked: unused capacity is lost
                lk.acc[mv] = acc

        self.time = t + 1
        if self.check_conservation:
            self.assert_conservation()

    def run_interval(self, seconds):
        if seconds < 0:
            raise ValueError("interval must be non-negative")
        tick = self.tick
        for _ in range(int(seconds)):
            tick()

    # -- identity -------------------------------------------------------------

    def fingerprint(self):
        """Hashable snapshot of the full dynamic state, for exactness tests."""
        rid = self._route_index

        def veh(entry):
            return (rid[id(entry[0])], entry[1])

        links = tuple(
            (
                lk.occ,
                tuple(tuple(veh(e) for e in q) for q in lk.queues),
                tuple((at, rid[id(r)], leg) for at, r, leg in lk.in_transit),
                tuple(lk.acc),
            )
            for lk in self.geom.links
        )
        origins = tuple(
            (
                o,
                tuple((at, rid[id(r)]) for at, r in self._pending[o]),
                tuple(rid[id(r)] for r in self._origin_queue[o]),
            )
            for o in self._origins
        )
        ctrl = tuple((c.split, c.pending_split) for c in self.controllers)
        rng_state = str(self.rng.bit_generator.state)
        return (self.time, self.entered, self.exited, self.generated, links, origins, ctrl, rng_state)


def build_corridor(scenario: ScenarioConfig, seed=0, check_conservation=False):
    """Construct a ready-to-run simulator for a scenario config."""
    return CorridorSim(scenario, seed=seed, check_conservation=check_conservation)
