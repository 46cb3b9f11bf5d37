"""Network case and hourly market data: parsing, validation, bid edits.

A case couples a static network (buses, branches, generators) with an
hour-indexed tree of market data: system demand, reserve requirements and
per-generator stepwise bid curves.  Cases are immutable; editing bids
returns a new case, so what-if runs never corrupt the base scenario.

File format is JSON with physical units (MW, Mvar, MVA, kV, degrees);
internally everything electrical is per-unit on the system MVA base with
angles in radians.  Bid quantities and reserve amounts stay in MW, matching
how market offers are written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

SLACK = "slack"
PV = "pv"
PQ = "pq"

ON = "on"
OFF = "off"

RESERVE_KINDS = ("r", "sp", "n1", "n3")


class CaseError(Exception):
    pass


class CaseSyntaxError(CaseError):
    """Malformed JSON; `position` is (line, column)."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at line {position[0]}, column {position[1]}")


class CaseSemanticError(CaseError):
    """Well-formed JSON that does not describe a usable case."""

    def __init__(self, message, entity=None):
        self.entity = entity
        super().__init__(message)


class BidValidationError(CaseError):
    """Rejected bid blocks; `rule` names the violated invariant."""

    def __init__(self, rule, message):
        self.rule = rule
        super().__init__(message)


def _stable_under(x, f):
    # serialize->parse must reproduce the value bit-exactly, so converted
    # quantities are pre-rounded to a fixpoint of the round-trip map
    for _ in range(8):
        y = f(x)
        if y == x:
            return x
        x = y
    return x


def _stable_radians(deg):
    return _stable_under(math.radians(deg), lambda r: math.radians(math.degrees(r)))


def _stable_per_unit(value, base):
    return _stable_under(value / base, lambda v: (v * base) / base)


@dataclass(frozen=True)
class ReserveQuad:
    """One number per reserve product: regulation, spinning, 10-min
    non-spinning, 30-min operating."""

    r: float = 0.0
    sp: float = 0.0
    n1: float = 0.0
    n3: float = 0.0

    def as_dict(self):
        return {"r": self.r, "sp": self.sp, "n1": self.n1, "n3": self.n3}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d.get(k, 0.0)) for k in RESERVE_KINDS})


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    voltage_magnitude: float      # pu setpoint (slack/pv) or start value (pq)
    voltage_angle: float          # radians
    load_p: float                 # pu on system base
    load_q: float                 # pu
    base_kv: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    rating: float = 0.0           # pu MVA flow limit; 0 means unlimited
    status: bool = True


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float                  # pu
    p_max: float                  # pu
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    min_up: int = 1
    min_down: int = 1
    max_starts: int = 4
    initial_status: str = ON
    reserve_caps: ReserveQuad = ReserveQuad()     # MW
    reserve_prices: ReserveQuad = ReserveQuad()   # $/MW
    p_set: float = 0.0            # pu scheduled output for standalone power flow


@dataclass(frozen=True)
class BidBlock:
    price: float                  # $/MW
    quantity: float               # MW
    index: int                    # 1-based position in the stepwise curve


@dataclass(frozen=True)
class HourNode:
    demand: float                 # pu system total
    reserve_req: ReserveQuad      # MW
    bids: dict                    # gen id -> tuple of BidBlock


@dataclass(frozen=True)
class TimeTree:
    horizon: int
    hours: tuple

    def bids_for(self, hour, gen_id):
        return self.hours[hour].bids.get(gen_id, ())


@dataclass(frozen=True)
class NetworkCase:
    base_mva: float
    buses: tuple
    branches: tuple
    generators: tuple
    time_tree: TimeTree
    load_weights: tuple = None    # per-bus demand shares; None = static shares

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def slack_bus(self):
        for b in self.buses:
            if b.kind == SLACK:
                return b.id
        raise CaseSemanticError("case has no slack bus")

    def bus_kinds(self):
        return [b.kind for b in self.buses]

    def in_service_branches(self):
        return [br for br in self.branches if br.status]

    def generator(self, gen_id):
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(f"no generator {gen_id}")

    def static_load_total(self):
        return sum(b.load_p for b in self.buses)

    def distribution_weights(self):
        """Per-bus share of system demand; defaults to static load shares."""
        if self.load_weights is not None:
            return np.asarray(self.load_weights, dtype=float)
        total = self.static_load_total()
        if total <= 0.0:
            return np.full(self.n_bus, 1.0 / self.n_bus)
        return np.array([b.load_p / total for b in self.buses])

    def hour_bus_loads(self, t):
        """Nodal (P, Q) withdrawals in pu for hour t.

        Active load is demand times the distribution weights; reactive load
        scales each bus's static Q by the same system-wide factor so power
        factors are preserved.
        """
        node = self.time_tree.hours[t]
        p = node.demand * self.distribution_weights()
        total = self.static_load_total()
        ratio = node.demand / total if total > 0 else 0.0
        q = np.array([b.load_q for b in self.buses]) * ratio
        return p, q


# ---------------------------------------------------------------------------
# parsing / serialization


def parse_case(text):
    """Parse the documented JSON case format into a normalized NetworkCase.

    Bus and generator ids are renumbered densely (0-based, preserving the
    file's sort order); angles become radians and MW/Mvar/MVA quantities
    per-unit on `base_mva`.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseSyntaxError(exc.msg, (exc.lineno, exc.colno)) from exc
    return case_from_dict(doc)


def case_from_dict(doc):
    for key in ("base_mva", "buses", "branches", "generators", "hours"):
        if key not in doc:
            raise CaseSemanticError(f"missing top-level key {key!r}")
    base = float(doc["base_mva"])
    if base <= 0:
        raise CaseSemanticError("base_mva must be positive")

    raw_buses = doc["buses"]
    ids = [int(b["id"]) for b in raw_buses]
    if len(set(ids)) != len(ids):
        dup = sorted(i for i in set(ids) if ids.count(i) > 1)[0]
        raise CaseSemanticError(f"duplicate bus id {dup}", entity=f"bus {dup}")
    order = sorted(range(len(ids)), key=lambda k: ids[k])
    bus_index = {ids[k]: pos for pos, k in enumerate(order)}

    buses = []
    for pos, k in enumerate(order):
        rb = raw_buses[k]
        kind = str(rb["kind"]).lower()
        if kind not in (SLACK, PV, PQ):
            raise CaseSemanticError(f"unknown bus kind {rb['kind']!r}", entity=f"bus {ids[k]}")
        buses.append(Bus(
            id=pos,
            kind=kind,
            voltage_magnitude=float(rb.get("vm", 1.0)),
            voltage_angle=_stable_radians(float(rb.get("va_deg", 0.0))),
            load_p=_stable_per_unit(float(rb.get("load_p", 0.0)), base),
            load_q=_stable_per_unit(float(rb.get("load_q", 0.0)), base),
            base_kv=float(rb.get("base_kv", 0.0)),
        ))
    if not any(b.kind == SLACK for b in buses):
        raise CaseSemanticError("case has no slack bus")

    def resolve_bus(raw_id, entity):
        try:
            return bus_index[int(raw_id)]
        except KeyError:
            raise CaseSemanticError(f"{entity} references nonexistent bus {raw_id}", entity=entity) from None

    branches = tuple(
        Branch(
            from_bus=resolve_bus(rb["from"], f"branch {k}"),
            to_bus=resolve_bus(rb["to"], f"branch {k}"),
            r=float(rb.get("r", 0.0)),
            x=float(rb["x"]),
            b_charging=float(rb.get("b", 0.0)),
            rating=_stable_per_unit(float(rb.get("rating", 0.0)), base),
            status=bool(rb.get("status", 1)),
        )
        for k, rb in enumerate(doc["branches"])
    )

    raw_gens = doc["generators"]
    gids = [int(g["id"]) for g in raw_gens]
    if len(set(gids)) != len(gids):
        dup = sorted(i for i in set(gids) if gids.count(i) > 1)[0]
        raise CaseSemanticError(f"duplicate generator id {dup}", entity=f"generator {dup}")
    gorder = sorted(range(len(gids)), key=lambda k: gids[k])
    gen_index = {gids[k]: pos for pos, k in enumerate(gorder)}
    generators = []
    for pos, k in enumerate(gorder):
        rg = raw_gens[k]
        generators.append(Generator(
            id=pos,
            bus=resolve_bus(rg["bus"], f"generator {gids[k]}"),
            p_min=_stable_per_unit(float(rg.get("p_min", 0.0)), base),
            p_max=_stable_per_unit(float(rg["p_max"]), base),
            startup_cost=float(rg.get("startup_cost", 0.0)),
            shutdown_cost=float(rg.get("shutdown_cost", 0.0)),
            min_up=int(rg.get("min_up", 1)),
            min_down=int(rg.get("min_down", 1)),
            max_starts=int(rg.get("max_starts", 4)),
            initial_status=str(rg.get("initial_status", ON)).lower(),
            reserve_caps=ReserveQuad.from_dict(rg.get("reserve_caps", {})),
            reserve_prices=ReserveQuad.from_dict(rg.get("reserve_prices", {})),
            p_set=_stable_per_unit(float(rg.get("p_set", 0.0)), base),
        ))
    generators = tuple(generators)

    hours = []
    for t, rh in enumerate(doc["hours"]):
        bids = {}
        for gid_str, rows in rh.get("bids", {}).items():
            gid = int(gid_str)
            if gid not in gen_index:
                raise CaseSemanticError(
                    f"hour {t} bids reference nonexistent generator {gid}", entity=f"hour {t}")
            bids[gen_index[gid]] = tuple(
                BidBlock(price=float(p), quantity=float(q), index=j + 1)
                for j, (p, q) in enumerate(rows)
            )
        for g in generators:
            bids.setdefault(g.id, ())
        hours.append(HourNode(
            demand=_stable_per_unit(float(rh.get("demand", 0.0)), base),
            reserve_req=ReserveQuad.from_dict(rh.get("reserve_req", {})),
            bids=bids,
        ))
    if not hours:
        raise CaseSemanticError("case must define at least one hour")

    weights = doc.get("load_weights")
    if weights is not None:
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(buses):
            raise CaseSemanticError("load_weights length must match bus count")

    return NetworkCase(
        base_mva=base,
        buses=tuple(buses),
        branches=branches,
        generators=generators,
        time_tree=TimeTree(horizon=len(hours), hours=tuple(hours)),
        load_weights=weights,
    )


def case_to_dict(case):
    base = case.base_mva
    doc = {
        "base_mva": base,
        "buses": [
            {
                "id": b.id,
                "kind": b.kind,
                "vm": b.voltage_magnitude,
                "va_deg": math.degrees(b.voltage_angle),
                "load_p": b.load_p * base,
                "load_q": b.load_q * base,
                "base_kv": b.base_kv,
            }
            for b in case.buses
        ],
        "branches": [
            {
                "from": br.from_bus,
                "to": br.to_bus,
                "r": br.r,
                "x": br.x,
                "b": br.b_charging,
                "rating": br.rating * base,
                "status": 1 if br.status else 0,
            }
            for br in case.branches
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "p_min": g.p_min * base,
                "p_max": g.p_max * base,
                "p_set": g.p_set * base,
                "startup_cost": g.startup_cost,
                "shutdown_cost": g.shutdown_cost,
                "min_up": g.min_up,
                "min_down": g.min_down,
                "max_starts": g.max_starts,
                "initial_status": g.initial_status,
                "reserve_caps": g.reserve_caps.as_dict(),
                "reserve_prices": g.reserve_prices.as_dict(),
            }
            for g in case.generators
        ],
        "hours": [
            {
                "demand": h.demand * base,
                "reserve_req": h.reserve_req.as_dict(),
                "bids": {
                    str(gid): [[blk.price, blk.quantity] for blk in blocks]
                    for gid, blocks in sorted(h.bids.items())
                },
            }
            for h in case.time_tree.hours
        ],
    }
    if case.load_weights is not None:
        doc["load_weights"] = list(case.load_weights)
    return doc


def serialize_case(case):
    """Inverse of parse_case: parse(serialize(case)) == case."""
    return json.dumps(case_to_dict(case), indent=2)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    entity: str
    rule: str

    def __str__(self):
        return f"{self.entity}: {self.rule}"


def validate(case):
    """All invariant violations in the case; empty list means clean.

    Violations are data, not failures: hand-built or deliberately broken
    cases flow through so the caller can report every problem at once.
    """
    out = []
    n = case.n_bus

    slack_count = sum(1 for b in case.buses if b.kind == SLACK)
    if slack_count != 1:
        out.append(Violation("case", "slack-count"))
    if [b.id for b in case.buses] != list(range(n)):
        out.append(Violation("case", "bus-ids-dense"))
    for b in case.buses:
        if b.voltage_magnitude <= 0:
            out.append(Violation(f"bus {b.id}", "vm-positive"))

    for k, br in enumerate(case.branches):
        ent = f"branch {k}"
        if br.x == 0:
            out.append(Violation(ent, "branch-x-zero"))
        if br.from_bus == br.to_bus:
            out.append(Violation(ent, "branch-self-loop"))
        if br.rating < 0:
            out.append(Violation(ent, "branch-rating-negative"))
        if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
            out.append(Violation(ent, "branch-bus-exists"))

    for g in case.generators:
        ent = f"generator {g.id}"
        if g.p_min < 0 or g.p_min > g.p_max:
            out.append(Violation(ent, "pmin-gt-pmax"))
        if g.min_up < 1 or g.min_down < 1:
            out.append(Violation(ent, "min-time-lt-1"))
        if g.max_starts < 0:
            out.append(Violation(ent, "max-starts-negative"))
        if any(v < 0 for v in g.reserve_caps.as_dict().values()):
            out.append(Violation(ent, "reserve-cap-negative"))
        if not (0 <= g.bus < n):
            out.append(Violation(ent, "gen-bus-exists"))

    tree = case.time_tree
    if tree.horizon < 1 or tree.horizon != len(tree.hours):
        out.append(Violation("time-tree", "horizon-lt-1"))
    gen_ids = {g.id for g in case.generators}
    for t, h in enumerate(tree.hours):
        ent = f"hour {t}"
        if h.demand < 0:
            out.append(Violation(ent, "demand-negative"))
        if any(v < 0 for v in h.reserve_req.as_dict().values()):
            out.append(Violation(ent, "reserve-req-negative"))
        missing = gen_ids - set(h.bids)
        if missing:
            out.append(Violation(ent, "bid-set-missing"))
        for gid, blocks in sorted(h.bids.items()):
            rule = _bid_block_rule(blocks)
            if rule is not None:
                out.append(Violation(f"generator {gid} hour {t}", rule))

    if case.load_weights is not None:
        if len(case.load_weights) != n or abs(sum(case.load_weights) - 1.0) > 1e-9:
            out.append(Violation("case", "load-weights-sum"))

    if n > 1 and not _connected(case):
        out.append(Violation("case", "connectivity"))

    return out


def _bid_block_rule(blocks):
    for blk in blocks:
        if blk.quantity <= 0:
            return "bid-quantity-positive"
    for a, b in zip(blocks, blocks[1:]):
        if b.price < a.price:
            return "bid-monotonicity"
    if [blk.index for blk in blocks] != list(range(1, len(blocks) + 1)):
        return "bid-index-contiguous"
    return None


def _connected(case):
    n = case.n_bus
    adj = [[] for _ in range(n)]
    for br in case.in_service_branches():
        if 0 <= br.from_bus < n and 0 <= br.to_bus < n:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    seen = [False] * n
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return all(seen)


# ---------------------------------------------------------------------------
# bid mutation


def normalize_bid_blocks(rows):
    """Accept [[price, mw], ...] or BidBlock list; return a validated tuple."""
    blocks = []
    for j, row in enumerate(rows):
        if isinstance(row, BidBlock):
            blocks.append(replace(row, index=j + 1))
        else:
            price, qty = row
            blocks.append(BidBlock(price=float(price), quantity=float(qty), index=j + 1))
    rule = _bid_block_rule(tuple(blocks))
    if rule is not None:
        raise BidValidationError(rule, f"bid blocks violate {rule}")
    return tuple(blocks)


def update_bids(case, hour, gen_id, blocks):
    """New case with one generator-hour bid set replaced.

    Everything outside the targeted hour/generator is shared untouched;
    invalid blocks are rejected with the violated rule's name.
    """
    tree = case.time_tree
    if not (0 <= hour < tree.horizon):
        raise CaseSemanticError(f"hour {hour} outside horizon 0..{tree.horizon - 1}")
    if gen_id not in {g.id for g in case.generators}:
        raise CaseSemanticError(f"no generator {gen_id}", entity=f"generator {gen_id}")
    new_blocks = normalize_bid_blocks(blocks)
    node = tree.hours[hour]
    new_bids = dict(node.bids)
    new_bids[gen_id] = new_blocks
    new_hours = list(tree.hours)
    new_hours[hour] = replace(node, bids=new_bids)
    return replace(case, time_tree=TimeTree(horizon=tree.horizon, hours=tuple(new_hours)))


# ---------------------------------------------------------------------------
# MATPOWER-style static data import


def case_from_matpower(mpc, market=None):
    """Build a case from MATPOWER-style arrays (documented helper).

    `mpc` needs keys baseMVA, bus, gen, branch with the standard column
    layout.  Transformer taps/shifts, bus shunts and generator Q limits
    have no home in this model and are dropped.  `market` optionally maps
    generator positions to market parameter dicts and supplies `hours`;
    with no market data a single hour at the static system load is created
    with empty bids.
    """
    base = float(mpc["baseMVA"])
    bus_arr = [list(map(float, row)) for row in mpc["bus"]]
    gen_arr = [list(map(float, row)) for row in mpc["gen"]]
    br_arr = [list(map(float, row)) for row in mpc["branch"]]

    kind_map = {1: PQ, 2: PV, 3: SLACK}
    ids = [int(r[0]) for r in bus_arr]
    index = {bid: pos for pos, bid in enumerate(sorted(ids))}

    vset = {}
    for row in gen_arr:
        vset[index[int(row[0])]] = float(row[5]) if len(row) > 5 and row[5] > 0 else 1.0

    buses = []
    for row in sorted(bus_arr, key=lambda r: r[0]):
        pos = index[int(row[0])]
        kind = kind_map[int(row[1])]
        vm = vset.get(pos, 1.0) if kind in (SLACK, PV) else 1.0
        buses.append(Bus(
            id=pos, kind=kind, voltage_magnitude=vm, voltage_angle=0.0,
            load_p=row[2] / base, load_q=row[3] / base,
            base_kv=row[9] if len(row) > 9 else 0.0,
        ))

    branches = tuple(
        Branch(
            from_bus=index[int(row[0])], to_bus=index[int(row[1])],
            r=row[2], x=row[3], b_charging=row[4],
            rating=(row[5] / base) if len(row) > 5 else 0.0,
            status=bool(row[10]) if len(row) > 10 else True,
        )
        for row in br_arr
    )

    market = market or {}
    gen_params = market.get("generators", {})
    generators = []
    for pos, row in enumerate(gen_arr):
        params = gen_params.get(pos, {})
        caps = ReserveQuad.from_dict(params.get("reserve_caps", {}))
        prices = ReserveQuad.from_dict(params.get("reserve_prices", {}))
        generators.append(Generator(
            id=pos,
            bus=index[int(row[0])],
            p_min=params.get("p_min_mw", 0.0) / base,
            p_max=params.get("p_max_mw", row[8] if len(row) > 8 and row[8] > 0 else base) / base,
            startup_cost=params.get("startup_cost", 0.0),
            shutdown_cost=params.get("shutdown_cost", 0.0),
            min_up=params.get("min_up", 1),
            min_down=params.get("min_down", 1),
            max_starts=params.get("max_starts", 4),
            initial_status=params.get("initial_status", ON),
            reserve_caps=caps,
            reserve_prices=prices,
            p_set=row[1] / base,
        ))
    generators = tuple(generators)

    hours_spec = market.get("hours")
    if hours_spec is None:
        static_total = sum(b.load_p for b in buses)
        hours_spec = [{"demand_mw": static_total * base, "reserve_req": {}, "bids": {}}]
    hours = []
    for h in hours_spec:
        bids = {g.id: () for g in generators}
        for gid, rows in h.get("bids", {}).items():
            bids[int(gid)] = normalize_bid_blocks(rows)
        hours.append(HourNode(
            demand=h["demand_mw"] / base,
            reserve_req=ReserveQuad.from_dict(h.get("reserve_req", {})),
            bids=bids,
        ))

    return NetworkCase(
        base_mva=base,
        buses=tuple(buses),
        branches=branches,
        generators=generators,
        time_tree=TimeTree(horizon=len(hours), hours=tuple(hours)),
        load_weights=market.get("load_weights"),
    )
