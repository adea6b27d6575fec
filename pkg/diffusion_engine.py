"""
Agent model and tick cycle for conspiracy-information diffusion among Humans,
Bad Bots, Good Bots and Info-Correction Bots.

Each tick runs four stages in a fixed order (generation, consumption,
propagation, state update) followed by bookkeeping. Receive buffers are kept
as piece counts per directed edge (sender -> receiver) and valence, so the
immediate sender of every piece is known without materialising the pieces.
All randomness comes from one numpy Generator seeded from SimParams.seed;
within a stage, draws are laid out in ascending agent id (or edge id, which is
sorted by sender id) order.

An agent's attention is bounded: after propagation, each receive buffer is
thinned to about memory_capacity pieces, valences in proportion. Humans whose
threshold_t exceeds disengagement_threshold skip corrective (Good) pieces:
they neither count them nor pass them on.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np
import pandas as pd

from simulation_errors import ParameterError, SimulationStateError
from small_world_network import GRAPH_MODELS, WATTS_STROGATZ, SmallWorldSpec, generate_small_world

GOOD = 0
BAD = 1

# upper bound on memory_capacity; per-edge counts stay well inside int64
MAX_MEMORY_CAPACITY = 1_000_000


class AgentRole(IntEnum):
    HUMAN = 0
    BAD_BOT = 1
    GOOD_BOT = 2
    INFO_CORRECTION_BOT = 3


class Valence(Enum):
    GOOD = "good"
    BAD = "bad"


class DefenderBasis(Enum):
    BAD_BOTS = "bad_bots"
    HUMANS = "humans"


class FlipRule(Enum):
    GROSS = "gross"
    NET = "net"


class RelayerKind(IntEnum):
    GOOD_HUMAN = 0
    BAD_HUMAN = 1
    BAD_BOT = 2
    GOOD_BOT = 3
    INFO_CORRECTION_BOT = 4


@dataclass(frozen=True)
class InfoPiece:
    valence: Valence
    origin: int  # agent the piece arrived from


@dataclass(frozen=True)
class HumanState:
    state: Valence
    bad_consumed_since_flip: int = 0
    good_consumed_since_flip: int = 0


@dataclass(frozen=True)
class Agent:
    agent_id: int
    role: AgentRole
    human_state: object  # HumanState, or None for bots
    inbox_prev: tuple
    inbox_curr: tuple


@dataclass(frozen=True)
class SimParams:
    n_h: int = 1000
    alpha1: float = 0.2
    alpha2: float = 0.0
    alpha3: float = 0.0
    defender_basis: DefenderBasis = DefenderBasis.BAD_BOTS
    p_g: float = 0.4
    p_c: float = 0.8
    p_p: float = 0.8
    threshold_t: int = 72
    max_ticks: int = 100
    mean_degree: int = 10
    beta: float = 0.05
    graph_model: str = WATTS_STROGATZ
    flip_rule: FlipRule = FlipRule.NET
    echo_suppression: bool = True
    memory_capacity: int = 20
    disengagement_threshold: object = 74  # int, or None to keep every Human engaged
    seed: int = 0

    def validate(self):
        for name in ("n_h", "threshold_t", "max_ticks", "mean_degree", "memory_capacity", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ParameterError(f"{name} must be an integer, got {value!r}", field=name)
        for name in ("alpha1", "alpha2", "alpha3", "p_g", "p_c", "p_p", "beta"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ParameterError(f"{name} must be a number, got {value!r}", field=name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}", field=name)
        if self.n_h < 1:
            raise ParameterError(f"n_h must be at least 1, got {self.n_h}", field="n_h")
        for name in ("alpha1", "alpha2", "alpha3"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative, got {getattr(self, name)}", field=name)
        for name in ("p_g", "p_c", "p_p", "beta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must be within [0, 1], got {getattr(self, name)}", field=name)
        if self.threshold_t < 1:
            raise ParameterError(f"threshold_t must be at least 1, got {self.threshold_t}", field="threshold_t")
        if self.max_ticks < 1:
            raise ParameterError(f"max_ticks must be at least 1, got {self.max_ticks}", field="max_ticks")
        if not 1 <= self.memory_capacity <= MAX_MEMORY_CAPACITY:
            raise ParameterError(
                f"memory_capacity must be within [1, {MAX_MEMORY_CAPACITY}], got {self.memory_capacity}",
                field="memory_capacity",
            )
        if self.disengagement_threshold is not None:
            value = self.disengagement_threshold
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ParameterError(
                    f"disengagement_threshold must be a positive integer or null, got {value!r}",
                    field="disengagement_threshold",
                )
        if self.seed < 0:
            raise ParameterError(f"seed must be non-negative, got {self.seed}", field="seed")
        if self.graph_model not in GRAPH_MODELS:
            raise ParameterError(f"graph_model must be one of {GRAPH_MODELS}, got {self.graph_model!r}", field="graph_model")
        if not isinstance(self.defender_basis, DefenderBasis):
            raise ParameterError(f"unknown defender_basis {self.defender_basis!r}", field="defender_basis")
        if not isinstance(self.flip_rule, FlipRule):
            raise ParameterError(f"unknown flip_rule {self.flip_rule!r}", field="flip_rule")
        if not isinstance(self.echo_suppression, bool):
            raise ParameterError(f"echo_suppression must be true or false, got {self.echo_suppression!r}", field="echo_suppression")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def network_spec(self, node_count):
        return SmallWorldSpec(n=node_count, k=self.mean_degree, beta=self.beta, model=self.graph_model)

    def to_dict(self):
        data = dataclasses.asdict(self)
        data["defender_basis"] = self.defender_basis.value
        data["flip_rule"] = self.flip_rule.value
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for name, enum_type in (("defender_basis", DefenderBasis), ("flip_rule", FlipRule)):
            if name in data and not isinstance(data[name], enum_type):
                try:
                    data[name] = enum_type(data[name])
                except ValueError:
                    allowed = [e.value for e in enum_type]
                    raise ParameterError(f"{name} must be one of {allowed}, got {data[name]!r}", field=name) from None
        return cls(**data)


def round_half_away(value):
    value = round(value, 9)
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


@dataclass(frozen=True)
class AgentCounts:
    humans: int
    bad_bots: int
    info_correction_bots: int
    good_bots: int

    @property
    def total(self):
        return self.humans + self.bad_bots + self.info_correction_bots + self.good_bots


def agent_counts(params):
    bad_bots = round_half_away(params.alpha1 * params.n_h)
    basis = bad_bots if params.defender_basis is DefenderBasis.BAD_BOTS else params.n_h
    return AgentCounts(
        humans=params.n_h,
        bad_bots=bad_bots,
        info_correction_bots=round_half_away(params.alpha2 * basis),
        good_bots=round_half_away(params.alpha3 * basis),
    )


@dataclass(frozen=True)
class TickStats:
    tick: int
    good_humans: int
    bad_humans: int
    good_generated: int
    bad_generated: int
    good_consumed: int
    bad_consumed: int
    good_relayed: int
    bad_relayed: int
    relayed_by_kind: dict = field(default_factory=dict, compare=False)

    TIME_SERIES_COLUMNS = (
        "tick", "good_humans", "bad_humans", "good_generated", "bad_generated",
        "good_consumed", "bad_consumed", "good_relayed", "bad_relayed",
    )

    def as_row(self):
        return {name: getattr(self, name) for name in self.TIME_SERIES_COLUMNS}


@dataclass
class RunOutcome:
    bad_majority_tick: object = None
    all_bad_tick: object = None
    ticks_run: int = 0
    final_good_humans: int = 0
    final_bad_humans: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(eq=False)
class SimState:
    params: SimParams
    network: object
    roles: np.ndarray
    is_bad: np.ndarray
    bad_consumed: np.ndarray
    good_consumed: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_rev: np.ndarray
    inbox_prev: np.ndarray
    inbox_curr: np.ndarray
    rng: np.random.Generator
    role_histogram: tuple
    tick: int = 0
    outcome: RunOutcome = field(default_factory=RunOutcome)

    @property
    def agent_count(self):
        return len(self.roles)

    @property
    def humans(self):
        return self.roles == AgentRole.HUMAN

    @property
    def n_humans(self):
        return int(self.humans.sum())

    @property
    def bad_humans(self):
        return int((self.humans & self.is_bad).sum())

    @property
    def good_humans(self):
        return self.n_humans - self.bad_humans

    @property
    def disengaged(self):
        """True when Humans ignore Good pieces: threshold_t above the disengagement threshold."""
        limit = self.params.disengagement_threshold
        return limit is not None and self.params.threshold_t > limit

    @property
    def terminated(self):
        return self.outcome.all_bad_tick is not None or self.tick >= self.params.max_ticks

    def inbox_pieces(self, agent_id, buffer="prev"):
        inbox = self.inbox_prev if buffer == "prev" else self.inbox_curr
        pieces = []
        for e in np.flatnonzero(self.edge_dst == agent_id):
            origin = int(self.edge_src[e])
            pieces.extend([InfoPiece(Valence.GOOD, origin)] * int(inbox[e, GOOD]))
            pieces.extend([InfoPiece(Valence.BAD, origin)] * int(inbox[e, BAD]))
        return pieces

    def agent(self, agent_id):
        role = AgentRole(int(self.roles[agent_id]))
        human_state = None
        if role is AgentRole.HUMAN:
            human_state = HumanState(
                state=Valence.BAD if self.is_bad[agent_id] else Valence.GOOD,
                bad_consumed_since_flip=int(self.bad_consumed[agent_id]),
                good_consumed_since_flip=int(self.good_consumed[agent_id]),
            )
        return Agent(
            agent_id=agent_id,
            role=role,
            human_state=human_state,
            inbox_prev=tuple(self.inbox_pieces(agent_id, "prev")),
            inbox_curr=tuple(self.inbox_pieces(agent_id, "curr")),
        )


def _role_histogram(roles):
    return tuple(int(c) for c in np.bincount(roles, minlength=len(AgentRole)))


def _directed_edges(network):
    n = network.node_count
    degrees = network.degrees()
    src = np.repeat(np.arange(n, dtype=np.int64), degrees)
    dst = np.fromiter((j for nbrs in network.adjacency for j in nbrs), dtype=np.int64, count=int(degrees.sum()))
    keys = src * n + dst
    rev = np.searchsorted(keys, dst * n + src)
    return src, dst, rev


def init_simulation(params, network=None, roles=None):
    """Build the initial state for ``params``.

    ``network`` and ``roles`` override the generated topology and the shuffled
    role assignment; both must cover the same node count.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    counts = agent_counts(params)

    if roles is None:
        total = counts.total
    else:
        total = len(roles)
    if total < 2:
        raise ParameterError(f"a simulation needs at least 2 agents, got {total}", field="n_h")

    if network is None:
        network = generate_small_world(params.network_spec(total), rng)
    elif network.node_count != total:
        raise ParameterError(f"network has {network.node_count} nodes but {total} agents are required")

    if roles is None:
        role_array = np.concatenate([
            np.full(counts.humans, AgentRole.HUMAN, dtype=np.int8),
            np.full(counts.bad_bots, AgentRole.BAD_BOT, dtype=np.int8),
            np.full(counts.info_correction_bots, AgentRole.INFO_CORRECTION_BOT, dtype=np.int8),
            np.full(counts.good_bots, AgentRole.GOOD_BOT, dtype=np.int8),
        ])
        role_array = role_array[rng.permutation(total)]
    else:
        role_array = np.array([int(AgentRole(r)) for r in roles], dtype=np.int8)
    if not (role_array == AgentRole.HUMAN).any():
        raise ParameterError("a simulation needs at least one Human agent", field="n_h")

    src, dst, rev = _directed_edges(network)
    n_edges = len(src)
    logging.debug(
        f"Initialised simulation seed={params.seed}: {total} agents, {network.edge_count} edges, "
        f"histogram={_role_histogram(role_array)}"
    )
    return SimState(
        params=params,
        network=network,
        roles=role_array,
        is_bad=np.zeros(total, dtype=bool),
        bad_consumed=np.zeros(total, dtype=np.int64),
        good_consumed=np.zeros(total, dtype=np.int64),
        edge_src=src,
        edge_dst=dst,
        edge_rev=rev,
        inbox_prev=np.zeros((n_edges, 2), dtype=np.int64),
        inbox_curr=np.zeros((n_edges, 2), dtype=np.int64),
        rng=rng,
        role_histogram=_role_histogram(role_array),
    )


def _per_receiver(state, values):
    return np.bincount(state.edge_dst, weights=values, minlength=state.agent_count).astype(np.int64)


def _relayer_kinds(state):
    kinds = np.empty(state.agent_count, dtype=np.int64)
    roles = state.roles
    kinds[roles == AgentRole.BAD_BOT] = RelayerKind.BAD_BOT
    kinds[roles == AgentRole.GOOD_BOT] = RelayerKind.GOOD_BOT
    kinds[roles == AgentRole.INFO_CORRECTION_BOT] = RelayerKind.INFO_CORRECTION_BOT
    humans = roles == AgentRole.HUMAN
    kinds[humans & state.is_bad] = RelayerKind.BAD_HUMAN
    kinds[humans & ~state.is_bad] = RelayerKind.GOOD_HUMAN
    return kinds


def _generate(state):
    p, rng, roles = state.params, state.rng, state.roles
    humans = roles == AgentRole.HUMAN
    emits = rng.random(state.agent_count) < p.p_g
    per_agent = np.where(humans, 1, np.where(roles == AgentRole.INFO_CORRECTION_BOT, 0, 2))
    pieces = per_agent * emits
    emits_bad = (roles == AgentRole.BAD_BOT) | (humans & state.is_bad)
    generated = np.stack([np.where(emits_bad, 0, pieces), np.where(emits_bad, pieces, 0)], axis=1)
    # a post is seen by every alter
    state.inbox_curr += generated[state.edge_src]
    return generated.sum(axis=0)


def _consume(state):
    p, rng = state.params, state.rng
    humans = state.humans
    good_in = _per_receiver(state, state.inbox_prev[:, GOOD]) * humans
    bad_in = _per_receiver(state, state.inbox_prev[:, BAD]) * humans
    if state.disengaged:
        good_in = np.zeros_like(good_in)
    good_taken = rng.binomial(good_in, p.p_c)
    bad_taken = rng.binomial(bad_in, p.p_c)
    state.good_consumed += good_taken
    state.bad_consumed += bad_taken
    return int(good_taken.sum()), int(bad_taken.sum())


def _kept_for_relay(state):
    """Per incoming edge, the pieces its receiver selects for relay (after rewriting)."""
    receiver = state.roles[state.edge_dst]
    receiver_bad = state.is_bad[state.edge_dst]
    good_in = state.inbox_prev[:, GOOD]
    bad_in = state.inbox_prev[:, BAD]
    both = good_in + bad_in
    zero = np.zeros_like(good_in)

    good_human = (receiver == AgentRole.HUMAN) & ~receiver_bad
    bad_human = (receiver == AgentRole.HUMAN) & receiver_bad
    kept_good = np.select(
        [good_human, bad_human, receiver == AgentRole.GOOD_BOT, receiver == AgentRole.INFO_CORRECTION_BOT],
        [zero if state.disengaged else good_in, zero, good_in, both],
        default=0,
    )
    kept_bad = np.select(
        [good_human, bad_human, receiver == AgentRole.BAD_BOT],
        [bad_in, bad_in, both],
        default=0,
    )
    return np.stack([kept_good, kept_bad], axis=1)


def _propagate(state):
    p, rng = state.params, state.rng
    kept = _kept_for_relay(state)
    totals = np.stack([_per_receiver(state, kept[:, GOOD]), _per_receiver(state, kept[:, BAD])], axis=1)
    # outgoing edge f = ego -> alter; edge_rev[f] carries what ego got from that alter
    eligible = totals[state.edge_src]
    if p.echo_suppression:
        eligible = eligible - kept[state.edge_rev]
    delivered = rng.binomial(eligible, p.p_p)
    state.inbox_curr += delivered

    kinds = _relayer_kinds(state)[state.edge_src]
    by_kind = {}
    good_by_kind = np.bincount(kinds, weights=delivered[:, GOOD], minlength=len(RelayerKind))
    bad_by_kind = np.bincount(kinds, weights=delivered[:, BAD], minlength=len(RelayerKind))
    for kind in RelayerKind:
        by_kind[kind] = (int(good_by_kind[kind]), int(bad_by_kind[kind]))
    return delivered.sum(axis=0), by_kind


def _apply_memory_capacity(state):
    capacity = state.params.memory_capacity
    received = _per_receiver(state, state.inbox_curr.sum(axis=1))
    over = received > capacity
    if not over.any():
        return
    keep = np.where(over, capacity / np.maximum(received, 1), 1.0)
    edges = np.flatnonzero(over[state.edge_dst])
    state.inbox_curr[edges] = state.rng.binomial(state.inbox_curr[edges], keep[state.edge_dst[edges]][:, None])
    logging.debug(f"Tick {state.tick + 1}: thinned receive buffers of {int(over.sum())} agents to ~{capacity} pieces")


def _update_states(state):
    p = state.params
    humans = state.humans
    good_now = humans & ~state.is_bad
    bad_now = humans & state.is_bad
    if p.flip_rule is FlipRule.NET:
        to_bad = good_now & (state.bad_consumed - state.good_consumed >= p.threshold_t)
        to_good = bad_now & (state.good_consumed - state.bad_consumed >= p.threshold_t)
    else:
        to_bad = good_now & (state.bad_consumed >= p.threshold_t)
        to_good = bad_now & (state.good_consumed >= p.threshold_t)
    flipped = to_bad | to_good
    state.is_bad = (state.is_bad | to_bad) & ~to_good
    state.bad_consumed[flipped] = 0
    state.good_consumed[flipped] = 0


def step(state):
    """Advance ``state`` by one tick and return that tick's statistics."""
    if state.terminated:
        raise SimulationStateError(f"simulation already terminated at tick {state.tick}")

    generated = _generate(state)
    good_consumed, bad_consumed = _consume(state)
    relayed, by_kind = _propagate(state)
    _apply_memory_capacity(state)
    _update_states(state)

    state.inbox_prev = state.inbox_curr
    state.inbox_curr = np.zeros_like(state.inbox_prev)
    state.tick += 1

    bad, good = state.bad_humans, state.good_humans
    outcome = state.outcome
    if outcome.bad_majority_tick is None and bad > good:
        outcome.bad_majority_tick = state.tick
    if outcome.all_bad_tick is None and bad == state.n_humans:
        outcome.all_bad_tick = state.tick
    outcome.ticks_run = state.tick
    outcome.final_good_humans = good
    outcome.final_bad_humans = bad

    return TickStats(
        tick=state.tick,
        good_humans=good,
        bad_humans=bad,
        good_generated=int(generated[GOOD]),
        bad_generated=int(generated[BAD]),
        good_consumed=good_consumed,
        bad_consumed=bad_consumed,
        good_relayed=int(relayed[GOOD]),
        bad_relayed=int(relayed[BAD]),
        relayed_by_kind=by_kind,
    )


class InvariantMonitor:
    """Checks the engine invariants after every tick of one run."""

    def __init__(self, state):
        self.role_histogram = state.role_histogram
        self.no_bad_source = state.role_histogram[AgentRole.BAD_BOT] == 0 and state.bad_humans == 0
        self._remember(state)

    def _remember(self, state):
        self.prev_is_bad = state.is_bad.copy()
        self.prev_bad_consumed = state.bad_consumed.copy()
        self.prev_good_consumed = state.good_consumed.copy()

    def check(self, state, stats):
        def fail(message):
            raise SimulationStateError(f"tick {state.tick}: {message}")

        by_kind = stats.relayed_by_kind
        if by_kind.get(RelayerKind.BAD_HUMAN, (0, 0))[GOOD]:
            fail("a Bad Human relayed Good pieces")
        if by_kind.get(RelayerKind.GOOD_BOT, (0, 0))[BAD]:
            fail("a Good Bot relayed Bad pieces")
        if by_kind.get(RelayerKind.INFO_CORRECTION_BOT, (0, 0))[BAD]:
            fail("an Info-Correction Bot relayed Bad pieces")
        if by_kind.get(RelayerKind.BAD_BOT, (0, 0))[GOOD]:
            fail("a Bad Bot relayed Good pieces")

        if _role_histogram(state.roles) != self.role_histogram:
            fail("role histogram changed")

        bots = ~state.humans
        if (state.bad_consumed < 0).any() or (state.good_consumed < 0).any():
            fail("negative consumption counter")
        if state.bad_consumed[bots].any() or state.good_consumed[bots].any() or state.is_bad[bots].any():
            fail("a Bot carries Human state")
        flipped = state.is_bad != self.prev_is_bad
        if state.bad_consumed[flipped].any() or state.good_consumed[flipped].any():
            fail("counters not reset after a flip")
        steady = ~flipped
        if (state.bad_consumed[steady] < self.prev_bad_consumed[steady]).any() or \
                (state.good_consumed[steady] < self.prev_good_consumed[steady]).any():
            fail("consumption counter decreased between flips")

        outcome = state.outcome
        if outcome.all_bad_tick is not None:
            if outcome.bad_majority_tick is None or outcome.all_bad_tick < outcome.bad_majority_tick:
                fail("all-bad tick precedes the bad-majority tick")
            if outcome.final_bad_humans != state.n_humans:
                fail("all-bad tick recorded while Good Humans remain")

        if self.no_bad_source:
            if state.inbox_prev[:, BAD].any() or state.inbox_curr[:, BAD].any() or state.is_bad.any():
                fail("Bad information appeared without any Bad source")
        self._remember(state)


def run_to_completion(state, check_invariants=False, on_tick=None):
    """Step until every Human is Bad or max_ticks is reached; return the outcome."""
    monitor = InvariantMonitor(state) if check_invariants else None
    while not state.terminated:
        stats = step(state)
        if monitor is not None:
            monitor.check(state, stats)
        if on_tick is not None:
            on_tick(stats)
    logging.debug(
        f"Run seed={state.params.seed} finished after {state.tick} ticks: "
        f"majority={state.outcome.bad_majority_tick} all_bad={state.outcome.all_bad_tick}"
    )
    return dataclasses.replace(state.outcome)


def run_simulation(params, check_invariants=False):
    """Initialise and run one simulation; returns (RunOutcome, [TickStats])."""
    history = []
    state = init_simulation(params)
    outcome = run_to_completion(state, check_invariants=check_invariants, on_tick=history.append)
    return outcome, history


def write_time_series_csv(history, path):
    frame = pd.DataFrame([s.as_row() for s in history], columns=list(TickStats.TIME_SERIES_COLUMNS))
    frame.to_csv(path, index=False)
