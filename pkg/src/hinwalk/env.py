"""The walk over the schema graph: states, actions (with STAY), transitions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .graph import Query, SchemaGraph
from .metapath import MetaPath

STAY = -1


@dataclass(frozen=True)
class State:
    current_type: int
    query: Query
    step: int = 0
    # whether any non-STAY action has been taken yet
    moved: bool = False


@dataclass(frozen=True)
class Action:
    relation: int
    dst_type: int

    @property
    def is_stay(self) -> bool:
        return self.relation == STAY


@dataclass
class Trajectory:
    query: Query
    steps: list = field(default_factory=list)  # (State, Action, log-prob)
    arrived: int = 0

    def actions(self) -> list[Action]:
        return [a for _, a, _ in self.steps]

    def log_prob(self) -> float:
        return float(sum(lp for _, _, lp in self.steps))


class SchemaEnv:
    """Deterministic MDP on a schema graph.

    ``mask_direct`` removes the one-hop (r_q, t_tgt) action while the agent is
    still at the source without having moved; that path would only restate
    the query relation.
    """

    def __init__(self, schema: SchemaGraph, n_types: int, n_relations: int,
                 max_hops: int = 4, mask_direct: bool = True):
        if max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        self.schema = schema
        self.n_types = n_types
        self.n_relations = n_relations
        self.max_hops = max_hops
        self.mask_direct = mask_direct
        self._table = None

    # embedding-row index of the STAY pseudo-relation; START is one past it
    @property
    def stay_index(self) -> int:
        return self.n_relations

    @property
    def start_index(self) -> int:
        return self.n_relations + 1

    def reset(self, q: Query) -> State:
        return State(current_type=q.src_type, query=q, step=0, moved=False)

    def is_terminal(self, s: State) -> bool:
        return s.step >= self.max_hops

    def _masked(self, s: State, r: int, dst: int) -> bool:
        q = s.query
        return self.mask_direct and not s.moved and r == q.relation and dst == q.tgt_type

    def candidate_actions(self, s: State) -> list[Action]:
        out = [Action(r, dst) for r, dst in self.schema.out_edges(s.current_type)
               if not self._masked(s, r, dst)]
        out.append(Action(STAY, s.current_type))
        return out

    def step(self, s: State, a: Action) -> State:
        if self.is_terminal(s):
            raise ContractError(f"episode already terminal at step {s.step}")
        if a.is_stay:
            if a.dst_type != s.current_type:
                raise ContractError("STAY must keep the current type")
        elif not self.schema.has_edge(s.current_type, a.relation, a.dst_type) or \
                self._masked(s, a.relation, a.dst_type):
            raise ContractError(f"illegal action {a} from type {s.current_type}")
        return State(current_type=a.dst_type, query=s.query, step=s.step + 1,
                     moved=s.moved or not a.is_stay)

    # -- vectorised view ----------------------------------------------------
    def candidate_table(self):
        """Padded per-type candidate arrays ``(rel, dst, valid)``.

        Row ``t`` lists the outgoing edges of type ``t`` in (relation, dst)
        order followed by STAY (relation column holds ``stay_index``). The
        direct-edge mask is query dependent and applied by the caller.
        """
        if self._table is None:
            rows = []
            for t in range(self.n_types):
                row = list(self.schema.out_edges(t)) + [(self.stay_index, t)]
                rows.append(row)
            width = max(len(r) for r in rows)
            rel = np.zeros((self.n_types, width), dtype=np.int64)
            dst = np.zeros((self.n_types, width), dtype=np.int64)
            valid = np.zeros((self.n_types, width), dtype=bool)
            for t, row in enumerate(rows):
                for j, (r, d) in enumerate(row):
                    rel[t, j], dst[t, j], valid[t, j] = r, d, True
            self._table = (rel, dst, valid)
        return self._table

    def action_from_table(self, rel: int, dst: int) -> Action:
        return Action(STAY if rel == self.stay_index else int(rel), int(dst))


def trajectory_to_metapath(tr: Trajectory) -> MetaPath | None:
    types = [tr.query.src_type]
    rels = []
    for _, a, _ in tr.steps:
        if a.is_stay:
            continue
        rels.append(a.relation)
        types.append(a.dst_type)
    if not rels:
        return None
    return MetaPath(tuple(types), tuple(rels))


def actions_to_metapath(src_type: int, actions) -> MetaPath | None:
    types, rels = [src_type], []
    for a in actions:
        if not a.is_stay:
            rels.append(a.relation)
            types.append(a.dst_type)
    return MetaPath(tuple(types), tuple(rels)) if rels else None
