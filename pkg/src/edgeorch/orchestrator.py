"""Two-timescale control loop around the allocator and the placement engine.

A coarse slot spans a fixed number of fine slots.  At its start the virtual
queue absorbs the previous slot's transport spend relative to the budget;
during the slot every arriving request is priced and admitted online with
the queue length weighting transport against revenue; at its end the slot's
demand drives a placement refresh that takes effect for the next slot.

The queue update max(Q + C - budget, 0) telescopes into the usual guarantee:
time-average cost can exceed the budget by at most Q(T)/T.
"""

from dataclasses import dataclass, field

from .model import NearestResolver
from .placement import aggregate_demand


def update_virtual_queue(queue, cost, budget):
    """Backlog of transport spend beyond the long-run budget."""
    return max(queue + cost - budget, 0.0)


def drift_plus_penalty_value(v_weight, revenue, queue, cost, budget):
    """Per-slot value the control loop steers by: V*R(T) - Q(T)*(C(T) - budget)."""
    return v_weight * revenue - queue * (cost - budget)


@dataclass
class SlotReport:
    slot: int
    revenue: float
    cost: float
    queue: float              # queue length used while deciding this slot
    q_eff: float
    arrivals: int
    accepted: int
    dpp: float
    placement_objective: float
    placement_savings: float

    @property
    def acceptance(self):
        return self.accepted / self.arrivals if self.arrivals else 1.0


@dataclass
class OrchestratorState:
    queue: float = 0.0
    slot_index: int = 0
    prev_cost: float = 0.0
    total_revenue: float = 0.0
    total_cost: float = 0.0
    total_arrivals: int = 0
    total_accepted: int = 0
    queue_trace: list = field(default_factory=list)

    def effective_queue(self, score_mode):
        if score_mode == "q_coupled":
            return max(self.queue, 1.0)
        return 1.0


def run_coarse_slot(state, arrivals, allocator, place, placement, catalog,
                    scenario, window_hook=None):
    """Run one coarse slot end to end.

    arrivals: one list of requests per fine slot of this coarse slot.
    place: callable(DemandMatrix) -> (PlacementSolution or None, new profile).
    window_hook: optional callable(fine slot, requests, resolver, q_eff)
        invoked when each fine slot's pricing window closes.

    Returns (SlotReport, new placement, decisions, demand).
    """
    if state.slot_index > 0:
        state.queue = update_virtual_queue(state.queue, state.prev_cost,
                                           scenario.budget)
    q_eff = state.effective_queue(scenario.score_mode)
    resolver = NearestResolver(placement, scenario.topology, catalog)
    base = state.slot_index * scenario.fine_per_coarse
    revenue = 0.0
    cost = 0.0
    decisions = []
    accepted_pairs = []
    n_arrivals = 0
    for offset, batch in enumerate(arrivals):
        t = base + offset
        allocator.advance_fine_slot(t)
        for req in batch:
            n_arrivals += 1
            decision = allocator.decide(req, resolver, q_eff)
            decisions.append(decision)
            if decision.accepted:
                revenue += decision.revenue
                cost += decision.transport_cost
                accepted_pairs.append((req, decision.config))
        if window_hook is not None and batch:
            window_hook(t, list(batch), resolver, q_eff)

    demand = aggregate_demand(accepted_pairs, catalog, state.slot_index)
    solution, new_placement = place(demand)

    report = SlotReport(
        slot=state.slot_index,
        revenue=revenue,
        cost=cost,
        queue=state.queue,
        q_eff=q_eff,
        arrivals=n_arrivals,
        accepted=len(accepted_pairs),
        dpp=drift_plus_penalty_value(scenario.v_weight, revenue, state.queue,
                                     cost, scenario.budget),
        placement_objective=solution.objective if solution else 0.0,
        placement_savings=solution.savings if solution else 0.0,
    )
    state.queue_trace.append(state.queue)
    state.prev_cost = cost
    state.slot_index += 1
    state.total_revenue += revenue
    state.total_cost += cost
    state.total_arrivals += n_arrivals
    state.total_accepted += len(accepted_pairs)
    return report, new_placement, decisions, demand
