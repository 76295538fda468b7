"""Residue-push kernels for restart walks over the implicit two-hop graph.

All kernels maintain a ledger of per-node residues and settled estimates.
The backward family (selective_push, ss_push) answers "how often does a walk
from u_i land on the fixed target u": each round settles alpha times the
residue of every over-threshold U-node into its estimate and scatters the
remaining (1-alpha) share onto incident V-nodes, normalized by the receiving
node's weight sum; V-nodes then flush their whole residue back to U the same
way, without the (1-alpha) factor, because no restart decision happens
mid-hop. The conservation law

    true(i) = estimate(i) + sum_j true(j) * residue_u(j)

holds at every round boundary (V residues zero) and is what the tests probe.

ss_push adds an operation budget: once the settled work n_p (degree sum of
every node pushed so far) exceeds 2|E| log_{1/(1-alpha)}(1 / residue mass),
thresholded pushing has stopped paying for itself and the kernel switches to
full sequential rounds that push every positive residue. pi_push reuses the
same machinery to answer the forward question "where does a walk from u
land", exploiting the reversibility of the two-hop chain: backward residues
and estimates convert to forward ones through the weight-sum ratio
ws(u_i)/ws(u), so it continues pushing the seed ledger under per-node
thresholds ws(u)/ws(u_i) * eps_f/lambda, and on budget exhaustion finishes
the transformed residues with power iterations.

Cost model: every push adds the pushed node's degree to n_p, and the
kernels' actual work is proportional to n_p. Rounds run over the whole
active set at once. This is exact, not approximate: a U-push only writes
V residues and vice versa, so within a round the qualifying set is fixed
and any processing order produces the same sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Gather/scatter when the active rows hold under this fraction of all edges;
# full sparse mat-vec otherwise. Any positive fraction is correct; this one
# keeps per-round cost tracking n_p instead of |E|.
_SCATTER_LIMIT = 0.25


@dataclass
class ResidueLedger:
    """Mutable push state: residues on both sides, settled estimates on U,
    and the monotone operation counter n_p."""

    residue_u: np.ndarray
    residue_v: np.ndarray
    estimate: np.ndarray
    n_p: int = 0

    @classmethod
    def initial(cls, g, target_u: int) -> "ResidueLedger":
        if not 0 <= target_u < g.u_count:
            raise ValueError(f"node index {target_u} out of range")
        r_u = np.zeros(g.u_count)
        r_u[target_u] = 1.0
        return cls(r_u, np.zeros(g.v_count), np.zeros(g.u_count), 0)

    def active_u(self, threshold) -> np.ndarray:
        """U nodes whose residue strictly exceeds the threshold (scalar or
        per-node vector). Sorted, duplicate-free by construction."""
        return np.flatnonzero(self.residue_u > threshold)

    def active_v(self) -> np.ndarray:
        """V nodes holding positive residue. Sorted, duplicate-free."""
        return np.flatnonzero(self.residue_v > 0.0)


@dataclass
class PushOutcome:
    """Result of one kernel run. `scores` is set by forward kernels only."""

    ledger: ResidueLedger
    phase_trace: dict
    terminated_by: str
    scores: np.ndarray | None = None


def required_iterations(alpha: float, epsilon_f: float, mass: float) -> int:
    """Power-iteration depth t with truncation deficit at most epsilon_f.

    The dropped tail after t rounds is (1-alpha)^(t+1) * mass, so
    t = max(0, ceil(log_{1/(1-alpha)}(mass / epsilon_f)) - 1).
    """
    _check_alpha(alpha)
    if epsilon_f <= 0:
        raise ValueError("epsilon_f must be positive")
    if mass <= 0:
        return 0
    return max(
        0, math.ceil(math.log(mass / epsilon_f) / math.log(1.0 / (1.0 - alpha))) - 1
    )


def power_iteration(g, start: np.ndarray, alpha: float, t: int) -> np.ndarray:
    """Truncated restart-walk series from the start distribution.

    Returns alpha * sum_{l=0..t} (1-alpha)^l start P^l without forming P:
    each term routes through the V side via the two transition factors.
    """
    _check_alpha(alpha)
    if t < 0:
        raise ValueError("iteration count must be nonnegative")
    base = np.asarray(start, dtype=np.float64)
    if base.shape != (g.u_count,):
        raise ValueError("start vector length must match the U side")
    acc = base.copy()
    for _ in range(int(t)):
        mid = g.u_step_t @ acc
        acc = base + (1.0 - alpha) * (g.v_step_t @ mid)
    return alpha * acc


def selective_push(g, target_u: int, alpha: float, epsilon_b: float, round_hook=None) -> PushOutcome:
    """Backward pushing until every U residue is at most epsilon_b.

    Estimates settle only upward; at exit 0 <= true - estimate <= epsilon_b
    entrywise for the target's incoming scores.
    """
    _check_alpha(alpha)
    if epsilon_b <= 0:
        raise ValueError("epsilon_b must be positive")
    led = ResidueLedger.initial(g, target_u)
    rounds = 0
    while True:
        rounds += _round(g, led, epsilon_b, alpha)
        if round_hook is not None:
            round_hook("selective", rounds, led)
        if not (led.residue_u > epsilon_b).any():
            trace = {
                "selective_rounds": rounds,
                "sequential_rounds": 0,
                "power_iterations": 0,
                "n_p": led.n_p,
            }
            return PushOutcome(led, trace, "threshold-met")


def ss_push(g, target_u: int, alpha: float, epsilon_b: float, round_hook=None) -> PushOutcome:
    """Budgeted backward pushing: selective rounds, then sequential fallback.

    Selective rounds run as in selective_push; at each round boundary, if all
    residues cleared the threshold the kernel returns, otherwise it compares
    n_p against 2|E| log_{1/(1-alpha)}(1 / residue mass) and on exhaustion
    switches to sequential rounds (threshold zero) until either every residue
    or the total mass is at most epsilon_b. Either way the exit guarantees
    max residue <= epsilon_b, hence the epsilon_b accuracy of the estimates.
    """
    _check_alpha(alpha)
    if epsilon_b <= 0:
        raise ValueError("epsilon_b must be positive")
    led = ResidueLedger.initial(g, target_u)
    log_decay = math.log(1.0 / (1.0 - alpha))
    budget_scale = 2.0 * g.edge_count
    sel_rounds = 0
    seq_rounds = 0
    terminated = None
    while True:
        sel_rounds += _round(g, led, epsilon_b, alpha)
        if round_hook is not None:
            round_hook("selective", sel_rounds, led)
        if not (led.residue_u > epsilon_b).any():
            terminated = "threshold-met"
            break
        mass = float(led.residue_u.sum())
        if mass <= 0.0:
            # Defensive: zero mass also satisfies the threshold check above.
            terminated = "mass-drained"
            break
        if led.n_p >= budget_scale * (math.log(1.0 / mass) / log_decay):
            break
    if terminated is None:
        # Sequential rounds: push every positive residue, no thresholding.
        while (led.residue_u > epsilon_b).any() and led.residue_u.sum() > epsilon_b:
            seq_rounds += _round(g, led, 0.0, alpha)
            if round_hook is not None:
                round_hook("sequential", seq_rounds, led)
        terminated = "budget-switch"
    trace = {
        "selective_rounds": sel_rounds,
        "sequential_rounds": seq_rounds,
        "power_iterations": 0,
        "n_p": led.n_p,
    }
    return PushOutcome(led, trace, terminated)


def pi_push(g, source_u: int, alpha: float, lam: float, epsilon_f: float, seed_ledger: ResidueLedger, round_hook=None) -> PushOutcome:
    """Forward scores for source_u from a flushed backward ledger.

    Continues pushing the seed ledger (mutating it) under per-node residue
    thresholds ws(u)/ws(u_i) * epsilon_f / lam. On threshold exit the forward
    scores are the transformed estimates ws(u_i)/ws(u) * estimate(u_i); on
    budget exhaustion the still-transformed residues are finished with power
    iterations deep enough to keep the dropped tail under epsilon_f.

    lam must upper-bound every column sum of the hidden walk-score matrix for
    the epsilon_f guarantee (0 <= true - score <= epsilon_f) to hold.
    """
    _check_alpha(alpha)
    if epsilon_f <= 0:
        raise ValueError("epsilon_f must be positive")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if not 0 <= source_u < g.u_count:
        raise ValueError(f"node index {source_u} out of range")
    led = seed_ledger
    if (led.residue_v != 0.0).any():
        raise ValueError(
            "unflushed ledger: V-side residues must be zero at the forward handoff"
        )

    ws = g.ws_u
    w_ratio = ws / ws[source_u]
    theta = (ws[source_u] / ws) * (epsilon_f / lam)
    gamma = float((w_ratio * led.residue_u).sum())  # frozen at entry
    n_p_entry = led.n_p
    log_decay = math.log(1.0 / (1.0 - alpha))
    budget_scale = 2.0 * g.edge_count

    sel_rounds = 0
    power_iters = 0
    terminated = None
    while True:
        sel_rounds += _round(g, led, theta, alpha)
        if round_hook is not None:
            round_hook("forward-selective", sel_rounds, led)
        if not (led.residue_u > theta).any():
            terminated = "threshold-met"
            break
        wmass = float((w_ratio * led.residue_u).sum())
        if wmass <= 0.0:
            terminated = "mass-drained"
            break
        budget = budget_scale * (math.log(gamma / wmass) / log_decay)
        if led.n_p - n_p_entry >= budget:
            break

    scores = w_ratio * led.estimate
    if terminated is None:
        fwd_residue = w_ratio * led.residue_u
        power_iters = required_iterations(alpha, epsilon_f, float(fwd_residue.sum()))
        scores = scores + power_iteration(g, fwd_residue, alpha, power_iters)
        terminated = "budget-switch"
    trace = {
        "selective_rounds": sel_rounds,
        "sequential_rounds": 0,
        "power_iterations": power_iters,
        "n_p": led.n_p,
        "gamma": gamma,
    }
    return PushOutcome(led, trace, terminated, scores=scores)


# -- round primitives ---------------------------------------------------------


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")


def _row_slots(indptr, rows, deg):
    """Global CSR slot indices of all edges incident to the given rows."""
    counts = deg[rows]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    bounds = np.concatenate(([0], np.cumsum(counts)))
    flat = np.arange(total, dtype=np.int64)
    return flat - np.repeat(bounds[:-1], counts) + np.repeat(indptr[rows], counts)


def _round(g, led: ResidueLedger, threshold, alpha: float) -> int:
    """One boundary-to-boundary round: push over-threshold U nodes, then
    flush all positive V residues. Returns 1 if any work happened."""
    worked = 0
    uidx = led.active_u(threshold)
    if uidx.size:
        _push_u(g, led, uidx, alpha)
        worked = 1
    if led.active_v().size:
        _flush_v(g, led)
        worked = 1
    return worked


def _push_u(g, led: ResidueLedger, uidx: np.ndarray, alpha: float) -> None:
    amounts = led.residue_u[uidx]
    deg_sum = int(g.deg_u[uidx].sum())
    if deg_sum <= _SCATTER_LIMIT * g.edge_count:
        slots = _row_slots(g.u_indptr, uidx, g.deg_u)
        contrib = (1.0 - alpha) * g.recv_uv[slots] * np.repeat(amounts, g.deg_u[uidx])
        led.residue_v += np.bincount(
            g.u_indices[slots], weights=contrib, minlength=g.v_count
        )
    else:
        dense = np.zeros(g.u_count)
        dense[uidx] = amounts
        led.residue_v += (1.0 - alpha) * (g.v_step @ dense)
    led.estimate[uidx] += alpha * amounts
    led.residue_u[uidx] = 0.0
    led.n_p += deg_sum


def _flush_v(g, led: ResidueLedger) -> None:
    vidx = led.active_v()
    deg_sum = int(g.deg_v[vidx].sum())
    if deg_sum <= _SCATTER_LIMIT * g.edge_count:
        slots = _row_slots(g.v_indptr, vidx, g.deg_v)
        contrib = g.recv_vu[slots] * np.repeat(led.residue_v[vidx], g.deg_v[vidx])
        led.residue_u += np.bincount(
            g.v_indices[slots], weights=contrib, minlength=g.u_count
        )
    else:
        led.residue_u += g.u_step @ led.residue_v
    led.residue_v[:] = 0.0
    led.n_p += deg_sum
