"""Sequential better-response update for the routing game.

Each agent looks for the swap ``(to_slot, from_slot, to_path, from_path)``
with the largest gain, moves a bounded amount of data along it, and the
next agent sees the updated prices. ``population_update`` runs this sweep
through the compiled kernel when available; the per-agent functions here
are the readable reference the kernel is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernel
from .errors import ContractError
from .model import Game, link_loads, path_price, window_instances

#: Gains and swap amounts at or below this are treated as zero.
DEADBAND = 1e-12


class SwapTuple(NamedTuple):
    to_slot: int
    from_slot: int
    to_path: int
    from_path: int


def availability_pairs_base(t1: int, t2: int, period: int) -> set[tuple[int, int]]:
    """``S x S`` with ``S = {t1..t2} ∩ {0..T-1}``."""
    s = range(max(t1, 0), min(t2, period - 1) + 1)
    return {(a, b) for a in s for b in s}


def availability_set(offset: int, eta: int, phase: int, period: int) -> set[tuple[int, int]]:
    """Slot pairs an agent may swap between at ``phase``.

    The union over the three shifted window images; both slots of a pair
    always come from the same image.
    """
    pairs: set[tuple[int, int]] = set()
    for shift in (-period, 0, period):
        lo = offset - phase + shift
        pairs |= availability_pairs_base(lo, lo + eta, period)
    return pairs


def tagged_availability(offset: int, eta: int, phase: int, period: int) -> dict[tuple[int, int], int]:
    """Map each available pair to the shift of the window image it came from."""
    out = {}
    for shift in (-period, 0, period):
        lo = offset - phase + shift
        for pair in availability_pairs_base(lo, lo + eta, period):
            if pair in out:
                raise AssertionError(f"pair {pair} generated by two window images")
            out[pair] = shift
    return out


def _candidates(agent, phase: int, period: int):
    """Candidate tuples in lexicographic (to_slot, from_slot, to_path, from_path) order."""
    paths = agent.path_ids
    for a, b, _ in window_instances(agent.offset, agent.eta, phase, period):
        for tb in range(a, b + 1):
            for tu in range(a, b + 1):
                for pb in paths:
                    for pu in paths:
                        if tb == tu and pb == pu:
                            continue
                        yield SwapTuple(tb, tu, pb, pu)


def _prices(x: np.ndarray, game: Game, phase: int):
    lam = link_loads(x, game, phase)
    net, price = game.network, game.price
    return lambda tau, p: path_price(lam[tau], p, net, price)


def swap_gain(x: np.ndarray, i: int, s: SwapTuple, game: Game, phase: int = 0, prices=None) -> float:
    """Price gap times spare capacity on the target times mass on the source."""
    price_of = prices or _prices(x, game, phase)
    mu = game.agents[i].mu
    gap = price_of(s.from_slot, s.from_path) - price_of(s.to_slot, s.to_path)
    return gap * (mu - x[i, s.to_slot, s.to_path]) * x[i, s.from_slot, s.from_path]


def swap_amount(x: np.ndarray, i: int, s: SwapTuple, game: Game, phase: int = 0, prices=None) -> float:
    """Amount moved by a swap.

    The first cap keeps the source at least as expensive as the target
    afterwards; the other two keep the plan inside ``[0, mu]``.
    """
    price_of = prices or _prices(x, game, phase)
    mu = game.agents[i].mu
    net = game.network
    gap = price_of(s.from_slot, s.from_path) - price_of(s.to_slot, s.to_path)
    hops = float(net.path_len[s.to_path] + net.path_len[s.from_path])
    order_cap = max(gap / (game.price.kappa * hops), 0.0)
    return min(order_cap, mu - x[i, s.to_slot, s.to_path], x[i, s.from_slot, s.from_path])


def apply_swap(x: np.ndarray, i: int, s: SwapTuple, delta: float, mu: float) -> np.ndarray:
    """Return a copy of ``x`` with ``delta`` moved from (from_slot, from_path) to (to_slot, to_path)."""
    src = x[i, s.from_slot, s.from_path]
    dst = x[i, s.to_slot, s.to_path]
    if not 0.0 <= delta <= min(mu - dst, src):
        raise ContractError(f"swap amount {delta} outside [0, {min(mu - dst, src)}]")
    y = x.copy()
    if delta == 0.0:
        return y
    y[i, s.to_slot, s.to_path] = min(dst + delta, mu)
    y[i, s.from_slot, s.from_path] = max(src - delta, 0.0)
    return y


def best_swaps(x: np.ndarray, i: int, phase: int, game: Game) -> tuple[float, list[SwapTuple]]:
    """All tuples of maximal gain, for the (already advanced) ``phase``.

    Returns ``(max_gain, maximizers)`` with maximizers in lexicographic order;
    ``(-inf, [])`` when the agent has no candidate tuple.
    """
    agent = game.agents[i]
    prices = _prices(x, game, phase)
    best, found = -np.inf, []
    for s in _candidates(agent, phase, game.period):
        g = swap_gain(x, i, s, game, phase, prices)
        if g > best:
            best, found = g, [s]
        elif g == best:
            found.append(s)
    return best, found


def agent_update(x: np.ndarray, i: int, theta: int, game: Game) -> np.ndarray:
    """One better-response move of agent ``i``; ``theta`` is the pre-rotation phase.

    The plan ``x`` is assumed already rotated, so swaps are restricted to the
    window images at ``(theta + 1) % T``. Returns ``x`` unchanged (as a copy)
    for inactive agents or when no tuple gains more than :data:`DEADBAND`.
    """
    agent = game.agents[i]
    if not agent.active or not agent.path_ids:
        return x.copy()
    phase = (theta + 1) % game.period
    gain, tuples = best_swaps(x, i, phase, game)
    if not tuples or not gain > DEADBAND:
        return x.copy()
    s = tuples[0]
    prices = _prices(x, game, phase)
    delta = swap_amount(x, i, s, game, phase, prices)
    if not delta > 0.0:
        return x.copy()
    return apply_swap(x, i, s, delta, agent.mu)


@dataclass(frozen=True)
class KernelPack:
    """Flat arrays describing a game, in the layout the sweep kernels take."""

    active: np.ndarray
    mu: np.ndarray
    offset: np.ndarray
    eta: np.ndarray
    apath_ptr: np.ndarray
    apath_idx: np.ndarray
    plink_ptr: np.ndarray
    plink_idx: np.ndarray
    plen: np.ndarray
    price_kind: int
    slope: float
    bx: np.ndarray
    by: np.ndarray
    bslopes: np.ndarray
    kappa: float


def pack_game(game: Game) -> KernelPack:
    cached = game.__dict__.get("_kernel_pack")
    if cached is not None:
        return cached
    agents, net, price = game.agents, game.network, game.price
    apath_ptr = np.zeros(len(agents) + 1, dtype=np.int64)
    apath_ptr[1:] = np.cumsum([len(a.path_ids) for a in agents])
    plink_ptr = np.zeros(net.n_paths + 1, dtype=np.int64)
    plink_ptr[1:] = np.cumsum([len(p) for p in net.paths])
    pack = KernelPack(
        active=np.array([a.active for a in agents], dtype=np.int8),
        mu=np.array([a.mu for a in agents], dtype=np.float64),
        offset=np.array([a.offset for a in agents], dtype=np.int64),
        eta=np.array([a.eta for a in agents], dtype=np.int64),
        apath_ptr=apath_ptr,
        apath_idx=np.array([p for a in agents for p in a.path_ids], dtype=np.int64),
        plink_ptr=plink_ptr,
        plink_idx=np.array([l for p in net.paths for l in p], dtype=np.int64),
        plen=np.asarray(net.path_len, dtype=np.int64),
        price_kind=0 if price.kind == "linear" else 1,
        slope=float(price.slope),
        bx=np.ascontiguousarray(price.xs, dtype=np.float64),
        by=np.ascontiguousarray(price.ys, dtype=np.float64),
        bslopes=np.ascontiguousarray(price.slopes, dtype=np.float64),
        kappa=price.kappa,
    )
    object.__setattr__(game, "_kernel_pack", pack)
    return pack


def population_update(
    x: np.ndarray, theta: int, gamma: int, game: Game, backend: str | None = None
) -> np.ndarray:
    """``gamma`` sequential sweeps of :func:`agent_update` over agents ``0..N-1``.

    ``x`` is the rotated plan and ``theta`` the pre-rotation phase. Prices
    are refreshed after every single agent move. Returns a new array.
    """
    if gamma < 1:
        raise ContractError("gamma must be a positive integer")
    game.check_shape(x)
    phase = (theta + 1) % game.period
    y = np.array(x, dtype=np.float64, order="C", copy=True)
    if game.n_agents == 0 or game.network.n_paths == 0:
        return y
    k = pack_game(game)
    sweep = _kernel.get_sweep(backend)
    for _ in range(gamma):
        # fresh loads each sweep, so gamma sweeps equal gamma separate calls bit for bit
        lam = np.ascontiguousarray(link_loads(y, game, phase))
        sweep(
            y, lam, k.active, k.mu, k.offset, k.eta, k.apath_ptr, k.apath_idx,
            k.plink_ptr, k.plink_idx, k.plen, k.price_kind, k.slope, k.bx, k.by,
            k.bslopes, k.kappa, phase, game.period, 1, DEADBAND,
        )
    return y
