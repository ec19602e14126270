"""Schedule construction: minimize modeled latency under the buffer constraint.

A layer's schedule is found by enumerating candidate ifmap tiles and, for
each tile, packing filters into rounds. Packing is a 0/1 knapsack over
(filter group, output filter) items solved exactly by dynamic programming
over integer element weights; because every filter must eventually run,
the packer is applied repeatedly until all items are consumed. ILAR mode
lets one round mix filters from different sub-kernels so they share the
resident ifmap tile; CONV_R mode packs each sub-kernel separately, which
is also the only mode meaningful for plain convolutions. The reuse order
beta is chosen per layer as the argmin of total modeled latency.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .deconv import SubKernelSet
from .perfmodel import (
    HardwareConfig,
    InfeasibleScheduleError,
    LatencyReport,
    LayerKind,
    LayerSpec,
    RoundPlan,
    TileSchedule,
    _groups_for,
    total_latency,
    validate_schedule,
)

__all__ = [
    "InfeasibleTileError",
    "KnapsackItem",
    "ModeComparison",
    "ScheduleMode",
    "SearchSpaceExceeded",
    "build_items",
    "compare_modes",
    "exhaustive",
    "pack_round",
    "solve",
]


class InfeasibleTileError(InfeasibleScheduleError):
    """No item fits the per-round capacity left by this ifmap tile."""


class SearchSpaceExceeded(RuntimeError):
    """The exhaustive search space is larger than the configured bound."""


class ScheduleMode(enum.Enum):
    CONV_R = "convr"
    ILAR = "ilar"


@dataclass(frozen=True)
class KnapsackItem:
    """One output filter of one filter group, as a knapsack item.

    weight is the buffer footprint of scheduling this filter in a round
    (its kernel elements plus its ofmap slice for the current tile);
    value is the MAC work it contributes on that tile.
    """

    group: int
    filter_index: int
    weight: int
    value: int

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError("item weight must be positive")
        if self.value < 0:
            raise ValueError("item value must be non-negative")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def build_items(
    layer: LayerSpec,
    kernel_set: SubKernelSet | None,
    tile,
    *,
    include_input_channels: bool = False,
) -> list[KnapsackItem]:
    """One item per (filter group, output filter) for the given ifmap tile."""
    groups = _groups_for(layer, kernel_set)
    if not groups:
        raise ValueError(f"layer {layer.name}: no filter groups to schedule")
    tile = tuple(int(t) for t in tile)
    tile_elems = math.prod(tile)
    of_share = _ceil_div(tile_elems, layer.stride**layer.rank)
    w_scale = layer.in_channels if include_input_channels else 1
    items = []
    for g, dims in enumerate(groups):
        weight = math.prod(dims) * w_scale + of_share
        value = math.prod(dims) * layer.in_channels * tile_elems
        for f in range(layer.out_channels):
            items.append(KnapsackItem(g, f, weight, value))
    return items


def _pack_counts(classes: list[tuple[int, int, int]], capacity: int) -> list[int]:
    """Exact bounded knapsack over (weight, value, count) classes.

    `classes` arrive in descending selection priority. Counts are split
    into binary bundles and processed lowest priority first, so the
    backtrack visits high-priority bundles first and keeps them on value
    ties.
    """
    taken = [0] * len(classes)
    pseudo = []  # (class index, bundle count, bundle weight, bundle value)
    for ci in range(len(classes) - 1, -1, -1):
        weight, value, count = classes[ci]
        chunk = 1
        while count > 0:
            take = min(chunk, count)
            pseudo.append((ci, take, weight * take, value * take))
            count -= take
            chunk *= 2
    dp = np.zeros(capacity + 1, dtype=np.int64)
    takes = np.zeros((len(pseudo), capacity + 1), dtype=bool)
    for i, (_, _, bw, bv) in enumerate(pseudo):
        if bw > capacity:
            continue
        candidate = dp[: capacity + 1 - bw] + bv
        keep = candidate >= dp[bw:]
        takes[i, bw:] = keep
        dp[bw:] = np.where(keep, candidate, dp[bw:])
    w = capacity
    for i in range(len(pseudo) - 1, -1, -1):
        ci, cnt, bw, _ = pseudo[i]
        if bw <= w and takes[i, w]:
            taken[ci] += cnt
            w -= bw
    return taken


def pack_round(items: list[KnapsackItem], capacity: int) -> list[KnapsackItem]:
    """Select a maximal-value subset of items fitting `capacity` elements.

    Exact 0/1 knapsack DP over integer weights. Ties are broken toward
    larger items (for layer-derived items, item value at a fixed tile is
    proportional to the sub-kernel footprint), then lower group index,
    then lower filter index. Raises InfeasibleTileError when nothing fits.
    """
    if not items:
        raise ValueError("no items to pack")
    capacity = int(capacity)
    if capacity < min(it.weight for it in items):
        raise InfeasibleTileError(
            f"capacity {capacity} holds no item (smallest weight "
            f"{min(it.weight for it in items)})"
        )
    if sum(it.weight for it in items) <= capacity:
        return list(items)
    members: dict[tuple[int, int, int], list[KnapsackItem]] = {}
    for it in sorted(items, key=lambda it: (it.group, it.filter_index)):
        members.setdefault((it.group, it.weight, it.value), []).append(it)
    keys = sorted(
        members,
        key=lambda k: (-k[2], -k[1], k[0], members[k][0].filter_index),
    )
    classes = [(k[1], k[2], len(members[k])) for k in keys]
    counts = _pack_counts(classes, capacity)
    selection = []
    for key, count in zip(keys, counts):
        selection.extend(members[key][:count])
    selection.sort(key=lambda it: (it.group, it.filter_index))
    return selection


def _axis_candidates(extent: int, min_extent: int) -> list[int]:
    values = {extent}
    for d in range(1, extent + 1):
        if extent % d == 0:
            values.add(d)
    power = 1
    while power < extent:
        values.add(power)
        power *= 2
    return sorted(v for v in values if v >= min_extent)


def _tile_candidates(layer: LayerSpec, groups) -> list[tuple[int, ...]]:
    """Divisors of each ifmap extent plus powers of two clipped to it."""
    per_axis = []
    for axis, extent in enumerate(layer.ifmap):
        min_extent = max(dims[axis] for dims in groups)
        if min_extent > extent:
            raise InfeasibleScheduleError(
                f"layer {layer.name}: filter-group extent {min_extent} exceeds "
                f"ifmap extent {extent} on axis {axis}"
            )
        per_axis.append(_axis_candidates(extent, min_extent))
    return [tuple(tile) for tile in itertools.product(*per_axis)]


def _tile_shapes(layer: LayerSpec, tile) -> list[tuple[tuple[int, ...], int]]:
    """Distinct clipped tile shapes over the origin grid, with multiplicities."""
    per_axis = []
    for extent, t in zip(layer.ifmap, tile):
        options = []
        if extent // t:
            options.append((t, extent // t))
        if extent % t:
            options.append((extent % t, 1))
        per_axis.append(options)
    shapes = []
    for combo in itertools.product(*per_axis):
        shape = tuple(c[0] for c in combo)
        mult = math.prod(c[1] for c in combo)
        shapes.append((shape, mult))
    return shapes


def _evaluate_parts(
    layer: LayerSpec,
    groups,
    tile,
    parts,
    beta: int,
    hw: HardwareConfig,
    include_input_channels: bool,
) -> int:
    """Total cycles when `parts` runs at every origin of the tile grid."""
    in_ch = layer.in_channels
    stride_vol = layer.stride**layer.rank
    w_scale = in_ch if include_input_channels else 1
    group_sizes = [math.prod(d) for d in groups]
    total = 0
    for shape, mult in _tile_shapes(layer, tile):
        tile_elems = math.prod(shape)
        d_if = tile_elems * in_ch
        origin_cycles = 0
        for part in parts:
            l_c = 0
            of_sum = 0
            w_sum = 0
            for size, c in zip(group_sizes, part):
                if not c:
                    continue
                l_c += _ceil_div(size * in_ch * c * tile_elems, hw.pe_count)
                of_sum += _ceil_div(tile_elems * c, stride_vol)
                w_sum += size * c * w_scale
            if math.isinf(hw.bandwidth):
                l_m = 0
            else:
                traffic = d_if + of_sum if beta == 1 else w_sum + of_sum
                l_m = math.ceil(traffic / hw.bandwidth) if traffic else 0
            origin_cycles += max(l_c, l_m)
        total += mult * origin_cycles
    return total


def _origins(layer: LayerSpec, tile):
    return itertools.product(*(range(0, extent, t) for extent, t in zip(layer.ifmap, tile)))


def _materialize(layer: LayerSpec, tile, parts, beta: int) -> TileSchedule:
    rounds = []
    for origin in _origins(layer, tile):
        shape = tuple(
            min(t, extent - o) for o, t, extent in zip(origin, tile, layer.ifmap)
        )
        for part in parts:
            rounds.append(RoundPlan(origin, shape, part))
    return TileSchedule(beta, tuple(rounds))


def _round_capacity(layer: LayerSpec, tile, hw: HardwareConfig) -> int:
    return hw.usable_buffer - math.prod(tile) * layer.in_channels


def _pack_tile(
    layer: LayerSpec,
    kernel_set: SubKernelSet | None,
    tile,
    hw: HardwareConfig,
    mode: ScheduleMode,
    include_input_channels: bool,
) -> list[tuple[int, ...]]:
    """Filter-count vectors, one per round, consuming every filter once."""
    items = build_items(
        layer, kernel_set, tile, include_input_channels=include_input_channels
    )
    n_groups = max(it.group for it in items) + 1
    capacity = _round_capacity(layer, tile, hw)
    parts: list[tuple[int, ...]] = []
    if mode is ScheduleMode.CONV_R:
        for g in range(n_groups):
            remaining = [it for it in items if it.group == g]
            while remaining:
                selected = pack_round(remaining, capacity)
                counts = [0] * n_groups
                counts[g] = len(selected)
                parts.append(tuple(counts))
                chosen = {(it.group, it.filter_index) for it in selected}
                remaining = [
                    it for it in remaining if (it.group, it.filter_index) not in chosen
                ]
    else:
        remaining = list(items)
        while remaining:
            selected = pack_round(remaining, capacity)
            counts = [0] * n_groups
            for it in selected:
                counts[it.group] += 1
            parts.append(tuple(counts))
            chosen = {(it.group, it.filter_index) for it in selected}
            remaining = [
                it for it in remaining if (it.group, it.filter_index) not in chosen
            ]
    return parts


def _tile_lower_bound(
    layer: LayerSpec,
    groups,
    tile,
    hw: HardwareConfig,
    mode: ScheduleMode,
    include_input_channels: bool,
) -> int:
    """Cheap cycle lower bound for any schedule built on this tile."""
    in_ch = layer.in_channels
    out_ch = layer.out_channels
    ifmap_elems = math.prod(layer.ifmap)
    group_sizes = [math.prod(d) for d in groups]
    total_macs = sum(group_sizes) * in_ch * out_ch * ifmap_elems
    lb = _ceil_div(total_macs, hw.pe_count)
    if math.isinf(hw.bandwidth):
        return lb
    stride_vol = layer.stride**layer.rank
    w_scale = in_ch if include_input_channels else 1
    of_floor = (ifmap_elems * out_ch * len(groups)) // stride_vol
    capacity = _round_capacity(layer, tile, hw)
    tile_elems = math.prod(tile)
    of_share = _ceil_div(tile_elems, stride_vol)
    if capacity <= 0:
        return lb
    if mode is ScheduleMode.CONV_R:
        rounds_min = sum(
            _ceil_div((size * w_scale + of_share) * out_ch, capacity)
            for size in group_sizes
        )
    else:
        item_total = sum((size * w_scale + of_share) * out_ch for size in group_sizes)
        rounds_min = _ceil_div(item_total, capacity)
    n_origins = math.prod(_ceil_div(e, t) for e, t in zip(layer.ifmap, tile))
    beta1 = rounds_min * ifmap_elems * in_ch + of_floor
    beta0 = n_origins * sum(group_sizes) * out_ch * w_scale + of_floor
    lb_mem = math.ceil(min(beta1, beta0) / hw.bandwidth)
    return max(lb, lb_mem)


def _check_mode(layer: LayerSpec, kernel_set: SubKernelSet | None, mode: ScheduleMode):
    if mode is ScheduleMode.ILAR and layer.kind is not LayerKind.DECONV:
        raise ValueError("ILAR applies only to transformed deconvolution layers")
    if layer.kind is LayerKind.DECONV and kernel_set is None:
        raise ValueError(f"layer {layer.name}: scheduling a deconvolution needs its SubKernelSet")


def solve(
    layer: LayerSpec,
    kernel_set: SubKernelSet | None,
    hw: HardwareConfig,
    mode: ScheduleMode,
    *,
    include_input_channels: bool = False,
) -> TileSchedule:
    """Greedy schedule: best tile from the candidate grid, packed round by round.

    For each candidate tile the packer consumes all items, the resulting
    round structure is applied at every tile origin, and beta is chosen
    as the per-layer argmin. Candidates are visited in lower-bound order
    so provably worse tiles are pruned. Deterministic for fixed inputs.
    """
    _check_mode(layer, kernel_set, mode)
    groups = _groups_for(layer, kernel_set)
    candidates = _tile_candidates(layer, groups)
    scored = sorted(
        (
            _tile_lower_bound(layer, groups, tile, hw, mode, include_input_channels),
            tile,
        )
        for tile in candidates
    )
    best = None
    for bound, tile in scored:
        if best is not None and bound >= best[0]:
            break
        capacity = _round_capacity(layer, tile, hw)
        if capacity <= 0:
            continue
        try:
            parts = _pack_tile(layer, kernel_set, tile, hw, mode, include_input_channels)
        except InfeasibleTileError:
            continue
        for beta in (1, 0):
            cycles = _evaluate_parts(
                layer, groups, tile, parts, beta, hw, include_input_channels
            )
            if best is None or cycles < best[0]:
                best = (cycles, tile, parts, beta)
    if best is None:
        raise InfeasibleScheduleError(
            f"layer {layer.name}: no candidate tile satisfies the buffer "
            f"capacity constraint (usable {hw.usable_buffer} elements)"
        )
    _, tile, parts, beta = best
    schedule = _materialize(layer, tile, parts, beta)
    validate_schedule(schedule, layer, hw, include_input_channels=include_input_channels)
    return schedule


def exhaustive(
    layer: LayerSpec,
    kernel_set: SubKernelSet | None,
    hw: HardwareConfig,
    mode: ScheduleMode = ScheduleMode.ILAR,
    *,
    max_candidates: int = 10**6,
    include_input_channels: bool = False,
) -> TileSchedule:
    """Global minimum-latency schedule over the bounded candidate space.

    Considers every candidate tile, every unordered partition of the
    filter counts into buffer-feasible rounds (single-group rounds only
    in CONV_R mode), and both reuse orders. Because latency is additive
    over rounds, the minimum over partitions is found exactly by dynamic
    programming on the remaining-filter vector; the bound caps the number
    of (remaining-filters, candidate-round) extensions explored and
    SearchSpaceExceeded is raised beyond it. Intended as a test oracle.
    """
    _check_mode(layer, kernel_set, mode)
    groups = _groups_for(layer, kernel_set)
    full = tuple(layer.out_channels for _ in groups)
    group_sizes = [math.prod(d) for d in groups]
    in_ch = layer.in_channels
    stride_vol = layer.stride**layer.rank
    w_scale = in_ch if include_input_channels else 1
    best = None
    explored = 0
    for tile in sorted(_tile_candidates(layer, groups)):
        shapes = _tile_shapes(layer, tile)
        tile_occ = math.prod(tile) * in_ch
        cost_cache: dict[tuple[int, ...], tuple[int, int] | None] = {}

        def part_costs(part, _shapes=shapes, _cache=cost_cache, _occ=tile_occ, _tile=tile):
            """(cycles at beta=1, cycles at beta=0) or None when infeasible."""
            hit = _cache.get(part, -1)
            if hit != -1:
                return hit
            occupancy = _occ
            for size, c in zip(group_sizes, part):
                if c:
                    occupancy += size * c * w_scale
                    occupancy += _ceil_div(math.prod(_tile) * c, stride_vol)
            if occupancy > hw.usable_buffer:
                _cache[part] = None
                return None
            beta1 = beta0 = 0
            for shape, mult in _shapes:
                tile_elems = math.prod(shape)
                l_c = of_sum = w_sum = 0
                for size, c in zip(group_sizes, part):
                    if not c:
                        continue
                    l_c += _ceil_div(size * in_ch * c * tile_elems, hw.pe_count)
                    of_sum += _ceil_div(tile_elems * c, stride_vol)
                    w_sum += size * c * w_scale
                if math.isinf(hw.bandwidth):
                    l_m1 = l_m0 = 0
                else:
                    d_if = tile_elems * in_ch
                    l_m1 = math.ceil((d_if + of_sum) / hw.bandwidth) if d_if + of_sum else 0
                    l_m0 = math.ceil((w_sum + of_sum) / hw.bandwidth) if w_sum + of_sum else 0
                beta1 += mult * max(l_c, l_m1)
                beta0 += mult * max(l_c, l_m0)
            _cache[part] = (beta1, beta0)
            return beta1, beta0

        def round_options(state):
            if mode is ScheduleMode.CONV_R:
                for g, avail in enumerate(state):
                    for c in range(1, avail + 1):
                        part = [0] * len(state)
                        part[g] = c
                        yield tuple(part)
            else:
                for part in itertools.product(*(range(c + 1) for c in state)):
                    if any(part):
                        yield part

        states = sorted(
            itertools.product(*(range(c + 1) for c in full)),
            key=lambda v: (sum(v), v),
        )
        dp: dict[int, dict[tuple[int, ...], int]] = {1: {states[0]: 0}, 0: {states[0]: 0}}
        parent: dict[int, dict[tuple[int, ...], tuple[int, ...]]] = {1: {}, 0: {}}
        for state in states[1:]:
            for part in round_options(state):
                explored += 1
                if explored > max_candidates:
                    raise SearchSpaceExceeded(
                        f"more than {max_candidates} candidate extensions"
                    )
                costs = part_costs(part)
                if costs is None:
                    continue
                rest = tuple(s - p for s, p in zip(state, part))
                for beta, part_cost in ((1, costs[0]), (0, costs[1])):
                    base = dp[beta].get(rest)
                    if base is None:
                        continue
                    candidate = base + part_cost
                    incumbent = dp[beta].get(state)
                    if incumbent is None or candidate < incumbent:
                        dp[beta][state] = candidate
                        parent[beta][state] = part
        for beta in (1, 0):
            cycles = dp[beta].get(full)
            if cycles is not None and (best is None or cycles < best[0]):
                parts = []
                state = full
                while any(state):
                    part = parent[beta][state]
                    parts.append(part)
                    state = tuple(s - p for s, p in zip(state, part))
                parts.sort(reverse=True)
                best = (cycles, tile, tuple(parts), beta)
    if best is None:
        raise InfeasibleScheduleError(
            f"layer {layer.name}: no feasible schedule in the bounded space"
        )
    _, tile, parts, beta = best
    schedule = _materialize(layer, tile, parts, beta)
    validate_schedule(schedule, layer, hw, include_input_channels=include_input_channels)
    return schedule


@dataclass(frozen=True)
class ModeComparison:
    """Side-by-side modeled cost of CONV_R and ILAR scheduling for one layer."""

    layer: str
    convr_schedule: TileSchedule
    ilar_schedule: TileSchedule
    convr_report: LatencyReport
    ilar_report: LatencyReport

    @property
    def convr_cycles(self) -> int:
        return self.convr_report.total_cycles

    @property
    def ilar_cycles(self) -> int:
        return self.ilar_report.total_cycles

    @property
    def convr_dram_ifmap(self) -> int:
        return self.convr_report.dram_ifmap

    @property
    def ilar_dram_ifmap(self) -> int:
        return self.ilar_report.dram_ifmap


def compare_modes(
    layer: LayerSpec,
    kernel_set: SubKernelSet,
    hw: HardwareConfig,
    *,
    include_input_channels: bool = False,
) -> ModeComparison:
    """Solve the same deconvolution layer in both modes and report both costs."""
    convr = solve(
        layer, kernel_set, hw, ScheduleMode.CONV_R,
        include_input_channels=include_input_channels,
    )
    ilar = solve(
        layer, kernel_set, hw, ScheduleMode.ILAR,
        include_input_channels=include_input_channels,
    )
    convr_report = total_latency(
        convr, layer, kernel_set, hw, include_input_channels=include_input_channels
    )
    ilar_report = total_latency(
        ilar, layer, kernel_set, hw, include_input_channels=include_input_channels
    )
    return ModeComparison(layer.name, convr, ilar, convr_report, ilar_report)
