"""Command-line front end.

Subcommands: transform (decomposition manifest), schedule (per-layer
schedule files), model (latency/traffic CSV), ism (disparity propagation
over a stereo sequence), report (joined comparison CSV and optional SVG
chart). Exit codes: 0 success, 2 input or validation error, 3 infeasible
schedule, 4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .deconv import SubKernelSet, decompose_nd
from .formats import (
    SpecValidationError,
    dump_json,
    load_hardware,
    load_network,
    load_report,
    load_sequence,
    save_schedule,
    write_bar_chart_svg,
    write_csv,
)
from .ism import ism_run, three_pixel_error
from .perfmodel import (
    HardwareConfig,
    InfeasibleScheduleError,
    LayerKind,
    LayerSpec,
    dense_equivalent,
    total_latency,
)
from .pgm import frame_from_pgm, read_disparity, write_disparity
from .scheduler import ScheduleMode, solve
from .tensor import Tensor

MODES = ("baseline", "dct", "convr", "ilar")

REPORT_HEADER = [
    "layer",
    "mode",
    "latency_cycles",
    "compute_cycles",
    "memory_cycles",
    "dram_ifmap_elems",
    "dram_weight_elems",
    "dram_ofmap_elems",
    "macs",
    "utilization",
]


def _effective_layer(
    layer: LayerSpec, mode: str
) -> tuple[LayerSpec, SubKernelSet | None, ScheduleMode]:
    """What actually runs for `layer` under the requested mode.

    Convolutions are scheduled as-is in every mode. A deconvolution is
    modeled dense over its zero-upsampled ifmap in baseline mode, and is
    decomposed otherwise; dct and convr both pack each sub-kernel's
    filters separately, ilar lets rounds mix sub-kernels.
    """
    if layer.kind is LayerKind.CONV:
        return layer, None, ScheduleMode.CONV_R
    if mode == "baseline":
        return dense_equivalent(layer), None, ScheduleMode.CONV_R
    kernel_set = decompose_nd(Tensor.zeros(layer.kernel))
    if mode == "ilar":
        return layer, kernel_set, ScheduleMode.ILAR
    return layer, kernel_set, ScheduleMode.CONV_R


def _schedule_all(layers, hw: HardwareConfig, mode: str):
    planned = []
    for layer in layers:
        effective, kernel_set, schedule_mode = _effective_layer(layer, mode)
        schedule = solve(effective, kernel_set, hw, schedule_mode)
        planned.append((layer.name, effective, kernel_set, schedule))
    return planned


def cmd_transform(args) -> int:
    layers = load_network(args.network, strict=args.strict)
    records = []
    for layer in layers:
        record = {"name": layer.name, "kind": layer.kind.value, "kernel": list(layer.kernel)}
        subs = []
        if layer.kind is LayerKind.DECONV:
            kernel_set = decompose_nd(Tensor.zeros(layer.kernel))
            for sub in kernel_set.kernels:
                subs.append(
                    {
                        "phase": sub.phase_index,
                        "delta": list(sub.delta),
                        "dims": list(sub.dims),
                        "ofmap_parity": [1 - d for d in sub.delta],
                        "empty": sub.is_empty,
                    }
                )
        record["sub_kernels"] = subs
        records.append(record)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(out_dir / "transform.json", {
        "format_version": 1,
        "with_border": True,
        "layers": records,
    })
    return 0


def cmd_schedule(args) -> int:
    layers = load_network(args.network, strict=args.strict)
    hw = load_hardware(args.hardware, strict=args.strict)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, _, _, schedule in _schedule_all(layers, hw, args.mode):
        save_schedule(out_dir / f"schedule_{name}_{args.mode}.json", name, args.mode, schedule)
    return 0


def cmd_model(args) -> int:
    layers = load_network(args.network, strict=args.strict)
    hw = load_hardware(args.hardware, strict=args.strict)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    totals = {"latency": 0, "compute": 0, "memory": 0, "dif": 0, "dw": 0, "dof": 0, "macs": 0}
    for name, effective, kernel_set, schedule in _schedule_all(layers, hw, args.mode):
        report = total_latency(schedule, effective, kernel_set, hw)
        rows.append(
            [
                name,
                args.mode,
                str(report.total_cycles),
                str(report.compute_cycles),
                str(report.memory_cycles),
                str(report.dram_ifmap),
                str(report.dram_weights),
                str(report.dram_ofmap),
                str(report.macs),
                f"{report.utilization:.6f}",
            ]
        )
        totals["latency"] += report.total_cycles
        totals["compute"] += report.compute_cycles
        totals["memory"] += report.memory_cycles
        totals["dif"] += report.dram_ifmap
        totals["dw"] += report.dram_weights
        totals["dof"] += report.dram_ofmap
        totals["macs"] += report.macs
    overall_util = (
        totals["macs"] / (totals["latency"] * hw.pe_count) if totals["latency"] else 0.0
    )
    rows.append(
        [
            "TOTAL",
            args.mode,
            str(totals["latency"]),
            str(totals["compute"]),
            str(totals["memory"]),
            str(totals["dif"]),
            str(totals["dw"]),
            str(totals["dof"]),
            str(totals["macs"]),
            f"{overall_util:.6f}",
        ]
    )
    write_csv(out_dir / f"report_{args.mode}.csv", REPORT_HEADER, rows)
    return 0


def cmd_ism(args) -> int:
    sequence = load_sequence(args.sequence, strict=args.strict)
    pw = args.pw if args.pw is not None else sequence.pw
    if pw < 2:
        raise SpecValidationError(f"propagation window must be >= 2, got {pw}")
    frames = []
    key_disp = {}
    gt = {}
    for i, entry in enumerate(sequence.frames):
        frames.append((frame_from_pgm(entry.left), frame_from_pgm(entry.right)))
        if i % pw == 0:
            if entry.key_disparity is None:
                raise SpecValidationError(
                    f"frame {i} is a key frame (pw={pw}) but has no key_disparity"
                )
            key_disp[i] = read_disparity(entry.key_disparity)
        if entry.gt_disparity is not None:
            gt[i] = read_disparity(entry.gt_disparity)
    maps = ism_run(frames, key_disp, pw, block=args.block, radius=args.radius)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, dmap in enumerate(maps):
        write_disparity(out_dir / f"disparity_{i:04d}.pgm", dmap)
        err = f"{three_pixel_error(dmap, gt[i]):.4f}" if i in gt else ""
        rows.append([str(i), "1" if i % pw == 0 else "0", err])
    write_csv(out_dir / "metrics.csv", ["frame", "is_key", "three_pixel_error_pct"], rows)
    return 0


def cmd_report(args) -> int:
    runs = []
    for spec in args.run:
        name, _, path = spec.partition("=")
        if not name or not path:
            raise SpecValidationError(f"--run expects NAME=CSV, got {spec!r}")
        runs.append((name, path))
    if not runs:
        raise SpecValidationError("report needs at least one --run NAME=CSV")
    baseline = args.baseline or runs[0][0]
    if baseline not in {name for name, _ in runs}:
        raise SpecValidationError(f"baseline {baseline!r} is not among the named runs")
    tables = {}
    order = None
    for name, path in runs:
        _, rows = load_report(path)
        table = {row["layer"]: row for row in rows}
        if order is None:
            order = [row["layer"] for row in rows]
        elif set(table) != set(tables[runs[0][0]]):
            raise SpecValidationError(f"run {name!r} covers a different layer set")
        tables[name] = table
    header = ["layer"]
    for name, _ in runs:
        header.append(f"{name}_latency_cycles")
    for name, _ in runs:
        if name != baseline:
            header.append(f"speedup_{name}")
    out_rows = []
    for layer in order:
        row = [layer]
        for name, _ in runs:
            row.append(tables[name][layer]["latency_cycles"])
        base_cycles = int(tables[baseline][layer]["latency_cycles"])
        for name, _ in runs:
            if name == baseline:
                continue
            cycles = int(tables[name][layer]["latency_cycles"])
            row.append(f"{base_cycles / cycles:.6f}" if cycles else "")
        out_rows.append(row)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "comparison.csv", header, out_rows)
    if args.svg:
        labels = [layer for layer in order if layer != "TOTAL"]
        series = [
            (name, [float(tables[name][layer]["latency_cycles"]) for layer in labels])
            for name, _ in runs
        ]
        write_bar_chart_svg(
            out_dir / "comparison.svg", "modeled latency (cycles)", labels, series
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svopt",
        description="Deconvolution transformation, accelerator schedule modeling, "
        "and stereo disparity propagation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="write the sub-kernel decomposition manifest")
    p.add_argument("--network", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--strict", action="store_true", help="reject unknown input fields")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("schedule", help="write a schedule file per layer")
    p.add_argument("--network", required=True)
    p.add_argument("--hardware", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("model", help="write the latency/traffic report CSV")
    p.add_argument("--network", required=True)
    p.add_argument("--hardware", required=True)
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("ism", help="propagate key-frame disparity over a sequence")
    p.add_argument("--sequence", required=True, help="sequence manifest JSON")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pw", type=int, default=None, help="propagation window override")
    p.add_argument("--block", type=int, default=5, help="odd SAD block size")
    p.add_argument("--radius", type=int, default=2, help="refinement search radius")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_ism)

    p = sub.add_parser("report", help="join named model runs into a comparison")
    p.add_argument("--run", action="append", default=[], metavar="NAME=CSV")
    p.add_argument("--baseline", default=None, help="run name speedups are relative to")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also write a bar chart SVG")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleScheduleError as exc:
        print(f"infeasible schedule: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal invariant failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
