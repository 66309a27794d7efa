"""Command-line interface: gen, train, eval, compare, bench, dem.

All results are emitted as line-delimited text records on stdout; datasets
and checkpoints are binary files. QECW_THREADS is the fallback for
--threads (number of concurrent evaluation streams).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import evaluation, matching, nn, training
from .circuits import NoiseParams, build_memory_circuit
from .codes import build_repetition, build_rotated_surface
from .data import FEATURE_DIMS
from .datasets import (DatasetHeader, header_for_circuit, read_dataset,
                       write_dataset)
from .dem import enumerate_single_faults
from .graphs import build_graph
from .sampler import sample_perfect_shots, sample_shots


def _layout(code: str, d: int):
    if code == "rep":
        return build_repetition(d)
    if code == "surface":
        return build_rotated_surface(d)
    raise SystemExit(f"unknown code {code!r}")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("QECW_THREADS", "1")))


def _add_common(p, *names):
    if "code" in names:
        p.add_argument("--code", choices=("rep", "surface"), required=True)
    if "d" in names:
        p.add_argument("--d", type=int, required=True)
    if "dt" in names:
        p.add_argument("--dt", type=int, default=1)
    if "p" in names:
        p.add_argument("--p", type=float, action="append", default=None,
                       help="error rate; repeat for an even mix")
    if "shots" in names:
        p.add_argument("--shots", type=int, default=10_000)
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "basis" in names:
        p.add_argument("--basis", choices=("z", "x"), default="z")
    if "mode" in names:
        p.add_argument("--mode", choices=("circuit", "perfect"), default="circuit")
    p.add_argument("--threads", type=int, default=None)


def _mix(args) -> list[float]:
    return args.p if args.p else [1e-3]


def _gen_points(args, shots: int, seed: int, stream: int = 0):
    """Sample `shots` DataPoints with the p-mix split evenly across rates."""
    mix = _mix(args)
    layout = _layout(args.code, args.d)
    per = [shots // len(mix)] * len(mix)
    per[0] += shots - sum(per)
    points = []
    for k, (p, n) in enumerate(zip(mix, per)):
        if n == 0:
            continue
        if args.mode == "perfect":
            batch = sample_perfect_shots(layout, p, seed, n, stream=stream * 64 + k)
            points.extend(batch.to_datapoints())
        else:
            circuit = build_memory_circuit(layout, args.dt, args.basis.upper(),
                                           NoiseParams(p))
            batch = sample_shots(circuit, seed, n, stream=stream * 64 + k)
            points.extend(batch.to_datapoints())
    return layout, points


def cmd_gen(args) -> int:
    layout, points = _gen_points(args, args.shots, args.seed)
    mix = _mix(args)
    desc = f"p={mix[0]:g}" if len(mix) == 1 else "mix(" + ",".join(f"{p:g}" for p in mix) + ")"
    if args.mode == "perfect":
        header = DatasetHeader(layout.kind, args.d, 0, "ZX", "perfect-surface",
                               desc, len(points))
    else:
        mode = "repetition" if layout.kind == "repetition" else "circuit-surface"
        header = DatasetHeader(layout.kind, args.d, args.dt, args.basis.upper(),
                               mode, desc, len(points))
    write_dataset(args.out, header, points)
    print(f"wrote {len(points)} records to {args.out} ({desc})")
    return 0


def cmd_dem(args) -> int:
    layout = _layout(args.code, args.d)
    circuit = build_memory_circuit(layout, args.dt, args.basis.upper(),
                                   NoiseParams(_mix(args)[0]))
    dem = enumerate_single_faults(circuit)
    text = dem.dump_text()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        print(f"wrote {len(dem.entries)} DEM entries to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _feature_mode(args) -> str:
    if args.mode == "perfect":
        return "perfect-surface"
    return "repetition" if args.code == "rep" else "circuit-surface"


def cmd_train(args) -> int:
    config = training.TrainConfig(
        mode="fixed" if args.dataset else "streaming",
        batch_size=args.batch,
        epochs=args.epochs,
        seed=args.seed,
        pool_size=args.pool,
        replace_frac=args.replace_frac,
        error_mix=tuple(_mix(args)),
        split_seed=args.split,
    )

    def log(rec):
        print(f"epoch={rec.epoch} train_acc={rec.train_accuracy:.5f} "
              f"test_acc={rec.test_accuracy:.5f} loss={rec.loss:.5f} "
              f"lr={rec.lr:g} time={rec.wall_time:.1f}s", flush=True)

    if args.dataset:
        header, points = read_dataset(args.dataset)
        mode = header.feature_mode
        graphs = [build_graph(pt, mode) for pt in points]
        model = nn.init_model(mode, args.seed)
        model, report = training.train_fixed(config, graphs, model, log=log)
    else:
        mode = _feature_mode(args)
        layout = _layout(args.code, args.d)
        mix = tuple(_mix(args))

        if args.mode == "perfect":
            def generator(n, stream):
                per = max(1, n // len(mix))
                out = []
                for k, p in enumerate(mix):
                    take = per if k < len(mix) - 1 else n - per * (len(mix) - 1)
                    batch = sample_perfect_shots(layout, p, args.seed + 1,
                                                 max(take, 1), stream=stream * 64 + k)
                    out.extend(build_graph(pt, mode)
                               for pt in batch.to_datapoints()[:take])
                return out[:n]
        else:
            circuits = [build_memory_circuit(layout, args.dt, args.basis.upper(),
                                             NoiseParams(p)) for p in mix]

            def generator(n, stream):
                per = max(1, n // len(mix))
                out = []
                for k, c in enumerate(circuits):
                    take = per if k < len(circuits) - 1 else n - per * (len(circuits) - 1)
                    batch = sample_shots(c, args.seed + 1, max(take, 1),
                                         stream=stream * 64 + k)
                    out.extend(build_graph(pt, mode)
                               for pt in batch.to_datapoints()[:take])
                return out[:n]

        test_graphs = generator(args.test_size, 1 << 32)  # outside epoch streams
        model = nn.init_model(mode, args.seed)
        model, report = training.train_streaming(config, generator, test_graphs,
                                                 model, log=log)

    for line in report.to_lines():
        print(line)
    if args.out:
        nn.save_checkpoint(args.out, model)
        print(f"checkpoint written to {args.out}")
    return 0


def _run_eval(args, decoder_names: list[str]) -> dict[str, evaluation.EvalResult]:
    """Paired evaluation, optionally split across concurrent seed streams."""
    model = None
    if any(n == "gnn" for n in decoder_names):
        if not args.checkpoint:
            raise SystemExit("--decoder gnn requires --checkpoint")
        model, _ = nn.load_checkpoint(args.checkpoint)

    layout = _layout(args.code, args.d)
    p = _mix(args)[0]
    threads = _threads(args)
    chunk_shots = [args.shots // threads] * threads
    chunk_shots[0] += args.shots - sum(chunk_shots)

    if args.mode == "perfect":
        decoders = {n: evaluation.make_perfect_decoder(n, model) for n in decoder_names}
        for dec in decoders.values():
            dec.predict(layout, p, [()])  # prewarm shared read-only caches

        def run(stream):
            return evaluation.evaluate_perfect(decoders, layout, p,
                                               chunk_shots[stream], args.seed,
                                               stream=stream)
    else:
        circuit = build_memory_circuit(layout, args.dt, args.basis.upper(),
                                       NoiseParams(p))
        decoders = {n: evaluation.make_circuit_decoder(n, model) for n in decoder_names}
        for dec in decoders.values():
            dec.predict(circuit, [()])

        def run(stream):
            return evaluation.evaluate_circuit(decoders, circuit,
                                               chunk_shots[stream], args.seed,
                                               p, stream=stream)

    if threads == 1:
        chunks = [run(0)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(run, range(threads)))

    merged: dict[str, evaluation.EvalResult] = {}
    for chunk in chunks:
        for name, r in chunk.items():
            merged[name] = r if name not in merged \
                else evaluation.merge_eval_results(merged[name], r)
    return merged


def cmd_eval(args) -> int:
    results = _run_eval(args, [args.decoder])
    for r in results.values():
        print(r.to_line())
    return 0


def cmd_compare(args) -> int:
    names = args.decoder or ["mwpm", "mwpm-uninformed"]
    results = _run_eval(args, names)
    for name in names:
        print(results[name].to_line())
    print("# paired on identical shot streams")
    best = min(results.values(), key=lambda r: r.failure_rate)
    print(f"# best decoder: {best.decoder} rate={best.failure_rate:.6g}")
    return 0


def cmd_bench(args) -> int:
    ds = args.d_list or [7, 11, 15, 21, 31]
    p = _mix(args)[0] if args.p else 0.05
    points = []
    build_points = []
    for d in ds:
        layout = build_rotated_surface(d)
        if args.checkpoint:
            model, _ = nn.load_checkpoint(args.checkpoint)
        else:
            model = nn.init_model("perfect-surface", args.seed)
        t_decode, t_build = evaluation.bench_gnn_perfect(
            model, layout, p, args.shots, args.seed)
        points.append((d, 1, t_decode))
        build_points.append((d, 1, t_build))
        print(f"bench d={d} decode_per_shot={t_decode:.3e}s "
              f"construct_per_shot={t_build:.3e}s", flush=True)
    fit = evaluation.fit_scaling(points)
    for line in fit.to_lines():
        print(line)
    bfit = evaluation.fit_scaling(build_points)
    print(f"construction fit: C={bfit.coefficient:.3e} alpha={bfit.alpha:.3f}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qecw",
                                 description="decoding workbench for stabilizer codes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample shots into a dataset file")
    _add_common(p, "code", "d", "dt", "p", "shots", "seed", "basis", "mode")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("dem", help="dump the detector error model of a circuit")
    _add_common(p, "code", "d", "dt", "p", "basis")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_dem)

    p = sub.add_parser("train", help="train the graph network decoder")
    _add_common(p, "code", "d", "dt", "p", "seed", "basis", "mode")
    p.add_argument("--dataset", default=None, help="fixed-mode dataset file")
    p.add_argument("--out", default=None, help="checkpoint output path")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--pool", type=int, default=100_000)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--replace-frac", type=float, default=0.25)
    p.add_argument("--split", type=int, default=0, help="train/test split seed")
    p.add_argument("--test-size", type=int, default=10_000)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="failure rate of one decoder")
    _add_common(p, "code", "d", "dt", "p", "shots", "seed", "basis", "mode")
    p.add_argument("--decoder", choices=evaluation.DECODER_IDS, required=True)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="paired comparison of several decoders")
    _add_common(p, "code", "d", "dt", "p", "shots", "seed", "basis", "mode")
    p.add_argument("--decoder", choices=evaluation.DECODER_IDS, action="append")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("bench", help="decode-time scaling benchmark")
    p.add_argument("--d", type=int, action="append", dest="d_list")
    p.add_argument("--p", type=float, action="append", default=None)
    p.add_argument("--shots", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(fn=cmd_bench)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
