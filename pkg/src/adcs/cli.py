"""Command-line driver: compress, decompress, estimate, rdcurve, synth."""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import synth
from .codec import FAMILIES, PREDICTOR, TRANSFORM, CodecParams, CompressedArchive, compress, decompress
from .errors import AdcsError
from .estimate import estimate_ec, estimate_predictor, sample_field_blocks
from .field import Field, SamplingConfig, dtype_tag, ingest_raw, parse_dtype
from .metrics import compare
from .select import AUTO, ErrorBound, map_ordered, select_and_compress

CSV_SCHEMA = 1
DEFAULT_SWEEP = (1e-2, 1e-3, 1e-4, 1e-6)


@dataclass(frozen=True)
class InputSpec:
    name: str
    dtype: str
    dims: tuple[int, ...]
    path: Path

    def load(self) -> Field:
        try:
            raw = self.path.read_bytes()
        except OSError as exc:
            raise OSError(f"{self.path}: {exc.strerror or exc}") from exc
        return ingest_raw(raw, self.dims, self.dtype, self.name)


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "n/a"
        return f"{x:.6g}"
    return str(x)


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(d) for d in text.replace("x", ",").split(",") if d)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from exc
    if not 1 <= len(dims) <= 3 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"dims must be 1 to 3 positive extents, got {text!r}")
    return dims


def _parse_floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def read_manifest(path: Path) -> list[InputSpec]:
    """One field per line: ``name dtype dims path``; '#' starts a comment."""
    out = []
    base = path.parent
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 'name dtype dims path'")
        name, dtype, dims, fpath = parts
        parse_dtype(dtype)
        p = Path(fpath)
        out.append(InputSpec(name, dtype, _parse_dims(dims), p if p.is_absolute() else base / p))
    return out


def write_manifest(path: Path, specs: list[InputSpec]) -> None:
    lines = []
    for s in specs:
        rel = os.path.relpath(s.path, path.parent)
        lines.append(f"{s.name} {s.dtype} {','.join(map(str, s.dims))} {rel}")
    path.write_text("\n".join(lines) + "\n")


def _inputs(args, parser) -> list[InputSpec]:
    if args.manifest:
        if args.inputs:
            parser.error("give either --manifest or raw input files, not both")
        return read_manifest(Path(args.manifest))
    if not args.inputs:
        parser.error("no inputs: pass raw files with --dims or a --manifest")
    if args.dims is None:
        parser.error("--dims is required for raw inputs without a manifest")
    return [InputSpec(Path(p).stem, args.dtype, args.dims, Path(p)) for p in args.inputs]


def _bound(args) -> ErrorBound:
    return ErrorBound.absolute(args.eb_abs) if args.eb_abs is not None else ErrorBound.rel(args.eb_rel)


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("ADCS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _emit(rows: list[list], header: list[str], dest) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if dest in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(dest).write_text(buf.getvalue())


def _report_failures(failures) -> int:
    for name, exc in failures:
        print(f"error: {name}: {exc}", file=sys.stderr)
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# commands


def cmd_compress(args, parser) -> int:
    specs = _inputs(args, parser)
    eb = _bound(args)
    cfg = SamplingConfig(args.rsp)

    def job(spec: InputSpec):
        return select_and_compress(spec.load(), eb, cfg, args.codec)

    results = map_ordered(job, specs, _threads(args))
    failures = [(s.name, exc) for s, (_, exc) in zip(specs, results) if exc is not None]
    if failures:
        return _report_failures(failures)

    records = [res[0] for res, _ in results]
    CompressedArchive(records).write(args.out)
    header = ["schema", "name", "selection", "codec", "br_sz_est", "br_zfp_est", "psnr_zfp_est",
              "eb_abs", "eb_used", "bit_rate", "ratio"]
    if args.timings:
        header += ["estimate_s", "compress_s"]
    rows = []
    for (rec, rep), _ in results:
        row = [CSV_SCHEMA, rep.name, rep.selection, rep.family, rep.br_sz, rep.br_zfp, rep.psnr_zfp,
               rep.eb_abs, rec.eb_abs, rec.bit_rate, rec.compression_ratio]
        if args.timings:
            row += [rep.estimate_seconds, rep.compress_seconds]
        rows.append(row)
    _emit(rows, header, args.report)
    return 0


def cmd_decompress(args, parser) -> int:
    archive = CompressedArchive.read(args.archive)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    specs = []
    failures = []
    for rec in archive.records:
        try:
            f = decompress(rec)
        except AdcsError as exc:
            failures.append((rec.name, exc))
            continue
        path = outdir / f"{rec.name}.raw"
        path.write_bytes(f.data.tobytes())
        specs.append(InputSpec(rec.name, dtype_tag(rec.dtype), rec.dims, path))
    if specs:
        write_manifest(outdir / "manifest.txt", specs)
    return _report_failures(failures)


def cmd_estimate(args, parser) -> int:
    specs = _inputs(args, parser)
    eb = _bound(args)
    rsps = args.rsp_sweep or [args.rsp]

    def job(spec: InputSpec):
        f = spec.load()
        eb_abs = eb.resolve(f)
        measured = {}
        if not args.no_verify:
            for fam in FAMILIES:
                rec = compress(f, CodecParams(fam, eb_abs))
                measured[fam] = compare(f, decompress(rec), 8 * len(rec.payload))
        rows = []
        for r in rsps:
            cfg = SamplingConfig(r)
            idx, values, padded = sample_field_blocks(f, cfg)
            ests = {
                PREDICTOR: estimate_predictor(f, idx, eb_abs),
                TRANSFORM: estimate_ec((values, padded), cfg, eb_abs, f.vr, element_bits=f.bits_per_value)[0],
            }
            for fam in FAMILIES:
                e = ests[fam]
                row = [CSV_SCHEMA, f.name, r, fam, eb_abs, e.br, e.psnr]
                if not args.no_verify:
                    m = measured[fam]
                    row += [m.bit_rate, m.psnr, (e.br - m.bit_rate) / m.bit_rate, (e.psnr - m.psnr) / m.psnr]
                rows.append(row)
        return rows

    results = map_ordered(job, specs, _threads(args))
    failures = [(s.name, exc) for s, (_, exc) in zip(specs, results) if exc is not None]
    if failures:
        return _report_failures(failures)
    header = ["schema", "name", "r_sp", "codec", "eb_abs", "br_est", "psnr_est"]
    if not args.no_verify:
        header += ["br_measured", "psnr_measured", "br_rel_err", "psnr_rel_err"]
    # group rows by sampling rate so each rate forms one block
    rows = [row for r in rsps for rows in (res for res, _ in results) for row in rows if row[2] == r]
    _emit(rows, header, args.out)
    return 0


def cmd_rdcurve(args, parser) -> int:
    specs = _inputs(args, parser)
    sweep = args.sweep or list(DEFAULT_SWEEP)
    cfg = SamplingConfig(args.rsp)

    def job(spec: InputSpec):
        f = spec.load()
        rows = []
        for rel in sweep:
            bound = ErrorBound.rel(rel)
            for codec in (PREDICTOR, TRANSFORM, AUTO):
                rec, rep = select_and_compress(f, bound, cfg, codec)
                q = compare(f, decompress(rec), 8 * len(rec.payload))
                rows.append([CSV_SCHEMA, f.name, codec, rep.family, rel, q.bit_rate, q.psnr, q.max_abs_error])
        return rows

    results = map_ordered(job, specs, _threads(args))
    failures = [(s.name, exc) for s, (_, exc) in zip(specs, results) if exc is not None]
    if failures:
        return _report_failures(failures)
    header = ["schema", "name", "mode", "codec", "eb_rel", "bit_rate", "psnr", "max_abs_error"]
    _emit([row for res, _ in results for row in res], header, args.out)
    return 0


def cmd_synth(args, parser) -> int:
    out = Path(args.out)
    if args.count:
        out.mkdir(parents=True, exist_ok=True)
        specs = []
        for i in range(args.count):
            dims = args.dims or synth.CORPUS_SHAPES[i % len(synth.CORPUS_SHAPES)]
            name = f"{args.kind}-{args.seed}-{i:02d}"
            f = synth.generate(args.kind, dims, seed=args.seed * 1000 + i, dtype=args.dtype, name=name)
            path = out / f"{name}.raw"
            path.write_bytes(f.data.tobytes())
            specs.append(InputSpec(name, args.dtype, f.dims, path))
        write_manifest(out / "manifest.txt", specs)
        return 0
    if args.dims is None:
        parser.error("--dims is required unless --count builds a corpus")
    f = synth.generate(args.kind, args.dims, seed=args.seed, dtype=args.dtype)
    out.write_bytes(f.data.tobytes())
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("inputs", nargs="*", help="raw little-endian input files")
    p.add_argument("--manifest", help="text file: one 'name dtype dims path' line per field")
    p.add_argument("--dims", type=_parse_dims, help="dims for raw inputs, e.g. 64,64,64")
    p.add_argument("--dtype", default="f32", choices=("f32", "f64"))
    p.add_argument("--threads", type=int, help="worker count (default: $ADCS_THREADS or all cores)")


def _add_bound(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--eb-abs", type=float, help="absolute error bound")
    g.add_argument("--eb-rel", type=float, help="error bound relative to each field's value range")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adcs", description="Error-bounded lossy compression with online codec selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="select a codec per field and write an archive")
    _add_inputs(p)
    _add_bound(p)
    p.add_argument("--rsp", type=float, default=0.05, help="block sampling rate")
    p.add_argument("--codec", default=AUTO, choices=(AUTO, PREDICTOR, TRANSFORM))
    p.add_argument("--out", required=True, help="archive path")
    p.add_argument("--report", default="-", help="CSV report path (default stdout)")
    p.add_argument("--timings", action="store_true", help="add wall-time columns to the report")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("decompress", help="write each archived field as a raw file")
    p.add_argument("archive")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_decompress)

    p = sub.add_parser("estimate", help="estimated vs measured bit-rate and PSNR")
    _add_inputs(p)
    _add_bound(p)
    p.add_argument("--rsp", type=float, default=0.05)
    p.add_argument("--rsp-sweep", type=_parse_floats, help="comma list of sampling rates")
    p.add_argument("--no-verify", action="store_true", help="skip the full codec runs")
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("rdcurve", help="bit-rate/PSNR points per codec over a bound sweep")
    _add_inputs(p)
    p.add_argument("--sweep", type=_parse_floats, help="comma list of relative bounds")
    p.add_argument("--rsp", type=float, default=0.05)
    p.add_argument("--out", default="-", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_rdcurve)

    p = sub.add_parser("synth", help="generate a synthetic field or corpus")
    p.add_argument("--kind", default="turbulence-mix", choices=synth.KINDS)
    p.add_argument("--dims", type=_parse_dims)
    p.add_argument("--dtype", default="f32", choices=("f32", "f64"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=0, help="write a corpus of this many fields plus a manifest")
    p.add_argument("--out", required=True, help="file (single field) or directory (corpus)")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (AdcsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
