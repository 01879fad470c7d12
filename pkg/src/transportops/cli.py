"""Command-line surface.

One process per command; every command takes ``--seed``, ``--config`` and
``--out`` and is byte-reproducible given a seed (the bench command's wall
times are the one documented exception). Exit codes: 0 success, 1 usage
error, 2 numeric or runtime failure (one-line diagnostic on stderr).

Config files are flat ``key = value`` lines (``#`` comments) whose keys
mirror the config dataclass fields of the command; explicit command-line
flags win over config-file values, which win over defaults. CSV output uses
the shortest round-trip decimal form of each float, so files are byte-stable
and value-exact.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .encoder import (
    Classifier,
    ClassifierConfig,
    EncoderConfig,
    ScaleEncoder,
    sample_encoded,
    spread_matrix,
    train_classifier,
    train_encoder,
)
from .errors import TransportOpsError
from .inference import InferenceConfig, infer, infer_batch, infer_subgradient
from .learning import TrainerConfig, train_dictionary
from .operators import (
    LatentPoint,
    OperatorDictionary,
    PointPair,
    atomic_write_text,
    load_dictionary,
    operator_magnitudes,
    sample_transform,
    save_dictionary,
    generate_path,
)
from .pairing import FeatureSource, select_pair_indices
from .stability import path_trace, stability_metric
from .synth import (
    make_multiclass_dataset,
    make_rotation_dataset,
    make_rotation_pairs,
    rotation_generator,
    two_block_rotation_generators,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1.
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# CSV and config-file helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"missing {what} file: {p}")
    return p


def _read_table(path, what: str) -> tuple[list[str], np.ndarray, list[list[str]]]:
    p = _require_file(path, what)
    lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{p}: expected a header and at least one data row")
    header = [h.strip() for h in lines[0].split(",")]
    cells = [[c.strip() for c in ln.split(",")] for ln in lines[1:]]
    for i, row in enumerate(cells):
        if len(row) != len(header):
            raise ValueError(f"{p}: row {i + 1} has {len(row)} cells, header has {len(header)}")
    return header, np.array(cells, dtype=object), cells


def load_points_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Dataset CSV: coordinate columns named z*, optional integer label."""
    header, _, cells = _read_table(path, "points")
    zcols = [i for i, h in enumerate(header) if h.startswith("z")]
    if not zcols:
        raise ValueError(f"{path}: no coordinate columns (named z0, z1, ...)")
    z = np.array([[float(row[i]) for i in zcols] for row in cells])
    labels = None
    if "label" in header:
        li = header.index("label")
        labels = np.array([int(row[li]) for row in cells], dtype=int)
    return z, labels


def load_pairs_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Pairs CSV: z0_* and z1_* coordinate columns."""
    header, _, cells = _read_table(path, "pairs")
    c0 = [i for i, h in enumerate(header) if h.startswith("z0_")]
    c1 = [i for i, h in enumerate(header) if h.startswith("z1_")]
    if not c0 or len(c0) != len(c1):
        raise ValueError(f"{path}: need matching z0_*/z1_* columns")
    z0 = np.array([[float(row[i]) for i in c0] for row in cells])
    z1 = np.array([[float(row[i]) for i in c1] for row in cells])
    return z0, z1


def parse_config_file(path) -> dict[str, str]:
    p = _require_file(path, "config")
    out: dict[str, str] = {}
    for ln, line in enumerate(p.read_text().splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise UsageError(f"{p}:{ln}: expected 'key = value'")
        key, value = s.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(text: str, example):
    if isinstance(example, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"expected a boolean, got {text!r}")
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    if isinstance(example, tuple):
        return tuple(int(x) for x in text.split(",") if x.strip())
    return text


def build_config(cls, file_values: dict[str, str], flag_values: dict):
    """Defaults < config file < explicit flags, with unknown keys rejected."""
    defaults = {f.name: f for f in dataclasses.fields(cls) if f.name != "inference"}
    kwargs = {}
    for key, text in file_values.items():
        if key not in defaults:
            continue
        example = getattr(cls(), key)
        kwargs[key] = _coerce(text, example)
    for key, value in flag_values.items():
        if key in defaults and value is not None:
            kwargs[key] = value
    return cls(**kwargs)


def _known_keys(*classes) -> set[str]:
    keys = set()
    for cls in classes:
        keys |= {f.name for f in dataclasses.fields(cls) if f.name != "inference"}
    return keys


def _check_config_keys(file_values: dict[str, str], allowed: set[str]) -> None:
    unknown = sorted(set(file_values) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError as exc:
        raise UsageError(f"bad vector {text!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------


def _cmd_synth(args):
    if args.kind == "rotation":
        pts, _ = make_rotation_dataset(
            args.n, args.radius, args.angle_spread, args.noise, args.seed
        )
        write_csv(args.out, [f"z{i}" for i in range(2)], pts.tolist())
    elif args.kind == "rotation-pairs":
        pairs, angles, _ = make_rotation_pairs(
            args.n, args.radius, args.angle_spread, args.noise, args.seed
        )
        header = ["z0_0", "z0_1", "z1_0", "z1_1", "angle"]
        rows = [
            [p.z0[0], p.z0[1], p.z1[0], p.z1[1], angles[i]]
            for i, p in enumerate(pairs)
        ]
        write_csv(args.out, header, rows)
    else:  # multiclass demo: two shared SO(2) blocks over a 4-D latent
        shared = list(two_block_rotation_generators())
        data = make_multiclass_dataset(
            classes=args.classes,
            shared_generators=shared,
            class_specific_generators=[[] for _ in range(args.classes)],
            n_per_class=args.n_per_class,
            seed=args.seed,
            coefficient_scale=args.coefficient_scale,
        )
        d = data.points.shape[1]
        header = [f"z{i}" for i in range(d)] + ["label"]
        rows = [
            [*data.points[i].tolist(), int(data.labels[i])]
            for i in range(len(data.labels))
        ]
        write_csv(args.out, header, rows)
        if args.catalog_out:
            cat = data.catalog
            header = ["class", "generator", "admissible", "break_threshold"]
            rows = [
                [y, k, bool(cat.admissible[y, k]), cat.break_thresholds[y, k]]
                for y in range(cat.admissible.shape[0])
                for k in range(cat.admissible.shape[1])
            ]
            write_csv(args.catalog_out, header, rows)


def _cmd_pair(args):
    z, _ = load_points_csv(args.points)
    src = FeatureSource(
        kind="precomputed" if args.features else "identity",
        feature_file=_require_file(args.features, "features") if args.features else None,
        k=args.k,
    )
    idx = select_pair_indices(z, src, args.seed)
    write_csv(args.out, ["anchor_index", "neighbor_index"], idx.tolist())


def _trainer_config(args, file_values) -> TrainerConfig:
    _check_config_keys(file_values, _known_keys(TrainerConfig, InferenceConfig))
    icfg = build_config(InferenceConfig, file_values, {})
    flags = {
        "lr_psi": args.lr_psi,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "gamma": args.gamma,
        "zeta": args.zeta,
        "latent_scale": args.latent_scale,
        "init_variance_psi": args.init_variance_psi,
        "seed": args.seed,
    }
    cfg = build_config(TrainerConfig, file_values, flags)
    return dataclasses.replace(cfg, inference=icfg)


def _load_training_pairs(args) -> list[PointPair]:
    if args.pairs:
        z0, z1 = load_pairs_csv(args.pairs)
        return [PointPair(z0[i], z1[i]) for i in range(len(z0))]
    if not (args.points and args.pair_indices):
        raise UsageError("train needs --pairs, or --points with --pair-indices")
    z, _ = load_points_csv(args.points)
    header, _, cells = _read_table(args.pair_indices, "pair indices")
    if header[:2] != ["anchor_index", "neighbor_index"]:
        raise ValueError(f"{args.pair_indices}: expected anchor_index,neighbor_index")
    return [PointPair(z[int(r[0])], z[int(r[1])]) for r in cells]


def _cmd_train(args):
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = _trainer_config(args, file_values)
    pairs = _load_training_pairs(args)
    dictionary, log = train_dictionary(pairs, args.m, cfg)
    save_dictionary(args.out, dictionary, latent_scale=cfg.latent_scale)
    if args.log_out:
        write_csv(args.log_out, log.csv_header(), log.csv_rows())


def _inference_config(args, file_values) -> InferenceConfig:
    _check_config_keys(file_values, _known_keys(InferenceConfig))
    flags = {"zeta": args.zeta}
    return build_config(InferenceConfig, file_values, flags)


def _report_rows(reports, count):
    header = (
        ["pair_index"]
        + [f"c_{m}" for m in range(count)]
        + ["objective", "recon_error", "iterations", "converged", "all_zero"]
    )
    rows = [
        [
            i,
            *r.coefficients.tolist(),
            r.objective,
            r.recon_error,
            r.iterations,
            r.converged,
            r.all_zero,
        ]
        for i, r in enumerate(reports)
    ]
    return header, rows


def _cmd_infer(args):
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = _inference_config(args, file_values)
    dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
    z0, z1 = load_pairs_csv(args.pairs)
    pairs = [
        PointPair(latent_scale * z0[i], latent_scale * z1[i]) for i in range(len(z0))
    ]
    reports = infer_batch(dictionary, pairs, cfg, args.seed, method=args.method)
    header, rows = _report_rows(reports, dictionary.count)
    write_csv(args.out, header, rows)


def _sample_base_point(args) -> np.ndarray:
    if args.point is not None:
        return _parse_vector(args.point)
    if args.points is None:
        raise UsageError("sample needs --point or --points with --index")
    z, _ = load_points_csv(args.points)
    if not (0 <= args.index < len(z)):
        raise ValueError(f"--index {args.index} out of range for {len(z)} points")
    return z[args.index]


def _cmd_sample(args):
    dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
    z = latent_scale * _sample_base_point(args)
    rows = []
    if args.encoder:
        enc = ScaleEncoder.load(_require_file(args.encoder, "encoder"))
        for i in range(args.count):
            out = sample_encoded(
                enc, dictionary, z, args.spread_scale, args.sigma, args.seed + i
            )
            rows.append(out.tolist())
    else:
        if args.scales is None:
            raise UsageError("sample needs --scales or --encoder")
        scales = _parse_vector(args.scales)
        if scales.size == 1:
            scales = np.full(dictionary.count, float(scales[0]))
        for i in range(args.count):
            out = sample_transform(dictionary, z, scales, args.sigma, args.seed + i)
            rows.append(out.tolist())
    write_csv(args.out, [f"z{i}" for i in range(dictionary.dim)], rows)


def _cmd_paths(args):
    dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
    z0 = latent_scale * _parse_vector(args.point)
    coeffs = _parse_vector(args.coeffs)
    ts = _parse_vector(args.t_values)
    points = generate_path(dictionary, coeffs, z0, ts)
    header = ["t"] + [f"z{i}" for i in range(dictionary.dim)]
    rows = [[ts[i], *points[i].tolist()] for i in range(len(ts))]
    write_csv(args.out, header, rows)


def _cmd_stability(args):
    dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
    metrics = stability_metric(dictionary)
    mags = operator_magnitudes(dictionary)
    rows = [[m, metrics[m], mags[m]] for m in range(dictionary.count)]
    write_csv(args.out, ["operator_index", "metric", "magnitude"], rows)
    if args.trace_operator is not None:
        if args.trace_point is None or args.trace_out is None:
            raise UsageError("--trace-operator needs --trace-point and --trace-out")
        z0 = latent_scale * _parse_vector(args.trace_point)
        c_range = None
        if args.c_min is not None or args.c_max is not None:
            lo = args.c_min if args.c_min is not None else -np.pi
            hi = args.c_max if args.c_max is not None else np.pi
            c_range = np.linspace(lo, hi, args.c_steps)
        cs, coords = path_trace(dictionary, args.trace_operator, z0, c_range)
        header = ["c"] + [f"z{i}" for i in range(dictionary.dim)]
        write_csv(
            args.trace_out,
            header,
            [[cs[i], *coords[i].tolist()] for i in range(len(cs))],
        )


def _labeled_points_from_csv(path) -> list[LatentPoint]:
    z, labels = load_points_csv(path)
    if labels is None:
        raise ValueError(f"{path}: a label column is required")
    return [LatentPoint(z[i], int(labels[i])) for i in range(len(labels))]


def _cmd_classifier(args):
    file_values = parse_config_file(args.config) if args.config else {}
    _check_config_keys(file_values, _known_keys(ClassifierConfig))
    flags = {"lr": args.lr, "epochs": args.epochs, "l2": args.l2, "seed": args.seed}
    cfg = build_config(ClassifierConfig, file_values, flags)
    points = _labeled_points_from_csv(args.points)
    clf, accuracy = train_classifier(points, cfg)
    clf.save(args.out)
    print(f"training_accuracy={_fmt(accuracy)}")


def _cmd_encoder(args):
    file_values = parse_config_file(args.config) if args.config else {}
    _check_config_keys(file_values, _known_keys(EncoderConfig))
    flags = {
        "zeta_prior": args.zeta_prior,
        "kl_weight": args.kl_weight,
        "lr": args.lr,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "seed": args.seed,
    }
    if args.hidden is not None:
        flags["hidden"] = tuple(int(x) for x in args.hidden.split(",") if x.strip())
    cfg = build_config(EncoderConfig, file_values, flags)
    dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
    clf = Classifier.load(_require_file(args.classifier, "classifier"))
    points = _labeled_points_from_csv(args.points)
    points = [LatentPoint(latent_scale * p.z, p.label) for p in points]
    enc = ScaleEncoder.init(
        dictionary.dim,
        dictionary.count,
        hidden=cfg.hidden,
        seed=cfg.seed,
        initial_scale=cfg.zeta_prior,
    )
    trained, losses = train_encoder(enc, clf, dictionary, points, cfg)
    trained.save(args.out)
    if args.loss_out:
        write_csv(
            args.loss_out,
            ["step", "loss"],
            [[i, losses[i]] for i in range(len(losses))],
        )


def _cmd_spread(args):
    enc = ScaleEncoder.load(_require_file(args.encoder, "encoder"))
    points = _labeled_points_from_csv(args.points)
    matrix = spread_matrix(enc, points)
    header = ["class"] + [f"scale_{m}" for m in range(matrix.shape[1])]
    rows = [[y, *matrix[y].tolist()] for y in range(matrix.shape[0])]
    write_csv(args.out, header, rows)


def _cmd_bench(args):
    file_values = parse_config_file(args.config) if args.config else {}
    cfg = _inference_config(args, file_values)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("prox", "subgrad"):
            raise UsageError(f"unknown method {m!r} (expected prox and/or subgrad)")
    if args.model:
        dictionary, latent_scale = load_dictionary(_require_file(args.model, "model"))
        z0, z1 = load_pairs_csv(_require_file(args.pairs_file, "pairs"))
        pairs = [
            PointPair(latent_scale * z0[i], latent_scale * z1[i])
            for i in range(len(z0))
        ]
    else:
        pairs, _, gen = make_rotation_pairs(
            args.pairs, radius=args.radius, angle_spread=args.angle_spread, seed=args.seed
        )
        dictionary = OperatorDictionary(gen[None], gamma=1e-6)
    solvers = {"prox": infer, "subgrad": infer_subgradient}
    rows = []
    for method in methods:
        solve = solvers[method]
        for i, p in enumerate(pairs):
            t0 = time.perf_counter_ns()
            rep = solve(dictionary, p.z0, p.z1, cfg, args.seed + i)
            elapsed = time.perf_counter_ns() - t0
            rows.append(
                [i, method, rep.iterations, rep.objective, rep.recon_error, elapsed]
            )
    write_csv(
        args.out,
        ["pair_index", "method", "iterations", "final_objective", "recon_error", "wall_time_ns"],
        rows,
    )


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------


def _add_common(p, out_required: bool = True):
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--out", required=out_required, help="output path")


def build_parser() -> _Parser:
    parser = _Parser(prog="transportops", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=["rotation", "rotation-pairs", "multiclass"], required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--angle-spread", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--coefficient-scale", type=float, default=0.5)
    p.add_argument("--catalog-out", default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("pair", help="select training pairs by k-NN")
    p.add_argument("--points", required=True)
    p.add_argument("--features", default=None, help="precomputed feature CSV")
    p.add_argument("--k", type=int, default=5)
    _add_common(p)
    p.set_defaults(handler=_cmd_pair)

    p = sub.add_parser("train", help="learn a transport-operator dictionary")
    p.add_argument("--pairs", default=None, help="wide pairs CSV (z0_*, z1_*)")
    p.add_argument("--points", default=None)
    p.add_argument("--pair-indices", default=None)
    p.add_argument("--m", type=int, required=True, help="number of operators")
    p.add_argument("--lr-psi", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--latent-scale", type=float, default=None)
    p.add_argument("--init-variance-psi", type=float, default=None)
    p.add_argument("--log-out", default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("infer", help="infer coefficients for point pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--method", choices=["prox", "subgrad"], default="prox")
    p.add_argument("--zeta", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("sample", help="sample transformed latent points")
    p.add_argument("--model", required=True)
    p.add_argument("--point", default=None, help="comma-separated latent vector")
    p.add_argument("--points", default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--scales", default=None, help="per-operator Laplace scales")
    p.add_argument("--encoder", default=None, help="scale-encoder JSON")
    p.add_argument("--spread-scale", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--count", type=int, default=1)
    _add_common(p)
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("paths", help="interpolate/extrapolate along coefficients")
    p.add_argument("--model", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--coeffs", required=True)
    p.add_argument("--t-values", required=True)
    _add_common(p)
    p.set_defaults(handler=_cmd_paths)

    p = sub.add_parser("stability", help="operator stability metrics and traces")
    p.add_argument("--model", required=True)
    p.add_argument("--trace-operator", type=int, default=None)
    p.add_argument("--trace-point", default=None)
    p.add_argument("--trace-out", default=None)
    p.add_argument("--c-min", type=float, default=None)
    p.add_argument("--c-max", type=float, default=None)
    p.add_argument("--c-steps", type=int, default=101)
    _add_common(p)
    p.set_defaults(handler=_cmd_stability)

    p = sub.add_parser("classifier", help="fit the logistic classifier")
    p.add_argument("--points", required=True, help="labeled points CSV")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--l2", type=float, default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_classifier)

    p = sub.add_parser("encoder", help="train the coefficient-scale encoder")
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--zeta-prior", type=float, default=None)
    p.add_argument("--kl-weight", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden", default=None, help="hidden widths, e.g. 64,64")
    p.add_argument("--loss-out", default=None)
    _add_common(p)
    p.set_defaults(handler=_cmd_encoder)

    p = sub.add_parser("spread", help="per-class mean encoded scales")
    p.add_argument("--encoder", required=True)
    p.add_argument("--points", required=True)
    _add_common(p)
    p.set_defaults(handler=_cmd_spread)

    p = sub.add_parser("bench", help="proximal vs subgradient inference benchmark")
    p.add_argument("--pairs", type=int, default=100, help="benchmark pair count")
    p.add_argument("--methods", default="prox,subgrad")
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--angle-spread", type=float, default=0.5)
    p.add_argument("--model", default=None, help="bench a saved model instead")
    p.add_argument("--pairs-file", default=None, help="pairs CSV for --model mode")
    _add_common(p)
    p.set_defaults(handler=_cmd_bench)

    return parser


def run(argv=None) -> int:
    """Entry point used by tests; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        args.handler(args)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (TransportOpsError, OSError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
