"""Command-line pipeline: calibrate, mask, screen bands, red edge, synth,
train, eval, ablate.

One binary with subcommands; every random choice flows from --seed, so a
command is bitwise reproducible given identical inputs. Exit codes: 0 ok,
1 usage, 2 data, 3 numeric. The HSICUBE_THREADS environment variable caps
BLAS/OpenMP parallelism (it must be set before numpy loads, which this
module guarantees for console use).
"""

from __future__ import annotations

import argparse
import os
import sys


def _apply_thread_cap():
    cap = os.environ.get("HSICUBE_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


_apply_thread_cap()

import numpy as np

from .errors import (
    AxisError,
    CalibrationError,
    ConfigError,
    CoverageError,
    DataError,
    DimensionError,
    FormatError,
    GridError,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (default --help still exits 0)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _read_config_file(path, known_keys):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in known_keys:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key.strip()!r}")
            values[key] = value.strip()
    return values


def _coerce(default, raw):
    if not isinstance(raw, str) or isinstance(default, str) or default is None:
        return raw
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {raw!r}")
    return type(default)(raw)


def _resolve(args, defaults):
    """Merge flag values, config-file values, and built-in defaults."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config, set(defaults))
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in file_values:
            out[key] = _coerce(default, file_values[key])
        else:
            out[key] = default
    return argparse.Namespace(**out)


def _add_common(sub):
    sub.add_argument("--config", help="line-oriented key=value config file")


_MODEL_DEFAULTS = {
    "seed": 0,
    "S": 11,
    "B": 10,
    "epochs": 60,
    "batch_size": 16,
    "lr": 2e-4,
    "dropout": 0.4,
    "no_attention": False,
    "no_se": False,
    "variant": "ours",
    "bands": "all",
    "sg_window": 11,
    "sg_order": 3,
    "prominence": 0.3,
    "tol_bands": 1,
    "test_frac": 0.25,
    "patches_per_tile": 4,
    "width2d": 32,
    "width3d": 8,
    "head_width": 64,
    "num_classes": 4,
    "early_stop_acc": 0.0,
    "format": "raw-le",
}


def _add_model_flags(sub):
    sub.add_argument("--seed", type=int)
    sub.add_argument("--S", type=int)
    sub.add_argument("--B", type=int)
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--dropout", type=float)
    sub.add_argument("--no-attention", dest="no_attention", action="store_const", const=True)
    sub.add_argument("--no-se", dest="no_se", action="store_const", const=True)
    sub.add_argument("--variant", choices=("ours", "2dcnn", "3dcnn"))
    sub.add_argument("--bands", help="all | selected | comma list of nm")
    sub.add_argument("--sg-window", dest="sg_window", type=int)
    sub.add_argument("--sg-order", dest="sg_order", type=int)
    sub.add_argument("--prominence", type=float)
    sub.add_argument("--tol-bands", dest="tol_bands", type=int)
    sub.add_argument("--test-frac", dest="test_frac", type=float)
    sub.add_argument("--patches-per-tile", dest="patches_per_tile", type=int)
    sub.add_argument("--width2d", type=int)
    sub.add_argument("--width3d", type=int)
    sub.add_argument("--head-width", dest="head_width", type=int)
    sub.add_argument("--num-classes", dest="num_classes", type=int)
    sub.add_argument("--early-stop-acc", dest="early_stop_acc", type=float)
    sub.add_argument("--format", choices=("raw-le", "envi-bsq"))


def build_parser():
    parser = _Parser(prog="hsicube", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("calibrate", parents=[], help="reference-plate reflectance calibration")
    p.add_argument("--input", required=True)
    p.add_argument("--ref-csv", dest="ref_csv", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--format", choices=("raw-le", "envi-bsq"))
    _add_common(p)

    p = subs.add_parser("mask", help="background removal by spectral dispersion")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ratio", type=float)
    p.add_argument("--format", choices=("raw-le", "envi-bsq"))
    _add_common(p)

    p = subs.add_parser("bands", help="derivative-based band screening")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--output", required=True, help="selection CSV")
    p.add_argument("--curves-prefix", dest="curves_prefix",
                   help="also write <prefix>_d1.csv/<prefix>_d2.csv derivative curves")
    p.add_argument("--sg-window", dest="sg_window", type=int)
    p.add_argument("--sg-order", dest="sg_order", type=int)
    p.add_argument("--prominence", type=float)
    p.add_argument("--tol-bands", dest="tol_bands", type=int)
    p.add_argument("--format", choices=("raw-le", "envi-bsq"))
    _add_common(p)

    p = subs.add_parser("rededge", help="red-edge position from the mean spectrum")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="first-derivative curve CSV")
    p.add_argument("--lo-nm", dest="lo_nm", type=float)
    p.add_argument("--hi-nm", dest="hi_nm", type=float)
    p.add_argument("--format", choices=("raw-le", "envi-bsq"))
    _add_common(p)

    p = subs.add_parser("synth", help="generate a labeled synthetic dataset")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--tiles-per-class", dest="tiles_per_class", type=int)
    p.add_argument("--tile-size", dest="tile_size", type=int)
    p.add_argument("--bands", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--background-fraction", dest="background_fraction", type=float)
    _add_common(p)

    p = subs.add_parser("train", help="train a classifier on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--log-csv", dest="log_csv", help="per-epoch loss CSV")
    _add_model_flags(p)
    _add_common(p)

    p = subs.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True, help="report JSON path")
    p.add_argument("--patches-per-tile", dest="patches_per_tile", type=int)
    p.add_argument("--seed", type=int)
    _add_common(p)

    p = subs.add_parser("ablate", help="train all four attention/SE variants")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output", required=True, help="output directory")
    _add_model_flags(p)
    _add_common(p)

    return parser


def _load_cubes(paths, fmt):
    from .hypercube import load_cube

    return [load_cube(p, fmt) for p in paths]


def _match_reference(axis, ref_wl, dn_ref, rp_ref):
    """Align reference rows to cube bands; tolerance is half a band spacing."""
    spacing = np.min(np.diff(axis.values)) if axis.count > 1 else 1.0
    tol = spacing / 2.0
    dn = np.empty(axis.count)
    rp = np.empty(axis.count)
    missing = []
    for i, wl in enumerate(axis.values):
        j = int(np.argmin(np.abs(ref_wl - wl)))
        if abs(ref_wl[j] - wl) > tol:
            missing.append(float(wl))
            continue
        dn[i] = dn_ref[j]
        rp[i] = rp_ref[j]
    if missing:
        raise DataError(f"reference CSV is missing bands at wavelengths {missing} nm")
    return dn, rp


def _cmd_calibrate(ns):
    from .calib import CalibrationInputs, read_reference_csv, reflectance_calibrate
    from .hypercube import load_cube, save_cube

    fmt = ns.format or "raw-le"
    cube = load_cube(ns.input, fmt)
    ref_wl, dn_ref, rp_ref = read_reference_csv(ns.ref_csv)
    dn, rp = _match_reference(cube.axis, ref_wl, dn_ref, rp_ref)
    out = reflectance_calibrate(CalibrationInputs(cube.data, dn, rp, cube.axis))
    save_cube(out, ns.output, fmt)
    flat = out.data.reshape(out.bands, -1)
    for b in range(out.bands):
        print(f"band={b} wl={out.axis.values[b]:.2f} mean_tr={np.nanmean(flat[b]):.6f}")
    return 0


def _cmd_mask(ns):
    from .hypercube import load_cube, save_cube
    from .mask import mask_summary, remove_background

    fmt = ns.format or "raw-le"
    ratio = ns.ratio if ns.ratio is not None else 0.5
    cube = load_cube(ns.input, fmt)
    out = remove_background(cube, ratio)
    save_cube(out, ns.output, fmt)
    print(mask_summary(out))
    return 0


def _selection_csv(selection):
    lines = ["band_index,wavelength_nm,provenance"]
    for idx, wl, prov in zip(selection.indices, selection.wavelengths_nm, selection.provenance):
        lines.append(f"{int(idx)},{float(wl)!r},{prov}")
    return "\n".join(lines) + "\n"


def _cmd_bands(ns):
    from .calib import average_spectra
    from .spectral import SGConfig, Spectrum, savitzky_golay_derivative, screen_bands

    fmt = ns.format or "raw-le"
    window = ns.sg_window if ns.sg_window is not None else 11
    order = ns.sg_order if ns.sg_order is not None else 3
    prominence = ns.prominence if ns.prominence is not None else 0.3
    tol = ns.tol_bands if ns.tol_bands is not None else 1
    cubes = _load_cubes(ns.input, fmt)
    sg = SGConfig(window=window, poly_order=order, deriv_order=1)
    selection = screen_bands(cubes, sg, prominence, tol)
    with open(ns.output, "w") as fh:
        fh.write(_selection_csv(selection))
    if ns.curves_prefix:
        mean = average_spectra([c.foreground_mean_spectrum() for c in cubes])
        spec = Spectrum(cubes[0].axis.values, mean)
        for d in (1, 2):
            curve = savitzky_golay_derivative(spec, SGConfig(window, order, d))
            with open(f"{ns.curves_prefix}_d{d}.csv", "w") as fh:
                fh.write("wavelength_nm,value\n")
                for wl, val in zip(curve.wavelengths, curve.values):
                    fh.write(f"{float(wl)!r},{float(val)!r}\n")
    print(f"selected={len(selection)}")
    return 0


def _cmd_rededge(ns):
    from .hypercube import load_cube
    from .spectral import Spectrum, central_difference, red_edge_position

    fmt = ns.format or "raw-le"
    lo = ns.lo_nm if ns.lo_nm is not None else 680.0
    hi = ns.hi_nm if ns.hi_nm is not None else 750.0
    cube = load_cube(ns.input, fmt)
    mean = cube.foreground_mean_spectrum()
    if not np.all(np.isfinite(mean)):
        raise DataError("cube has no foreground pixels in some band")
    spec = Spectrum(cube.axis.values, mean)
    position = red_edge_position(spec, lo, hi)
    deriv = central_difference(spec, 1)
    inside = (spec.wavelengths >= lo) & (spec.wavelengths <= hi)
    with open(ns.output, "w") as fh:
        fh.write("wavelength_nm,value\n")
        for wl, val in zip(spec.wavelengths[inside], deriv.values[inside]):
            fh.write(f"{float(wl)!r},{float(val)!r}\n")
    print(f"red_edge_nm={position!r}")
    return 0


def _cmd_synth(ns):
    from .synth import SynthConfig, generate_dataset, write_dataset

    cfg = SynthConfig(
        bands=ns.bands if ns.bands is not None else 204,
        noise_sigma=ns.noise_sigma if ns.noise_sigma is not None else 0.05,
        background_fraction=(
            ns.background_fraction if ns.background_fraction is not None else 0.0
        ),
        seed=ns.seed if ns.seed is not None else 0,
    )
    tiles_per_class = ns.tiles_per_class if ns.tiles_per_class is not None else 10
    tile_size = ns.tile_size if ns.tile_size is not None else 16
    dataset = generate_dataset(cfg, tiles_per_class, tile_size)
    manifest = write_dataset(dataset, ns.output)
    print(f"manifest={manifest} tiles={len(dataset)}")
    return 0


def _model_config(ns, variant=None):
    from .model import ModelConfig

    return ModelConfig(
        S=ns.S,
        B=ns.B,
        num_classes=ns.num_classes,
        use_attention=not ns.no_attention,
        use_se=not ns.no_se,
        dropout=ns.dropout,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        lr=ns.lr,
        seed=ns.seed,
        width2d=ns.width2d,
        width3d=ns.width3d,
        head_width=ns.head_width,
        early_stop_acc=ns.early_stop_acc if ns.early_stop_acc else None,
    )


def _band_selection(ns, tiles):
    """Resolve the --bands flag to either None (all bands) or a selection."""
    from .spectral import PROV_BOTH, BandSelection, SGConfig, screen_bands

    mode = ns.bands
    if mode == "all":
        return None
    if mode == "selected":
        sg = SGConfig(window=ns.sg_window, poly_order=ns.sg_order, deriv_order=1)
        selection = screen_bands(tiles, sg, ns.prominence, ns.tol_bands)
        if len(selection) == 0:
            raise DataError("band screening selected no bands; relax --prominence")
        return selection
    axis = tiles[0].axis
    spacing = np.min(np.diff(axis.values)) if axis.count > 1 else 1.0
    indices = []
    for token in mode.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            nm = float(token)
        except ValueError:
            raise ConfigError(f"--bands expects all|selected|nm list, got {token!r}")
        j = axis.nearest_index(nm)
        if abs(axis.values[j] - nm) > spacing / 2.0 + 1e-9:
            raise DataError(f"no band within half a spacing of {nm} nm")
        indices.append(j)
    if not indices:
        raise ConfigError("--bands list is empty")
    uniq = sorted(set(indices))
    return BandSelection(axis, np.asarray(uniq, dtype=np.int64), (PROV_BOTH,) * len(uniq))


def _stratified_split(labels, test_frac, seed):
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        n_test = int(round(test_frac * members.size))
        test_idx.extend(members[:n_test].tolist())
        train_idx.extend(members[n_test:].tolist())
    return sorted(train_idx), sorted(test_idx)


def _prepare_patches(ns, tiles, labels, genotypes, selection):
    from .model import collect_patches

    train_idx, test_idx = _stratified_split(labels, ns.test_frac, ns.seed)
    def subset(idx):
        return collect_patches(
            [tiles[i] for i in idx], labels[idx], selection, ns.S,
            target_bands=ns.B, per_tile=ns.patches_per_tile, seed=ns.seed,
            genotypes=[genotypes[i] for i in idx],
        )
    train_patches = subset(np.asarray(train_idx, dtype=np.int64))
    test_patches = subset(np.asarray(test_idx, dtype=np.int64))
    if not train_patches:
        raise DataError("no valid training patches (tiles too small for S?)")
    return train_patches, test_patches


def _checkpoint_meta(ns, cfg, variant, selection):
    bands = "all" if selection is None else ",".join(str(int(i)) for i in selection.indices)
    return {
        "variant": variant,
        "S": str(cfg.S),
        "B": str(cfg.B),
        "num_classes": str(cfg.num_classes),
        "use_attention": str(int(cfg.use_attention)),
        "use_se": str(int(cfg.use_se)),
        "dropout": repr(cfg.dropout),
        "width2d": str(cfg.width2d),
        "width3d": str(cfg.width3d),
        "head_width": str(cfg.head_width),
        "seed": str(cfg.seed),
        "band_indices": bands,
    }


def _write_epoch_log(path, losses):
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for i, loss in enumerate(losses, start=1):
            fh.write(f"{i},{loss!r}\n")


def _train_once(ns, variant, tiles, labels, genotypes):
    from .model import build_model, train

    selection = _band_selection(ns, tiles)
    train_patches, test_patches = _prepare_patches(ns, tiles, labels, genotypes, selection)
    cfg = _model_config(ns)
    model = build_model(cfg, variant)
    result = train(model, train_patches, cfg, eval_samples=test_patches or None)
    meta = _checkpoint_meta(ns, model.cfg, variant, selection)
    return model, result, meta


def _cmd_train(ns):
    from .autograd.checkpoint import save_checkpoint
    from .model import count_parameters
    from .synth import read_manifest

    tiles, labels, genotypes = read_manifest(ns.manifest)
    variant = ns.variant
    model, result, meta = _train_once(ns, variant, tiles, labels, genotypes)
    save_checkpoint(ns.output, [(p.name, p.data) for p in model.parameters()], meta)
    if ns.log_csv:
        _write_epoch_log(ns.log_csv, result.epoch_losses)
    train_acc = result.train_report.accuracy if result.train_report else float("nan")
    test_acc = result.test_report.accuracy if result.test_report else float("nan")
    print(f"params={count_parameters(model)} epochs={result.epochs_run} "
          f"train_acc={train_acc:.4f} test_acc={test_acc:.4f}")
    return 0


def _cmd_eval(ns):
    from .autograd.checkpoint import load_checkpoint, load_into_model
    from .metrics import report_to_json
    from .model import ModelConfig, build_model, collect_patches, evaluate
    from .spectral import PROV_BOTH, BandSelection
    from .synth import read_manifest

    tiles, labels, genotypes = read_manifest(ns.manifest)
    meta, _ = load_checkpoint(ns.checkpoint)
    cfg = ModelConfig(
        S=int(meta["S"]),
        B=int(meta["B"]),
        num_classes=int(meta["num_classes"]),
        use_attention=bool(int(meta["use_attention"])),
        use_se=bool(int(meta["use_se"])),
        dropout=float(meta["dropout"]),
        width2d=int(meta["width2d"]),
        width3d=int(meta["width3d"]),
        head_width=int(meta["head_width"]),
        seed=int(meta["seed"]),
    )
    model = build_model(cfg, meta["variant"])
    load_into_model(model, ns.checkpoint)
    axis = tiles[0].axis
    if meta["band_indices"] == "all":
        selection = None
    else:
        idx = sorted(int(t) for t in meta["band_indices"].split(","))
        selection = BandSelection(axis, np.asarray(idx, dtype=np.int64), (PROV_BOTH,) * len(idx))
    per_tile = ns.patches_per_tile if ns.patches_per_tile is not None else 4
    seed = ns.seed if ns.seed is not None else int(meta["seed"])
    samples = collect_patches(tiles, labels, selection, cfg.S, target_bands=cfg.B,
                              per_tile=per_tile, seed=seed, genotypes=genotypes)
    if not samples:
        raise DataError("no valid patches to evaluate")
    rep = evaluate(model, samples)
    with open(ns.output, "w") as fh:
        fh.write(report_to_json(rep))
    print(f"accuracy={rep.accuracy:.4f} samples={len(samples)}")
    return 0


def _cmd_ablate(ns):
    from .autograd.checkpoint import save_checkpoint
    from .metrics import report_to_json
    from .synth import read_manifest

    tiles, labels, genotypes = read_manifest(ns.manifest)
    os.makedirs(ns.output, exist_ok=True)
    variants = ("ours", "ours-a", "ours-s", "ours-a-s")
    rows = []
    for variant in variants:
        model, result, meta = _train_once(ns, variant, tiles, labels, genotypes)
        rep = result.test_report or result.train_report
        with open(os.path.join(ns.output, f"report_{variant}.json"), "w") as fh:
            fh.write(report_to_json(rep))
        save_checkpoint(
            os.path.join(ns.output, f"model_{variant}.ckpt"),
            [(p.name, p.data) for p in model.parameters()],
            meta,
        )
        rows.append((variant, rep))
        print(f"{variant}: accuracy={rep.accuracy:.4f}")
    k = rows[0][1].matrix.num_classes
    header = ["variant", "accuracy"]
    for c in range(k):
        header += [f"precision_{c}", f"recall_{c}", f"f1_{c}"]
    with open(os.path.join(ns.output, "comparison.csv"), "w") as fh:
        fh.write(",".join(header) + "\n")
        for variant, rep in rows:
            cells = [variant, f"{rep.accuracy:.6f}"]
            for c in range(k):
                cells += [f"{rep.precision[c]:.6f}", f"{rep.recall[c]:.6f}", f"{rep.f1[c]:.6f}"]
            fh.write(",".join(cells) + "\n")
    return 0


_SIMPLE_DEFAULTS = {
    "calibrate": {"input": None, "ref_csv": None, "output": None, "format": "raw-le"},
    "mask": {"input": None, "output": None, "ratio": 0.5, "format": "raw-le"},
    "bands": {"input": None, "output": None, "curves_prefix": None, "sg_window": 11,
              "sg_order": 3, "prominence": 0.3, "tol_bands": 1, "format": "raw-le"},
    "rededge": {"input": None, "output": None, "lo_nm": 680.0, "hi_nm": 750.0,
                "format": "raw-le"},
    "synth": {"output": None, "seed": 0, "tiles_per_class": 10, "tile_size": 16,
              "bands": 204, "noise_sigma": 0.05, "background_fraction": 0.0},
    "eval": {"manifest": None, "checkpoint": None, "output": None,
             "patches_per_tile": 4, "seed": None},
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = args.command
    try:
        if command in _SIMPLE_DEFAULTS:
            ns = _resolve(args, _SIMPLE_DEFAULTS[command])
        else:
            defaults = dict(_MODEL_DEFAULTS)
            defaults.update({"manifest": None, "output": None, "log_csv": None})
            ns = _resolve(args, defaults)
        handler = {
            "calibrate": _cmd_calibrate,
            "mask": _cmd_mask,
            "bands": _cmd_bands,
            "rededge": _cmd_rededge,
            "synth": _cmd_synth,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "ablate": _cmd_ablate,
        }[command]
        return handler(ns)
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FormatError, AxisError, DimensionError, GridError, CoverageError,
            DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
