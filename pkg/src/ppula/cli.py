"""Command-line interface: ``simulate``, ``run``, ``compare`` and ``metrics``.

Exit codes: 0 on success, 2 for configuration/usage errors, 3 for runtime
errors (missing or malformed data, sampler failures, unwritable outputs).
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from .baselines import bmode, median_filter, otsu_multilevel, wiener_deconvolve
from .config import ConfigError, load_config
from .gibbs import ChainError, run_chain
from .metrics import cnr, overall_accuracy, psnr, ssim
from .operators import load_psf, save_psf
from .phantom import make_phantom

log = logging.getLogger("ppula")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

METRICS_FILE = "metrics.csv"
TIMING_FILE = "timing.csv"
ESTIMATES_FILE = "estimates.csv"
TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.txt"
COMPARE_COLUMNS = ("method", "sampler", "psnr", "ssim", "cnr", "oa",
                   "msj_per_s", "wall_time_s", "speed_gain")


# ---------------------------------------------------------------------------
# bundles

def write_bundle(out, phantom, seed):
    out = pio.ensure_dir(out)
    spec = phantom.spec
    pio.write_image(out / "x.f64", phantom.x)
    pio.write_pgm(out / "x.pgm", bmode(phantom.x), 0.0, 1.0)
    pio.write_labels(out / "z.labels", phantom.z)
    pio.write_image(out / "y.f64", phantom.y)
    pio.write_pgm(out / "y.pgm", bmode(phantom.y), 0.0, 1.0)
    save_psf(out / "psf.txt", phantom.psf)
    pio.write_kv(out / "params.txt", {
        "width": spec.width, "height": spec.height, "n_classes": spec.n_classes,
        "alpha": list(spec.alpha), "beta": list(spec.beta), "sigma2": spec.sigma2,
        "psf_fc": spec.psf_fc, "psf_sigma_axial": spec.psf_sigma_axial,
        "psf_sigma_lateral": spec.psf_sigma_lateral, "psf_size": spec.psf_size,
        "seed": seed,
    })
    return out


def read_bundle(path):
    """Return ``(y, psf, x_true, z_true)``; the ground truth entries may be ``None``."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"data directory {path} does not exist")
    y = pio.read_image(path / "y.f64")
    psf = load_psf(path / "psf.txt")
    x_true = pio.read_image(path / "x.f64") if (path / "x.f64").exists() else None
    z_true = pio.read_labels(path / "z.labels") if (path / "z.labels").exists() else None
    for name, arr in (("x.f64", x_true), ("z.labels", z_true)):
        if arr is not None and arr.shape != y.shape:
            raise pio.FormatError(f"{path / name}: shape {arr.shape} differs from y {y.shape}")
    return y, psf, x_true, z_true


# ---------------------------------------------------------------------------
# metrics

def image_metrics(x_est, z_est, y, psf, x_true, z_true, rc):
    """Deterministic quality metrics of an estimate and of the Wiener/Otsu baseline.

    Rows needing ground truth are omitted when it is absent.
    """
    K = rc.chain.n_classes
    x_w = wiener_deconvolve(y, psf)
    rows = []
    if x_true is not None:
        rows += [("psnr", psnr(x_true, x_est)), ("ssim", ssim(x_true, x_est))]
    rows.append(("cnr", cnr(bmode(x_est, rc.bmode), rc.cnr_windows)))
    if z_true is not None:
        rows.append(("oa", overall_accuracy(z_true, z_est, K)))
    if x_true is not None:
        rows += [("wiener_psnr", psnr(x_true, x_w)), ("wiener_ssim", ssim(x_true, x_w))]
    rows.append(("wiener_cnr", cnr(bmode(x_w, rc.bmode), rc.cnr_windows)))
    if z_true is not None and K > 1:
        z_otsu = otsu_multilevel(median_filter(bmode(x_w, rc.bmode), 7), K)
        rows.append(("otsu_oa", overall_accuracy(z_true, z_otsu, K)))
    return rows


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_results(out, result, rc, data_dir, metrics_rows):
    out = pio.ensure_dir(out)
    K = rc.chain.n_classes
    pio.write_image(out / "x_mmse.f64", result.x_mmse)
    pio.write_labels(out / "z_map.labels", result.z_map)
    pio.write_pgm(out / "bmode_mmse.pgm", bmode(result.x_mmse, rc.bmode), 0.0, 1.0)
    pio.write_pgm(out / "z_map.pgm", result.z_map, 1, max(K, 2))
    pio.write_csv(out / METRICS_FILE, ("metric", "value"), metrics_rows)
    est = [("sigma2_mmse", result.sigma2_mmse)]
    est += [(f"alpha_{k + 1}", a) for k, a in enumerate(result.alpha_mmse)]
    est += [(f"beta_{k + 1}", b) for k, b in enumerate(result.beta_mmse)]
    est += [("msj", result.msj), ("theta_final", result.theta)]
    pio.write_csv(out / ESTIMATES_FILE, ("quantity", "value"), est)
    pio.write_csv(out / TIMING_FILE, ("quantity", "value"), [
        ("wall_time_s", result.wall_time),
        ("seconds_per_iter", result.wall_time_per_iter),
        ("msj_per_s", result.msj_per_second),
    ])
    tr = result.trace
    header = ["iteration", "sigma2"] + [f"alpha_{k + 1}" for k in range(K)] \
        + [f"beta_{k + 1}" for k in range(K)] + ["theta", "psnr", "isolated", "seconds"]
    rows = [[int(tr["iteration"][i]), tr["sigma2"][i], *tr["alpha"][i], *tr["beta"][i],
             tr["theta"][i], tr["psnr"][i], tr["isolated"][i], tr["seconds"][i]]
            for i in range(len(tr["iteration"]))]
    pio.write_csv(out / TRACE_FILE, header, rows)
    (out / "config.ini").write_text(rc.text)
    scfg = rc.chain.sampler
    pio.write_kv(out / MANIFEST_FILE, {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "trf_sampler": rc.chain.trf_sampler,
        "sampler_seed": scfg.rng_seed,
        "config_sha256": rc.digest,
        "data_dir": str(Path(data_dir).resolve()),
        "data_y_sha256": _sha256_file(Path(data_dir) / "y.f64"),
        "burn_in": rc.chain.burn_in,
        "total_iters": rc.chain.total_iters,
        "wall_time_s": result.wall_time,
        "seconds_per_iter": result.wall_time_per_iter,
        "dfb_iterations": int(result.diagnostics["dfb_iterations"]),
        "dfb_not_converged": int(result.diagnostics["dfb_not_converged"]),
        "empty_region_events": int(result.diagnostics["empty_region_events"]),
        "alpha_acceptance": list(result.diagnostics["alpha_acceptance"]),
    })
    return out


def _read_named_csv(path):
    header, rows = pio.read_csv(path)
    if len(header) != 2:
        raise pio.FormatError(f"{path}: expected two columns")
    try:
        return {name: float(v) for name, v in rows}
    except ValueError:
        raise pio.FormatError(f"{path}: non-numeric value") from None


def compare_results(dirs):
    """Rows of the comparison table (dicts keyed by :data:`COMPARE_COLUMNS`).

    ``speed_gain`` is the slowest wall time divided by each method's own.
    """
    if len(dirs) < 2:
        raise ValueError("compare needs at least two result directories")
    entries = []
    for d in dirs:
        d = Path(d)
        metrics = _read_named_csv(d / METRICS_FILE)
        timing = _read_named_csv(d / TIMING_FILE)
        manifest = pio.read_kv(d / MANIFEST_FILE)
        for key in ("wall_time_s", "msj_per_s"):
            if key not in timing:
                raise pio.FormatError(f"{d / TIMING_FILE}: missing {key}")
        entries.append((d, metrics, timing, manifest))
    keys = {frozenset(m) for _, m, _, _ in entries}
    if len(keys) != 1:
        raise pio.FormatError("schema mismatch: result directories report different metrics")
    slowest = max(t["wall_time_s"] for _, _, t, _ in entries)
    table = []
    for d, m, t, man in entries:
        table.append({
            "method": d.name or str(d), "sampler": man.get("trf_sampler", "?"),
            "psnr": m.get("psnr"), "ssim": m.get("ssim"), "cnr": m.get("cnr"),
            "oa": m.get("oa"), "msj_per_s": t["msj_per_s"],
            "wall_time_s": t["wall_time_s"],
            "speed_gain": slowest / t["wall_time_s"] if t["wall_time_s"] > 0 else float("inf"),
        })
    return table


def format_table(table):
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    cells = [list(COMPARE_COLUMNS)] + [[cell(r[c]) for c in COMPARE_COLUMNS] for r in table]
    widths = [max(len(row[i]) for row in cells) for i in range(len(COMPARE_COLUMNS))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells) + "\n"


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args):
    rc = load_config(args.config, seed=args.seed)
    phantom = make_phantom(rc.phantom, seed=rc.phantom_seed)
    out = write_bundle(args.out, phantom, rc.phantom_seed)
    print(f"wrote phantom bundle to {out}")


def cmd_run(args):
    rc = load_config(args.config, seed=args.seed, sampler=args.sampler)
    y, psf, x_true, z_true = read_bundle(args.data)
    if z_true is not None and z_true.max() > rc.chain.n_classes:
        raise ConfigError("ground-truth labels exceed chain.n_classes")
    every = max(1, rc.chain.total_iters // 20)

    def progress(t, sampler):
        if t % every == 0:
            st = sampler.state
            log.info("iter %d/%d sigma2=%.4g alpha=%s beta=%s theta=%.3g", t,
                     rc.chain.total_iters, st.sigma2, np.round(st.ggd.alpha, 3),
                     np.round(st.ggd.beta, 3), st.theta)

    result = run_chain(y, psf, rc.chain, x_true=x_true, z_true=z_true, progress=progress)
    rows = image_metrics(result.x_mmse, result.z_map, y, psf, x_true, z_true, rc)
    out = write_results(args.out, result, rc, args.data, rows)
    for name, value in rows:
        print(f"{name:>12s}  {value:.6g}")
    print(f"{'msj_per_s':>12s}  {result.msj_per_second:.6g}")
    print(f"wrote results to {out}")


def cmd_metrics(args):
    res = Path(args.results)
    config = args.config or res / "config.ini"
    rc = load_config(config)
    data = args.data or pio.read_kv(res / MANIFEST_FILE).get("data_dir")
    if not data:
        raise ConfigError("no data directory given and none recorded in the manifest")
    y, psf, x_true, z_true = read_bundle(data)
    x_est = pio.read_image(res / "x_mmse.f64")
    z_est = pio.read_labels(res / "z_map.labels")
    rows = image_metrics(x_est, z_est, y, psf, x_true, z_true, rc)
    if args.out:
        pio.write_csv(args.out, ("metric", "value"), rows)
    timing = res / TIMING_FILE
    if timing.exists():
        rows = rows + [("msj_per_s", _read_named_csv(timing)["msj_per_s"])]
    for name, value in rows:
        print(f"{name:>12s}  {value:.6g}")


def cmd_compare(args):
    table = compare_results(args.results)
    text = format_table(table)
    if args.out:
        out = pio.ensure_dir(args.out)
        pio.write_csv(out / "comparison.csv", COMPARE_COLUMNS,
                      [["" if r[c] is None else r[c] for c in COMPARE_COLUMNS] for r in table])
        (out / "comparison.txt").write_text(text)
    sys.stdout.write(text)


def build_parser():
    p = argparse.ArgumentParser(
        prog="ppula",
        description="Joint deconvolution and segmentation with a PP-ULA hybrid Gibbs sampler.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log chain progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic phantom bundle")
    s.add_argument("--config", help="configuration file (defaults: simu1-mini)")
    s.add_argument("--seed", type=int, help="override phantom and sampler seeds")
    s.add_argument("--out", required=True, help="bundle directory to write")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run the Gibbs sampler on a bundle")
    r.add_argument("--config", help="configuration file (defaults: simu1-mini)")
    r.add_argument("--data", required=True, help="bundle directory (y.f64, psf.txt, ...)")
    r.add_argument("--out", required=True, help="results directory to write")
    r.add_argument("--seed", type=int, help="override phantom and sampler seeds")
    r.add_argument("--sampler", choices=("ppula", "pula"), help="override chain.trf_sampler")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate two or more result directories")
    c.add_argument("results", nargs="+", help="result directories")
    c.add_argument("--out", help="directory for comparison.csv / comparison.txt")
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("metrics", help="recompute image metrics from a result directory")
    m.add_argument("results", help="result directory")
    m.add_argument("--data", help="bundle directory (default: the one in the manifest)")
    m.add_argument("--config", help="configuration (default: the result's config.ini)")
    m.add_argument("--out", help="write the recomputed metrics to this CSV file")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "compare" and len(args.results) < 2:
        parser.error("compare needs at least two result directories")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"ppula: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChainError as exc:
        print(f"ppula: sampler error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"ppula: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
