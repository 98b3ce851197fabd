"""Command-line driver for batch runs and the HTTP service."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import clustering, ede, filters, petro, runner, supervised, volume
from .errors import TomosegError


def _in_options(fn):
    opts = [
        click.option("--input", "input_path", required=True, type=click.Path(exists=True),
                     help="raw volume file"),
        click.option("--nx", required=True, type=int),
        click.option("--ny", required=True, type=int),
        click.option("--nz", required=True, type=int),
        click.option("--bit-depth", default=16, type=click.Choice(["8", "16"]), show_default=True),
        click.option("--byte-order", default="little",
                     type=click.Choice(["little", "big"]), show_default=True),
        click.option("--voxel-size", default=1.0, type=float, show_default=True),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size):
    return volume.load_raw(
        input_path, nx=nx, ny=ny, nz=nz, bit_depth=int(bit_depth),
        byte_order=byte_order, voxel_size=voxel_size,
    )


def _write_labels(labels: volume.LabelVolume, out: str):
    vol = volume.VoxelVolume(labels.labels.astype(np.uint8), voxel_size=labels.voxel_size)
    volume.export_raw(vol, out)
    click.echo(f"labels -> {out} (u8 raw, {labels.nx}x{labels.ny}x{labels.nz})")


@click.group()
@click.version_option(package_name="tomoseg")
def main():
    """Micro-CT segmentation and petrophysics toolkit."""


@main.command()
@click.argument("config", type=click.Path(exists=True))
@click.option("--base-dir", default=None, type=click.Path(), help="paths resolve against this")
@click.option("--manifest", "manifest_path", default=None, type=click.Path(),
              help="write the run manifest here")
def run(config, base_dir, manifest_path):
    """Execute a declarative stage chain from a YAML/JSON config."""
    cfg = runner.load_config(config)
    base = base_dir or str(Path(config).parent)
    try:
        manifest = runner.run_config(cfg, base_dir=base)
    except TomosegError as exc:
        raise click.ClickException(str(exc)) from exc
    for st in manifest["stages"]:
        click.echo(f"[{st['op']}] {st['name']}: {st['output_hash'][:12]}")
    if manifest_path:
        runner.write_manifest(manifest, manifest_path)
        click.echo(f"manifest -> {manifest_path}")


@main.group()
def filter():
    """Denoising and contrast filters."""


@filter.command("nlm")
@_in_options
@click.option("--out", required=True, type=click.Path())
@click.option("--nlm-window", default=21, show_default=True)
@click.option("--nlm-neigh", default=6, show_default=True)
@click.option("--nlm-sim", default=0.71, show_default=True)
@click.option("--three-d/--per-slice", default=False, show_default=True)
def filter_nlm(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, out,
               nlm_window, nlm_neigh, nlm_sim, three_d):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    p = filters.NlmParams(search_window=nlm_window, neighborhood=nlm_neigh,
                          similarity=nlm_sim, three_d=three_d)
    volume.export_raw(filters.nlm_filter(vol, p), out)
    click.echo(f"filtered -> {out}")


@filter.command("ad")
@_in_options
@click.option("--out", required=True, type=click.Path())
@click.option("--ad-threshold", required=True, type=float)
@click.option("--ad-iters", default=5, show_default=True)
@click.option("--ad-sigma", default=0.0, show_default=True, help="gradient pre-smoothing")
def filter_ad(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, out,
              ad_threshold, ad_iters, ad_sigma):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    p = filters.AdParams(threshold=ad_threshold, iterations=ad_iters, smoothing_sigma=ad_sigma)
    volume.export_raw(filters.anisotropic_diffusion(vol, p), out)
    click.echo(f"filtered -> {out}")


@filter.command("smooth")
@_in_options
@click.option("--out", required=True, type=click.Path())
@click.option("--method", default="median", type=click.Choice(["median", "mean", "gaussian"]))
@click.option("--radius", default=1, show_default=True)
@click.option("--sigma", default=None, type=float)
def filter_smooth(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, out,
                  method, radius, sigma):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    volume.export_raw(filters.smooth(vol, method=method, radius=radius, sigma=sigma), out)
    click.echo(f"filtered -> {out}")


@filter.command("contrast")
@_in_options
@click.option("--out", required=True, type=click.Path())
@click.option("--low-pct", default=0.0, show_default=True)
@click.option("--high-pct", default=100.0, show_default=True)
def filter_contrast(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, out,
                    low_pct, high_pct):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    volume.export_raw(filters.contrast_stretch(vol, low_pct, high_pct), out)
    click.echo(f"filtered -> {out}")


@main.group()
def segment():
    """Unsupervised segmentation."""


@segment.command("kmeans")
@_in_options
@click.option("--labels-out", required=True, type=click.Path())
@click.option("--k", required=True, type=int)
@click.option("--distance", default="sqeuclidean", show_default=True,
              help="sqeuclidean | cityblock/mandist | box")
@click.option("--restarts", default=5, show_default=True)
@click.option("--mask", "mask_threshold", default=0.0, show_default=True,
              help="intensities at or below are excluded (label 0)")
@click.option("--seed", default=42, show_default=True)
def segment_kmeans(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size,
                   labels_out, k, distance, restarts, mask_threshold, seed):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    try:
        cfg = clustering.KmeansConfig(k=k, distance=distance, restarts=restarts,
                                      mask_threshold=mask_threshold, seed=seed)
        res = clustering.kmeans_segment(vol, cfg)
    except TomosegError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"centers: {np.round(res.centers, 3).tolist()}")
    click.echo(f"objective: {res.objective:.6g} after {res.iterations_used} iterations")
    _write_labels(res.labels, labels_out)


@segment.command("fcm")
@_in_options
@click.option("--labels-out", required=True, type=click.Path())
@click.option("--c", "c_", required=True, type=int)
@click.option("--m", default=2.0, show_default=True, help="membership exponent in (1, 2]")
@click.option("--mask", "mask_threshold", default=0.0, show_default=True)
@click.option("--seed", default=42, show_default=True)
def segment_fcm(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size,
                labels_out, c_, m, mask_threshold, seed):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    try:
        cfg = clustering.FcmConfig(c=c_, m=m, mask_threshold=mask_threshold, seed=seed)
        res = clustering.fcm_segment(vol, cfg)
    except TomosegError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"centers: {np.round(res.centers, 3).tolist()}")
    _write_labels(res.labels, labels_out)


@main.command("ede-pipeline")
@_in_options
@click.option("--labels-out", required=True, type=click.Path())
@click.option("--k1", default=7, show_default=True)
@click.option("--final-k", default=3, show_default=True)
@click.option("--seg-slices", default="0,1", show_default=True, help="comma-separated z indices")
@click.option("--map", "map_spec", default="default", show_default=True,
              help="'default' or a JSON file of {name, lo, hi} phases")
@click.option("--mask", "mask_threshold", default=0.0, show_default=True)
@click.option("--stats-out", default=None, type=click.Path(), help="phase stats CSV")
@click.option("--seed", default=42, show_default=True)
def ede_pipeline(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, labels_out,
                 k1, final_k, seg_slices, map_spec, mask_threshold, stats_out, seed):
    """Dual-clustering halo removal on a dual-filtered stack."""
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    if map_spec == "default":
        pm = ede.default_phase_map()
    else:
        spec = json.loads(Path(map_spec).read_text())
        pm = ede.PhaseMap(phases=tuple(ede.Phase(p["name"], p["lo"], p["hi"]) for p in spec))
    cfg = ede.EdeConfig(
        k1=k1, final_k=final_k, mask_threshold=mask_threshold,
        seg_slices=tuple(int(s) for s in seg_slices.split(",")), phase_map=pm, seed=seed,
    )
    try:
        res = ede.dual_cluster_pipeline(vol, cfg)
    except TomosegError as exc:
        raise click.ClickException(str(exc)) from exc
    for adv in res.advisories:
        click.echo(f"advisory: {adv}", err=True)
    for name, st in res.stats.stats.items():
        if st.empty:
            click.echo(f"{name}: empty")
        else:
            click.echo(f"{name}: n={st.count} mean={st.mean:.1f} std={st.std:.1f} "
                       f"range=[{st.min:.0f}, {st.max:.0f}] skew={st.skewness:.2f}")
    if stats_out:
        stats = [st for st in res.stats.stats.values()]
        volume.export_csv(
            {
                "phase": [s.name for s in stats],
                "count": [s.count for s in stats],
                "min": [s.min for s in stats],
                "max": [s.max for s in stats],
                "mean": [s.mean for s in stats],
                "std": [s.std for s in stats],
                "skewness": [s.skewness for s in stats],
            },
            stats_out,
        )
        click.echo(f"stats -> {stats_out}")
    _write_labels(res.final, labels_out)


def _labels_options(fn):
    opts = [
        click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
                     help="label volume (u8 raw)"),
        click.option("--nx", required=True, type=int),
        click.option("--ny", required=True, type=int),
        click.option("--nz", required=True, type=int),
        click.option("--k", required=True, type=int, help="number of classes"),
        click.option("--voxel-size", default=1.0, type=float, show_default=True),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def _load_labels(labels_path, nx, ny, nz, k, voxel_size):
    vol = volume.load_raw(labels_path, nx=nx, ny=ny, nz=nz, bit_depth=8)
    return volume.LabelVolume(labels=vol.data, k=k, voxel_size=voxel_size)


@main.group()
def analyze():
    """Petrophysics on segmented volumes."""


@analyze.command("porosity")
@_labels_options
@click.option("--pore-class", default=1, show_default=True)
@click.option("--out", default=None, type=click.Path(), help="write CSV here")
def analyze_porosity(labels_path, nx, ny, nz, k, voxel_size, pore_class, out):
    lab = _load_labels(labels_path, nx, ny, nz, k, voxel_size)
    phi = petro.porosity(lab, pore_class)
    click.echo(f"porosity: {phi:.6f}")
    if out:
        volume.export_csv({"porosity": [phi]}, out)


@analyze.command("trend")
@_labels_options
@click.option("--pore-class", default=1, show_default=True)
@click.option("--out", default=None, type=click.Path())
def analyze_trend(labels_path, nx, ny, nz, k, voxel_size, pore_class, out):
    lab = _load_labels(labels_path, nx, ny, nz, k, voxel_size)
    t = petro.porosity_trend(lab, pore_class)
    click.echo(f"mean {t.mean:.4f} +- {t.std:.4f}, slope {t.slope:.3e}, R^2 {t.r_squared:.4f}")
    if out:
        volume.export_csv(
            {"slice": list(range(len(t.per_slice))), "porosity": t.per_slice.tolist()}, out
        )


@analyze.command("fractions")
@_labels_options
@click.option("--out", default=None, type=click.Path())
def analyze_fractions(labels_path, nx, ny, nz, k, voxel_size, out):
    lab = _load_labels(labels_path, nx, ny, nz, k, voxel_size)
    fr = petro.volume_fractions(lab)
    for c, v in fr.items():
        click.echo(f"class {c}: {v:.6f}")
    if out:
        volume.export_csv({"class": list(fr), "fraction": list(fr.values())}, out)


@analyze.command("psd")
@_labels_options
@click.option("--pore-class", default=1, show_default=True)
@click.option("--smoothing-sigma", default=1.0, show_default=True)
@click.option("--out", default=None, type=click.Path())
def analyze_psd(labels_path, nx, ny, nz, k, voxel_size, pore_class, smoothing_sigma, out):
    lab = _load_labels(labels_path, nx, ny, nz, k, voxel_size)
    r = petro.pore_size_distribution(lab, pore_class, smoothing_sigma=smoothing_sigma)
    click.echo(f"{r.region_count} pore regions, diameter {r.mean:.3f} +- {r.std:.3f} um")
    if out:
        volume.export_csv({"diameter_um": r.diameters.tolist()}, out)


@analyze.command("rev")
@_labels_options
@click.option("--pore-class", default=1, show_default=True)
@click.option("--edges", required=True, help="comma-separated cube edge lengths")
@click.option("--band", default=0.01, show_default=True)
@click.option("--out", default=None, type=click.Path())
def analyze_rev(labels_path, nx, ny, nz, k, voxel_size, pore_class, edges, band, out):
    lab = _load_labels(labels_path, nx, ny, nz, k, voxel_size)
    c = petro.rev_curve(lab, pore_class, [int(e) for e in edges.split(",")], band=band)
    for e, phi, h in zip(c.edges, c.porosities, c.hints):
        click.echo(f"edge {e}: porosity {phi:.4f} (region {h})")
    click.echo(f"full-volume porosity {c.full_porosity:.4f}; region II onset: {c.onset_edge}")
    if out:
        volume.export_csv(
            {"edge": list(c.edges), "porosity": list(c.porosities), "hint": list(c.hints)}, out
        )


@main.command()
@_in_options
@click.option("--table", "table_path", required=True, type=click.Path(exists=True),
              help="training table CSV (class,feature,x,y,slice)")
@click.option("--model", default="lssvm", type=click.Choice(["lssvm", "bagging", "adaboost"]))
@click.option("--gamma", default=1.0, show_default=True)
@click.option("--sigma2", default=1000.0, show_default=True)
@click.option("--n-learners", default=50, show_default=True)
@click.option("--max-depth", default=3, show_default=True)
@click.option("--labels-out", required=True, type=click.Path())
@click.option("--cv-folds", default=0, show_default=True, help="0 disables cross-validation")
def classify(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, table_path,
             model, gamma, sigma2, n_learners, max_depth, labels_out, cv_folds):
    """Train on labeled pixels and classify the whole stack."""
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    t = supervised.TrainingTable.from_csv(table_path)
    try:
        feats = supervised.extract_features(vol, t)
        if model == "lssvm":
            trained = supervised.train_lssvm(feats, gamma=gamma, sigma2=sigma2)
            trainer = lambda fm: supervised.train_lssvm(fm, gamma=gamma, sigma2=sigma2)
        else:
            trained = supervised.train_ensemble(
                feats, method=model, n_learners=n_learners, max_depth=max_depth
            )
            trainer = lambda fm: supervised.train_ensemble(
                fm, method=model, n_learners=n_learners, max_depth=max_depth
            )
        if cv_folds:
            cv = supervised.cross_validate(feats, folds=cv_folds, trainer=trainer)
            click.echo(f"{cv_folds}-fold CV accuracy: {cv.mean:.4f} +- {cv.std:.4f}")
        out = supervised.classify_volume(trained, vol)
    except TomosegError as exc:
        raise click.ClickException(str(exc)) from exc
    _write_labels(out, labels_out)


@main.group()
def export():
    """Convert stored volumes to exchange formats."""


@export.command("vtk")
@_in_options
@click.option("--out", required=True, type=click.Path())
@click.option("--ascii", "ascii_", is_flag=True, default=False)
@click.option("--as-labels", is_flag=True, default=False,
              help="treat the input as a label volume (u8 classes)")
@click.option("--k", default=0, type=int, help="class count when --as-labels")
def export_vtk_cmd(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size, out,
                   ascii_, as_labels, k):
    vol = _load(input_path, nx, ny, nz, bit_depth, byte_order, voxel_size)
    if as_labels:
        obj = volume.LabelVolume(
            labels=vol.data.astype(np.uint8), k=k or int(vol.data.max()),
            voxel_size=voxel_size,
        )
    else:
        obj = vol
    volume.export_vtk(obj, out, ascii=ascii_)
    click.echo(f"vtk -> {out}")


@main.command()
@click.option("--host", default=None, help="bind address (env TOMOSEG_ADDR)")
@click.option("--port", default=None, type=int)
@click.option("--data-dir", default=None, type=click.Path(), help="env TOMOSEG_DATA")
def serve(host, port, data_dir):
    """Run the HTTP job API for the browser UI."""
    import uvicorn

    from .service import create_app

    addr = host or os.environ.get("TOMOSEG_ADDR", "127.0.0.1")
    prt = port or int(os.environ.get("TOMOSEG_PORT", "8077"))
    ddir = data_dir or os.environ.get("TOMOSEG_DATA", ".")
    app = create_app(data_dir=ddir)
    uvicorn.run(app, host=addr, port=prt)


if __name__ == "__main__":
    sys.exit(main())
