"""Command-line experiment harness.

Every command is deterministic given --seed and writes data files (CSV or
JSON), never plots. Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

import io
import json
import os
import sys

import click
import numpy as np

from . import active, dataset, features, gp_core, mog, selection
from .container import _atomic_write_bytes
from .kernels import KernelSpec

KERNEL_NAMES = {"m12": "half", "m32": "three_half", "rbf": "inf"}
RISK_NAMES = {
    "pred": "prediction_error",
    "gen": "generalized_error",
    "norm": "normalized_error",
}


def _fail(message):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _write_text(path, text):
    _atomic_write_bytes(path, text.encode("utf-8"))
    click.echo(f"wrote {path}")


def _write_json(path, payload):
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_grid(name):
    if name == "cipic":
        return dataset.cipic_like_grid()
    kind, _, arg = name.partition(":")
    if kind == "fibonacci" and arg.isdigit():
        return dataset.fibonacci_grid(int(arg))
    if kind == "equiangular":
        a, _, e = arg.partition("x")
        if a.isdigit() and e.isdigit():
            return dataset.equiangular_grid(int(a), int(e))
    raise click.UsageError(
        f"unknown grid {name!r}; use cipic, fibonacci:N, or equiangular:AxE")


def _load_features(data_path, kind):
    hrtf = dataset.import_hrtf(data_path)
    return features.extract_features(hrtf, kind), hrtf


def _train_gp(fm, kernel_nu, iters, train_sigma=True):
    spec0, sigma0 = gp_core.default_init(kernel_nu, fm.X, fm.Y)
    spec, sigma, lmh = gp_core.train_hyperparams(
        spec0, sigma0, fm.X, fm.Y, iters=iters, train_sigma=train_sigma)
    return spec, sigma, lmh


@click.group()
def main():
    """HRTF-based binaural localization workbench."""


@main.command()
@click.option("--grid", default="cipic", show_default=True)
@click.option("--radius", default=0.0875, show_default=True, type=float)
@click.option("--bins", default=64, show_default=True, type=int)
@click.option("--rate", default=44100.0, show_default=True, type=float)
@click.option("--subject", default=None)
@click.option("--out", required=True, type=click.Path())
def synth(grid, radius, bins, rate, subject, out):
    """Write a synthetic sphere-model HRTF container."""
    g = _load_grid(grid)
    try:
        hrtf = dataset.synth_sphere_hrtf(g, radius, bins, rate, subject_id=subject)
        dataset.export_hrtf(hrtf, out)
    except (dataset.DatasetError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {out} ({hrtf.n} directions x {hrtf.d} bins)")


@main.command("import")
@click.option("--data", required=True, type=click.Path(exists=True))
def import_cmd(data):
    """Validate a container and print its summary."""
    try:
        hrtf = dataset.import_hrtf(data)
    except (dataset.DatasetError, Exception) as exc:
        _fail(exc)
    click.echo(json.dumps({
        "subject_id": hrtf.subject_id,
        "n": hrtf.n,
        "d": hrtf.d,
        "sample_rate_hz": hrtf.sample_rate_hz,
    }, indent=2, sort_keys=True))


@main.command("features")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True,
              type=click.Choice(features.FEATURE_KINDS))
@click.option("--out", required=True, type=click.Path())
def features_cmd(data, kind, out):
    """Extract one feature kind to CSV (direction columns first)."""
    try:
        fm, _ = _load_features(data, kind)
    except Exception as exc:
        _fail(exc)
    buf = io.StringIO()
    width = fm.X.shape[1]
    buf.write("x,y,z," + ",".join(f"f{i}" for i in range(width)) + "\n")
    for yrow, xrow in zip(fm.Y, fm.X):
        buf.write(",".join(f"{v:.9g}" for v in np.concatenate([yrow, xrow])) + "\n")
    _write_text(out, buf.getvalue())


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--kind", default="MP", show_default=True,
              type=click.Choice(features.FEATURE_KINDS))
@click.option("--kernel", default="rbf", show_default=True,
              type=click.Choice(sorted(KERNEL_NAMES)))
@click.option("--iters", default=50, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def train(data, kind, kernel, iters, out):
    """Train GP hyperparameters by marginal-likelihood ascent."""
    try:
        fm, _ = _load_features(data, kind)
        spec, sigma, lmh = _train_gp(fm, KERNEL_NAMES[kernel], iters)
    except Exception as exc:
        _fail(exc)
    _write_json(out, {
        "kind": kind,
        "kernel": kernel,
        "length_scales": [float(v) for v in spec.length_scales],
        "signal_scale": spec.signal_scale,
        "sigma": sigma,
        "lmh": lmh,
    })


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--kinds", default="MP", show_default=True,
              help="comma-separated feature kinds")
@click.option("--kernels", default="m12,m32,rbf", show_default=True)
@click.option("--iters", default=25, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def crossval(data, kinds, kernels, iters, seed, out):
    """Train on a random third, predict everywhere, report mean angular
    error (degrees) for OLS, NN, and each GP kernel per feature kind."""
    kind_list = [k.strip() for k in kinds.split(",") if k.strip()]
    kernel_list = [k.strip() for k in kernels.split(",") if k.strip()]
    for k in kind_list:
        if k not in features.FEATURE_KINDS:
            raise click.UsageError(f"unknown feature kind {k!r}")
    for k in kernel_list:
        if k not in KERNEL_NAMES:
            raise click.UsageError(f"unknown kernel {k!r}")
    try:
        rows = []
        for kind in kind_list:
            fm, _ = _load_features(data, kind)
            result = crossval_errors(
                fm, [KERNEL_NAMES[k] for k in kernel_list], seed, iters)
            for method, err in result.items():
                rows.append((kind, method, err))
    except Exception as exc:
        _fail(exc)
    buf = io.StringIO()
    buf.write("kind,method,mean_angular_error_deg\n")
    for kind, method, err in rows:
        buf.write(f"{kind},{method},{np.degrees(err):.6f}\n")
    _write_text(out, buf.getvalue())


def crossval_errors(fm, kernel_nus, seed, iters):
    """One random-third split; errors in radians keyed by method name."""
    n = fm.X.shape[0]
    rng = np.random.default_rng(seed)
    train_idx = np.sort(rng.choice(n, size=n // 3, replace=False))
    xt, yt = fm.X[train_idx], fm.Y[train_idx]
    ref = fm.Y
    out = {}
    beta = gp_core.ols_fit(xt, yt)
    out["ols"] = gp_core.mean_angular_error(gp_core.ols_predict(beta, fm.X), ref)
    out["nn"] = gp_core.mean_angular_error(gp_core.nn_predict(xt, yt, fm.X), ref)
    for nu in kernel_nus:
        spec0, sigma0 = gp_core.default_init(nu, xt, yt)
        spec, sigma, _ = gp_core.train_hyperparams(
            spec0, sigma0, xt, yt, iters=iters)
        model = gp_core.fit_posterior(spec, sigma, xt, yt)
        pred = gp_core.predict_directions(model, fm.X)
        out[f"gp_{nu}"] = gp_core.mean_angular_error(pred, ref)
    return out


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--kinds", default="MP,LMR,PD,AMR", show_default=True)
@click.option("--kernel", default="rbf", show_default=True,
              type=click.Choice(sorted(KERNEL_NAMES)))
@click.option("--iters", default=25, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def eigen(data, kinds, kernel, iters, out):
    """Cumulative eigenvalue energy of the trained Gram per feature kind."""
    kind_list = [k.strip() for k in kinds.split(",") if k.strip()]
    for k in kind_list:
        if k not in features.FEATURE_KINDS:
            raise click.UsageError(f"unknown feature kind {k!r}")
    try:
        buf = io.StringIO()
        buf.write("kind,component,cumulative_energy\n")
        for kind in kind_list:
            fm, _ = _load_features(data, kind)
            spec, sigma, _ = _train_gp(fm, KERNEL_NAMES[kernel], iters)
            model = gp_core.fit_posterior(spec, sigma, fm.X, fm.Y)
            result = gp_core.kernel_pca(model.K_nf)
            for i, c in enumerate(result.cumulative_energy):
                buf.write(f"{kind},{i + 1},{c:.9f}\n")
    except Exception as exc:
        _fail(exc)
    _write_text(out, buf.getvalue())


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--kind", default="MP", show_default=True,
              type=click.Choice(features.FEATURE_KINDS))
@click.option("--risk", default="pred", show_default=True,
              type=click.Choice(sorted(RISK_NAMES)))
@click.option("--kernel", default="rbf", show_default=True,
              type=click.Choice(sorted(KERNEL_NAMES)))
@click.option("--subset-size", default=50, show_default=True, type=int)
@click.option("--iters", default=25, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def select(data, kind, risk, kernel, subset_size, iters, out):
    """Greedy forward selection: index order plus the angular-error curve of
    each selected prefix."""
    try:
        fm, _ = _load_features(data, kind)
        spec, sigma, _ = _train_gp(fm, KERNEL_NAMES[kernel], iters)
        order = selection.greedy_forward_select(
            fm.X, fm.Y, subset_size, RISK_NAMES[risk], spec, sigma)
        buf = io.StringIO()
        buf.write("t,selected_index,mean_angular_error_deg\n")
        for t in range(1, len(order) + 1):
            idx = order[:t]
            model = gp_core.fit_posterior(spec, sigma, fm.X[idx], fm.Y[idx])
            err = gp_core.mean_angular_error(
                gp_core.predict_directions(model, fm.X), fm.Y)
            buf.write(f"{t},{order[t - 1]},{np.degrees(err):.6f}\n")
    except Exception as exc:
        _fail(exc)
    _write_text(out, buf.getvalue())


@main.command("mog")
@click.option("--data", "data_paths", required=True, multiple=True,
              type=click.Path(exists=True),
              help="one container manifest per subject; repeatable")
@click.option("--q", default=mog.DEFAULT_Q, show_default=True, type=int)
@click.option("--components", default=mog.DEFAULT_M, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def mog_cmd(data_paths, q, components, seed, out):
    """Fit the joint generative model over pooled subjects and save it."""
    try:
        rows, dirs = [], []
        for path in data_paths:
            fm, _ = _load_features(path, "MP")
            rows.append(fm.X)
            dirs.append(fm.Y)
        mp = np.vstack(rows)
        codec = mog.pca_fit(mp, q)
        z = np.hstack([mog.pca_encode(codec, mp), np.vstack(dirs)])
        model, trace = mog.mog_fit(z, components, seed=seed, q=q)
        mog.save_mog(out, model, codec)
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {out} (log-likelihood {trace[-1]:.3f} "
               f"after {trace.size} iterations)")


@main.command()
@click.option("--targets", default=4, show_default=True, type=int,
              help="number of single-target blocks")
@click.option("--rounds", default=50, show_default=True, type=int)
@click.option("--pool-size", default=2000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
def trial(targets, rounds, pool_size, seed, out):
    """Simulated active-learning trial against a synthetic listener."""
    try:
        report = run_simulated_trial(targets, rounds, pool_size, seed)
    except Exception as exc:
        _fail(exc)
    _write_json(out, report)


def run_simulated_trial(n_targets, rounds, pool_size, seed,
                        n_dirs=128, d=32, q=8, m=4, listener_radius=0.115):
    """Full loop at desk scale: a synthetic population trains the generative
    pool model, a held-out sphere subject plays the listener, and each target
    runs its own single-target session.

    The report gives, per target, the angular error of the initial
    population-average query and of the best round.
    """
    rng = np.random.default_rng(seed)
    grid = dataset.fibonacci_grid(n_dirs)
    dirs = grid.as_matrix()
    sample_rate = 44100.0

    pop_rows, pop_dirs = [], []
    for radius in np.linspace(0.07, 0.105, 6):
        hrtf = dataset.synth_sphere_hrtf(grid, float(radius), d, sample_rate)
        pop_rows.append(features.extract_features(hrtf, "MP").X)
        pop_dirs.append(dirs)
    mp = np.vstack(pop_rows)
    codec = mog.pca_fit(mp, q)
    z = np.hstack([mog.pca_encode(codec, mp), np.vstack(pop_dirs)])
    gen_model, _ = mog.mog_fit(z, m, seed=seed, q=q)

    listener_hrtf = dataset.synth_sphere_hrtf(grid, listener_radius, d, sample_rate)
    listener_fm = features.extract_features(listener_hrtf, "MP")
    spec0, sigma0 = gp_core.default_init("inf", listener_fm.X, listener_fm.Y)
    spec, sigma, _ = gp_core.train_hyperparams(
        spec0, sigma0, listener_fm.X, listener_fm.Y, iters=15)
    ssl_model = gp_core.fit_posterior(spec, sigma, listener_fm.X, listener_fm.Y)
    listener = active.make_simulated_listener(ssl_model, "posterior_mean", seed)

    target_rows = rng.choice(n_dirs, size=n_targets, replace=False)
    report = {"seed": seed, "rounds": rounds, "pool_size": pool_size,
              "targets": []}
    prior_spec, prior_sigma = active.gp_ssle_prior_from_ssl([ssl_model])
    for k, row in enumerate(target_rows):
        u = dirs[row]
        cond = mog.mog_condition(gen_model, u)
        pool = mog.sample_candidates(cond, codec, pool_size, seed=seed * 101 + k)
        nonind = mog.nonindividualized(cond, codec)
        session = active.Session(
            prior_spec, prior_sigma, active.uniform_targets(u[None, :]),
            rounds, [pool], nonind[None, :])
        active.run_session(session, listener)
        errs = [np.degrees(np.arccos(np.clip(-r["ssle"][0], -1, 1)))
                for r in session.records]
        report["targets"].append({
            "target": [float(c) for c in u],
            "initial_error_deg": errs[0],
            "best_error_deg": float(min(errs)),
            "best_round": int(np.argmin(errs)),
            "eta_trace": [r["eta"][0] for r in session.records],
        })
    errs0 = [t["initial_error_deg"] for t in report["targets"]]
    errsb = [t["best_error_deg"] for t in report["targets"]]
    report["mean_initial_error_deg"] = float(np.mean(errs0))
    report["mean_best_error_deg"] = float(np.mean(errsb))
    return report


@main.command()
@click.option("--data-dir", default=None, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8797, show_default=True, type=int)
def serve(data_dir, host, port):
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    try:
        app = create_app(data_dir=data_dir)
    except Exception as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=int(os.environ.get("HRTFGP_PORT", port)))


if __name__ == "__main__":
    main()
