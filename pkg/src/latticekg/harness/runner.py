"""Experiment orchestration: dispatch a config to a module pipeline, write
the declared output files, and emit the RunReport as the final artifact.

Reports carry a canonical config echo, per-check verdicts with measured
values, and a sha256 manifest of every file written.  The report's content
hash excludes wall time, so identical configs in fixed-order mode produce
identical hashes (the determinism criterion).
"""

import concurrent.futures
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..cache import eigen_cached
from ..calculus import (
    balakrishnan_inv_sqrt,
    combes_thomas_fit,
    eigen_inv_sqrt,
    inv_sqrt_row_bound,
    resolvent_column,
)
from ..cocycle import gap_scan, rotation_number, lyapunov
from ..dynamics import decay_fit, evolve_linear, evolve_nonlinear, strichartz_report
from ..errors import LatticeKGError, RunError
from ..lattice import LatticeWindow, build_operator, eigenvalues_only
from ..oscillatory import vdc_decay_probe
from ..potential import FrequencyVector, TrigPolynomialPotential, cos_potential, zero_potential
from .config import emit_config


def _check(name, required, measured, passed):
    return {"name": name, "required": required, "measured": measured, "pass": bool(passed)}


@dataclass
class RunReport:
    config_text: str
    version: str
    wall_time_s: float
    checks: list
    manifest: list

    def to_dict(self):
        return {
            "config": self.config_text,
            "version": self.version,
            "wall_time_s": self.wall_time_s,
            "checks": self.checks,
            "manifest": self.manifest,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)

    def content_hash(self):
        body = self.to_dict()
        del body["wall_time_s"]
        blob = json.dumps(_jsonable(body), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def all_passed(self):
        return all(c["pass"] for c in self.checks)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _fnum(x):
    return repr(float(x))


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fnum(cell) for cell in row))
    _write_text(path, "\n".join(lines) + "\n")


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def build_potential(model):
    if model["potential"] == "zero":
        return zero_potential(d=model["d"], r=model["r"])
    if model["potential"] == "cos":
        return cos_potential(model["lam"], d=model["d"], r=model["r"])
    return TrigPolynomialPotential(model["d"], model["coefficients"], model["r"])


def build_window(config):
    return LatticeWindow(config.section("lattice")["n"])


def _theta_vec(theta, d):
    return (float(theta),) * d


def build_jacobi(config, tag, theta=None):
    model = config.section("model")
    V = build_potential(model)
    th = config.thetas()[0] if theta is None else theta
    kwargs = {"m": model["m"]} if tag == "T" else {}
    return build_operator(
        V, tuple(model["omega"]), _theta_vec(th, model["d"]), build_window(config), tag, **kwargs
    )


def _delta_data(window, run):
    phi = np.zeros(window.size)
    psi = np.zeros(window.size)
    phi[window.offset(run["phi_site"])] = run["phi_amplitude"]
    psi[window.offset(run["psi_site"])] = run["psi_amplitude"]
    return phi, psi


def _margin_check(config):
    """Diophantine pre-check for non-zero potentials; a resonant omega stops
    the run before any operator is built."""
    model = config.section("model")
    if model["potential"] == "zero":
        return []
    freq = FrequencyVector(tuple(model["omega"]), model["eta"], model["k_max"])
    return [
        _check(
            "diophantine_margin_positive",
            "> 0 over 0 < |k|_inf <= %d" % model["k_max"],
            freq.gamma_eff,
            freq.gamma_eff > 0.0,
        )
    ]


def _trajectory_csv(path, traj):
    rows = zip(
        traj.times,
        traj.norms["linf"],
        traj.norms["l2"],
        traj.norms["l4"],
        traj.norms["l6"],
        traj.norms["energy"],
    )
    _write_csv(path, ("t", "linf", "l2", "l4", "l6", "energy"), rows)


def _map_fn(workers, fixed_order):
    if fixed_order or workers <= 1:
        return map, None
    pool = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
    return pool.map, pool


def _run_spectrum(config, outdir, formats, workers, fixed_order):
    J = build_jacobi(config, "H")
    vals = eigenvalues_only(J)
    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "eigenvalues.csv")
        _write_csv(path, ("index", "eigenvalue"), ((str(i), v) for i, v in enumerate(vals)))
        files.append(path)
    if "bin" in formats:
        path = os.path.join(outdir, "eigenvalues.bin")
        with open(path, "wb") as fh:
            fh.write(vals.astype("<f8").tobytes())
        files.append(path)
    checks = _margin_check(config)
    checks.append(_check("eigenvalue_count", "== %d" % J.size, int(vals.size), vals.size == J.size))
    checks.append(
        _check("eigenvalues_sorted", "nondecreasing", float(np.min(np.diff(vals))) if vals.size > 1 else 0.0,
               bool(np.all(np.diff(vals) >= 0.0)))
    )
    return checks, files


def _run_rotation(config, outdir, formats, workers, fixed_order):
    model, run = config.section("model"), config.section("run")
    V = build_potential(model)
    omega = tuple(model["omega"])
    theta0 = _theta_vec(config.thetas()[0], model["d"])
    e_grid = np.linspace(run["e_min"], run["e_max"], run["e_points"])
    mapper, pool = _map_fn(workers, fixed_order)

    def per_e(E):
        rr = rotation_number(E, V, omega, theta0, n_iter=run["n_iter"])
        ly = lyapunov(E, V, omega, theta0, n_iter=run["n_iter"])
        return rr.value, rr.error, ly

    try:
        rows = list(mapper(per_e, e_grid))
    finally:
        if pool is not None:
            pool.shutdown()
    rho = np.array([r[0] for r in rows])
    err = np.array([r[1] for r in rows])
    ly = np.array([r[2] for r in rows])

    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "rotation.csv")
        _write_csv(path, ("E", "rho", "rho_err", "lyapunov"), zip(e_grid, rho, err, ly))
        files.append(path)
    if "bin" in formats:
        path = os.path.join(outdir, "rotation.bin")
        with open(path, "wb") as fh:
            fh.write(np.column_stack([e_grid, rho, err, ly]).astype("<f8").tobytes())
        files.append(path)

    checks = _margin_check(config)
    slack = 2.0 * (err[1:] + err[:-1]) + 1e-6
    mono_defect = float(np.max(np.maximum(rho[:-1] - rho[1:] - slack, 0.0)))
    checks.append(_check("rho_nondecreasing", "defect == 0 within error bars", mono_defect, mono_defect == 0.0))
    if model["potential"] == "zero":
        inside = np.abs(e_grid) < 2.0
        if np.any(inside):
            dev = float(np.max(np.abs(rho[inside] - np.arccos(-e_grid[inside] / 2.0))))
            checks.append(_check("free_rotation_closed_form", "<= 1e-4", dev, dev <= 1e-4))
    return checks, files


def _run_gaps(config, outdir, formats, workers, fixed_order):
    model, run = config.section("model"), config.section("run")
    V = build_potential(model)
    omega = tuple(model["omega"])
    thetas = [_theta_vec(t, model["d"]) for t in config.thetas()]
    window = build_window(config)
    operators = [build_operator(V, omega, th, window, "H") for th in thetas]
    e_grid = np.linspace(run["e_min"], run["e_max"], run["e_points"])
    mapper, pool = _map_fn(workers, fixed_order)
    try:
        result = gap_scan(
            V,
            omega,
            thetas,
            operators,
            e_grid,
            n_iter=run["n_iter"],
            rho_tol=run["rho_tol"],
            k_label=run["k_label"],
            map_fn=mapper,
        )
    finally:
        if pool is not None:
            pool.shutdown()

    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "scan.csv")
        rows = []
        for i in range(e_grid.size):
            k = result.gap_k[i]
            rows.append(
                (
                    result.e_grid[i],
                    result.rho[i],
                    result.rho_err[i],
                    result.lyap[i],
                    str(int(result.count_below[i])),
                    "1" if result.is_gap[i] else "0",
                    ";".join(str(c) for c in k) if k is not None else "",
                )
            )
        _write_csv(
            path, ("E", "rho", "rho_err", "lyapunov", "count_below", "is_gap", "gap_k"), rows
        )
        files.append(path)
    if "bin" in formats:
        # same column order; gap_k becomes d trailing f64 columns, NaN when empty
        d = model["d"]
        cols = np.full((e_grid.size, 6 + d), np.nan)
        cols[:, 0] = result.e_grid
        cols[:, 1] = result.rho
        cols[:, 2] = result.rho_err
        cols[:, 3] = result.lyap
        cols[:, 4] = result.count_below
        cols[:, 5] = result.is_gap.astype(np.float64)
        for i, k in enumerate(result.gap_k):
            if k is not None:
                cols[i, 6:] = k
        path = os.path.join(outdir, "scan.bin")
        with open(path, "wb") as fh:
            fh.write(cols.astype("<f8").tobytes())
        files.append(path)
    if "json" in formats:
        path = os.path.join(outdir, "gaps.json")
        _write_text(
            path,
            json.dumps(
                _jsonable(
                    [
                        {
                            "e_lo": g.e_lo,
                            "e_hi": g.e_hi,
                            "rho_plateau": g.rho,
                            "k": list(g.label.k),
                            "residual": g.label.residual,
                            "labeled": g.label.labeled,
                        }
                        for g in result.gaps
                    ]
                ),
                sort_keys=True,
                indent=2,
            ),
        )
        files.append(path)

    checks = _margin_check(config)
    checks.append(_check("gaps_found", "reported count", len(result.gaps), True))
    if result.gaps:
        worst = max(g.label.residual for g in result.gaps if g.label.labeled) if any(
            g.label.labeled for g in result.gaps
        ) else float("inf")
        checks.append(
            _check(
                "labeled_gap_residuals",
                "<= 1e-3 for labeled gaps",
                worst,
                worst <= 1e-3,
            )
        )
    return checks, files


def _run_evolve(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    phi, psi = _delta_data(J.window, run)
    if run["grid"] == "geometric":
        t_grid = np.geomspace(run["t_min"], run["t_max"], run["samples"])
    else:
        t_grid = np.linspace(run["t_min"], run["t_max"], run["samples"])
    traj = evolve_linear(J, phi, psi, t_grid, store=run["store"])
    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "trajectory.csv")
        _trajectory_csv(path, traj)
        files.append(path)
    e = traj.norms["energy"]
    drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    checks = _margin_check(config)
    checks.append(_check("linear_energy_conserved", "relative drift <= 1e-10", drift, drift <= 1e-10))
    return checks, files


def _run_decay(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    phi, psi = _delta_data(J.window, run)
    t_grid = np.geomspace(run["t_min"], run["t_max"], run["samples"])
    traj = evolve_linear(J, phi, psi, t_grid)
    report = decay_fit(traj)
    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "trajectory.csv")
        _trajectory_csv(path, traj)
        files.append(path)
    if "json" in formats:
        path = os.path.join(outdir, "decay_report.json")
        _write_text(
            path,
            json.dumps(
                _jsonable(
                    {
                        "tau_hat": report.tau_hat,
                        "ci_low": report.ci_low,
                        "ci_high": report.ci_high,
                        "t_lo": report.t_lo,
                        "t_hi": report.t_hi,
                        "r2": report.r2,
                        "K1_empirical": report.k1_empirical,
                        "caveat": report.caveat,
                    }
                ),
                sort_keys=True,
                indent=2,
            ),
        )
        files.append(path)
    checks = _margin_check(config)
    checks.append(
        _check("tau_hat_decay_range", ">= 0.25", report.tau_hat, report.tau_hat >= 0.25)
    )
    checks.append(_check("fit_r2", ">= 0.9", report.r2, report.r2 >= 0.9))
    return checks, files


def _run_strichartz(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    phi, psi = _delta_data(J.window, run)
    r_list = list(run["r_list"])
    if run["r"] is not None and run["r"] not in r_list:
        r_list.append(run["r"])
    if 2.0 not in r_list:
        r_list.append(2.0)  # the (inf, 2) endpoint rides along for the unitarity check
    report = strichartz_report(
        J, phi, psi, run["tau"], r_list, (run["t1"], run["t2"]), dt=run["dt"]
    )
    files = []
    if "json" in formats:
        path = os.path.join(outdir, "strichartz_report.json")
        _write_text(
            path,
            json.dumps(
                _jsonable(
                    {
                        "tau": report.tau,
                        "pairs": list(report.pairs),
                        "T_values": list(report.t_values),
                        "saturation_delta": report.saturation_delta,
                    }
                ),
                sort_keys=True,
                indent=2,
            ),
        )
        files.append(path)
    checks = _margin_check(config)
    checks.append(
        _check(
            "saturation_stable",
            "ratio change < 0.02 between horizons",
            report.saturation_delta,
            report.saturation_delta < 0.02,
        )
    )
    for pair in report.pairs:
        if pair["r"] == 2.0:
            checks.append(
                _check(
                    "l2_endpoint_ratio",
                    "<= 1 + 1e-9",
                    pair["ratio"],
                    pair["ratio"] <= 1.0 + 1e-9,
                )
            )
    return checks, files


def _run_nonlinear(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    phi, psi = _delta_data(J.window, run)
    record_every = run["record_every"] if run["record_every"] > 0 else None
    traj = evolve_nonlinear(
        J,
        phi,
        psi,
        run["p"],
        run["sign"],
        run["dt"],
        run["t_end"],
        record_every=record_every,
        store=run["store"],
    )
    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "trajectory.csv")
        _trajectory_csv(path, traj)
        files.append(path)
    checks = _margin_check(config)
    checks.append(
        _check(
            "no_blow_up",
            "|u| stays below 1e6",
            traj.blow_up_time if traj.blown_up else "completed",
            not traj.blown_up,
        )
    )
    if not traj.blown_up:
        e = traj.norms["energy"]
        drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
        checks.append(
            _check("energy_drift", "relative drift <= 1e-5", drift, drift <= 1e-5)
        )
    return checks, files


def _run_combes_thomas(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    k_off = J.window.offset(run["k_site"])
    fits = []
    files = []
    checks = _margin_check(config)
    for idx, z in enumerate(run["z"]):
        fit = combes_thomas_fit(J, z, k=k_off)
        fits.append(fit)
        if "csv" in formats:
            col = resolvent_column(J, z, k_off)
            absg = np.maximum(np.abs(col.values), 1e-300)
            path = os.path.join(outdir, "combes_thomas_%d.csv" % idx)
            sites = J.window.sites()
            _write_csv(
                path,
                ("n", "abs_n_minus_k", "log10_abs_G"),
                (
                    (str(int(n)), str(abs(int(n) - run["k_site"])), math.log10(g))
                    for n, g in zip(sites, absg)
                ),
            )
            files.append(path)
        checks.append(
            _check(
                "fit_quality_z%d" % idx,
                "r2 >= 0.999 and rate > 0",
                {"rate": fit.rate, "r2": fit.r2},
                fit.r2 >= 0.999 and fit.rate > 0.0,
            )
        )
    if "json" in formats:
        path = os.path.join(outdir, "ct_fits.json")
        _write_text(
            path,
            json.dumps(
                _jsonable(
                    [
                        {
                            "z_re": z.real,
                            "z_im": z.imag,
                            "rate": f.rate,
                            "prefactor": f.prefactor,
                            "r2": f.r2,
                            "delta": f.delta,
                            "n_points": f.n_points,
                        }
                        for z, f in zip(run["z"], fits)
                    ]
                ),
                sort_keys=True,
                indent=2,
            ),
        )
        files.append(path)
    return checks, files


def _run_balakrishnan(config, outdir, formats, workers, fixed_order):
    run = config.section("run")
    J = build_jacobi(config, "T")
    res = balakrishnan_inv_sqrt(J, run["n_nodes"])
    eig = eigen_cached(J)
    err = float(np.max(np.abs(res.matrix - eigen_inv_sqrt(eig))))
    b1 = inv_sqrt_row_bound(res.matrix)
    files = []
    if "json" in formats:
        path = os.path.join(outdir, "balakrishnan.json")
        _write_text(
            path,
            json.dumps(
                _jsonable(
                    {
                        "nodes": res.n_nodes,
                        "s_max": res.s_max,
                        "tail_bound": res.tail_bound,
                        "max_abs_err_vs_eigen": err,
                        "row_bound_B1": b1,
                    }
                ),
                sort_keys=True,
                indent=2,
            ),
        )
        files.append(path)
    checks = _margin_check(config)
    checks.append(_check("inv_sqrt_oracle_error", "<= 1e-8", err, err <= 1e-8))
    checks.append(_check("row_bound_finite", "finite", b1, math.isfinite(b1)))
    return checks, files


def _run_vdc_probe(config, outdir, formats, workers, fixed_order):
    model, run = config.section("model"), config.section("run")
    t_grid = np.geomspace(run["t_min"], run["t_max"], run["t_points"])
    probe = vdc_decay_probe(model["m"], t_grid, which=run["which"], tol=run["tol"])
    files = []
    if "csv" in formats:
        path = os.path.join(outdir, "vdc_probe.csv")
        _write_csv(
            path,
            ("t", "sup_abs_K", "scaled_value", "n_argmax"),
            ((row.t, row.sup_abs_k, row.scaled, str(row.n_argmax)) for row in probe.rows),
        )
        files.append(path)
    checks = _margin_check(config)
    checks.append(
        _check("scaled_table_flat", "max/min <= 2.0", probe.ratio, probe.ratio <= 2.0)
    )
    return checks, files


_RUNNERS = {
    "spectrum": _run_spectrum,
    "rotation": _run_rotation,
    "gaps": _run_gaps,
    "evolve": _run_evolve,
    "decay": _run_decay,
    "strichartz": _run_strichartz,
    "nonlinear": _run_nonlinear,
    "combes-thomas": _run_combes_thomas,
    "balakrishnan": _run_balakrishnan,
    "vdc-probe": _run_vdc_probe,
}


def run(config, out_dir=None, workers=1, fixed_order=False):
    """Execute one experiment and return its RunReport.

    Output files land in out_dir (default: the config's output.directory);
    the report JSON is written last so its manifest covers everything else.
    Module errors are re-raised as RunError tagged with the run kind and the
    config hash.
    """
    t0 = time.perf_counter()
    text = emit_config(config)
    config_hash = hashlib.sha256(text.encode()).hexdigest()
    outdir = out_dir or config.section("output")["directory"]
    os.makedirs(outdir, exist_ok=True)
    formats = set(config.section("output")["formats"])
    kind = config.kind
    try:
        checks, files = _RUNNERS[kind](config, outdir, formats, workers, fixed_order)
    except LatticeKGError as exc:
        raise RunError(str(exc), kind=kind, config_hash=config_hash) from exc
    manifest = [
        {"path": os.path.relpath(path, outdir), "sha256": _sha256_file(path)}
        for path in files
    ]
    report = RunReport(
        config_text=text,
        version=__version__,
        wall_time_s=time.perf_counter() - t0,
        checks=checks,
        manifest=manifest,
    )
    _write_text(os.path.join(outdir, "run_report.json"), report.to_json())
    return report
