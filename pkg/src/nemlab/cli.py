"""Batch front end: scenario configuration, execution, report emission.

Scenarios are configured by a flat ``key = value`` file plus command-line
overrides (``--set key=value``); unknown keys are rejected.  Every run
writes its reports into the output directory together with a JSON-lines
run log; reports embed the resolved configuration and a schema version,
and contain no timestamps, so a rerun with the same configuration and a
single thread is byte-identical.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import approx, fields, forms, io, layer, tensors
from .tensors import DomainError, ModelParams, ValidationError

SCHEMA_VERSION = io.SCHEMA_VERSION

_DEFAULTS = {
    "profile": {"L": -0.5, "z_max": 40.0, "nodes": 2001, "out": "profile.csv"},
    "fundamentals": {"L": -0.5, "A_list": "0.1,0.5,1.0", "out": "fundamentals.csv",
                     "dump_functions": 0},
    "spectrum": {"kind": 0, "L": -0.5, "epsilon_list": "0.1,0.05,0.025",
                 "out": "spectrum.csv"},
    "thm-spectral": {"L": -0.5, "epsilon_list": "0.1,0.05,0.025,0.0125",
                     "out": "thm_spectral.csv"},
    "simulate": {"L": -0.5, "epsilon": 0.05, "nodes": 512, "box": 1.0, "dim": 1,
                 "dt_factor": 0.1, "t_end": 0.1, "record_every": 50,
                 "scheme": "semi_implicit_fourier", "initial": "flat_layer",
                 "out": "series.csv", "snapshot": ""},
    "droplet-compare": {"L": -0.5, "epsilon": 0.02, "nodes": 512, "box": 1.25,
                        "R0": 0.3, "dt_factor": 0.1, "r_min_factor": 4.0,
                        "records": 40, "out": "droplet.csv"},
    "residual-scaling": {"L": -1.0, "epsilon_list": "0.04,0.02,0.01",
                         "geometry": "radial", "R0": 1.0, "box": 3.0,
                         "delta": 0.45, "out": "residual.csv"},
    "identity-checks": {"L": -0.5, "seed": 2024, "fields": 20, "nodes": 64,
                        "dim": 3, "out": "identities.csv"},
}


class ConfigError(ValueError):
    pass


def _parse_value(raw):
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config(command, config_path=None, overrides=()):
    if command not in _DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = dict(_DEFAULTS[command])
    pairs = []
    if config_path:
        text = Path(config_path).read_text()
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"malformed config line: {line!r}")
            key, val = line.split("=", 1)
            pairs.append((key.strip(), val))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"malformed override {item!r} (need key=value)")
        key, val = item.split("=", 1)
        pairs.append((key.strip(), val))
    for key, val in pairs:
        if key not in cfg:
            raise ConfigError(f"unknown configuration key {key!r} for {command}")
        cfg[key] = _parse_value(val) if not isinstance(cfg[key], str) else val.strip()
    return cfg


def _eps_list(cfg, key="epsilon_list"):
    return [float(v) for v in str(cfg[key]).split(",") if v.strip()]


def _config_header(command, cfg):
    resolved = " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return [f"schema_version={SCHEMA_VERSION}", f"command={command}", f"config: {resolved}"]


# ---------------------------------------------------------------------------
# scenario implementations
# ---------------------------------------------------------------------------

def _run_profile(cfg, outdir, log):
    ctx = layer.LayerContext(float(cfg["L"]))
    z = np.linspace(-float(cfg["z_max"]), float(cfg["z_max"]), int(cfg["nodes"]))
    s = layer.s_profile(z, ctx)
    sp = layer.s_profile(z, ctx, 1)
    spp = layer.s_profile(z, ctx, 2)
    f = -2 * s**3 + 3 * s**2 - s
    ode_defect = ctx.sigma * spp + f
    fi_defect = layer.profile_first_integral_defect(z, ctx)
    io.write_csv(outdir / cfg["out"],
                 [("z", z), ("s", s), ("s_prime", sp), ("s_second", spp),
                  ("ode_defect", ode_defect), ("first_integral_defect", fi_defect)],
                 _config_header("profile", cfg))
    md = float(np.max(np.abs(ode_defect)))
    mf = float(np.max(np.abs(fi_defect)))
    log({"event": "profile", "max_ode_defect": md, "max_first_integral_defect": mf})
    if md > 1e-12 or mf > 1e-12:
        raise DomainError("profile defects exceed 1e-12")


def _run_fundamentals(cfg, outdir, log):
    rows = []
    for A in _eps_list(cfg, "A_list"):
        fns = {k: layer.volterra_fundamental(k, A) for k in ("u1", "u2", "u3", "u4")}
        W12, v12 = layer.pair_wronskian(fns["u1"], fns["u2"])
        W34, v34 = layer.pair_wronskian(fns["u3"], fns["u4"])
        W13, v13 = layer.pair_wronskian(fns["u1"], fns["u3"])
        rows.append((A, W12, 2.0 / np.sqrt(1.0 + A), W34, W13,
                     max(v12, v34, v13),
                     fns["u1"].meta["picard"].rate))
        if int(cfg["dump_functions"]):
            for k, fn in fns.items():
                fn.write_csv(outdir / f"model_{k}_A{A}.csv")
        log({"event": "fundamentals", "A": A, "W12": W12, "W34": W34, "W13": W13})
    cols = list(zip(*rows))
    io.write_csv(outdir / cfg["out"],
                 [("A", cols[0]), ("W12", cols[1]), ("W12_exact", cols[2]),
                  ("W34", cols[3]), ("W13", cols[4]), ("max_variation", cols[5]),
                  ("picard_rate", cols[6])],
                 _config_header("fundamentals", cfg))


def _run_spectrum(cfg, outdir, log):
    kind = int(cfg["kind"])
    sweep = forms.spectral_gap_sweep(kind, float(cfg["L"]), _eps_list(cfg))
    cols = list(zip(*sweep.rows))
    io.write_csv(outdir / cfg["out"],
                 [("kind", [kind] * len(sweep.rows)), ("epsilon", cols[0]),
                  ("N", cols[1]), ("lambda1", cols[2]), ("lambda2", cols[3]),
                  ("lambda2_eps2", cols[4])],
                 _config_header("spectrum", cfg))
    log({"event": "spectrum", "kind": kind, "c0": sweep.c0, "ratio": sweep.ratio})


def _run_thm_spectral(cfg, outdir, log):
    eps_list = _eps_list(cfg)
    rows = []
    for eps in eps_list:
        N = forms._sweep_nodes(eps, eps_list[0])
        res = forms.theoremA_maxeig(eps, float(cfg["L"]), N)
        rows.append((eps, N, res.max_eig, res.block_offdiag_max))
        log({"event": "thm-spectral", "epsilon": eps, "max_eig": res.max_eig})
    vals = [r[2] for r in rows]
    growth_ok = all(b <= a + 0.1 * (1.0 + abs(a)) for a, b in zip(vals, vals[1:]))
    cols = list(zip(*rows))
    io.write_csv(outdir / cfg["out"],
                 [("epsilon", cols[0]), ("N", cols[1]), ("max_eig", cols[2]),
                  ("block_offdiag_max", cols[3]),
                  ("no_growth", [int(growth_ok)] * len(rows))],
                 _config_header("thm-spectral", cfg))
    if not growth_ok:
        raise DomainError("spectral upper bound grew along the sweep")


def _run_simulate(cfg, outdir, log):
    p = ModelParams(L=float(cfg["L"]), epsilon=float(cfg["epsilon"]))
    dim = int(cfg["dim"])
    grid = fields.PeriodicGrid(dim, int(cfg["nodes"]), float(cfg["box"]))
    if cfg["initial"] == "flat_layer":
        f0 = fields.flat_layer_field(grid, p)
        recorder = lambda f: fields.interface_locate(f, normal_axis=0)[0]
    elif cfg["initial"] == "uniform":
        n = np.zeros(3)
        n[0] = 1.0
        f0 = fields.uniform_field(grid, 0.8 * tensors.outer_dev(n, n), p)
        recorder = None
    else:
        raise ConfigError(f"unknown initial condition {cfg['initial']!r}")
    dt = float(cfg["dt_factor"]) * p.epsilon**2
    sim = fields.SimConfig(dt=dt, t_end=float(cfg["t_end"]),
                           scheme=str(cfg["scheme"]),
                           record_every=int(cfg["record_every"]))
    out, slog = fields.run(f0, sim, recorder=recorder)
    cols = [("t", slog.times), ("energy", slog.energies)]
    if recorder is not None:
        cols.append(("interface", slog.records))
    io.write_csv(outdir / cfg["out"], cols, _config_header("simulate", cfg))
    if cfg["snapshot"]:
        io.write_snapshot(outdir / cfg["snapshot"], out)
    log({"event": "simulate", "violations": slog.violations,
         "final_energy": slog.energies[-1]})
    if slog.violations:
        log({"event": "energy_violations", "count": slog.violations})


def _run_droplet(cfg, outdir, log):
    p = ModelParams(L=float(cfg["L"]), epsilon=float(cfg["epsilon"]))
    box = float(cfg["box"])
    grid = fields.PeriodicGrid(2, int(cfg["nodes"]), box)
    c = (box / 2 + grid.h[0] / 2, box / 2 + grid.h[1] / 2)
    R0 = float(cfg["R0"])
    f0 = approx.droplet_field(grid, p, c, R0)
    sigma = p.sigma
    rmin = float(cfg["r_min_factor"]) * p.epsilon
    t_end = (R0**2 - rmin**2) / (2.0 * sigma) * 0.98
    dt = float(cfg["dt_factor"]) * p.epsilon**2
    nsteps = int(round(t_end / dt))
    sim = fields.SimConfig(dt=dt, t_end=t_end,
                           record_every=max(1, nsteps // int(cfg["records"])),
                           max_energy_violations=20)
    rec = lambda f: fields.interface_locate(f, center=c)
    out, slog = fields.run(f0, sim, recorder=rec)
    times = np.asarray(slog.times)
    R = np.asarray([r[0] for r in slog.records])
    spread = np.asarray([r[1] for r in slog.records])
    pred2 = R0**2 - 2.0 * sigma * times
    rel = np.abs(R**2 - pred2) / np.maximum(pred2, 1e-12)
    io.write_csv(outdir / cfg["out"],
                 [("t", times), ("R", R), ("R_spread", spread),
                  ("R2", R**2), ("R2_pred", pred2), ("rel_err", rel),
                  ("energy", slog.energies)],
                 _config_header("droplet-compare", cfg))
    window = R > rmin
    max_rel = float(np.max(rel[window])) if window.any() else float("nan")
    log({"event": "droplet-compare", "max_rel_err_in_window": max_rel,
         "violations": slog.violations})
    return {"max_rel_err": max_rel}


def _run_residual_scaling(cfg, outdir, log):
    Lval = float(cfg["L"])
    eps_list = _eps_list(cfg)
    p_of = lambda eps: ModelParams(L=Lval, epsilon=eps)
    if cfg["geometry"] == "radial":
        box = float(cfg["box"])
        geom = approx.Geometry(kind="radial", center=(box / 2, box / 2),
                               R0=float(cfg["R0"]), motion="mcf", dim=2)

        def make_solution(eps):
            return approx.ApproxSolution(geom, p_of(eps),
                                         glue=approx.GlueConfig(delta=float(cfg["delta"])))

        def make_grid(eps):
            n = int(np.ceil(box / (eps / 8.0) / 2.0)) * 2
            return fields.PeriodicGrid(2, n, box)
    elif cfg["geometry"] == "flat":
        geom = approx.Geometry(kind="flat", axis=0, offset=0.25, dim=1)

        def make_solution(eps):
            return approx.ApproxSolution(geom, p_of(eps))

        def make_grid(eps):
            n = int(np.ceil(1.0 / (eps / 8.0) / 2.0)) * 2
            return fields.PeriodicGrid(1, n, 1.0)
    else:
        raise ConfigError(f"unknown geometry {cfg['geometry']!r}")
    rows, exponent = approx.residual_sweep(make_solution, make_grid, eps_list)
    io.write_csv(outdir / cfg["out"],
                 [("epsilon", [r.epsilon for r in rows]),
                  ("sup_norm", [r.sup for r in rows]),
                  ("l2_norm", [r.l2 for r in rows]),
                  ("fitted_exponent", [exponent] * len(rows))],
                 _config_header("residual-scaling", cfg))
    log({"event": "residual-scaling", "exponent": exponent,
         "sup": [r.sup for r in rows]})
    return {"exponent": exponent}


def _run_identity_checks(cfg, outdir, log):
    rng = np.random.default_rng(int(cfg["seed"]))
    rows = []

    def check(name, value, tol):
        ok = value < tol
        rows.append((name, value, tol, int(ok)))
        log({"event": "identity", "name": name, "value": value, "tol": tol, "ok": ok})
        return ok

    # tensor identities
    worst_fd = 0.0
    for _ in range(100):
        pt = tensors.random_tensor(rng)
        qt = tensors.random_tensor(rng)
        h = 1e-5
        fd = (tensors.bulk_force(pt + h * qt) - tensors.bulk_force(pt - h * qt)) / (2 * h)
        err = np.max(np.abs(tensors.hessian_apply(pt, qt) - fd))
        worst_fd = max(worst_fd, err / (1.0 + np.sqrt(tensors.norm2(qt))))
    check("hessian_vs_fd_jacobian", worst_fd, 1e-6)

    worst_diag = 0.0
    for s in (0.0, 0.25, 0.5, 0.75, 1.0):
        thetav = 1 - 6 * s + 6 * s * s
        kappav = 1 - 3 * s + 2 * s * s
        iotav = 1 + 6 * s + 2 * s * s
        coef = [-thetav, -kappav, -kappav, -iotav, -iotav]
        for _ in range(20):
            fr = tensors.random_frame(rng)
            E = tensors.basis_from_frame(fr)
            for i in range(5):
                got = tensors.hessian_apply(s * E[0], E[i])
                worst_diag = max(worst_diag, float(np.max(np.abs(got - coef[i] * E[i]))))
    check("hessian_diagonalization", worst_diag, 1e-12)

    # div-curl identities on random band-limited periodic fields
    p = ModelParams(L=float(cfg["L"]), epsilon=0.05)
    n = int(cfg["nodes"])
    dim = int(cfg["dim"])
    grid = fields.PeriodicGrid(dim, n, 1.0)
    worst_pw, worst_int = 0.0, 0.0
    xs = grid.meshgrid()
    for _ in range(int(cfg["fields"])):
        data = np.zeros(grid.shape + (5,))
        for _ in range(6):
            k = rng.integers(-4, 5, size=dim)
            phase = sum(2 * np.pi * k[a] * xs[a] for a in range(dim))
            data += np.cos(phase + rng.uniform(0, 2 * np.pi))[..., None] * \
                tensors.random_tensor(rng, 0.3)
        f = fields.QField(grid, data, p)
        rep = fields.divcurl_check(f)
        scale = 1.0 + rep.grad2_mean
        worst_pw = max(worst_pw, rep.pointwise_defect / scale)
        worst_int = max(worst_int, abs(rep.integrated_defect) / scale)
    check("divcurl_pointwise", worst_pw, 1e-10)
    check("divcurl_integrated", worst_int, 1e-10)

    cols = list(zip(*rows))
    io.write_csv(outdir / cfg["out"],
                 [("name", cols[0]), ("value", cols[1]), ("tol", cols[2]),
                  ("ok", cols[3])],
                 _config_header("identity-checks", cfg))
    if not all(r[3] for r in rows):
        raise DomainError("identity checks failed")


_RUNNERS = {
    "profile": _run_profile,
    "fundamentals": _run_fundamentals,
    "spectrum": _run_spectrum,
    "thm-spectral": _run_thm_spectral,
    "simulate": _run_simulate,
    "droplet-compare": _run_droplet,
    "residual-scaling": _run_residual_scaling,
    "identity-checks": _run_identity_checks,
}


def run(command, cfg, outdir):
    """Execute a scenario; returns the process exit code."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    events = []

    def log(record):
        events.append(record)

    log({"event": "config", "command": command, "schema_version": SCHEMA_VERSION,
         "resolved": {k: cfg[k] for k in sorted(cfg)}})
    code = 0
    try:
        _RUNNERS[command](cfg, outdir, log)
        log({"event": "done", "status": "ok"})
    except (ValidationError, ConfigError, forms.ResolutionError) as exc:
        log({"event": "done", "status": "validation_error", "message": str(exc)})
        code = 2
    except (DomainError, layer.SolvabilityError, layer.IterationError,
            fields.IntegrationError, fields.NotLayeredError, RuntimeError) as exc:
        log({"event": "done", "status": "numerical_error", "message": str(exc)})
        code = 3
    with open(outdir / "run.jsonl", "w") as fh:
        for record in events:
            fh.write(json.dumps(record, sort_keys=True, default=float) + "\n")
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nemlab",
        description="Anisotropic Landau-de Gennes interface laboratory")
    parser.add_argument("command", choices=sorted(_RUNNERS))
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a configuration key")
    parser.add_argument("--out-dir", default="out", help="output directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.overrides)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    code = run(args.command, cfg, args.out_dir)
    if code == 0:
        print(f"{args.command}: ok (reports in {args.out_dir})")
    else:
        print(f"{args.command}: failed with exit code {code} (see run.jsonl)",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
