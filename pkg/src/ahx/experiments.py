"""Experiment pipelines behind the command-line interface.

Each ``run_*`` function takes a parsed config dict and an output directory,
writes its CSV/JSON files there and returns a dict of in-memory results.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError
from .diagnostics import decay_moments, fit_algebraic, fit_exponential, gaussian_moment
from .families import FlowFamily, IdentityFamily, LinearFamily, PowerLawFamily
from .flow import load_flow, save_flow
from .hermite import gauss_hermite_modified, hermite_eval, uniform_trapezoid
from .io import read_csv, save_transport, write_csv
from .operators import AdaptiveBasis, adaptive_project_on, approximation_error, pullback
from .optimize import DecayMatchConfig, decay_match_loss, train
from .schrodinger import MorseParams, morse_reference, train_then_sweep
from .transforms import build_transport, pushforward_residual

log = logging.getLogger("ahx")

# (lr, iters) per (target, family); f1/f2 values follow the published setup
TRAINING = {
    ("f1", "linear"): (1e-2, 1000),
    ("f2", "linear"): (1e-3, 10000),
    ("f1", "powerlaw"): (1e-3, 30000),
    ("f2", "powerlaw"): (3e-6, 10000),
    ("f1", "iresnet"): (1e-3, 20000),
    ("f2", "iresnet"): (3e-2, 40000),
    ("morse", "linear"): (1e-3, 10000),
    ("morse", "iresnet"): (1e-3, 20000),
}
ASYMP_EPS, ASYMP_BETA = 8.0, -0.45
F2_POWERLAW_EPS = 2.45


@dataclass(frozen=True)
class Target:
    name: str
    f: object  # callable, unit L2 decay factor times oscillation
    p: object  # callable, decay factor normalized to unit L2 norm
    grid: tuple  # (lo, hi, n)
    zeta: float
    model: str  # expected convergence model for rate fits


def _decay(name):
    if name == "f1":
        return lambda x: (1.0 + x * x) ** -4.0, (-31.0, 31.0, 10000), 0.9, "algebraic"
    if name == "f2":
        return lambda x: np.exp(-(x ** 4 - x * x) / 2.0), (-13.0, 13.0, 10000), 0.3, "exponential"
    if name == "gaussian":
        return lambda x: np.exp(-x * x / 2.0), (-13.0, 13.0, 10000), 0.9, "exponential"
    raise ConfigError(f"no decay factor for target {name!r}")


def make_target(name: str, grid=None, zeta=None) -> Target:
    """f = c sin(x + 1.2) p with c chosen so that ||c p|| = 1 on the sample grid."""
    if name == "h3":
        h3 = lambda x: hermite_eval(3, np.asarray(x, dtype=float))[3]
        return Target("h3", h3, lambda x: np.abs(h3(x)), tuple(grid or (-13.0, 13.0, 10000)),
                      0.9 if zeta is None else zeta, "exponential")
    p, g0, z0, model = _decay(name)
    grid = tuple(grid or g0)
    q = uniform_trapezoid(grid[0], grid[1], int(grid[2]))
    c = 1.0 / math.sqrt(q.integrate(p(q.nodes) ** 2))
    if name == "gaussian":
        f = lambda x: c * p(np.asarray(x, dtype=float))
    else:
        f = lambda x: c * np.sin(np.asarray(x, dtype=float) + 1.2) * p(np.asarray(x, dtype=float))
    return Target(name, f, lambda x: c * p(np.asarray(x, dtype=float)), grid, z0 if zeta is None else zeta, model)


def _hyper(cfg, target, fam):
    lr, iters = TRAINING.get((target, fam), (1e-3, 1000))
    lr = cfg.get(f"lr_{fam}", cfg.get("lr", lr))
    iters = cfg.get(f"iters_{fam}", cfg.get("iters", iters))
    return float(lr), int(iters)


def _flow_blocks(cfg, default):
    return int(cfg.get("flow_blocks", default))


def _loss_csv(out, stem, meta, res):
    if res is not None and res.losses.size:
        write_csv(out / f"{stem}_loss.csv", meta, ["step", "lr", "loss"],
                  zip(range(res.losses.size), res.lrs, res.losses))


def _params_json(path, params):
    path.write_text(json.dumps({k: np.asarray(v).tolist() for k, v in params.items()}, sort_keys=True, indent=1))


# ---------------------------------------------------------------- interp

def fit_rate(model, Ns, errors, floor=1e-14, min_points=3):
    if model == "algebraic":
        return fit_algebraic(Ns, errors, floor, min_points)
    return fit_exponential(Ns, errors, floor, min_points)


def interp_errors(transform, target: Target, Ns):
    q = uniform_trapezoid(target.grid[0], target.grid[1], int(target.grid[2]))
    return np.array([approximation_error(adaptive_project_on(AdaptiveBasis(transform, int(N)), target.f, q),
                                         target.f, q) for N in Ns])


def train_interp_family(fam: str, target: Target, cfg: dict, seed: int, warm=None):
    """(family, params, TrainResult or None) for one interpolation family."""
    q = uniform_trapezoid(target.grid[0], target.grid[1], int(target.grid[2]))
    dcfg = DecayMatchConfig(target.zeta, q.nodes, q.weights, target.p(q.nodes) ** 2)
    loss_fn = None
    if fam == "identity":
        return IdentityFamily(), {}, None
    if fam == "powerlaw_asymp":
        family = PowerLawFamily(ASYMP_EPS, ASYMP_BETA, fix_eps=True)
        return family, family.init_params(), None
    if fam == "linear":
        family = LinearFamily()
    elif fam == "powerlaw":
        if target.name == "f2":
            # the tiny f2 learning rate only fine-tunes, so start from the asymptotic exponent
            family = PowerLawFamily(F2_POWERLAW_EPS, float(cfg.get("powerlaw_beta0", ASYMP_BETA)), fix_eps=True)
        else:
            family = PowerLawFamily(float(cfg.get("powerlaw_eps0", 1.0)), float(cfg.get("powerlaw_beta0", 0.0)))
    elif fam == "iresnet":
        scale, shift = (1.0, 0.0) if warm is None else (float(warm["scale"]), float(warm["shift"]))
        family = FlowFamily(P=_flow_blocks(cfg, 10), seed=seed, scale=scale, shift=shift)
    else:
        raise ConfigError(f"family {fam!r} is not available for interpolation")
    loss_fn = lambda prm: decay_match_loss(family, prm, dcfg)
    lr, iters = _hyper(cfg, target.name, fam)
    log.info("training %s on %s: lr=%g iters=%d", fam, target.name, lr, iters)
    res = train(family, loss_fn, lr, iters)
    return family, res.params, res


def run_interp(cfg: dict, out: Path, meta: dict) -> dict:
    tname = cfg.get("target", "f1")
    target = make_target(tname, cfg.get("grid"), cfg.get("zeta"))
    fams = cfg.get("family", ["identity", "linear"])
    Ns = [int(n) for n in cfg.get("Ns", list(range(4, 41, 4)))]
    seed = int(cfg.get("seed", 0))
    floor = float(cfg.get("fit_floor", 1e-14))
    model = cfg.get("model", target.model)
    errors, rates, params = {}, [], {}
    warm = None
    order = sorted(fams, key=lambda f: f == "iresnet")  # linear first, it warm-starts the flow
    if "iresnet" in fams and "linear" not in fams:
        order = ["linear"] + order
    for fam in order:
        if fam == "transport":
            xs = np.linspace(target.grid[0], target.grid[1], int(target.grid[2]))
            transform = build_transport(xs, target.f(xs), cfg.get("regularizer", "exp_exp"))
            prm, res = {}, None
        else:
            family, prm, res = train_interp_family(fam, target, cfg, seed, warm)
            transform = family.transform(prm)
            if fam == "linear":
                warm = prm
        if fam not in fams:
            continue
        stem = f"interp_{tname}_{fam}"
        _loss_csv(out, stem, meta, res)
        if fam == "iresnet":
            save_flow(out / f"{stem}_flow.json", family.to_flow(prm))
        elif prm:
            _params_json(out / f"{stem}_params.json", prm)
        params[fam] = prm
        e = interp_errors(transform, target, Ns)
        errors[fam] = e
        try:
            rep = fit_rate(model, Ns, e, floor)
            for w in rep.warnings:
                log.warning("%s: %s", fam, w)
            rates.append((fam, model, rep.params.get("l", math.nan), rep.params.get("nu", math.nan),
                          rep.params.get("kappa", math.nan), int(len(Ns) - len(rep.excluded)),
                          " ".join(map(str, rep.excluded))))
        except ValueError as exc:
            log.warning("%s: no rate fitted (%s)", fam, exc)
            rates.append((fam, model, math.nan, math.nan, math.nan, 0, ""))
    write_csv(out / f"interp_{tname}_errors.csv", meta, ["N"] + [f"error_{f}" for f in fams],
              [[N] + [errors[f][i] for f in fams] for i, N in enumerate(Ns)])
    write_csv(out / f"interp_{tname}_rates.csv", meta, ["family", "model", "l", "nu", "kappa", "n_points", "excluded"],
              rates)
    return {"target": target, "Ns": np.array(Ns), "errors": errors, "rates": rates, "params": params}


# ---------------------------------------------------------------- morse

def morse_params(cfg) -> MorseParams:
    return MorseParams(kinetic_prefactor=float(cfg.get("kinetic_prefactor", 0.5)))


def run_morse(cfg: dict, out: Path, meta: dict) -> dict:
    mp = morse_params(cfg)
    M = int(cfg.get("levels", mp.n_bound))
    if M > mp.n_bound:
        raise ConfigError(f"levels={M} exceeds the {mp.n_bound} bound states")
    ref = np.array([morse_reference(mp, m) for m in range(M)])
    fams = cfg.get("family", ["identity", "linear", "iresnet"])
    for f in fams:
        if f not in ("identity", "linear", "iresnet"):
            raise ConfigError(f"family {f!r} is not available for the Morse experiment")
    Ns = sorted(int(n) for n in cfg.get("Ns", list(range(23, 100, 4))))
    seed = int(cfg.get("seed", 0))
    floor = float(cfg.get("fit_floor", 1e-12))
    min_points = int(cfg.get("min_points", 3))
    common = dict(N_train=int(cfg.get("N_train", 23)), N_sweep=Ns, K_train=int(cfg.get("K_train", 100)),
                  K_sweep=int(cfg.get("K_sweep", 400)), potential_deriv=mp.potential_deriv,
                  energy_unit=mp.hbar_omega)
    order = list(fams)
    if "iresnet" in fams and "linear" not in fams:
        order = ["linear"] + order
    order.sort(key=lambda f: ("identity", "linear", "iresnet").index(f))
    results, warm = {}, None
    for fam in order:
        if fam == "identity":
            family, lr, iters = IdentityFamily(), 0.0, 0
        elif fam == "linear":
            family = LinearFamily()
            lr, iters = _hyper(cfg, "morse", fam)
        else:
            family = FlowFamily(P=_flow_blocks(cfg, 5), seed=seed, scale=float(warm["scale"]), shift=float(warm["shift"]))
            lr, iters = _hyper(cfg, "morse", fam)
        log.info("morse %s: lr=%g iters=%d", fam, lr, iters)
        r = train_then_sweep(mp.potential, mp.T_xi, ref, family, iters=iters, lr=lr, **common)
        if fam == "linear":
            warm = r.params
            _params_json(out / "morse_linear_params.json", r.params)
        if fam == "iresnet":
            save_flow(out / "morse_iresnet_flow.json", family.to_flow(r.params))
        _loss_csv(out, f"morse_{fam}", meta, r.trace)
        results[fam] = r
    exps = {}
    if len(Ns) < min_points:
        log.warning("sweep has %d value(s) of N; no exponents fitted", len(Ns))
        exps = {f: np.full(M, np.nan) for f in fams}
    else:
        exps = {f: results[f].exponents(floor, min_points) for f in fams}
    rows = []
    for i, N in enumerate(Ns):
        for m in range(M):
            rows.append([N, m, ref[m]] + [v for f in fams for v in (results[f].energies[i, m], results[f].rel_errors[i, m])])
    cols = ["N", "m", "reference"] + [c for f in fams for c in (f"E_{f}", f"relerr_{f}")]
    write_csv(out / "morse_relerr.csv", meta, cols, rows)
    write_csv(out / "morse_exponents.csv", {**meta, "fit_floor": floor, "min_points": min_points},
              ["m"] + [f"exponent_{f}" for f in fams], [[m] + [exps[f][m] for f in fams] for m in range(M)])
    summary = []
    for f in fams:
        e = exps[f]
        fitted = int(np.sum(np.isfinite(e)))
        summary.append([f, float(np.nanmean(e)) if fitted else math.nan, fitted, results[f].rel_errors[0, M - 1]])
    write_csv(out / "morse_summary.csv", {**meta, "fit_floor": floor, "min_points": min_points},
              ["family", "mean_exponent", "n_fitted", f"relerr_top_level_N{Ns[0]}"], summary)
    return {"params": mp, "reference": ref, "Ns": np.array(Ns), "results": {f: results[f] for f in fams},
            "exponents": exps, "summary": summary}


# ---------------------------------------------------------------- moments

def morse_moments(mp: MorseParams, transforms: dict, s_grid, grid=(-12.0, 40.0, 40001)) -> dict:
    """I(s) for the ground state pulled back through each transform, plus the Gaussian reference.

    Transforms act on the harmonic coordinate xi. The extra "identity_morse" curve is psi_0 in
    x = a_M (r - r_e) = alpha xi, the coordinate of its closed form; there I(s) = alpha^(s/2) I_xi(s).
    """
    xg = np.linspace(grid[0], grid[1], int(grid[2]))
    out = {"gaussian": gaussian_moment(s_grid)}
    for name, g in transforms.items():
        out[name] = decay_moments(g, mp.ground_state, s_grid, xg)
    if "identity" in out:
        out["identity_morse"] = mp.alpha ** (0.5 * np.asarray(s_grid, dtype=float)) * out["identity"]
    return out


def max_log_distance(curve, ref) -> float:
    return float(np.max(np.abs(np.log(curve) - np.log(ref))))


def run_moments(cfg: dict, out: Path, meta: dict) -> dict:
    from .flow import FlowTransform
    from .transforms import IdentityTransform, LinearTransform

    mp = morse_params(cfg)
    s_grid = [float(s) for s in cfg.get("s_grid", list(range(0, 21)))]
    ck = Path(cfg.get("checkpoint_dir", out))
    if "checkpoint_dir" in cfg and not ck.is_absolute():
        ck = Path(cfg.get("_dir", ".")) / ck
    if not ck.is_absolute():
        ck = Path(cfg.get("_dir", ".")) / ck
    transforms = {"identity": IdentityTransform()}
    lin = ck / "morse_linear_params.json"
    flow = ck / "morse_iresnet_flow.json"
    for path in (lin, flow):
        if not path.exists():
            raise ConfigError(f"missing checkpoint {path}; run the morse command first")
    d = json.loads(lin.read_text())
    transforms["linear"] = LinearTransform(float(d["scale"]), float(d["shift"]))
    transforms["iresnet"] = FlowTransform(load_flow(flow))
    curves = morse_moments(mp, transforms, s_grid)
    names = ["gaussian", "identity_morse", "identity", "linear", "iresnet"]
    write_csv(out / "moments.csv", meta, ["s"] + [f"I_{n}" for n in names],
              [[s] + [curves[n][i] for n in names] for i, s in enumerate(s_grid)])
    dist = {n: max_log_distance(curves[n], curves["gaussian"]) for n in names[1:]}
    write_csv(out / "moments_distance.csv", meta, ["transform", "max_log_distance"], list(dist.items()))
    return {"s": np.array(s_grid), "curves": curves, "distance": dist}


# ---------------------------------------------------------------- transport

def load_samples(path):
    try:
        _, cols, arr = read_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot use samples {path}: {exc}") from None
    if arr.shape[1] < 2:
        raise ConfigError(f"samples {path} need two columns (x, f)")
    return arr[:, 0], arr[:, 1]


def run_transport(cfg: dict, out: Path, meta: dict) -> dict:
    reg = cfg.get("regularizer", "exp_exp")
    if "samples" in cfg:
        path = Path(cfg["samples"])
        if not path.is_absolute():
            path = Path(cfg.get("_dir", ".")) / path
        x, fx = load_samples(path)
        f = None
        name = path.stem
    else:
        target = make_target(cfg.get("target", "f1"), cfg.get("grid"))
        x = np.linspace(target.grid[0], target.grid[1], int(target.grid[2]))
        fx = target.f(x)
        f = target.f
        name = target.name
    t = build_transport(x, fx, reg)
    save_transport(out / f"transport_{name}_map.csv", t, meta)
    res = pushforward_residual(t)
    dev_x = np.linspace(-3.0, 3.0, 601)
    dev = float(np.max(np.abs(t(dev_x) - dev_x)))
    rows = [["pushforward_residual", res], ["max_deviation_from_identity_abs_x_le_3", dev]]
    if f is None:
        f = lambda z: np.interp(z, x, fx, left=0.0, right=0.0)
    n_max = int(cfg.get("n_coeffs", 80))
    q = gauss_hermite_modified(int(cfg.get("K", 400)))
    u = pullback(t, f)(q.nodes)
    coeffs = hermite_eval(n_max - 1, q.nodes) @ (q.weights * u)
    write_csv(out / f"transport_{name}_diagnostics.csv", meta, ["quantity", "value"], rows)
    write_csv(out / f"transport_{name}_pullback_coeffs.csv", meta, ["n", "abs_coeff"], enumerate(np.abs(coeffs)))
    return {"transform": t, "residual": res, "deviation": dev, "coeffs": coeffs}


# ---------------------------------------------------------------- rates

def run_rates(cfg: dict, out: Path, meta: dict) -> dict:
    if "input" not in cfg:
        raise ConfigError("rates needs an input = <errors.csv> key")
    path = Path(cfg["input"])
    if not path.is_absolute():
        path = Path(cfg.get("_dir", ".")) / path
    try:
        _, cols, arr = read_csv(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot use input {path}: {exc}") from None
    if cols[0] != "N":
        raise ConfigError(f"first column of {path} must be N")
    model = cfg.get("model", "algebraic")
    if model not in ("algebraic", "exponential"):
        raise ConfigError("model must be algebraic or exponential")
    floor = float(cfg.get("fit_floor", 1e-14))
    rows = []
    for j, c in enumerate(cols[1:], start=1):
        rep = fit_rate(model, arr[:, 0], arr[:, j], floor)
        rows.append((c, model, rep.params.get("l", math.nan), rep.params.get("nu", math.nan),
                     rep.params.get("kappa", math.nan), int(arr.shape[0] - len(rep.excluded)),
                     " ".join(map(str, rep.excluded))))
    write_csv(out / f"rates_{path.stem}.csv", meta, ["column", "model", "l", "nu", "kappa", "n_points", "excluded"], rows)
    return {"rates": rows}


RUNNERS = {"interp": run_interp, "morse": run_morse, "moments": run_moments,
           "transport": run_transport, "rates": run_rates}
