"""Config-driven command line reproducing both experiments end to end.

Five subcommands cover the pipeline: `collect` gathers cartpole datasets,
`train` fits the latent model and synthesizes the controller and Lyapunov
function, `certify` estimates domains and conjugacy error and emits the
transfer report plus all plot CSVs, `simulate-omni` runs the two-vehicle
avoidance demo, and `report` summarizes whatever artifacts exist.

All outputs are deterministic under a fixed seed: JSON is dumped with
sorted keys, CSV floats with shortest round-trip repr, and no artifact
carries timestamps or absolute paths, so reruns are byte-identical.
Exit codes: 0 success, 2 configuration/contract problems, 3 numeric or
infeasibility failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .certify import (CertificateReport, PreimageDomain, check_certificate,
                      compute_alpha0, decay_bound, estimate_Dx, estimate_Dz,
                      estimate_lipschitz, grid_over_box, invariance_check,
                      residuals_R, rollout_values, trajectory_bound_check,
                      transfer_bounds, zero_set_scan)
from .config import RunConfig, load_run_config
from .conjugacy import estimate_gamma, learned_model_spec, omni_adversarial_spec
from .control import (CbfQpSpec, LqrController, cbf_constraint, cbf_qp,
                      feasibility_scan, lqr_from_latent, nominal_proportional)
from .errors import (CheckpointError, ConfigError, ContractError,
                     InfeasibleError, LatentCertError)
from .jsonio import dump_json, load_json
from .models import LatentModel, LyapunovNet, whiten_latent
from .numerics import rk4_step
from .systems import (CartpoleParams, OmniParams, adversarial_disturbance,
                      cartpole_step, omni_deriv)
from .training import (LossWeights, TrainConfig, TrajectoryDataset,
                       collect_drift_dataset, collect_random_dataset,
                       train_latent, train_lyapunov)

ARTIFACTS = {
    "random": "datasets/random.json",
    "drift": "datasets/drift.json",
    "model": "checkpoints/model.json",
    "controller": "checkpoints/controller.json",
    "lyapunov": "checkpoints/lyapunov.json",
    "latent_loss": "training/latent_loss.csv",
    "lyapunov_loss": "training/lyapunov_loss.csv",
    "certificate": "certificate.json",
    "dz_hull": "scans/dz_hull.csv",
    "slice_theta": "scans/levelset_theta_thetadot.csv",
    "slice_x": "scans/levelset_x_theta.csv",
    "zero_set": "scans/zero_set.csv",
    "bounds": "trajectories/bound_checks.csv",
    "invariance": "trajectories/invariance.csv",
    "omni_traj": "omni/trajectory.csv",
    "omni_safety": "omni/safety.json",
}


def artifact(rc: RunConfig, name: str) -> Path:
    return Path(rc.out) / ARTIFACTS[name]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def clipped_policy(controller: Callable, u_clip: float) -> Callable:
    """Saturated state feedback shared by training, domains, and rollouts."""
    return lambda Z: np.clip(controller(Z), -u_clip, u_clip)


# ---------------------------------------------------------------------------
# collect / train
# ---------------------------------------------------------------------------

def cmd_collect(rc: RunConfig) -> None:
    p = CartpoleParams(**rc.block("cartpole"))
    c = rc.block("collect")
    rand = collect_random_dataset(
        p, points_per_dim=c["points_per_dim"], input_levels=c["input_levels"],
        T1=c["T1"], state_box=c["state_box"],
        u_range=(c["u_min"], c["u_max"]), theta_cap=c["theta_cap"],
        seed=rc.seed)
    drift = collect_drift_dataset(rand, p)
    rand.save(artifact(rc, "random"))
    drift.save(artifact(rc, "drift"))
    print(f"collect: {len(rand)} random trajectories "
          f"({rand.n_states()} states) -> {artifact(rc, 'random')}")
    print(f"collect: {len(drift)} drift pairs -> {artifact(rc, 'drift')}")


def cmd_train(rc: RunConfig) -> None:
    rand = TrajectoryDataset.load(artifact(rc, "random"))
    drift = TrajectoryDataset.load(artifact(rc, "drift"))
    w = LossWeights(**rc.block("loss_weights"))
    t, m = rc.block("train"), rc.block("model")
    res = train_latent(
        rand, drift, w,
        TrainConfig(lr=t["lr"], epochs=t["epochs"], seed=rc.seed,
                    optimizer=t["optimizer"]),
        n_z=m["n_z"], hidden=m["hidden"])
    model = res.model
    if t["whiten"]:
        # the losses constrain x-space behavior but leave the latent basis
        # free; normalizing the encoding cloud's second moment makes the
        # fixed LQR weights and Lyapunov box meaningful scales
        X = np.concatenate([tr.states for tr in rand.trajectories]
                           + [tr.states for tr in drift.trajectories])
        model = whiten_latent(model, X)
    model.save(artifact(rc, "model"))
    cols = ("epoch", "fwd", "bwd", "left", "right", "ori", "iso", "total")
    write_csv(artifact(rc, "latent_loss"), cols,
              [[row[k] for k in cols] for row in res.log])
    print(f"train: latent loss {res.log[0]['total']:.6g} -> "
          f"{res.final_loss:.6g} (best {res.best_loss:.6g} "
          f"at epoch {res.best_epoch})")

    controller = lqr_from_latent(model)
    controller.save(artifact(rc, "controller"))
    policy = clipped_policy(controller, rc.block("controller")["u_max"])

    ly = rc.block("lyapunov")
    # seed offset keeps V's init decoupled from the latent model's
    lres = train_lyapunov(
        model, policy,
        TrainConfig(lr=ly["lr"], epochs=ly["epochs"], seed=rc.seed + 1,
                    optimizer=ly["optimizer"], rho=ly["rho"]),
        box_halfwidth=ly["box_halfwidth"],
        seeds_per_axis=ly["seeds_per_axis"],
        rollout_steps=ly["rollout_steps"],
        hidden=ly["hidden"], quad_weight=ly["quad_weight"])
    lres.net.save(artifact(rc, "lyapunov"))
    write_csv(artifact(rc, "lyapunov_loss"),
              ("epoch", "hinge_loss", "satisfied_fraction"),
              [[row["epoch"], row["hinge_loss"], row["satisfied_fraction"]]
               for row in lres.log])
    print(f"train: lyapunov hinge {lres.log[0]['hinge_loss']:.6g} -> "
          f"best {lres.best_loss:.6g} at epoch {lres.best_epoch}, "
          f"satisfied fraction {lres.satisfied_fraction:.4f}")


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def _sample_sublevel(domain, vbar: Callable, level: float, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """n jittered domain points with vbar <= level (rejection sampling)."""
    chunks, have = [], 0
    for _ in range(200):
        cand = domain.sample(max(4 * n, 256), rng)
        keep = cand[np.asarray(vbar(cand), dtype=float) <= level]
        if keep.shape[0]:
            chunks.append(keep)
            have += keep.shape[0]
        if have >= n:
            return np.concatenate(chunks, axis=0)[:n]
    raise ContractError(
        f"could not draw {n} samples with vbar <= {level:.6g}; "
        f"got {have} after 200 batches")


def _boundary_seeds(domain, vbar: Callable, level: float, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """n members of {vbar <= level} closest to the level from inside."""
    pool = np.concatenate([domain.points, domain.sample(20000, rng)], axis=0)
    vals = np.asarray(vbar(pool), dtype=float)
    inside = vals <= level
    if int(np.count_nonzero(inside)) < n:
        raise ContractError(
            f"only {int(np.count_nonzero(inside))} candidates inside the "
            f"vbar <= {level:.6g} sublevel set; need {n}")
    pool, vals = pool[inside], vals[inside]
    order = np.argsort(-vals, kind="stable")
    return pool[order[:n]]


def certification_pipeline(model: LatentModel, policy: Callable,
                           lyap: LyapunovNet, step: Callable, cfg: dict,
                           seed: int) -> dict:
    """Domains -> grid check -> gamma/L/R -> alpha0 -> transfer + rollouts.

    `step` is the batched closed-loop map of the true system; everything
    downstream (domain estimation, conjugacy samples, trajectory checks)
    runs against it, so swapping in an exactly conjugate system exercises
    the zero-gamma path of the same code.
    """
    rng = np.random.default_rng(seed)
    rho = cfg["rho"]

    def f_z(Z):
        return model.latent_step(Z, policy(Z))

    def vbar(X):
        return lyap.value(model.encode(np.asarray(X, dtype=float)))

    domain_z = estimate_Dz(model, policy, r1=cfg["r1"], T=cfg["T"],
                           density=cfg["dz_density"])
    domain_x = estimate_Dx(model, step, domain_z, r2=cfg["r2"],
                           T_prime=cfg["T_prime"], eps=cfg["eps"],
                           density=cfg["dx_density"])
    grid_z = domain_z.grid(cfg["dz_grid_density"])
    check = check_certificate(grid_z, "lyapunov-discrete", lyap.value,
                              f_z, rho)

    # one sample set feeds gamma, R, and the Lipschitz segments so the
    # domination max|R| <= L*gamma is a theorem about these samples, not
    # an accident of two different draws
    pts = domain_x.points
    if pts.shape[0] > cfg["gamma_max_samples"]:
        idx = rng.choice(pts.shape[0], size=cfg["gamma_max_samples"],
                         replace=False)
        pts = pts[idx]
    X = np.concatenate(
        [pts, domain_x.sample(cfg["gamma_jitter_samples"], rng)], axis=0)
    spec = learned_model_spec(model, step, policy, "forward", "discrete")
    est = estimate_gamma(X, spec)
    gamma = est.gamma

    ahead = model.encode(np.asarray(step(X), dtype=float))
    predicted = f_z(model.encode(X))
    segments = [ahead + t * (predicted - ahead)
                for t in (0.0, 0.25, 0.5, 0.75, 1.0)]
    L_samples = np.concatenate([grid_z] + segments, axis=0)
    L = estimate_lipschitz(lyap.grad, L_samples, fn=lyap.value,
                           pairs=cfg["lipschitz_pairs"], seed=seed)

    R = residuals_R(X, model, lyap.value, step, f_z)
    max_R = float(np.max(np.abs(R)))

    # alpha0 compares vbar sublevel sets against membership through the
    # encoder (E(x) in D_z), not against the finite cloud: vbar is constant
    # on encoder fibers, so the cloud would witness exclusion at every level
    domain_pre = PreimageDomain(model.encode, domain_z,
                                box=domain_x.bounding_box())
    alpha0 = compute_alpha0(vbar, domain_pre, density=cfg["alpha0_density"],
                            tol=cfg["alpha0_tol"])

    report = transfer_bounds(L, gamma, rho=rho, alpha0=alpha0)
    threshold = report.thresholds["stability_threshold"]
    report.satisfied_fraction = check.fraction
    report.worst_violation = check.worst
    report.constants["n_gamma_samples"] = int(X.shape[0])
    report.residual_stats = {
        "gamma_quantiles": dict(est.quantiles),
        "max_abs_R": max_R,
        "max_abs_R_over_one_minus_rho": max_R / (1.0 - rho),
        "dominated": bool(max_R / (1.0 - rho) <= threshold),
    }
    report.notes.append(
        f"latent domain: {domain_z.kind}, "
        f"{domain_z.provenance.get('n_points')} rollout points")
    report.notes.append(
        f"state domain: {domain_x.points.shape[0]} points, "
        f"eps = {domain_x.eps}, "
        f"{domain_x.provenance.get('n_dropped_outside_Dz')} dropped")

    X0 = _sample_sublevel(domain_x, vbar, alpha0, cfg["n_trajectories"], rng)
    traj_checks = trajectory_bound_check(
        X0, step, vbar, L, gamma, rho, horizon=cfg["horizon"],
        tol=cfg["trajectory_tol"])

    invariance = {}
    for name, level in (("stability_threshold", threshold),
                        ("alpha0", alpha0)):
        if level <= cfg["trajectory_tol"]:
            # gamma = 0 collapses {vbar <= level} to the equilibrium
            # itself; forward invariance of a fixed point needs no seeds
            invariance[name] = {"alpha": level,
                                "seeds": np.zeros((0, X0.shape[1])),
                                "checks": []}
            continue
        seeds = _boundary_seeds(domain_x, vbar, level,
                                cfg["n_invariance_seeds"], rng)
        invariance[name] = {
            "alpha": level,
            "seeds": seeds,
            "checks": invariance_check(seeds, step, vbar, level,
                                       cfg["horizon"],
                                       tol=cfg["trajectory_tol"]),
        }

    return {
        "domain_z": domain_z, "domain_x": domain_x,
        "grid_check": check, "gamma_estimate": est,
        "L": L, "gamma": gamma, "rho": rho, "alpha0": alpha0,
        "threshold": threshold, "max_R": max_R, "samples": X,
        "report": report, "f_z": f_z, "vbar": vbar,
        "trajectory_seeds": X0, "trajectory_checks": traj_checks,
        "invariance": invariance,
    }


def _write_certificate_json(rc: RunConfig, result: dict, cfg: dict) -> None:
    dom_x = result["domain_x"]
    lo, hi = dom_x.bounding_box()
    traj = result["trajectory_checks"]
    inv_out = {}
    for name, entry in result["invariance"].items():
        checks = entry["checks"]
        inv_out[name] = {"alpha": entry["alpha"], "n": len(checks),
                         "n_passed": sum(c.passed for c in checks)}
    dump_json({
        "report": result["report"].to_dict(),
        "grid_check": result["grid_check"].to_dict(),
        "gamma": result["gamma_estimate"].to_dict(),
        "domains": {
            "latent": result["domain_z"].to_dict(),
            "state": {"n_points": int(dom_x.points.shape[0]),
                      "eps": dom_x.eps, "lo": lo.tolist(), "hi": hi.tolist(),
                      "provenance": dict(dom_x.provenance)},
        },
        "trajectory_checks": {
            "n": len(traj), "n_passed": sum(c.passed for c in traj),
            "horizon": cfg["horizon"], "tol": cfg["trajectory_tol"],
            "worst_gap": max(c.worst_gap for c in traj),
        },
        "invariance_checks": inv_out,
    }, artifact(rc, "certificate"))


def _write_scan_csvs(rc: RunConfig, result: dict, model: LatentModel,
                     cfg: dict) -> None:
    dz = result["domain_z"]
    n_z = dz.lo.shape[0]
    zcols = tuple(f"z{i + 1}" for i in range(n_z))
    if dz.kind == "hull":
        write_csv(artifact(rc, "dz_hull"), zcols, dz.vertices.tolist())
    else:
        corners = np.stack(np.meshgrid(*zip(dz.lo, dz.hi), indexing="ij"),
                           axis=-1).reshape(-1, n_z)
        write_csv(artifact(rc, "dz_hull"), zcols, corners.tolist())

    vbar = result["vbar"]
    h = cfg["slice_halfwidth"]
    ax = np.linspace(-h, h, cfg["slice_density"])
    A, B = np.meshgrid(ax, ax, indexing="ij")
    flat_a, flat_b = A.reshape(-1), B.reshape(-1)
    zeros = np.zeros_like(flat_a)

    states = np.stack([zeros, zeros, flat_a, flat_b], axis=1)
    vals = np.asarray(vbar(states), dtype=float)
    write_csv(artifact(rc, "slice_theta"), ("theta", "thetadot", "vbar"),
              np.stack([flat_a, flat_b, vals], axis=1).tolist())

    states = np.stack([flat_a, zeros, flat_b, zeros], axis=1)
    vals = np.asarray(vbar(states), dtype=float)
    write_csv(artifact(rc, "slice_x"), ("x", "theta", "vbar"),
              np.stack([flat_a, flat_b, vals], axis=1).tolist())

    zh = cfg["zero_set_halfwidth"]
    zgrid = grid_over_box(-zh * np.ones(model.n_x), zh * np.ones(model.n_x),
                          cfg["zero_set_density"])
    zpts = zero_set_scan(model, zgrid, cfg["zero_set_tol"])
    write_csv(artifact(rc, "zero_set"),
              ("x", "xdot", "theta", "thetadot"), zpts.tolist())


def _write_trajectory_csvs(rc: RunConfig, result: dict, step: Callable,
                           cfg: dict) -> None:
    X0 = result["trajectory_seeds"]
    vbar = result["vbar"]
    horizon = cfg["horizon"]
    X = X0.copy()
    states = [X0]
    for _ in range(horizon):
        X = np.asarray(step(X), dtype=float)
        states.append(X)
    S = np.stack(states, axis=1)                       # (m, horizon+1, n_x)
    m = S.shape[0]
    vals = np.asarray(vbar(S.reshape(-1, S.shape[2])),
                      dtype=float).reshape(m, horizon + 1)
    bounds = decay_bound(vals[:, :1], np.arange(horizon + 1)[None, :],
                         result["L"], result["gamma"], result["rho"])
    rows = []
    for i in range(m):
        for t in range(horizon + 1):
            rows.append([i, t, *S[i, t], vals[i, t], bounds[i, t]])
    write_csv(artifact(rc, "bounds"),
              ("traj", "t", "x", "xdot", "theta", "thetadot", "vbar",
               "bound"), rows)

    rows = []
    for name, entry in sorted(result["invariance"].items()):
        vals = rollout_values(entry["seeds"], step, vbar, horizon)
        for i in range(vals.shape[0]):
            for t in range(horizon + 1):
                rows.append([name, entry["alpha"], i, t, vals[i, t]])
    path = artifact(rc, "invariance")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write("level,alpha,traj,t,vbar\n")
        for row in rows:
            f.write(row[0] + "," + ",".join(_fmt(v) for v in row[1:]) + "\n")


def cmd_certify(rc: RunConfig) -> None:
    p = CartpoleParams(**rc.block("cartpole"))
    model = LatentModel.load(artifact(rc, "model"))
    controller = LqrController.load(artifact(rc, "controller"))
    lyap = LyapunovNet.load(artifact(rc, "lyapunov"))
    policy = clipped_policy(controller, rc.block("controller")["u_max"])
    cfg = rc.block("certify")

    def step(X):
        X = np.asarray(X, dtype=float)
        return cartpole_step(X, policy(model.encode(X))[:, 0], p)

    result = certification_pipeline(model, policy, lyap, step, cfg, rc.seed)
    _write_certificate_json(rc, result, cfg)
    _write_scan_csvs(rc, result, model, cfg)
    _write_trajectory_csvs(rc, result, step, cfg)

    traj = result["trajectory_checks"]
    print(f"certify: L = {result['L']:.6g}, gamma = {result['gamma']:.6g}, "
          f"rho = {result['rho']}, alpha0 = {result['alpha0']:.6g}")
    print(f"certify: L*gamma/(1-rho) = {result['threshold']:.6g}, "
          f"satisfied fraction = {result['grid_check'].fraction:.4f}, "
          f"vacuous = {result['report'].vacuous}")
    print(f"certify: trajectory bound {sum(c.passed for c in traj)}/"
          f"{len(traj)} passed")
    for name, entry in sorted(result["invariance"].items()):
        checks = entry["checks"]
        print(f"certify: invariance at {name} (alpha = "
              f"{entry['alpha']:.6g}) {sum(c.passed for c in checks)}/"
              f"{len(checks)} passed")
    print(f"certify: report -> {artifact(rc, 'certificate')}")


# ---------------------------------------------------------------------------
# simulate-omni
# ---------------------------------------------------------------------------

def cmd_omni(rc: RunConfig) -> None:
    o = rc.block("omni")
    params = OmniParams(wheel_radius=o["wheel_radius"],
                        frame_radius=o["frame_radius"],
                        u_max=o["u_max"], d_max=o["d_max"])
    spec = CbfQpSpec(alpha=o["alpha"], beta_prime=o["beta_prime"],
                     u_max=o["u_max"], theta2=o["passive_heading"],
                     params=params)
    goal = np.asarray(o["goal"], dtype=float)
    gain, nominal_only = o["gain"], o["nominal_only"]
    events: list = []

    def policy(x, t: float) -> np.ndarray:
        u_nom = nominal_proportional(x, goal, gain, params)
        if nominal_only:
            return u_nom
        z = np.array([x[0] - x[3], x[1] - x[4], x[2]])
        try:
            return cbf_qp(u_nom, z, spec)
        except InfeasibleError as e:
            # one event per step; steer as hard into the halfspace as the
            # box allows and keep integrating
            if not events or events[-1]["t"] != t:
                events.append({"t": t, "state": x.tolist(),
                               "margin": getattr(e, "margin", None)})
            a, _ = cbf_constraint(z, spec)
            return params.u_max * np.sign(a)

    def deriv(x, t):
        return omni_deriv(x, policy(x, t), adversarial_disturbance(x, params),
                          params)

    dt = o["dt"]
    n_steps = int(round(o["duration"] / dt))
    x = np.array(list(o["active_start"]) + list(o["passive_start"])
                 + [o["passive_heading"]], dtype=float)

    rows = []
    trace = np.empty((n_steps + 1, 6))
    for k in range(n_steps + 1):
        t = k * dt
        trace[k] = x
        u_log = policy(x, t)
        dist = float(np.hypot(x[0] - x[3], x[1] - x[4]))
        rows.append([t, *x, *u_log, dist])
        if k < n_steps:
            x = rk4_step(deriv, x, t, dt)
    write_csv(artifact(rc, "omni_traj"),
              ("t", "p1x", "p1y", "theta1", "p2x", "p2y", "theta2",
               "u1", "u2", "u3", "distance"), rows)

    distances = np.hypot(trace[:, 0] - trace[:, 3], trace[:, 1] - trace[:, 4])
    min_dist = float(np.min(distances))
    goal_dist = float(np.hypot(trace[-1, 0] - goal[0],
                               trace[-1, 1] - goal[1]))

    idx = np.unique(np.linspace(0, n_steps, min(o["gamma_samples"],
                                                n_steps + 1)).astype(int))
    gamma_est = estimate_gamma(
        trace[idx], omni_adversarial_spec(params,
                                          theta2=o["passive_heading"]))
    scan = feasibility_scan(spec)
    report = transfer_bounds(1.0, gamma_est.gamma, alpha=o["alpha"],
                             time="continuous", beta=o["beta"],
                             beta_prime=o["beta_prime"])
    guarantee = report.thresholds["min_distance_guarantee"]

    dump_json({
        "spec": spec.to_dict(),
        "nominal_only": nominal_only,
        "dt": dt, "duration": o["duration"], "n_steps": n_steps,
        "min_distance": min_dist,
        "guarantee": guarantee,
        "satisfied": bool(min_dist >= guarantee - 1e-9),
        "final_goal_distance": goal_dist,
        "feasibility_scan_margin": scan,
        "infeasible_events": events,
        "gamma": gamma_est.to_dict(),
        "report": report.to_dict(),
    }, artifact(rc, "omni_safety"))

    tag = "nominal only" if nominal_only else "cbf filtered"
    print(f"simulate-omni ({tag}): min distance {min_dist:.6g} vs "
          f"guarantee {guarantee:.6g}; final goal distance {goal_dist:.6g}")
    print(f"simulate-omni: feasibility scan margin {scan:.6g}, "
          f"{len(events)} infeasible events, gamma = {gamma_est.gamma:.6g}")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(rc: RunConfig) -> None:
    found = False
    cpath = artifact(rc, "certificate")
    if cpath.exists():
        found = True
        d = load_json(cpath)
        rep, con, th = d["report"], d["report"]["constants"], \
            d["report"]["thresholds"]
        print(f"certificate ({rep['kind']}):")
        print(f"  L = {con['L']:.6g}  gamma = {con['gamma']:.6g}  "
              f"rho = {con['rho']}  alpha0 = {con['alpha0']:.6g}")
        print(f"  L*gamma/(1-rho) = {th['stability_threshold']:.6g}  "
              f"class-K radius = {th['classk_radius']:.6g}")
        print(f"  satisfied fraction = {rep['satisfied_fraction']:.4f}  "
              f"vacuous = {rep.get('vacuous')}")
        tc = d["trajectory_checks"]
        print(f"  trajectory bound: {tc['n_passed']}/{tc['n']} passed "
              f"(worst gap {tc['worst_gap']:.3g})")
        for name, iv in sorted(d["invariance_checks"].items()):
            print(f"  invariance at {name} (alpha = {iv['alpha']:.6g}): "
                  f"{iv['n_passed']}/{iv['n']} passed")
    spath = artifact(rc, "omni_safety")
    if spath.exists():
        found = True
        d = load_json(spath)
        tag = "nominal only" if d["nominal_only"] else "cbf filtered"
        print(f"omni ({tag}):")
        print(f"  min distance = {d['min_distance']:.6g}  "
              f"guarantee = {d['guarantee']:.6g}  "
              f"satisfied = {d['satisfied']}")
        print(f"  feasibility scan margin = "
              f"{d['feasibility_scan_margin']:.6g}  "
              f"infeasible events = {len(d['infeasible_events'])}")
        print(f"  gamma = {d['gamma']['gamma']:.6g}")
    if not found:
        raise CheckpointError(f"no report artifacts under {rc.out}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "collect": cmd_collect,
    "train": cmd_train,
    "certify": cmd_certify,
    "simulate-omni": cmd_omni,
    "report": cmd_report,
}

_HELP = {
    "collect": "gather cartpole trajectory datasets",
    "train": "fit the latent model, LQR gain, and Lyapunov function",
    "certify": "estimate domains and conjugacy error; emit the transfer "
               "report and plot CSVs",
    "simulate-omni": "run the two-vehicle avoidance demo with the CBF-QP "
                     "filter",
    "report": "summarize existing artifacts",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="latentcert",
        description="certified control in learned latent spaces")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", default=None,
                        help="JSON file overriding the built-in defaults")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--out", default=None,
                        help="override the output directory")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = load_run_config(args.config, args.seed, args.out)
        _COMMANDS[args.command](rc)
    except (ConfigError, ContractError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except LatentCertError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
