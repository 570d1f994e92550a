"""Batch driver: one subcommand per pipeline, each run leaving a self-describing directory.

Every run directory holds ``config.txt`` (the fully resolved configuration),
its CSV outputs with gnuplot companions, and ``manifest.txt`` listing each file
with a checksum next to the acceptance checks the run measured.
"""
import argparse
import hashlib
import re
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checks as C
from .entropy_density import TruncationWarning, entropy, huisken_density
from .errors import McfError, ValidationError
from .flow_sim import (Center, FlowConfig, capped_cylinder_profile, cylinder_profile, dumbbell_profile,
                       rescale_about, run_to_singularity, sphere_profile)
from .io import (fmt, parse_kv, read_kv, sha256, write_csv, write_gnuplot, write_kv, write_manifest, out_root)
from .moving_plane import CrossSection, asymmetry, find_symmetry_plane, write_sweep
from .neck_diagnostics import ModeEnergyTrack, classify_dichotomy, fine_neck
from .solitons import TranslatingBowl, solve_bowl, solve_shrinker_profile


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    lines: list = field(default_factory=list)  # printed to standard output
    status: int = 0

    def add(self, path):
        self.files.append(Path(path))
        return path

    def csv(self, out, name, header, rows, x=1, y=2, title=None):
        path = self.add(write_csv(out / f"{name}.csv", header, rows))
        self.add(write_gnuplot(out / f"{name}.gp", path.name, x, y, title or name))
        return path


def _parmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _floats(text):
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as err:
        raise ValidationError(f"expected a comma separated list of numbers, got {text!r}") from err


# ---------------------------------------------------------------- simulate

PROFILES = {
    "dumbbell": lambda c: dumbbell_profile(c["n"], c["dz"]),
    "cylinder": lambda c: cylinder_profile(c["n"], c["r0"], c["half_length"], c["dz"]),
    "sphere": lambda c: sphere_profile(c["n"], c["r0"], c["dz"]),
    "capped-cylinder": lambda c: capped_cylinder_profile(c["n"], c["r0"], c["half_length"], c["dz"]),
}


def _profile(cfg):
    make = PROFILES.get(cfg["initial"])
    if make is None:
        raise ValidationError(f"unknown initial surface {cfg['initial']!r}; choose from {sorted(PROFILES)}")
    return make(cfg)


def _flow(cfg):
    return run_to_singularity(_profile(cfg), FlowConfig(t_max=cfg["t_max"], snapshot_every=cfg["snapshot_every"]))


def cmd_simulate(cfg, out, jobs):
    res = RunResult()
    t0 = time.perf_counter()
    tr = _flow(cfg)
    elapsed = time.perf_counter() - t0
    path = res.add(tr.write_csv(out / "trajectory.csv", every=cfg["csv_every"]))
    res.add(write_gnuplot(out / "trajectory.gp", path.name, 2, 3, "profile snapshots"))
    zs = tr.singular[0] if tr.singular else float("nan")
    summary = {"termination": tr.termination, "t_star": tr.t_star if tr.t_star is not None else float("nan"),
               "z_star": zs, "snapshots": len(tr), "t_last": tr.times[-1]}
    res.add(write_kv(out / "summary.txt", summary))
    res.lines.append(" ".join(f"{k}={fmt(v)}" for k, v in summary.items()))
    if cfg["initial"] in ("cylinder", "sphere") and cfg["dz"] == 0.01:
        res.checks += C.exact_model_checks(cfg["initial"], tr, cfg["r0"], elapsed)
    if cfg["initial"] == "dumbbell" and tr.singular:
        res.checks.append(C.at_most(9, f"dz{cfg['dz']:g}-pinch-offset", abs(zs), cfg["dz"]))
    return res


# ----------------------------------------------------------------- rescale

def cmd_rescale(cfg, out, jobs):
    res = RunResult()
    if cfg["initial"] != "dumbbell":
        # a uniform segment has no interior neck to rescale about
        raise ValidationError("rescale needs an initial surface with an interior neck: dumbbell")
    tr = _flow(cfg)
    zs, ts = tr.singular
    tau_end = -np.log(ts - tr.times[-1])
    taus = np.linspace(tau_end - cfg["tau_span"], tau_end, cfg["samples"])
    rt = rescale_about(tr, Center(zs, ts), taus)
    z = rt.graphs[0].z
    stride = max(1, cfg["z_stride"])
    rows = [(t, zi, ui) for t, g in zip(rt.taus, rt.graphs) for zi, ui in zip(z[::stride], g.mode0[::stride])]
    res.csv(out, "renormalized", ["tau", "z", "u0"], rows, 2, 3, "renormalized neck slices")
    res.csv(out, "graph_radius", ["tau", "rho", "window"], zip(rt.taus, rt.rho, rt.window))
    core = np.abs(z) <= 5.0
    sup = max(float(np.max(np.abs(g.mode0[core]))) for g in rt.graphs)
    res.lines.append(f"sup|u0| on |z|<=5: {fmt(sup)}")
    res.checks.append(C.at_most(9, f"dz{cfg['dz']:g}-sup-u0", sup, 0.05))
    return res


# ----------------------------------------------------------------- project

def cmd_project(cfg, out, jobs):
    res = RunResult()
    model = cfg["model"]
    if model == "suite":
        for n in (2, 3, 4):
            m = C.spectral_suite(n)
            res.checks += m.checks
            G = m.data[f"gram-n{n}"]
            res.add(write_csv(out / f"gram_n{n}.csv", [f"g{j}" for j in range(G.shape[1])], G))
        m = C.uplus_identity(cfg["count"])
        res.checks += m.checks
        res.csv(out, "uplus", ["sample", "n", "Uplus", "closed_form", "rel_error"], m.data["uplus"], 1, 5)
    elif model == "bowl":
        n = cfg["n"]
        taus = np.linspace(cfg["tau_lo"], cfg["tau_hi"], cfg["samples"])
        perp = (cfg["offset"],) + (0.0,) * (n - 1)
        rep = fine_neck(TranslatingBowl(solve_bowl(n)), Center(0.0, 0.0, perp), taus, cfg["rho"])
        path = res.add(rep.track.write(out / "coefficients.csv"))
        res.add(write_gnuplot(out / "coefficients.gp", path.name, 1, 2, "axial plus-mode coefficient"))
        summary = {"rate": rep.fit.rate, "a_bar": rep.fit.constant, "fit_residual": rep.fit.residual}
        summary.update({f"b_bar_raw{i + 1}": v for i, v in enumerate(rep.b_bar_raw)})
        summary.update({f"offset{i + 1}": v for i, v in enumerate(rep.offset)})
        summary.update({f"b_bar{i + 1}": v for i, v in enumerate(rep.b_bar)})
        res.add(write_kv(out / "summary.txt", summary))
        res.lines.append(f"rate={fmt(rep.fit.rate)} a_bar={fmt(rep.fit.constant)} "
                         f"max|b_bar|={fmt(np.max(np.abs(rep.b_bar)))}")
        label = "centered" if cfg["offset"] == 0 else f"offset{cfg['offset']:g}"
        if n == 3 and cfg["tau_lo"] == -8 and cfg["tau_hi"] == -4 and cfg["rho"] == 5:
            res.checks += C.fine_neck_checks(rep, label)
    else:
        raise ValidationError(f"unknown projection model {model!r}; choose suite or bowl")
    return res


# ----------------------------------------------------------------- soliton

def cmd_soliton(cfg, out, jobs):
    if cfg["kind"] != "bowl":
        raise ValidationError("the only translating soliton is the bowl; use `shrinker` for shrinkers")
    res = RunResult()
    b = solve_bowl(cfg["n"], r_max=cfg["r_max"])
    path = res.add(b.write(out / "bowl.csv"))
    res.add(path.with_suffix(".meta.txt"))
    res.add(write_gnuplot(out / "bowl.gp", path.name, 1, 2, "bowl profile"))
    res.lines.append(f"n={b.n} residual={fmt(b.residual)} u(r_max)={fmt(b.u[-1])}")
    if cfg["r_max"] == 1000:
        res.checks += C.bowl_checks(b)
    return res


# ---------------------------------------------------------------- shrinker

def _shrinker_job(args):
    n, kind, a, dz = args
    return solve_shrinker_profile(n, kind, a=a, dz=dz)


def cmd_shrinker(cfg, out, jobs):
    res = RunResult()
    kind = cfg["kind"]
    a_list = _floats(cfg["a"]) if kind == "ads" else [None]
    if kind == "ads" and not a_list:
        raise ValidationError("the ADS family needs at least one cap height: --a 1.5,2.0")
    profiles = _parmap(_shrinker_job, [(cfg["n"], kind, a, cfg["dz"]) for a in a_list], jobs)
    for a, p in zip(a_list, profiles):
        name = kind if a is None else f"{kind}_a{fmt(a)}"
        path = res.add(p.write(out / f"{name}.csv"))
        res.add(path.with_suffix(".meta.txt"))
        res.add(write_gnuplot(out / f"{name}.gp", path.name, 1, 2, name))
        res.lines.append(f"{name} residual={fmt(p.residual)}")
    return res


# ----------------------------------------------------------------- entropy

def _entropy_job(item):
    kind, n = item
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        r = entropy(C.entropy_model(kind, n))
    return r.value, r.center, r.lam, r.boundary


def _entropy_items(spec, n):
    if spec == "suite":
        return list(C.ENTROPY_REFERENCE)
    items = []
    for tok in spec.split(","):
        tok = tok.strip()
        kind, _, nn = tok.partition(":")
        if kind not in ("plane", "sphere", "cylinder"):
            raise ValidationError(f"unknown entropy model {kind!r}; choose plane, sphere or cylinder")
        try:
            items.append((kind, int(nn) if nn else n))
        except ValueError as err:
            raise ValidationError(f"bad dimension in {tok!r}") from err
    return items


def cmd_entropy(cfg, out, jobs):
    res = RunResult()
    items = _entropy_items(cfg["model"], cfg["n"])
    vals = _parmap(_entropy_job, items, jobs)
    rows = []
    for (kind, n), (v, zc, lam, bnd) in zip(items, vals):
        rows.append((kind, n, v, zc, lam, bnd))
        res.checks += C.entropy_checks(kind, n, v)
        res.lines.append(f"{kind} n={n} entropy = {fmt(v)}")
    res.add(write_csv(out / "entropy.csv", ["model", "n", "value", "center", "lam", "boundary"], rows))
    if cfg["model"] == "suite":
        m = C.scale_invariance()
        res.checks += m.checks
        res.lines.append(f"scale invariance: {fmt(m.data['profile'])} vs {fmt(m.data['profile-scaled'])}")
    return res


# ----------------------------------------------------------------- density

def cmd_density(cfg, out, jobs):
    res = RunResult()
    want = cfg["trajectory"]
    cases = [c for c in C.density_cases(cfg["dz"]) if want == "suite" or c[0].startswith(want)]
    if not cases:
        raise ValidationError(f"unknown trajectory {want!r}; choose suite, sphere, dumbbell or bowl")
    for label, traj, X0, t0, smooth in cases:
        rep = huisken_density(traj, X0, t0)
        res.csv(out, f"density_{label}", ["t", "lam", "theta"], zip(rep.times, rep.lams, rep.theta), 1, 3, label)
        if cfg["dz"] == 0.01:
            res.checks += C.density_checks(label, rep, smooth)
        res.lines.append(f"{label}: limit={fmt(rep.limit)} worst_increase={fmt(rep.worst_increase)}")
    return res


# --------------------------------------------------------------- neck-scan

def _neck_job(dz):
    r = C.neckpinch_run(dz)
    return {k: r[k] for k in ("z_star", "t_star", "sup_u0", "scale", "convexity")}


def cmd_neck_scan(cfg, out, jobs):
    res = RunResult()
    dzs = [cfg["dz"] / 2 ** k for k in range(cfg["refine"] + 1)]
    runs = dict(zip(dzs, _parmap(_neck_job, dzs, jobs)))
    rows = []
    for dz, r in runs.items():
        tag = f"dz{dz:g}"
        path = res.add(r["scale"].write(out / f"scale_{tag}.csv"))
        res.add(path.with_suffix(".summary.txt"))
        conv = r["convexity"]
        rows.append((dz, r["z_star"], r["t_star"], r["sup_u0"], r["scale"].J, r["scale"].Z,
                     conv.min_H, conv.z_at_min))
        res.lines.append(f"{tag}: J={fmt(r['scale'].J)} Z={fmt(r['scale'].Z)} min_H={fmt(conv.min_H)}")
    res.csv(out, "neck_scan", ["dz", "z_star", "t_star", "sup_u0", "J", "Z", "min_H", "z_min_H"], rows, 1, 7)
    if cfg["dz"] == 0.01 and cfg["n"] == 3:
        res.checks += C.neckpinch_checks(runs)
    return res


# ------------------------------------------------------------- neutral-ode

def cmd_neutral_ode(cfg, out, jobs):
    res = RunResult()
    tr = C.neutral_run(cfg["n"], cfg["tau0"], cfg["tau1"], cfg["dtau"], cfg["alpha1"], cfg["every"])
    path = res.add(tr.write(out / "neutral.csv"))
    res.add(path.with_suffix(".summary.txt"))
    res.add(write_gnuplot(out / "neutral.gp", path.name, 1, 2, "alpha0 against tau"))
    res.lines.append(f"ode_constant={fmt(tr.ode_constant)} displayed_constant={fmt(tr.displayed_constant)}")
    if cfg["tau1"] == -10 and cfg["tau0"] <= -1000:
        res.checks += C.neutral_checks(tr)
    return res


# --------------------------------------------------------------- dichotomy

def cmd_dichotomy(cfg, out, jobs):
    res = RunResult()
    if cfg["source"] == "bowl":
        flow = TranslatingBowl(solve_bowl(cfg["n"]))
        rt = rescale_about(flow, Center(0.0, 0.0), np.linspace(cfg["tau_lo"], cfg["tau_hi"], cfg["samples"]))
    elif cfg["source"] == "dumbbell":
        tr = run_to_singularity(dumbbell_profile(cfg["n"], cfg["dz"]), FlowConfig(snapshot_every=5))
        zs, ts = tr.singular
        tau_end = -np.log(ts - tr.times[-1])
        # the window ends at the last snapshot and cannot start before the initial time
        tau_first = -np.log(ts - tr.times[0]) + 1e-9
        tau_lo = max(tau_end - (cfg["tau_hi"] - cfg["tau_lo"]), tau_first)
        rt = rescale_about(tr, Center(zs, ts), np.linspace(tau_lo, tau_end, cfg["samples"]))
    else:
        raise ValidationError(f"unknown source {cfg['source']!r}; choose bowl or dumbbell")
    track = ModeEnergyTrack.from_renormalized(rt, cfg["rho"])
    d = classify_dichotomy(track)
    path = res.add(track.write(out / "track.csv"))
    res.add(write_gnuplot(out / "track.gp", path.name, 1, path.read_text().split("\n")[0].split(",").index("Uplus") + 1,
                          "plus-mode energy"))
    res.add(write_kv(out / "summary.txt", {"verdict": d.verdict, "kappa": d.kappa, "eta": d.eta}))
    res.lines.append(d.summary())
    return res


# ---------------------------------------------------------------- symmetry

def cmd_symmetry(cfg, out, jobs):
    res = RunResult()
    axis = cfg["axis"]
    if cfg["section"] == "dumbbell":
        s = CrossSection.from_profile(dumbbell_profile(3, cfg["dz"]))
    elif cfg["section"] == "ellipse":
        th = np.linspace(0, 2 * np.pi, int(round(2 * np.pi / cfg["dz"])), endpoint=False)
        s = CrossSection(np.column_stack([cfg["a"] * np.cos(th), cfg["b"] * np.sin(th)]))
    else:
        raise ValidationError(f"unknown section {cfg['section']!r}; choose dumbbell or ellipse")
    base = find_symmetry_plane(s, axis=axis)
    work = s
    if cfg["bulge"]:
        work = C.bulge(work, cfg["bulge"])
    if cfg["translate"]:
        work = work.translated(cfg["translate"], axis=axis)
    r = find_symmetry_plane(work, axis=axis) if work is not s else base
    res.add(work.write(out / "section.csv"))
    res.add(write_gnuplot(out / "section.gp", "section.csv", 1, 2, "cross-section"))
    mus, margins = zip(*r.trace) if r.trace else ((), ())
    res.add(write_sweep(out / "sweep.csv", mus, margins))
    res.add(write_gnuplot(out / "sweep.gp", "sweep.csv", 1, 2, "containment margin"))
    res.add(write_kv(out / "summary.txt", {"mu": r.mu, "residual": r.residual, "margin": r.margin, "cell": r.cell}))
    res.lines.append(f"mu*={fmt(r.mu)} residual={fmt(r.residual)} cell={fmt(r.cell)}")
    if cfg["section"] == "dumbbell" and axis == 1:
        if not cfg["bulge"] and not cfg["translate"]:
            res.checks.append(C.at_most(10, "symmetric-mu", abs(r.mu), r.cell))
        elif not cfg["bulge"]:
            res.checks.append(C.at_most(10, f"translation{cfg['translate']:g}",
                                    abs((r.mu - cfg["translate"]) - base.mu), 1e-12))
        elif not cfg["translate"]:
            amp = asymmetry(work, 0.0, axis)
            res.checks.append(C.within(10, "bulge-residual-ratio", r.residual / amp, 0.5, 2.0))
    return res


# ------------------------------------------------------------------ report

MANIFEST = "manifest.txt"


def _criteria_hint(path):
    """Criteria named in a manifest, read line by line so a damaged file still yields them."""
    try:
        text = Path(path).read_text(encoding="utf-8", errors="replace")
    except OSError:
        return []
    m = re.search(r"^criteria\s*=\s*([0-9,]*)\s*$", text, re.M)
    return [int(x) for x in m.group(1).split(",") if x] if m else []


def _load_manifest(path):
    """Parsed manifest items, or the reason it cannot be trusted."""
    try:
        items = read_kv(path)
    except (OSError, UnicodeDecodeError, ValidationError) as err:
        return None, f"unreadable: {err}"
    for key in ("subcommand", "config_hash", "criteria"):
        if key not in items:
            return None, f"missing key {key!r}"
    for k, v in items.items():
        if k.startswith("file."):
            target = path.parent / k[5:]
            if not target.exists():
                return None, f"missing output {target.name}"
            if sha256(target) != v:
                return None, f"checksum mismatch for {target.name}"
    return items, None


def _determinism(loaded):
    groups = {}
    for path, items in loaded:
        groups.setdefault((items["subcommand"], items["config_hash"]), []).append(items)
    repeated = [g for g in groups.values() if len(g) > 1]
    if not repeated:
        return "SKIPPED", "no configuration was run twice"
    differing = 0
    for g in repeated:
        sums = [{k: v for k, v in it.items() if k.startswith("file.") and k.endswith(".csv")} for it in g]
        differing += any(s != sums[0] for s in sums[1:])
    total = sum(max(float(it.get("runtime_seconds", 0.0)) for it in g) for g in groups.values())
    ok = differing == 0 and total <= 600.0
    detail = (f"repeated_configs={len(repeated)}; differing={differing}; "
              f"suite_runtime_s={fmt(round(total, 3))} (<= 600)")
    return ("PASS" if ok else "FAIL"), detail


def build_report(root, exclude=None):
    """Rows (criterion, title, status, detail) from every manifest below root."""
    exclude = None if exclude is None else Path(exclude).resolve()
    paths = sorted(p for p in Path(root).resolve().rglob(MANIFEST) if exclude is None or exclude not in p.parents)
    per = {k: {} for k in C.CRITERIA}
    errors = {k: [] for k in C.CRITERIA}
    loaded = []
    for p in paths:
        items, why = _load_manifest(p)
        if items is None:
            hint = _criteria_hint(p) or [k for k in C.CRITERIA if k != 11]
            for k in hint:
                errors[k].append(f"{p}: {why}")
            errors[11].append(f"{p}: {why}")
            continue
        loaded.append((p, items))
        for key, v in items.items():
            if key.startswith("check."):
                k, name = key[6:].split(".", 1)
                seen = per[int(k)].setdefault(name, [])
                seen.append((v, items.get(f"value.{k}.{name}", ""), items.get(f"bound.{k}.{name}", "")))
    rows = []
    for k, title in C.CRITERIA.items():
        if errors[k]:
            rows.append((k, title, "ERROR", "; ".join(errors[k])))
            continue
        if k == 11:
            rows.append((k, title, *_determinism(loaded)))
            continue
        if not per[k]:
            rows.append((k, title, "SKIPPED", "no runs"))
            continue
        # a check repeated across runs passes only if every repetition passed
        merged = []
        for name in sorted(per[k]):
            seen = per[k][name]
            bad = [x for x in seen if x[0] != "PASS"]
            merged.append((name, *(bad[0] if bad else seen[-1])))
        failed = [m for m in merged if m[1] != "PASS"]
        rows.append((k, title, "FAIL" if failed else "PASS",
                     "; ".join(f"{n}{'' if st == 'PASS' else ' FAIL'}={v} ({b})" for n, st, v, b in merged)))
    return rows


def _brief(status, detail):
    if status not in ("PASS", "FAIL"):
        return detail
    parts = detail.split("; ")
    bad = [p.replace(" FAIL=", "=") for p in parts if " FAIL=" in p]
    if status == "PASS" and not parts[0].startswith("repeated"):
        return f"{len(parts)}/{len(parts)} checks pass"
    return "; ".join(bad) if bad else detail


def format_table(rows):
    w = max(len(r[1]) for r in rows)
    lines = [f"{'#':>2}  {'criterion':<{w}}  {'status':<7}  measured"]
    for k, title, status, detail in rows:
        lines.append(f"{k:>2}  {title:<{w}}  {status:<7}  {_brief(status, detail)}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg, out, jobs):
    res = RunResult()
    root = Path(cfg["runs"]) if cfg["runs"] else out_root()
    rows = build_report(root, exclude=out)
    res.add(write_csv(out / "report.csv", ["criterion", "title", "status", "measured"], rows))
    table = format_table(rows)
    path = out / "report.txt"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(table)
    res.add(path)
    res.lines.append(table.rstrip("\n"))
    res.status = 3 if any(r[2] == "ERROR" for r in rows) else 0
    return res


# ------------------------------------------------------------------ driver

COMMANDS = {
    "simulate": (cmd_simulate, "integrate a rotationally symmetric flow to its first singularity", {
        "initial": "dumbbell", "n": 3, "dz": 0.01, "r0": 1.0, "half_length": 1.0, "t_max": 10.0,
        "snapshot_every": 10, "csv_every": 10}),
    "rescale": (cmd_rescale, "renormalized neck slices about the pinch point", {
        "initial": "dumbbell", "n": 3, "dz": 0.01, "t_max": 10.0, "snapshot_every": 5, "tau_span": 1.0, "samples": 3, "z_stride": 10}),
    "project": (cmd_project, "spectral suite or plus/zero-mode projections of the translating bowl", {
        "model": "suite", "n": 3, "rho": 5.0, "tau_lo": -8.0, "tau_hi": -4.0, "samples": 41, "offset": 0.0,
        "count": 100}),
    "soliton": (cmd_soliton, "translating bowl profile by shooting from the tip", {
        "kind": "bowl", "n": 3, "r_max": 1000.0}),
    "shrinker": (cmd_shrinker, "shrinker profiles; --a takes a comma list swept with --jobs", {
        "kind": "cylinder", "n": 3, "a": "", "dz": 0.01}),
    "entropy": (cmd_entropy, "entropy of model surfaces; --model takes kind[:n] lists or 'suite'", {
        "model": "cylinder", "n": 3}),
    "density": (cmd_density, "Gaussian density along shipped trajectories", {
        "trajectory": "suite", "dz": 0.01}),
    "neck-scan": (cmd_neck_scan, "cylindrical scale and neck convexity under grid refinement", {
        "n": 3, "dz": 0.01, "refine": 1}),
    "neutral-ode": (cmd_neutral_ode, "integrate the truncated neutral-mode system", {
        "n": 3, "tau0": -10000.0, "tau1": -10.0, "dtau": 0.05, "alpha1": 0.0, "every": 20}),
    "dichotomy": (cmd_dichotomy, "classify plus- or neutral-mode dominance of a neck", {
        "source": "bowl", "n": 3, "dz": 0.01, "rho": 5.0, "tau_lo": -8.0, "tau_hi": -4.0, "samples": 41}),
    "symmetry": (cmd_symmetry, "moving-plane symmetry search on a cross-section", {
        "section": "dumbbell", "dz": 0.01, "axis": 1, "bulge": 0.0, "translate": 0.0, "a": 1.5, "b": 0.8}),
    "report": (cmd_report, "consolidated acceptance table from run manifests", {
        "runs": ""}),
}

# runs whose manifests together cover every criterion; running them twice covers determinism
ACCEPTANCE_RUNS = [
    ["simulate", "--initial", "cylinder", "--n", "2"],
    ["simulate", "--initial", "cylinder", "--n", "3"],
    ["simulate", "--initial", "sphere", "--n", "2"],
    ["simulate", "--initial", "sphere", "--n", "3"],
    ["simulate", "--initial", "dumbbell", "--n", "3"],
    ["rescale", "--initial", "dumbbell"],
    ["project", "--model", "suite"],
    ["project", "--model", "bowl"],
    ["project", "--model", "bowl", "--offset", "-0.01"],
    ["soliton", "--n", "2"],
    ["soliton", "--n", "3"],
    ["soliton", "--n", "4"],
    ["neutral-ode"],
    ["neutral-ode", "--tau0", "-1000", "--dtau", "0.01", "--alpha1", "1e-6", "--every", "10"],
    ["entropy", "--model", "suite"],
    ["density"],
    ["neck-scan"],
    ["symmetry"],
    ["symmetry", "--translate", "0.7"],
    ["symmetry", "--translate", "-0.25"],
    ["symmetry", "--bulge", "0.01"],
]


def _coerce(key, raw, default):
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except ValueError as err:
        raise ValidationError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from err


def build_parser():
    parser = argparse.ArgumentParser(prog="mcflab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, (_, helptext, defaults) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        for key, val in defaults.items():
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                            metavar=type(val).__name__.upper(), help=f"default: {val!r}")
        sp.add_argument("--config", help="flat 'key = value' file; command line flags take precedence")
        sp.add_argument("--out", help="output directory (default: $MCFLAB_OUT_DIR or ./mcflab_out, per subcommand)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for parameter sweeps")
    return parser


def resolve_config(name, flags, config_path=None):
    defaults = COMMANDS[name][2]
    raw = {}
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as err:
            raise ValidationError(f"cannot read config {config_path}: {err}") from err
        raw.update(parse_kv(text, str(config_path)))
        echoed = raw.pop("subcommand", name)
        if echoed != name:
            raise ValidationError(f"{config_path} is a {echoed} config, not {name}")
    raw.update(flags)
    unknown = sorted(set(raw) - set(defaults))
    if unknown:
        raise ValidationError(f"unknown {name} key(s): {', '.join(unknown)}; known: {', '.join(defaults)}")
    cfg = dict(defaults)
    for k, v in raw.items():
        cfg[k] = _coerce(k, v, defaults[k])
    return cfg


def run(name, cfg, out, jobs=1):
    """Execute one subcommand into ``out``; returns (RunResult, manifest path)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    config_path = write_kv(out / "config.txt", {"subcommand": name, **cfg})
    config_hash = hashlib.sha256(config_path.read_bytes()).hexdigest()
    t0 = time.perf_counter()
    res = COMMANDS[name][0](cfg, out, jobs)
    elapsed = time.perf_counter() - t0
    extra = {"subcommand": name, "config_hash": config_hash, "runtime_seconds": round(elapsed, 3),
             "criteria": ",".join(str(k) for k in sorted({c.criterion for c in res.checks}))}
    for c in res.checks:
        extra[f"check.{c.key}"] = "PASS" if c.passed else "FAIL"
        extra[f"value.{c.key}"] = c.value
        extra[f"bound.{c.key}"] = c.bound
    manifest = write_manifest(out, [config_path, *res.files], extra)
    return res, manifest


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code in (0, None) else 2
    name = args.command
    flags = {k: v for k, v in vars(args).items() if k in COMMANDS[name][2]}
    try:
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        cfg = resolve_config(name, flags, args.config)
        out = Path(args.out) if args.out else out_root() / name
        res, manifest = run(name, cfg, out, args.jobs)
    except McfError as err:
        print(f"mcflab {name}: error: {err}", file=sys.stderr)
        return err.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"mcflab {name}: numerical failure: {err}", file=sys.stderr)
        return 3
    for line in res.lines:
        print(line)
    failed = [c.key for c in res.checks if not c.passed]
    if res.checks:
        print(f"checks: {len(res.checks) - len(failed)}/{len(res.checks)} pass"
              + (f"; failing: {', '.join(failed)}" if failed else ""))
    print(f"manifest: {manifest}")
    return res.status
