"""Asymptotic laws read off trajectories: mode dichotomy, neck decay, neutral ODE, tips, mean convexity."""
from dataclasses import dataclass, field
from math import e, pi, sqrt

import numpy as np

from . import _kernels as K
from .cylinder_spectral import (CylinderGraph, coefficient_header, project_modes,
                                sphere_area)
from .errors import (BlowUpError, InapplicableError, InsufficientDataError, NonExponentialError,
                     ValidationError)
from .flow_sim import Center, FlowTrajectory, ProfileCurve, rescale_about
from .io import fmt, write_csv, write_kv

VERDICTS = ("plus-dominant", "neutral-dominant", "undecided")


# ------------------------------------------------------------- dichotomy

@dataclass
class ModeEnergyTrack:
    tau: np.ndarray
    U_plus: np.ndarray
    U_zero: np.ndarray
    U_minus: np.ndarray
    rho: np.ndarray = None  # cutoff radius per sample; 1 when absent
    coeffs: list = field(default=None, repr=False)
    verdict: str = "undecided"

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.U_plus, self.U_zero, self.U_minus = (np.asarray(x, dtype=float)
                                                  for x in (self.U_plus, self.U_zero, self.U_minus))
        m = self.tau.size
        if any(x.shape != (m,) for x in (self.U_plus, self.U_zero, self.U_minus)):
            raise ValidationError("energies must be 1-d arrays matching tau")
        if min(x.min(initial=0.0) for x in (self.U_plus, self.U_zero, self.U_minus)) < 0:
            raise ValidationError("mode energies must be nonnegative")
        self.rho = np.ones(m) if self.rho is None else np.broadcast_to(np.asarray(self.rho, float), (m,)).copy()

    @classmethod
    def from_renormalized(cls, rt, rho):
        cs = [project_modes(g, rho) for g in rt.graphs]
        return cls(rt.taus, [c.U_plus for c in cs], [c.U_zero for c in cs], [c.U_minus for c in cs],
                   np.full(len(cs), float(rho)), cs)

    def write(self, path):
        n = self.coeffs[0].n if self.coeffs else None
        if self.coeffs:
            path = write_csv(path, coefficient_header(n), (c.row(t) for t, c in zip(self.tau, self.coeffs)))
        else:
            path = write_csv(path, ["tau", "Uplus", "Uzero", "Uminus"],
                             zip(self.tau, self.U_plus, self.U_zero, self.U_minus))
        return path


@dataclass(frozen=True)
class DichotomyResult:
    verdict: str
    kappa: float  # sup rho (U0 + U-) / U+ over the window, or nan
    eta: float  # sup (U+ + U-) / U0 over the window, or nan

    def summary(self):
        return f"verdict={self.verdict} kappa={fmt(self.kappa)} eta={fmt(self.eta)}"


def _halves_sup(tau, q):
    order = np.argsort(tau)
    q = q[order]
    h = q.size // 2
    return float(q[:h].max()), float(q[h:].max())


def classify_dichotomy(track: ModeEnergyTrack) -> DichotomyResult:
    """Decide which of plus or neutral modes dominates as tau -> -infinity.

    The ratio controlling the other modes must be no more than twice as large
    on the earlier half of the window as on the later half.
    """
    tau = track.tau
    if tau.size < 20 or np.ptp(tau) < 3.0:
        raise InsufficientDataError(f"need >= 20 samples over a tau span >= 3, got {tau.size} over {np.ptp(tau):.3g}")
    up, u0, um = track.U_plus, track.U_zero, track.U_minus
    kappa = eta = float("nan")
    verdict = "undecided"
    if np.all(up > 0):
        k = track.rho * (u0 + um) / up
        early, late = _halves_sup(tau, k)
        kappa = max(early, late)
        if np.isfinite(kappa) and early <= 2.0 * late:
            verdict = "plus-dominant"
    if verdict == "undecided" and np.all(u0 > 0):
        q = (up + um) / u0
        early, late = _halves_sup(tau, q)
        eta = max(early, late)
        if eta < 1.0 and early <= late:
            verdict = "neutral-dominant"
    track.verdict = verdict
    return DichotomyResult(verdict, kappa, eta)


# ----------------------------------------------------------- decay fits

@dataclass(frozen=True)
class DecayFit:
    rate: float
    constant: float  # limit of c(tau) e^{-rate tau}
    residual: float  # rms of the log-linear fit

    def summary(self):
        return f"rate={fmt(self.rate)} constant={fmt(self.constant)} residual={fmt(self.residual)}"


def _line(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    return coef, float(np.sqrt(np.mean((A @ coef - y) ** 2)))


def fit_mode_decay(tau, series, window=None, max_residual=0.05) -> DecayFit:
    """Least-squares line through (tau, log|c|); rejects sign changes and power laws."""
    tau = np.asarray(tau, dtype=float)
    c = np.asarray(series, dtype=float)
    if window is not None:
        m = (tau >= window[0]) & (tau <= window[1])
        tau, c = tau[m], c[m]
    if tau.size < 3:
        raise InsufficientDataError("need at least three samples in the window")
    if np.any(c == 0) or np.any(np.sign(c) != np.sign(c[0])):
        raise NonExponentialError("series vanishes or changes sign on the window")
    y = np.log(np.abs(c))
    (rate, icpt), res = _line(tau, y)
    if np.all(tau < 0) or np.all(tau > 0):
        _, res_pow = _line(np.log(np.abs(tau)), y)
        if res > 1e-3 and res_pow < 0.1 * res:
            raise NonExponentialError(f"power law fits better than an exponential (rms {res_pow:.2e} vs {res:.2e})")
    if res > max_residual:
        raise NonExponentialError(f"log-linear residual {res:.3e} above {max_residual}")
    return DecayFit(float(rate), float(np.sign(c[0]) * np.exp(icpt)), res)


@dataclass
class FineNeckReport:
    center: Center
    fit: DecayFit  # axial plus-mode coefficient a(tau)
    b_bar: np.ndarray  # limits of b_i e^{-tau/2} after recentering
    b_bar_raw: np.ndarray  # same before recentering
    offset: np.ndarray  # applied recentering translation
    track: ModeEnergyTrack = field(repr=False)


def _b_limits(track):
    b = np.array([c.b for c in track.coeffs])
    return np.mean(b * np.exp(-track.tau / 2.0)[:, None], axis=0)


def fine_neck(traj, X0: Center, taus, rho=5.0) -> FineNeckReport:
    """Fit a(tau) ~ a_bar e^{tau/2}, then translate the center to remove the x_i components."""
    n = traj.n
    track = ModeEnergyTrack.from_renormalized(rescale_about(traj, X0, taus), rho)
    fit = fit_mode_decay(track.tau, [c.a for c in track.coeffs])
    raw = _b_limits(track)
    # b response to a unit off-axis shift of the center, with the same cutoff
    z = rescale_about(traj, X0, taus[:1]).graphs[0].z
    unit = np.array([project_modes(CylinderGraph(n, z, np.zeros(z.size), _unit_mode1(n, i, z)), rho).b[i]
                     for i in range(n)])
    offset = raw / unit
    perp = np.zeros(n) if not len(X0.perp) else np.asarray(X0.perp, dtype=float)
    X1 = Center(X0.z0, X0.t0, tuple(perp + offset))
    track1 = ModeEnergyTrack.from_renormalized(rescale_about(traj, X1, taus), rho)
    return FineNeckReport(X1, fit, _b_limits(track1), raw, offset, track1)


def _unit_mode1(n, i, z):
    m1 = np.zeros((n, z.size))
    m1[i] = 1.0
    return m1


# ------------------------------------------------------------ neutral ODE

def neutral_constant(n: int) -> float:
    """A = (1/(2 sqrt(n-1))) (2 e pi/(n-1))^{(n-1)/4} |S^{n-1}|^{-1/2}."""
    if n < 2:
        raise ValidationError("n >= 2 required")
    return (1.0 / (2.0 * sqrt(n - 1))) * (2.0 * e * pi / (n - 1)) ** ((n - 1) / 4.0) * sphere_area(n) ** -0.5


@dataclass
class NeutralODEState:
    alpha0: float
    alpha: np.ndarray
    n: int

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.alpha.size != self.n:
            raise ValidationError(f"need {self.n} radial coefficients, got {self.alpha.size}")

    @property
    def A(self):
        return neutral_constant(self.n)


@dataclass
class NeutralTrajectory:
    n: int
    A: float
    tau: np.ndarray
    alpha0: np.ndarray
    alpha: np.ndarray  # (samples, n)

    @property
    def ode_constant(self):
        """Limit of |tau| alpha0 on the closed-form branch of the truncated system."""
        return -1.0 / (2.0 * self.A)

    @property
    def displayed_constant(self):
        """The constant of the rotation law alpha0 ~ -1/(A |tau|)."""
        return -1.0 / self.A

    def closed_form(self):
        return 1.0 / (2.0 * self.A * self.tau)

    def ratio_exponent(self, i=0):
        """Slope of log|alpha_i/alpha0| against log|tau|."""
        q = np.abs(self.alpha[:, i] / self.alpha0)
        (p, _), _ = _line(np.log(np.abs(self.tau)), np.log(q))
        return float(p)

    def write(self, path):
        header = ["tau", "alpha0"] + [f"alpha{i}" for i in range(1, self.n + 1)] + ["closed_form"]
        path = write_csv(path, header, (
            [t, a0, *al, cf] for t, a0, al, cf in zip(self.tau, self.alpha0, self.alpha, self.closed_form())))
        write_kv(path.with_suffix(".summary.txt"), {
            "n": self.n, "A": self.A, "ode_constant": self.ode_constant,
            "displayed_constant": self.displayed_constant,
            "abs_tau_alpha0_last": abs(self.tau[-1]) * self.alpha0[-1]})
        return path


def integrate_neutral_ode(s0: NeutralODEState, tau0: float, tau1: float, dtau: float,
                          every: int = 1) -> NeutralTrajectory:
    """RK4 on alpha0' = -2A alpha0^2 - A sum alpha_i^2, alpha_i' = -A alpha0 alpha_i."""
    A = s0.A
    if not dtau > 0 or tau1 == tau0:
        raise ValidationError("need dtau > 0 and tau1 != tau0")
    m = int(np.ceil(abs(tau1 - tau0) / dtau - 1e-9))
    h = (tau1 - tau0) / m
    scale = max(abs(s0.alpha0), float(np.abs(s0.alpha).max(initial=0.0)))
    if abs(h) * A * scale >= 0.1:
        raise ValidationError(f"step too large: |dtau A alpha| = {abs(h) * A * scale:.3g} >= 0.1")
    if s0.alpha0 != 0:
        # blow-up time of the alpha_i = 0 branch, alpha0 = 1/(2A(tau - c))
        c = tau0 - 1.0 / (2.0 * A * s0.alpha0)
        if min(tau0, tau1) < c <= max(tau0, tau1):
            raise BlowUpError(f"alpha0 blows up near tau = {c:.6g}", c)
    a0, al, steps, status = K.neutral_rk4(float(s0.alpha0), s0.alpha.copy(), A, h, m, int(every))
    if status:
        raise BlowUpError(f"blow-up after {steps} steps", tau0 + steps * h)
    taus = tau0 + h * every * np.arange(a0.size)
    if m % every:
        taus = taus[:a0.size]
    return NeutralTrajectory(s0.n, A, taus, np.asarray(a0), np.asarray(al).reshape(a0.size, s0.n))


# -------------------------------------------------------------- tip height

@dataclass
class TipReport:
    times: np.ndarray
    psi: np.ndarray
    slope: float
    C: float  # smallest C with psi(t) - psi(t') <= C (t - t' + 1)
    monotone: bool  # nondecreasing
    strictly: bool

    def write(self, path):
        path = write_csv(path, ["t", "psi"], zip(self.times, self.psi))
        write_kv(path.with_suffix(".summary.txt"), {"slope": self.slope, "C": self.C, "monotone": self.monotone,
                                                   "strictly_increasing": self.strictly})
        return path


def _tip_of(p: ProfileCurve, direction):
    lo, hi = p.caps()
    if direction > 0:
        if lo is None:
            raise InapplicableError("no cap at the lower end; the tip is not defined")
        return lo
    if hi is None:
        raise InapplicableError("no cap at the upper end; the tip is not defined")
    return -hi


def tip_height(traj, direction: int = 1, times=None, max_pairs: int = 2000) -> TipReport:
    """Lowest axial point per slice (direction=-1: minus the highest), with slope and speed bound."""
    if direction not in (1, -1):
        raise ValidationError("direction must be +1 or -1")
    if isinstance(traj, FlowTrajectory):
        ts = traj.times
        psi = np.array([_tip_of(traj.profile(k), direction) for k in range(len(traj))])
    elif hasattr(traj, "tip_height"):
        if times is None:
            raise ValidationError("analytic flows need explicit sample times")
        ts = np.sort(np.asarray(times, dtype=float))
        psi = np.array([direction * traj.tip_height(float(t)) for t in ts], dtype=float)
    else:
        raise InapplicableError(f"{type(traj).__name__} has no tip")
    if ts.size < 2:
        raise InsufficientDataError("need at least two slices")
    (slope, _), _ = _line(ts, psi)
    sel = np.unique(np.linspace(0, ts.size - 1, min(ts.size, max_pairs)).round().astype(int))
    t, p = ts[sel], psi[sel]
    i, j = np.triu_indices(t.size, 1)
    C = float(np.max((p[j] - p[i]) / (t[j] - t[i] + 1.0)))
    d = np.diff(psi)
    return TipReport(ts, psi, float(slope), C, bool(np.all(d >= 0)), bool(np.all(d > 0)))


# -------------------------------------------------------- mean convexity

@dataclass(frozen=True)
class ConvexityReport:
    min_H: float
    z_at_min: float
    positive: bool
    note: str = ""


def mean_curvature(p: ProfileCurve, idx=None):
    """H of the profile at nodes inside the surface, positive for a round sphere.

    Written in v = r^2 so it stays regular at the caps:
    H = (2(n-1)(4v + v'^2) - 4 v v'' + 2 v'^2) / (4v + v'^2)^{3/2}.
    """
    idx = np.flatnonzero(p.inside) if idx is None else np.asarray(idx)
    if idx.size < 3:
        raise ValidationError("need at least three surface nodes")
    z, v = p.z[idx], p.v[idx]
    d1 = np.gradient(v, z, edge_order=2)
    d2 = np.gradient(d1, z, edge_order=2)
    q = 4.0 * v + d1 * d1
    return z, (2.0 * (p.n - 1) * q - 4.0 * v * d2 + 2.0 * d1 * d1) / q ** 1.5


def mean_convexity_check(p: ProfileCurve, region) -> ConvexityReport:
    lo, hi = region
    inside = p.inside
    sel = (p.z >= lo) & (p.z <= hi)
    idx = np.flatnonzero(sel & inside)
    note = ""
    if np.any(sel & ~inside) or (idx.size and (idx[0] == 0 or idx[-1] == p.z.size - 1)):
        note = "region reaches a cap or grid end; one-sided stencils used there"
    # central differences need the neighbours of the region too
    ext = np.flatnonzero(inside & (p.z >= lo - 2 * p.dz) & (p.z <= hi + 2 * p.dz))
    z, H = mean_curvature(p, ext)
    keep = (z >= lo) & (z <= hi)
    z, H = z[keep], H[keep]
    k = int(np.argmin(H))
    return ConvexityReport(float(H[k]), float(z[k]), bool(H[k] > 0), note)


def neck_convexity(traj: FlowTrajectory, half_width=1.0, last_fraction=0.1):
    """Minimum of H on neck +- half_width over the last fraction of the run."""
    t0, t1 = traj.times[0], traj.times[-1]
    worst = None
    for k in np.flatnonzero(traj.times >= t1 - last_fraction * (t1 - t0)):
        p = traj.profile(int(k))
        nk = p.neck()
        if nk is None:
            continue
        rep = mean_convexity_check(p, (nk[1] - half_width, nk[1] + half_width))
        if worst is None or rep.min_H < worst.min_H:
            worst = rep
    if worst is None:
        raise InapplicableError("no neck in the final part of the run")
    return worst
