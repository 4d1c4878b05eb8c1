"""Weighted-inequality machinery on 2D rectangles.

Four capabilities, all in the semiclassical calculus of the conjugated
Laplacian P_w = e^{phi/h} (-h^2 Delta) e^{-phi/h} with an exponential
weight phi = exp(scale * psi) built on a polynomial profile psi:

  * exact evaluation of the conjugated principal symbol
        p_w(x, xi) = |xi|^2 - |grad phi|^2 + 2i <xi, grad phi>;
  * a dual-route check of the sign condition: the Poisson bracket
    {Re p_w, Im p_w} assembled from the Hamiltonian derivatives is
    compared against the closed form it collapses to on the
    characteristic set;
  * construction of a weight PAIR (psi, psi o flow) by pushing psi along
    a compactly supported vector field that transports each critical
    point to a strictly higher level: where one weight degenerates the
    other is regular and larger;
  * direct quadrature of both sides of the weighted inequality
        h  int |u|^2 W + h^3 int |grad u|^2 W
          <= C ( h^4 int |Delta u|^2 W
                 + h int_{bd\gamma} |u|^2 W + h^3 int_{bd\gamma} |dnu u|^2 W ),
    W = e^{2 phi/h}, for manufactured fields with exact derivatives.

Sign conventions: boundary normals are OUTER throughout this module.
The distinguished side gamma carries dnu psi < 0, i.e. the weight
increases from gamma into the domain and is smallest on gamma; the
derivative-free trace hypothesis u = 0 is imposed there.  On the other
sides dnu psi must not vanish unless the field is supported away from
the offending side.

Profiles are exact polynomials of total degree at most 4, so every
derivative used in symbols, brackets, and Newton searches is exact; the
sign questions answered here are too sensitive for numerical
differentiation error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .mesh import Grid2D

MAX_PROFILE_DEGREE = 4

SIDES = ("left", "right", "bottom", "top")


class CarlemanPreconditionError(ValueError):
    """A hypothesis of the weighted inequality fails for the given data."""


# ----------------------------------------------------------------------
# Weights
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Exponential weight exp(scale * psi) over a polynomial profile psi.

    coeffs[i, j] multiplies x1^i x2^j; total degree is capped at 4 so
    that all derivatives are exact closed forms.
    """

    coeffs: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("profile coefficients must be a 2D array")
        for i in range(c.shape[0]):
            for j in range(c.shape[1]):
                if c[i, j] != 0.0 and i + j > MAX_PROFILE_DEGREE:
                    raise ValueError(
                        f"profile degree {i + j} exceeds the exact-derivative "
                        f"cap {MAX_PROFILE_DEGREE}"
                    )
        if not np.isfinite(self.scale) or self.scale <= 0.0:
            raise ValueError(f"weight scale must be positive, got {self.scale}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_coefficients(
        cls, terms: dict[tuple[int, int], float], scale: float = 1.0
    ) -> "WeightFunction":
        deg = MAX_PROFILE_DEGREE
        c = np.zeros((deg + 1, deg + 1))
        for (i, j), val in terms.items():
            if i < 0 or j < 0 or i + j > deg:
                raise ValueError(f"monomial x1^{i} x2^{j} outside the degree cap")
            c[i, j] = val
        return cls(coeffs=c, scale=scale)

    def with_scale(self, scale: float) -> "WeightFunction":
        return WeightFunction(coeffs=self.coeffs, scale=scale)

    # --- polynomial profile -------------------------------------------------

    def psi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return npoly.polyval2d(x[..., 0], x[..., 1], self.coeffs)

    def grad_psi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c1 = npoly.polyder(self.coeffs, 1, axis=0)
        c2 = npoly.polyder(self.coeffs, 1, axis=1)
        g1 = npoly.polyval2d(x[..., 0], x[..., 1], c1)
        g2 = npoly.polyval2d(x[..., 0], x[..., 1], c2)
        return np.stack([g1, g2], axis=-1)

    def hess_psi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c11 = npoly.polyder(self.coeffs, 2, axis=0)
        c22 = npoly.polyder(self.coeffs, 2, axis=1)
        c12 = npoly.polyder(npoly.polyder(self.coeffs, 1, axis=0), 1, axis=1)
        h11 = npoly.polyval2d(x[..., 0], x[..., 1], c11)
        h22 = npoly.polyval2d(x[..., 0], x[..., 1], c22)
        h12 = npoly.polyval2d(x[..., 0], x[..., 1], c12)
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = h11
        out[..., 0, 1] = h12
        out[..., 1, 0] = h12
        out[..., 1, 1] = h22
        return out

    # --- exponential weight -------------------------------------------------

    def phi(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.scale * self.psi(x))

    def grad_phi(self, x: np.ndarray) -> np.ndarray:
        lam = self.scale
        return lam * self.phi(x)[..., None] * self.grad_psi(x)

    def curvature_phi(self, x: np.ndarray) -> np.ndarray:
        """Hessian of phi: exp(lam psi) (lam^2 grad psi grad psi^T + lam psi'')."""
        lam = self.scale
        g = self.grad_psi(x)
        hess = self.hess_psi(x)
        outer = g[..., :, None] * g[..., None, :]
        return self.phi(x)[..., None, None] * (lam**2 * outer + lam * hess)


# ----------------------------------------------------------------------
# Symbols and brackets
# ----------------------------------------------------------------------


def conjugated_symbol(w: WeightFunction, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """p_w(x, xi) = |xi|^2 - |grad phi|^2 + 2i <xi, grad phi>."""
    xi = np.asarray(xi, dtype=float)
    gphi = w.grad_phi(x)
    return (
        np.sum(xi**2, axis=-1)
        - np.sum(gphi**2, axis=-1)
        + 2j * np.sum(xi * gphi, axis=-1)
    )


def characteristic_samples(w: WeightFunction, x: np.ndarray, n_xi: int) -> np.ndarray:
    """Covectors on the characteristic set of p_w over the points x.

    In 2D the set {p_w = 0} over a non-critical point consists of exactly
    the two covectors +-|grad phi| times the unit normal to grad psi; the
    sampler cycles them (the bracket is even in xi, so both give the same
    value, which the dual-route check exploits as a consistency probe).
    Returns an array of shape x.shape[:-1] + (n_xi, 2).
    """
    if n_xi < 8:
        raise ValueError("n_xi must be at least 8")
    x = np.asarray(x, dtype=float)
    g = w.grad_psi(x)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    unit = np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)
    perp = np.stack([-unit[..., 1], unit[..., 0]], axis=-1)
    mag = np.linalg.norm(w.grad_phi(x), axis=-1)
    signs = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(n_xi)])
    return (
        signs[..., :, None]
        * mag[..., None, None]
        * perp[..., None, :]
    )


def poisson_bracket(w: WeightFunction, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """{Re p_w, Im p_w}(x, xi) assembled from the Hamiltonian derivatives.

    The four gradients of the symbol's real and imaginary parts are
    formed explicitly and contracted:
        d_xi Re = 2 xi            d_x Re = -2 phi'' grad phi
        d_xi Im = 2 grad phi      d_x Im =  2 phi'' xi
    No characteristic-set simplification is applied; the result is valid
    at every (x, xi).
    """
    xi = np.asarray(xi, dtype=float)
    gphi = w.grad_phi(x)
    curv = w.curvature_phi(x)
    if xi.shape[:-1] != gphi.shape[:-1]:
        # broadcast x-quantities across extra xi axes (e.g. per-point fans)
        extra = xi.ndim - gphi.ndim
        for _ in range(extra):
            gphi = gphi[..., None, :]
            curv = curv[..., None, :, :]
    d_xi_re = 2.0 * xi
    d_x_re = -2.0 * np.einsum("...ij,...j->...i", curv, gphi)
    d_xi_im = 2.0 * gphi
    d_x_im = 2.0 * np.einsum("...ij,...j->...i", curv, xi)
    return np.sum(d_xi_re * d_x_im, axis=-1) - np.sum(d_x_re * d_xi_im, axis=-1)


def characteristic_bracket_closed_form(
    w: WeightFunction, x: np.ndarray, xi: np.ndarray, printed_exponent: bool = False
) -> np.ndarray:
    """Closed form of the bracket, valid on the characteristic set:

        4 lam e^{lam psi} xi^T psi'' xi
          + 4 e^{3 lam psi} (lam^4 |grad psi|^4 + lam^3 grad psi^T psi'' grad psi).

    printed_exponent=True evaluates the variant with |grad psi|^2 in the
    lam^4 term instead of |grad psi|^4; the two agree only where
    |grad psi| = 1, and the dual-route tests demonstrate that the ^4
    exponent is the one matching the Hamiltonian assembly.
    """
    xi = np.asarray(xi, dtype=float)
    lam = w.scale
    x = np.asarray(x, dtype=float)
    psi = w.psi(x)
    g = w.grad_psi(x)
    hess = w.hess_psi(x)
    if xi.shape[:-1] != g.shape[:-1]:
        extra = xi.ndim - g.ndim
        for _ in range(extra):
            psi = psi[..., None]
            g = g[..., None, :]
            hess = hess[..., None, :, :]
    xi_h_xi = np.einsum("...i,...ij,...j->...", xi, hess, xi)
    g_h_g = np.einsum("...i,...ij,...j->...", g, hess, g)
    gnorm2 = np.sum(g**2, axis=-1)
    grad_term = gnorm2 if printed_exponent else gnorm2**2
    return 4.0 * lam * np.exp(lam * psi) * xi_h_xi + 4.0 * np.exp(
        3.0 * lam * psi
    ) * (lam**4 * grad_term + lam**3 * g_h_g)


# ----------------------------------------------------------------------
# Sub-ellipticity verification
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class SubellipticityReport:
    """Outcome of a characteristic-set bracket sweep over a rectangle.

    certified means: no critical point of the profile inside the region,
    and the bracket is strictly positive at every grid point in every
    sampled characteristic direction.  On failure the witness points at
    the offending location (nearest grid node); min_bracket is NaN when
    the weight degenerates, since the characteristic fan collapses there.
    """

    certified: bool
    min_bracket: float
    witness: tuple[float, float]
    critical_points: np.ndarray
    degenerate_hessian: bool
    scale: float
    n_xi: int
    bracket_grid: np.ndarray | None


def _newton_critical_points(w: WeightFunction, grid: Grid2D) -> tuple[np.ndarray, bool]:
    """Newton-refine critical-point candidates of the profile inside the grid.

    Seeds are grid nodes where |grad psi|^2 is within a factor 4 of the
    grid minimum; seeds with a numerically singular Hessian are skipped
    (a linear profile has none anywhere).  Returns the deduplicated
    in-region converged points and whether any has a near-degenerate
    Hessian (|det psi''| < 1e-8).
    """
    pts = grid.points()
    g = w.grad_psi(pts)
    g2 = np.sum(g**2, axis=-1)
    gmin = float(np.min(g2))
    tiny = 1e-12 * max(float(np.max(g2)), 1.0)
    seeds = pts[g2 <= 4.0 * gmin + tiny]

    x1min, x1max, x2min, x2max = grid.bounds
    slack1 = 1e-9 * (x1max - x1min)
    slack2 = 1e-9 * (x2max - x2min)

    found: list[np.ndarray] = []
    degenerate = False
    for seed in seeds:
        x = seed.astype(float).copy()
        ok = False
        for _ in range(50):
            grad = w.grad_psi(x)
            hess = w.hess_psi(x)
            det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
            if abs(det) < 1e-14 * max(1.0, float(np.abs(hess).max()) ** 2):
                break
            step = np.linalg.solve(hess, grad)
            x = x - step
            if np.linalg.norm(w.grad_psi(x)) <= 1e-10:
                ok = True
                break
            if np.linalg.norm(x) > 1e6:
                break
        if not ok:
            continue
        if not (
            x1min - slack1 <= x[0] <= x1max + slack1
            and x2min - slack2 <= x[1] <= x2max + slack2
        ):
            continue
        if any(np.linalg.norm(x - p) < 1e-8 for p in found):
            continue
        found.append(x)
        hess = w.hess_psi(x)
        det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
        if abs(det) < 1e-8:
            degenerate = True
    if found:
        return np.vstack(found), degenerate
    return np.zeros((0, 2)), degenerate


def _nearest_grid_node(grid: Grid2D, point: np.ndarray) -> tuple[float, float]:
    i = int(np.argmin(np.abs(grid.x1 - point[0])))
    j = int(np.argmin(np.abs(grid.x2 - point[1])))
    return float(grid.x1[i]), float(grid.x2[j])


def verify_subellipticity(
    w: WeightFunction, region: Grid2D, n_xi: int = 8
) -> SubellipticityReport:
    """Certify strict bracket positivity on the characteristic set.

    Degeneracy is decided first: any critical point of the profile inside
    the region defeats the weight (the characteristic condition there
    collapses to xi = 0 where the bracket vanishes), so certification is
    refused with the critical point as witness.  Otherwise the bracket is
    evaluated at every grid node in n_xi characteristic directions and
    the minimum with its location is reported.
    """
    if n_xi < 8:
        raise ValueError("n_xi must be at least 8")
    crit, degenerate = _newton_critical_points(w, region)
    if crit.shape[0] > 0:
        witness = _nearest_grid_node(region, crit[0])
        return SubellipticityReport(
            certified=False,
            min_bracket=float("nan"),
            witness=witness,
            critical_points=crit,
            degenerate_hessian=degenerate,
            scale=w.scale,
            n_xi=n_xi,
            bracket_grid=None,
        )

    pts = region.points()
    fans = characteristic_samples(w, pts, n_xi)
    values = poisson_bracket(w, pts, fans)
    per_point = np.min(values, axis=-1)
    k = int(np.argmin(per_point))
    witness = (float(pts[k, 0]), float(pts[k, 1]))
    bracket_grid = per_point.reshape(region.nx, region.ny)
    min_bracket = float(per_point[k])
    return SubellipticityReport(
        certified=min_bracket > 0.0,
        min_bracket=min_bracket,
        witness=witness,
        critical_points=crit,
        degenerate_hessian=degenerate,
        scale=w.scale,
        n_xi=n_xi,
        bracket_grid=bracket_grid,
    )


# ----------------------------------------------------------------------
# Weight-pair construction by flow deformation
# ----------------------------------------------------------------------


def _smoothstep(t: np.ndarray) -> np.ndarray:
    """C-infinity ramp: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        fc = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return f / (f + fc)


def _plateau_profile(s: np.ndarray, plateau: float, support: float) -> np.ndarray:
    """1 on |s| <= plateau, 0 on |s| >= support, smooth in between."""
    return _smoothstep((support - np.abs(s)) / (support - plateau))


@dataclass(frozen=True)
class Arc:
    """Straight uphill transport segment centered at a critical point."""

    start: tuple[float, float]
    end: tuple[float, float]

    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.start) + np.asarray(self.end))

    def direction(self) -> np.ndarray:
        d = np.asarray(self.end) - np.asarray(self.start)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise ValueError("arc endpoints coincide")
        return d / norm

    def half_length(self) -> float:
        return 0.5 * float(
            np.linalg.norm(np.asarray(self.end) - np.asarray(self.start))
        )


@dataclass(frozen=True)
class FlowSpec:
    """Compactly supported transport field: one tube per arc.

    The longitudinal plateau covers the whole arc, so the field equals
    the constant arc velocity along it and the time-one map sends the
    arc center exactly to the arc end (a constant field integrates
    exactly under RK4).  Tapers are C-infinity bump ramps; the field
    vanishes identically outside the tubes.
    """

    arcs: tuple[Arc, ...]
    tube_radius: float = 0.12
    normal_plateau: float = 0.04
    longitudinal_pad: float = 0.1
    step: float = 1e-3

    def __post_init__(self):
        if not self.arcs:
            raise ValueError("flow needs at least one arc")
        if self.tube_radius <= 0.0 or self.normal_plateau <= 0.0:
            raise ValueError("tube radii must be positive")
        if self.normal_plateau >= self.tube_radius:
            raise ValueError("normal plateau must sit inside the tube radius")
        if self.longitudinal_pad <= 0.0:
            raise ValueError("longitudinal pad must be positive")
        if not (0.0 < self.step <= 0.01):
            raise ValueError("integrator step must lie in (0, 0.01]")
        for i, a in enumerate(self.arcs):
            for b in self.arcs[i + 1 :]:
                gap = float(np.linalg.norm(a.center() - b.center()))
                if gap < 2.0 * self.tube_radius:
                    raise ValueError(
                        "arc tubes overlap: centers separated by "
                        f"{gap:.4f} < {2 * self.tube_radius:.4f}"
                    )

    def support_extent(self, arc: Arc) -> float:
        return arc.half_length() + self.longitudinal_pad


def flow_velocity(spec: FlowSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for arc in spec.arcs:
        c = arc.center()
        t_hat = arc.direction()
        n_hat = np.array([-t_hat[1], t_hat[0]])
        rel = x - c
        s = rel @ t_hat
        n = rel @ n_hat
        lon = _plateau_profile(s, arc.half_length(), spec.support_extent(arc))
        tra = _plateau_profile(n, spec.normal_plateau, spec.tube_radius)
        speed = arc.half_length()
        out = out + (speed * lon * tra)[..., None] * t_hat
    return out


def flow_map(
    spec: FlowSpec, x: np.ndarray, time: float, bounds: tuple[float, float, float, float]
) -> np.ndarray:
    """Fixed-step RK4 integration of the transport field to the given time."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    p = np.atleast_2d(x).astype(float).copy()
    n_steps = max(int(round(abs(time) / spec.step)), 1)
    dt = time / n_steps
    x1min, x1max, x2min, x2max = bounds
    for _ in range(n_steps):
        k1 = flow_velocity(spec, p)
        k2 = flow_velocity(spec, p + 0.5 * dt * k1)
        k3 = flow_velocity(spec, p + 0.5 * dt * k2)
        k4 = flow_velocity(spec, p + dt * k3)
        p += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (
            p[:, 0].min() < x1min - 1e-12
            or p[:, 0].max() > x1max + 1e-12
            or p[:, 1].min() < x2min - 1e-12
            or p[:, 1].max() > x2max + 1e-12
        ):
            raise RuntimeError("flow integration left the region")
    return p[0] if single else p


@dataclass(frozen=True)
class ArcDiagnostics:
    """Exclusivity certificate at one transported critical point."""

    critical_point: tuple[float, float]
    lift_at_critical: float  # psi2 - psi1 at the critical point of psi1
    partner_point: tuple[float, float]  # critical point of psi2 (backward image)
    drop_at_partner: float  # psi1 - psi2 at the partner point
    grad_psi2_at_critical: float
    grad_psi1_at_partner: float


@dataclass(frozen=True, eq=False)
class FlowResult:
    """Deformed weight profile psi2 = psi1 o (time-one flow) with evidence."""

    spec: FlowSpec
    region: Grid2D
    psi1_grid: np.ndarray
    psi2_grid: np.ndarray
    arc_diagnostics: tuple[ArcDiagnostics, ...]
    round_trip_defect: float
    frozen_band_defect: float
    psi1: WeightFunction

    def psi2(self, x: np.ndarray) -> np.ndarray:
        moved = flow_map(self.spec, x, 1.0, self.region.bounds)
        return self.psi1.psi(moved)


def flow_deform(psi1: WeightFunction, spec: FlowSpec, region: Grid2D) -> FlowResult:
    """Build the partner profile psi2 = psi1 o flow and certify exclusivity.

    Geometry checks first: each arc midpoint must be a critical point of
    psi1 (1e-8), its endpoints must sit on equal psi1 levels strictly
    above the critical level, and each tube (arc extended by the taper
    pad, widened by the tube radius) must stay inside the region.

    The certificate at each arc: psi2 exceeds psi1 at the critical point
    (the flow moved it uphill), the backward image of the critical point
    is the critical point of psi2 and there psi1 has strictly the larger
    value, and the non-transported weight is regular at the partner's
    degeneracy (gradients checked by exact calculus for psi1, by central
    differences for psi2).
    """
    x1min, x1max, x2min, x2max = region.bounds
    for arc in spec.arcs:
        c = arc.center()
        if float(np.linalg.norm(psi1.grad_psi(c))) > 1e-8:
            raise ValueError(
                f"arc midpoint {tuple(c)} is not a critical point of the profile"
            )
        v_start = float(psi1.psi(np.asarray(arc.start)))
        v_end = float(psi1.psi(np.asarray(arc.end)))
        v_mid = float(psi1.psi(c))
        if abs(v_start - v_end) > 1e-8:
            raise ValueError(
                f"arc endpoints sit on different levels: {v_start} vs {v_end}"
            )
        if min(v_start, v_end) <= v_mid:
            raise ValueError("arc endpoints must lie strictly above the saddle level")
        t_hat = arc.direction()
        n_hat = np.array([-t_hat[1], t_hat[0]])
        ext = spec.support_extent(arc)
        corners = [
            c + s * t_hat + n * n_hat
            for s in (-ext, ext)
            for n in (-spec.tube_radius, spec.tube_radius)
        ]
        for corner in corners:
            if not (
                x1min <= corner[0] <= x1max and x2min <= corner[1] <= x2max
            ):
                raise ValueError(
                    "flow tube leaves the region: corner at "
                    f"({corner[0]:.4f}, {corner[1]:.4f})"
                )

    pts = region.points()
    psi1_grid = psi1.psi(pts).reshape(region.nx, region.ny)
    moved = flow_map(spec, pts, 1.0, region.bounds)
    psi2_flat = psi1.psi(moved)
    psi2_grid = psi2_flat.reshape(region.nx, region.ny)

    # Outside every tube the field vanishes identically, so the flow is
    # the identity and the two profiles agree exactly.
    outside = np.ones(pts.shape[0], dtype=bool)
    for arc in spec.arcs:
        c = arc.center()
        t_hat = arc.direction()
        n_hat = np.array([-t_hat[1], t_hat[0]])
        rel = pts - c
        s = rel @ t_hat
        n = rel @ n_hat
        inside = (np.abs(s) < spec.support_extent(arc)) & (
            np.abs(n) < spec.tube_radius
        )
        outside &= ~inside
    if np.any(outside):
        frozen_defect = float(
            np.max(np.abs(psi2_flat[outside] - psi1.psi(pts[outside])))
        )
    else:
        frozen_defect = 0.0

    diags = []
    fd = 1e-5
    stencil = np.array(
        [[fd, 0.0], [-fd, 0.0], [0.0, fd], [0.0, -fd]]
    )
    for arc in spec.arcs:
        c = arc.center()
        lift = float(psi1.psi(flow_map(spec, c, 1.0, region.bounds)) - psi1.psi(c))
        partner = flow_map(spec, c, -1.0, region.bounds)
        psi2_partner = float(psi1.psi(flow_map(spec, partner, 1.0, region.bounds)))
        drop = float(psi1.psi(partner)) - psi2_partner
        probes = flow_map(spec, c + stencil, 1.0, region.bounds)
        vals = psi1.psi(probes)
        g2 = np.array(
            [(vals[0] - vals[1]) / (2 * fd), (vals[2] - vals[3]) / (2 * fd)]
        )
        diags.append(
            ArcDiagnostics(
                critical_point=(float(c[0]), float(c[1])),
                lift_at_critical=lift,
                partner_point=(float(partner[0]), float(partner[1])),
                drop_at_partner=drop,
                grad_psi2_at_critical=float(np.linalg.norm(g2)),
                grad_psi1_at_partner=float(np.linalg.norm(psi1.grad_psi(partner))),
            )
        )
        if lift <= 0.0 or drop <= 0.0:
            raise RuntimeError(
                "flow deformation failed to lift the critical point: "
                f"lift={lift:.3e}, drop={drop:.3e}"
            )

    # Diffeomorphism check: round trip over a deterministic point sample.
    stride = max(pts.shape[0] // 32, 1)
    sample = pts[::stride]
    rt = flow_map(spec, flow_map(spec, sample, 1.0, region.bounds), -1.0, region.bounds)
    round_trip = float(np.max(np.linalg.norm(rt - sample, axis=-1)))

    return FlowResult(
        spec=spec,
        region=region,
        psi1_grid=psi1_grid,
        psi2_grid=psi2_grid,
        arc_diagnostics=tuple(diags),
        round_trip_defect=round_trip,
        frozen_band_defect=frozen_defect,
        psi1=psi1,
    )


# ----------------------------------------------------------------------
# Weighted inequality quadrature
# ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ManufacturedBump:
    """Gaussian bump times the distance to the distinguished side.

    u = amplitude * eta(x) * exp(-|x - center|^2 / (2 width^2)), with eta
    the linear coordinate vanishing on gamma.  All derivatives are exact
    closed forms, so the quadrature of |Delta u|^2 carries no
    differentiation error.
    """

    bounds: tuple[float, float, float, float]
    gamma: str
    center: tuple[float, float]
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.gamma not in SIDES:
            raise ValueError(f"gamma must be one of {SIDES}, got {self.gamma!r}")
        if self.width <= 0.0:
            raise ValueError("width must be positive")

    def _eta(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x1min, x1max, x2min, x2max = self.bounds
        if self.gamma == "left":
            return x[..., 0] - x1min, np.array([1.0, 0.0])
        if self.gamma == "right":
            return x1max - x[..., 0], np.array([-1.0, 0.0])
        if self.gamma == "bottom":
            return x[..., 1] - x2min, np.array([0.0, 1.0])
        return x2max - x[..., 1], np.array([0.0, -1.0])

    def _gauss(self, x: np.ndarray) -> np.ndarray:
        rel = x - np.asarray(self.center)
        return np.exp(-np.sum(rel**2, axis=-1) / (2.0 * self.width**2))

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eta, _ = self._eta(x)
        return self.amplitude * eta * self._gauss(x)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eta, deta = self._eta(x)
        g = self._gauss(x)
        rel = x - np.asarray(self.center)
        dg = -rel / self.width**2 * g[..., None]
        return self.amplitude * (deta * g[..., None] + eta[..., None] * dg)

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        eta, deta = self._eta(x)
        g = self._gauss(x)
        rel = x - np.asarray(self.center)
        dg = -rel / self.width**2 * g[..., None]
        lap_g = (np.sum(rel**2, axis=-1) / self.width**4 - 2.0 / self.width**2) * g
        return self.amplitude * (2.0 * np.sum(deta * dg, axis=-1) + eta * lap_g)


def _side_nodes(grid: Grid2D, side: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature nodes, 1D trapezoid weights, and outer normal of a side."""
    x1min, x1max, x2min, x2max = grid.bounds
    if side in ("left", "right"):
        coord = grid.x2
        step = grid.dx2
        fixed = x1min if side == "left" else x1max
        pts = np.column_stack([np.full_like(coord, fixed), coord])
        normal = np.array([-1.0, 0.0]) if side == "left" else np.array([1.0, 0.0])
    else:
        coord = grid.x1
        step = grid.dx1
        fixed = x2min if side == "bottom" else x2max
        pts = np.column_stack([coord, np.full_like(coord, fixed)])
        normal = np.array([0.0, -1.0]) if side == "bottom" else np.array([0.0, 1.0])
    wts = np.full(coord.size, step)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    return pts, wts, normal


@dataclass(frozen=True)
class CarlemanReport:
    """Both sides of the weighted inequality across a semiclassical sweep."""

    h_values: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    gamma: str
    scale: float
    min_bracket: float

    def ratio_spread(self) -> float:
        pos = self.ratios[self.ratios > 0.0]
        if pos.size == 0:
            return 1.0
        return float(np.max(pos) / np.min(pos))


def carleman_inequality_check(
    w: WeightFunction,
    u: ManufacturedBump,
    gamma: str,
    h_values,
    region: Grid2D,
) -> CarlemanReport:
    """Evaluate both sides of the weighted inequality for each h.

    Hypotheses are checked before any quadrature: the weight must be
    certified sub-elliptic on the region, the profile must decrease
    toward gamma (outer-normal derivative strictly negative there) and
    have a nonvanishing outer-normal derivative on every other side
    unless the field's trace on that side is negligible, and the field
    must vanish on gamma.

    Weights are normalized by the grid maximum of phi, W =
    exp(2 (phi - phi_max)/h); both sides scale identically, so ratios
    are unaffected while the quadrature stays in floating range.
    """
    if gamma not in SIDES:
        raise ValueError(f"gamma must be one of {SIDES}, got {gamma!r}")
    if gamma != u.gamma:
        raise ValueError("field and inequality use different distinguished sides")
    if tuple(u.bounds) != tuple(region.bounds):
        raise ValueError("field and quadrature region have different bounds")
    h_values = np.asarray(h_values, dtype=float)
    if h_values.size == 0 or np.any(h_values <= 0.0):
        raise ValueError("h_values must be positive")

    report = verify_subellipticity(w, region, n_xi=8)
    if not report.certified:
        raise CarlemanPreconditionError(
            "weight is not certified sub-elliptic on the region; run "
            "verify_subellipticity for the witness at "
            f"{report.witness}"
        )

    pts = region.points()
    u_all = u.value(pts)
    u_scale = max(float(np.max(np.abs(u_all))), 1e-300)

    for side in SIDES:
        side_pts, _, normal = _side_nodes(region, side)
        dn_psi = w.grad_psi(side_pts) @ normal
        if side == gamma:
            if np.any(dn_psi >= -1e-10):
                raise CarlemanPreconditionError(
                    "profile must decrease toward gamma "
                    f"(outer-normal derivative >= 0 on {side!r})"
                )
            trace = np.max(np.abs(u.value(side_pts)))
            if trace > 1e-12 * u_scale:
                raise CarlemanPreconditionError(
                    f"field does not vanish on gamma (max trace {trace:.3e})"
                )
        else:
            if np.any(np.abs(dn_psi) <= 1e-10):
                trace = np.max(np.abs(u.value(side_pts)))
                if trace > 1e-12 * u_scale:
                    raise CarlemanPreconditionError(
                        f"outer-normal derivative of the profile vanishes on "
                        f"{side!r} where the field is not negligible"
                    )

    qw = region.trapezoid_weights().reshape(-1)
    phi_all = w.phi(pts)
    phi_max = float(np.max(phi_all))
    grad_sq = np.sum(np.abs(u.grad(pts)) ** 2, axis=-1)
    lap_sq = np.abs(u.laplacian(pts)) ** 2
    u_sq = np.abs(u_all) ** 2

    lhs_list, rhs_list, ratio_list = [], [], []
    for h in h_values:
        wgt = np.exp(2.0 * (phi_all - phi_max) / h)
        lhs = h * np.sum(qw * u_sq * wgt) + h**3 * np.sum(qw * grad_sq * wgt)
        rhs = h**4 * np.sum(qw * lap_sq * wgt)
        for side in SIDES:
            if side == gamma:
                continue
            side_pts, side_wts, normal = _side_nodes(region, side)
            side_wgt = np.exp(2.0 * (w.phi(side_pts) - phi_max) / h)
            u_side = np.abs(u.value(side_pts)) ** 2
            dn_u = np.abs(u.grad(side_pts) @ normal) ** 2
            rhs += h * np.sum(side_wts * u_side * side_wgt)
            rhs += h**3 * np.sum(side_wts * dn_u * side_wgt)
        lhs_f, rhs_f = float(lhs), float(rhs)
        ratio = 0.0 if lhs_f == 0.0 else lhs_f / rhs_f
        lhs_list.append(lhs_f)
        rhs_list.append(rhs_f)
        ratio_list.append(ratio)

    return CarlemanReport(
        h_values=h_values,
        lhs=np.asarray(lhs_list),
        rhs=np.asarray(rhs_list),
        ratios=np.asarray(ratio_list),
        gamma=gamma,
        scale=w.scale,
        min_bracket=report.min_bracket,
    )
