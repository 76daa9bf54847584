"""Talbot-Lau fringe formation and its degradation by photon emission.

Base Fourier coefficients of the three-grating density pattern, the
sinc-shaped decoherence function, single-emission coefficient
modification, Markovian coefficient evolution, and the closed-form
visibility for a molecule with a given temperature history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._ode import integrate_dp45
from . import physics
from .physics import (C70_MASS_KG, EmissionModel, H_PLANCK, SpectralDensity,
                      _gauss_legendre_nodes, sinc)
from .heating import TemperatureTrajectory

_GL24_X, _GL24_W = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class InterferometerGeometry:
    """Three identical equally spaced gratings in the paraxial regime."""

    grating_period_nm: float = 991.0
    slit_width_nm: float = 475.0
    grating_separation_m: float = 0.38
    molecule_mass_kg: float = C70_MASS_KG

    def __post_init__(self):
        if not (0.0 < self.slit_width_nm < self.grating_period_nm):
            raise ValueError("slit width must lie strictly inside (0, period)")
        if self.grating_separation_m <= 0.0:
            raise ValueError("grating separation must be > 0")
        if self.molecule_mass_kg <= 0.0:
            raise ValueError("molecule mass must be > 0")

    @property
    def open_fraction(self) -> float:
        return self.slit_width_nm / self.grating_period_nm


def de_broglie_wavelength_m(geometry: InterferometerGeometry,
                            velocity_mps: float) -> float:
    """lambda_dB = h / (m v), in meters."""
    if velocity_mps <= 0.0:
        raise ValueError("velocity must be > 0")
    return H_PLANCK / (geometry.molecule_mass_kg * velocity_mps)


def talbot_length_m(geometry: InterferometerGeometry,
                    lambda_db_m: float) -> float:
    """L_T = d^2 / lambda_dB, in meters."""
    d_m = geometry.grating_period_nm * 1e-9
    return d_m * d_m / lambda_db_m


def de_broglie_and_talbot(geometry: InterferometerGeometry,
                          velocity_mps: float) -> tuple[float, float]:
    """(de Broglie wavelength, Talbot length), both in meters."""
    lam = de_broglie_wavelength_m(geometry, velocity_mps)
    return lam, talbot_length_m(geometry, lam)


def _binary_coeff(m, open_fraction: float):
    """Fourier coefficients of a binary grating: b_m = sin(pi m f)/(pi m)."""
    m = np.asarray(m, dtype=float)
    out = np.where(m == 0.0, open_fraction,
                   np.sin(math.pi * m * open_fraction)
                   / np.where(m == 0.0, 1.0, math.pi * m))
    return out


@dataclass
class FringeCoefficients:
    """Complex Fourier coefficients C_l of the periodic density pattern.

    Stored for l = -l_max..l_max with C_{-l} = conj(C_l) (real pattern)
    and C_0 > 0.
    """

    c: np.ndarray
    grating_period_nm: float

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        if self.c.size % 2 != 1:
            raise ValueError("coefficient array must have odd length")
        if not np.allclose(self.c[::-1].conj(), self.c, rtol=0, atol=1e-12):
            raise ValueError("coefficients must satisfy C_{-l} = conj(C_l)")
        if not (self.c[self.l_max].real > 0.0):
            raise ValueError("C_0 must be positive")

    @property
    def l_max(self) -> int:
        return (self.c.size - 1) // 2

    def coef(self, l: int) -> complex:
        return complex(self.c[self.l_max + l])

    def orders(self) -> np.ndarray:
        return np.arange(-self.l_max, self.l_max + 1)

    def visibility(self) -> float:
        """Fringe visibility 2 |C_1 / C_0| of the sinusoidal component."""
        return 2.0 * abs(self.coef(1)) / self.coef(0).real

    def scaled_first_order(self, visibility: float) -> "FringeCoefficients":
        """Copy with C_{+-1} rescaled to hit a measured baseline visibility."""
        own = self.visibility()
        if own <= 0.0:
            raise ValueError("cannot rescale a flat pattern")
        out = self.c.copy()
        ratio = visibility / own
        out[self.l_max + 1] *= ratio
        out[self.l_max - 1] *= ratio
        return FringeCoefficients(out, self.grating_period_nm)


def fringe_pattern(coeffs: FringeCoefficients, x_nm) -> np.ndarray:
    """Density pattern w(x) = sum_l C_l exp(2 pi i l x / d); real output."""
    x = np.atleast_1d(np.asarray(x_nm, dtype=float))
    ls = coeffs.orders()
    phase = np.exp(2j * math.pi * np.outer(x, ls) / coeffs.grating_period_nm)
    w = phase @ coeffs.c
    return w.real if np.ndim(x_nm) else float(w.real[0])


def visibility_from_pattern(values) -> float:
    """(max - min)/(max + min) of a sampled fringe pattern."""
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / (v.max() + v.min()))


def _slit_overlap_integral(f: float, shift: float, order: int) -> complex:
    """Integral of exp(-2 pi i * order * x) over [0,f) intersect [shift,shift+f).

    Both intervals live on the unit circle; the intersection is at most
    two arcs.  Elementary antiderivative per arc.
    """
    s = shift % 1.0
    pieces = [(s, min(s + f, 1.0))]
    if s + f > 1.0:
        pieces.append((0.0, s + f - 1.0))
    total = 0.0 + 0.0j
    for a, b in pieces:
        lo, hi = max(a, 0.0), min(b, f)
        if hi <= lo:
            continue
        if order == 0:
            total += hi - lo
        else:
            w = 2.0 * math.pi * order
            total += (np.exp(-1j * w * lo) - np.exp(-1j * w * hi)) / (1j * w)
    return total


def base_coefficients(geometry: InterferometerGeometry, lambda_db_m: float,
                      l_max: int = 8, third_grating_shift_nm: float = 0.0,
                      auto_extend: bool = True) -> FringeCoefficients:
    """Fourier coefficients of the undisturbed Talbot-Lau pattern.

    Incoherent illumination of the first grating, paraxial propagation
    over two equal distances with the second grating diffracting, third
    grating as a scanned mask.  For identical binary gratings the
    detected signal is

        C_l = b_l^2 * exp(2 pi i l x0 / d)
              * sum_m b_m b_{m+2l} exp(2 pi i tau l (m + l)),

    with b_m the binary-grating coefficients, tau = L / L_T and x0 the
    third-grating offset.  The lattice sum over m is evaluated in closed
    form as the overlap integral of two shifted slit masks,

        sum_m b_m b_{m+2l} z^m = int t(x + tau l) t(x) e^{4 pi i l x} dx,

    which avoids any truncation of the diffraction orders.  When
    ``auto_extend`` is set, l_max grows until |C_lmax| < 1e-6 C_0
    (capped at 40).
    """
    f = geometry.open_fraction
    tau = geometry.grating_separation_m / talbot_length_m(geometry, lambda_db_m)
    d_nm = geometry.grating_period_nm

    while True:
        coeffs = np.zeros(2 * l_max + 1, dtype=complex)
        for l in range(0, l_max + 1):
            kernel = (np.exp(2j * math.pi * tau * l * l)
                      * _slit_overlap_integral(f, -tau * l, -2 * l))
            c_l = (_binary_coeff(l, f) ** 2
                   * np.exp(2j * math.pi * l * third_grating_shift_nm / d_nm)
                   * kernel)
            coeffs[l_max + l] = c_l
            coeffs[l_max - l] = np.conj(c_l)  # real pattern by construction
        coeffs[l_max] = coeffs[l_max].real
        c0 = coeffs[l_max].real
        if not auto_extend or l_max >= 40 or \
                abs(coeffs[-1]) < 1e-6 * c0:
            return FringeCoefficients(coeffs, d_nm)
        l_max += 8


class _DegenerateDensity(Exception):
    pass


def decoherence_function(delta_r_nm: float, density: SpectralDensity) -> float:
    """Off-diagonal reduction factor for one emitted photon.

    eta(delta_r) = (1/R_tot) integral R_lambda sinc(2 pi delta_r / lambda)
    over wavelength; equals 1 at zero separation and for a degenerate
    (zero-rate) density, by the convention "no emission, no decoherence".
    """
    if delta_r_nm < 0.0:
        raise ValueError("path separation must be >= 0")
    if density.is_degenerate:
        return 1.0
    lam = density.wavelengths_nm
    integrand = density.pdf_per_nm * sinc(2.0 * math.pi * delta_r_nm / lam)
    return float(np.trapezoid(integrand, lam))


@dataclass(frozen=True)
class EmissionEvent:
    """One photon emission inside the interferometer."""

    time_s: float
    wavelength_nm: float

    def __post_init__(self):
        if self.time_s < 0.0:
            raise ValueError("emission time must be >= 0 (interferometer clock)")
        if self.wavelength_nm <= 0.0:
            raise ValueError("wavelength must be > 0")


def effective_separation_nm(geometry: InterferometerGeometry, velocity_mps: float,
                            time_s: float, order: int = 1) -> float:
    """Path separation resolved by a photon emitted at time t.

    |l| d (L - |v t - L|) / L_T: zero at the outer gratings, maximal at
    the central grating.
    """
    lam_db, l_talbot = de_broglie_and_talbot(geometry, velocity_mps)
    length = geometry.grating_separation_m
    z = velocity_mps * time_s
    if z < -1e-9 or z > 2.0 * length * (1.0 + 1e-9):
        raise ValueError("emission lies outside the grating transit")
    return (abs(order) * geometry.grating_period_nm
            * (length - abs(z - length)) / l_talbot)


def apply_single_emission(coeffs: FringeCoefficients, event: EmissionEvent,
                          velocity_mps: float,
                          geometry: InterferometerGeometry) -> FringeCoefficients:
    """Fourier coefficients after one emission at a known wavelength.

    C_l -> C_l * sinc(2 pi delta_r_l / lambda) with delta_r_l the
    order-dependent effective path separation at the emission time.
    """
    out = coeffs.c.copy()
    for i, l in enumerate(coeffs.orders()):
        if l == 0:
            continue
        dr = effective_separation_nm(geometry, velocity_mps, event.time_s, l)
        out[i] *= sinc(2.0 * math.pi * dr / event.wavelength_nm)
    return FringeCoefficients(out, coeffs.grating_period_nm)


@dataclass(frozen=True)
class VisibilityResult:
    """Fringe visibility of one molecule or of a detection-weighted ensemble."""

    visibility: float
    baseline_visibility: float
    mean_visible_photons: float
    standard_error: float = 0.0

    def __post_init__(self):
        if self.visibility > self.baseline_visibility * (1.0 + 1e-12):
            raise ValueError("visibility cannot exceed the baseline")


def transit_exponents(trajectories, geometry: InterferometerGeometry,
                      model: EmissionModel, orders=(1,)):
    """Decoherence exponents and visible-photon counts for many molecules.

    For each trajectory and each Fourier order l returns

        x_l = int_0^{2L/v} dt int dlambda R_lambda(lambda, T(t))
              * (1 - sinc(2 pi (l d / lambda) (L - |v t - L|) / L_T)),

    evaluated on the emission model's wavelength quadrature and a
    Gauss-Legendre time rule split at the central-grating kink.  Also
    returns the expected number of photons emitted in the visible band
    during the transit.  Output shapes: (n_traj, n_orders), (n_traj,).
    """
    trajs = list(trajectories)
    orders = np.asarray(orders, dtype=float)
    n = len(trajs)
    exps = np.zeros((n, orders.size))
    nvis = np.zeros(n)

    lam = model._lam_nm
    pref = model._pref_per_nm * model._w_nm
    theta = model._theta_k
    cvkb = model.heat_capacity.cv_kb
    length = geometry.grating_separation_m
    d_nm = geometry.grating_period_nm

    for i, traj in enumerate(trajs):
        v = traj.velocity_mps
        transit = 2.0 * length / v
        if traj.times_s[-1] < transit * (1.0 - 1e-9):
            raise ValueError("trajectory does not span the grating transit")
        # Gauss-Legendre panels split at the central-grating kink and at
        # the trajectory's own sample times (exact for piecewise
        # histories); densely sampled smooth trajectories get low-order
        # panels at the same total cost.
        inner = traj.times_s[(traj.times_s > 1e-15)
                             & (traj.times_s < transit * (1.0 - 1e-12))]
        breaks = np.unique(np.concatenate(
            [[0.0, 0.5, 1.0], inner / transit]))
        order = 24 if breaks.size <= 8 else 4
        s_nodes, s_w = _gauss_legendre_nodes(breaks, order)
        tri = 1.0 - np.abs(2.0 * s_nodes - 1.0)  # (L - |vt - L|)/L in s
        t_nodes = s_nodes * transit
        t_k = model.temperature_k(traj.energy_at(t_nodes))
        with np.errstate(under="ignore", over="ignore"):
            x = theta[None, :] / np.maximum(t_k[:, None], 1e-300)
            rate = pref[None, :] * np.exp(-x - x * x / (2.0 * cvkb))
        l_talbot = talbot_length_m(geometry, de_broglie_wavelength_m(geometry, v))
        dr = d_nm * length / l_talbot * tri  # order-1 separation, nm
        for j, order in enumerate(orders):
            s_arg = 2.0 * math.pi * order * dr[:, None] / lam[None, :]
            kernel = 1.0 - sinc(s_arg)
            exps[i, j] = transit * float(s_w @ (rate * kernel).sum(axis=1))
        nvis[i] = transit * float(s_w @ (rate * model._vis_mask[None, :]).sum(axis=1))
    return exps, nvis


def _baseline(geometry: InterferometerGeometry, velocity_mps: float,
              baseline_v0: float | None) -> float:
    if baseline_v0 is not None:
        return float(baseline_v0)
    lam_db = de_broglie_wavelength_m(geometry, velocity_mps)
    return base_coefficients(geometry, lam_db).visibility()


def closed_form_visibility(traj: TemperatureTrajectory,
                           geometry: InterferometerGeometry,
                           model: EmissionModel | None = None,
                           baseline_v0: float | None = None) -> VisibilityResult:
    """Visibility of one molecule from its temperature history.

    V = V0 exp[- int dt int dlambda R_lambda(lambda, T(t))
               (1 - sinc(2 pi (d/lambda)(L - |vt - L|)/L_T))]

    The trajectory must span the full transit [0, 2L/v].  ``baseline_v0``
    overrides the idealized binary-grating baseline (measured values can
    be anchored here); the decoherence factor is unaffected.
    """
    model = model or EmissionModel()
    exps, nvis = transit_exponents([traj], geometry, model, orders=(1,))
    v0 = _baseline(geometry, traj.velocity_mps, baseline_v0)
    return VisibilityResult(visibility=v0 * math.exp(-float(exps[0, 0])),
                            baseline_visibility=v0,
                            mean_visible_photons=float(nvis[0]))


def evolve_visibility_ode(traj: TemperatureTrajectory,
                          geometry: InterferometerGeometry,
                          model: EmissionModel | None = None,
                          baseline_v0: float | None = None,
                          l_max: int = 8, rtol: float = 1e-9) -> VisibilityResult:
    """Visibility via the Markovian evolution of the Fourier coefficients.

    Integrates dC_l/dt = R_tot(T(t)) [C_l eta_l(t) - C_l] for l = 1..l_max
    (C_0 is a fixed point since eta(0) = 1) with the instantaneous
    emission spectrum of the cooling molecule, then reads off
    V = 2 |C_1 / C_0|.
    """
    model = model or EmissionModel()
    v = traj.velocity_mps
    length = geometry.grating_separation_m
    transit = 2.0 * length / v
    if traj.times_s[-1] < transit * (1.0 - 1e-9):
        raise ValueError("trajectory does not span the grating transit")
    lam_db, l_talbot = de_broglie_and_talbot(geometry, v)
    base = base_coefficients(geometry, lam_db, l_max=l_max, auto_extend=False)
    d_nm = geometry.grating_period_nm

    lam = model._lam_nm
    pref = model._pref_per_nm * model._w_nm
    theta = model._theta_k
    cvkb = model.heat_capacity.cv_kb
    ls = np.arange(1, base.l_max + 1, dtype=float)

    def rhs(t, y):
        t_k = float(model.temperature_k(traj.energy_at(t)))
        if t_k <= 0.0:
            return np.zeros_like(y)
        x = theta / t_k
        rate = pref * np.exp(-x - x * x / (2.0 * cvkb))
        r_tot = rate.sum()
        z = v * t
        dr1 = d_nm * (length - abs(z - length)) / l_talbot
        etas = (rate[None, :] @ sinc(2.0 * math.pi * ls[:, None] * dr1
                                     / lam[None, :]).T).ravel()
        if r_tot > 0.0:
            etas = etas / r_tot
        else:
            etas = np.ones_like(ls)
        return r_tot * (etas - 1.0) * y

    # The system is diagonal and linear, so the per-order decay factors
    # are independent of the starting coefficients; evolving a unit
    # reference vector keeps them well defined even through exact
    # Talbot-resonance nulls where C_l(0) = 0.
    y0 = np.ones(base.l_max, dtype=complex)
    # near-zero absolute floor: the decay factors span many orders of
    # magnitude and the relative tolerance must stay in control; the
    # integration splits at the central grating where |vt - L| kinks
    y_mid = integrate_dp45(rhs, 0.0, 0.5 * transit, y0, rtol=rtol,
                           atol=1e-280)
    decays = integrate_dp45(rhs, 0.5 * transit, transit, y_mid, rtol=rtol,
                            atol=1e-280)
    c = base.c.copy()
    c[base.l_max + 1:] *= decays
    c[:base.l_max] *= decays[::-1].conj()
    FringeCoefficients(c, d_nm)  # validates symmetry of the evolved set

    v0 = _baseline(geometry, v, baseline_v0)
    _, nvis = transit_exponents([traj], geometry, model, orders=(1,))
    return VisibilityResult(visibility=v0 * abs(decays[0]),
                            baseline_visibility=v0,
                            mean_visible_photons=float(nvis[0]))


def ensemble_visibility(trajectories, geometry: InterferometerGeometry,
                        model: EmissionModel | None = None,
                        weights=None,
                        baseline_v0: float | None = None) -> VisibilityResult:
    """Detection-weighted ensemble visibility.

    Averages the per-molecule Fourier coefficients (the baseline C_1
    times each molecule's decay factor) with the supplied weights, then
    V = 2 |avg C_1 / avg C_0|.  Weights default to the trajectories'
    survival probabilities.
    """
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("ensemble must not be empty")
    model = model or EmissionModel()
    if weights is None:
        w = np.array([t.survival_prob for t in trajs])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(trajs),):
            raise ValueError("one weight per trajectory required")
    if np.any(w < 0.0) or w.sum() <= 0.0:
        raise ValueError("weights must be non-negative with a positive sum")
    w = w / w.sum()

    exps, nvis = transit_exponents(trajs, geometry, model, orders=(1,))
    decay = np.exp(-exps[:, 0])
    v0s = np.array([_baseline(geometry, t.velocity_mps, baseline_v0)
                    for t in trajs])
    vis_each = v0s * decay
    mean_vis = float(w @ vis_each)
    v0_mean = float(w @ v0s)
    n_eff = 1.0 / float((w ** 2).sum())
    se = float(np.sqrt((w @ (vis_each - mean_vis) ** 2) / max(n_eff - 1.0, 1.0)))
    return VisibilityResult(visibility=mean_vis, baseline_visibility=v0_mean,
                            mean_visible_photons=float(w @ nvis),
                            standard_error=se)


def ensemble_coefficients(trajectories, geometry: InterferometerGeometry,
                          model: EmissionModel | None = None,
                          weights=None, baseline_v0: float | None = None,
                          l_max: int = 8) -> FringeCoefficients:
    """Weighted-average Fourier coefficients of an ensemble's pattern.

    Uses each molecule's per-order decoherence factors on the shared
    baseline coefficients (first order optionally rescaled to a measured
    baseline visibility) and a fixed-order reduction, so the result is
    independent of chunking or thread count.
    """
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("ensemble must not be empty")
    model = model or EmissionModel()
    if weights is None:
        w = np.array([t.survival_prob for t in trajs])
    else:
        w = np.asarray(weights, dtype=float)
    w = w / w.sum()

    orders = np.arange(1, l_max + 1)
    exps, _ = transit_exponents(trajs, geometry, model, orders=orders)
    acc = None
    for i, traj in enumerate(trajs):
        lam_db = de_broglie_wavelength_m(geometry, traj.velocity_mps)
        base = base_coefficients(geometry, lam_db, l_max=l_max,
                                 auto_extend=False)
        if baseline_v0 is not None:
            base = base.scaled_first_order(baseline_v0)
        c = base.c.copy()
        decay = np.exp(-exps[i])
        c[base.l_max + 1:] *= decay
        c[:base.l_max] *= decay[::-1]
        acc = w[i] * c if acc is None else acc + w[i] * c
    return FringeCoefficients(acc, geometry.grating_period_nm)
