"""Thermophysics of a single hot molecule.

Microcanonical temperature, the spectral photon emission rate of a large
molecule radiating into a cold environment, radiative cooling, and photon
wavelength sampling.  Energies are handled in eV, lengths in SI; public
signatures state their units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from ._ode import integrate_dp45

# ---------------------------------------------------------------------------
# Physical constants (exact SI 2019 values where defined)
# ---------------------------------------------------------------------------

H_PLANCK = 6.62607015e-34        # J s
HBAR = H_PLANCK / (2.0 * math.pi)  # J s
C_LIGHT = 299792458.0            # m/s
K_BOLTZMANN = 1.380649e-23       # J/K
EV = 1.602176634e-19             # J
K_BOLTZMANN_EV = K_BOLTZMANN / EV          # 8.617333262e-5 eV/K
HC_EV_NM = H_PLANCK * C_LIGHT / EV * 1e9   # 1239.84198 eV nm

AMU = 1.66053906660e-27          # kg
C70_MASS_KG = 840.77 * AMU       # natural-abundance C70


def photon_energy_ev(wavelength_nm):
    """Photon energy in eV for a wavelength in nm."""
    return HC_EV_NM / np.asarray(wavelength_nm, dtype=float)


def wavelength_nm_from_energy_ev(energy_ev):
    """Photon wavelength in nm for an energy in eV."""
    return HC_EV_NM / np.asarray(energy_ev, dtype=float)


def omega_from_wavelength_nm(wavelength_nm):
    """Angular frequency (rad/s) for a wavelength in nm."""
    return 2.0 * math.pi * C_LIGHT / (np.asarray(wavelength_nm, dtype=float) * 1e-9)


def wavelength_nm_from_omega(omega_rad_s):
    """Wavelength in nm for an angular frequency in rad/s."""
    return 2.0 * math.pi * C_LIGHT / np.asarray(omega_rad_s, dtype=float) * 1e9


def sinc(x):
    """Unnormalized sinc: sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x, dtype=float) / math.pi)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InternalState:
    """Internal (vibrational) energy of one molecule in eV."""

    energy_ev: float

    def __post_init__(self):
        if not (self.energy_ev >= 0.0):
            raise ValueError(f"internal energy must be >= 0, got {self.energy_ev}")


@dataclass(frozen=True)
class HeatCapacity:
    """Constant heat capacity in multiples of k_B (default 202)."""

    cv_kb: float = 202.0

    def __post_init__(self):
        if not (self.cv_kb > 0.0):
            raise ValueError("heat capacity must be strictly positive")

    @property
    def ev_per_k(self) -> float:
        return self.cv_kb * K_BOLTZMANN_EV


def micro_temperature(state: InternalState, cv: HeatCapacity) -> float:
    """Microcanonical temperature in K: T_m = E / C_V (linear, invertible)."""
    return state.energy_ev / cv.ev_per_k


def energy_for_temperature(t_kelvin: float, cv: HeatCapacity) -> float:
    """Inverse of :func:`micro_temperature`: internal energy in eV at T_m."""
    return t_kelvin * cv.ev_per_k


class DegenerateSpectrumError(ValueError):
    """Raised when an operation needs a spectrum but the total rate is zero."""


class CrossSectionTable:
    """Tabulated absorption cross-section vs wavelength.

    Wavelengths in nm (strictly increasing), cross-sections in m^2.
    Queries at photon energies below ``cutoff_ev`` return zero; queries
    outside the grid clamp to the nearest entry.  Interpolation between
    grid points is log-linear in the cross-section when both bracketing
    values are positive, linear otherwise.
    """

    def __init__(self, wavelengths_nm, sigma_m2, cutoff_ev: float = 1.5):
        wl = np.asarray(wavelengths_nm, dtype=float)
        sg = np.asarray(sigma_m2, dtype=float)
        if wl.ndim != 1 or wl.size < 2 or wl.shape != sg.shape:
            raise ValueError("need matching 1-D arrays with at least two rows")
        if not np.all(np.diff(wl) > 0.0):
            raise ValueError("wavelength grid must be strictly increasing")
        if np.any(sg < 0.0):
            raise ValueError("cross-sections must be non-negative")
        if not (cutoff_ev > 0.0):
            raise ValueError("cutoff energy must be positive")
        self.wavelengths_nm = wl
        self.sigma_m2 = sg
        self.cutoff_ev = float(cutoff_ev)

    @property
    def cutoff_wavelength_nm(self) -> float:
        """Wavelength equivalent of the long-wavelength energy cutoff."""
        return HC_EV_NM / self.cutoff_ev

    def sigma_at(self, wavelength_nm):
        """Cross-section in m^2 at the given wavelength(s) in nm."""
        lam = np.atleast_1d(np.asarray(wavelength_nm, dtype=float))
        wl, sg = self.wavelengths_nm, self.sigma_m2
        lam_c = np.clip(lam, wl[0], wl[-1])
        idx = np.clip(np.searchsorted(wl, lam_c, side="right") - 1, 0, wl.size - 2)
        lo, hi = sg[idx], sg[idx + 1]
        t = (lam_c - wl[idx]) / (wl[idx + 1] - wl[idx])
        lin = lo + t * (hi - lo)
        both_pos = (lo > 0.0) & (hi > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.exp(np.log(np.where(lo > 0, lo, 1.0)) * (1.0 - t)
                          + np.log(np.where(hi > 0, hi, 1.0)) * t)
        out = np.where(both_pos, logv, lin)
        out = np.where(lam > self.cutoff_wavelength_nm, 0.0, out)
        if np.isscalar(wavelength_nm) or np.ndim(wavelength_nm) == 0:
            return float(out[0])
        return out.reshape(np.shape(wavelength_nm))

    @classmethod
    def from_file(cls, path, cutoff_ev: float = 1.5) -> "CrossSectionTable":
        """Load a two-column text table (wavelength_nm, sigma_m2).

        Lines starting with '#' are comments; the first column must be
        strictly increasing.
        """
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) != 2:
                    raise ValueError(f"expected two columns, got: {raw.rstrip()!r}")
                rows.append((float(parts[0]), float(parts[1])))
        if len(rows) < 2:
            raise ValueError("cross-section table needs at least two rows")
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1], cutoff_ev=cutoff_ev)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# wavelength_nm  sigma_m2\n")
            for lam, sg in zip(self.wavelengths_nm, self.sigma_m2):
                fh.write(f"{lam:.9g} {sg:.9g}\n")


# Default cross-section surrogate: smooth power-law rise above the energy
# cutoff with a high-energy steepening,
#   sigma(E) = scale * u**p * (1 + (u/u_b)**q),  u = E - cutoff  (eV),
# so the absorption keeps rising faster in the ultraviolet where the
# strong electronic transitions of large molecules sit.  The overall
# scale is frozen so that a 2500 K molecule emits 3.0 visible photons
# (400-800 nm) during a 4 ms transit; the shape parameters are frozen
# against the stage temperature bounds and the figure-level contrast
# anchors.  See scripts/calibrate_cross_section.py for the procedure.
DEFAULT_CUTOFF_EV = 1.5
DEFAULT_SIGMA_EXPONENT = 2.0
DEFAULT_SIGMA_BREAK_EV = 1.85
DEFAULT_SIGMA_BREAK_EXPONENT = 6.0
DEFAULT_SIGMA_SCALE_M2 = 2.84139176e-21


def _surrogate_sigma_m2(energy_ev, scale=DEFAULT_SIGMA_SCALE_M2,
                        exponent=DEFAULT_SIGMA_EXPONENT,
                        break_ev=DEFAULT_SIGMA_BREAK_EV,
                        break_exponent=DEFAULT_SIGMA_BREAK_EXPONENT,
                        cutoff_ev=DEFAULT_CUTOFF_EV):
    e = np.asarray(energy_ev, dtype=float)
    u = np.clip(e - cutoff_ev, 0.0, None)
    out = scale * u ** exponent
    if np.isfinite(break_ev) and break_exponent > 0.0:
        out = out * (1.0 + (u / break_ev) ** break_exponent)
    return out


def default_cross_section(scale=DEFAULT_SIGMA_SCALE_M2,
                          exponent=DEFAULT_SIGMA_EXPONENT,
                          break_ev=DEFAULT_SIGMA_BREAK_EV,
                          break_exponent=DEFAULT_SIGMA_BREAK_EXPONENT,
                          ) -> CrossSectionTable:
    """Shipped default absorption table (user-editable surrogate).

    A smooth power-law rise above the 1.5 eV cutoff tabulated on a 3 nm
    grid; wavelengths past the cutoff carry explicit zeros.
    """
    grid = np.concatenate([np.arange(240.0, 828.0, 3.0), [830.0, 900.0, 1000.0]])
    sigma = _surrogate_sigma_m2(photon_energy_ev(grid), scale, exponent,
                                break_ev, break_exponent)
    sigma[grid > HC_EV_NM / DEFAULT_CUTOFF_EV] = 0.0
    return CrossSectionTable(grid, sigma, cutoff_ev=DEFAULT_CUTOFF_EV)


@dataclass
class SpectralDensity:
    """Normalized emission probability density over photon wavelength.

    ``pdf_per_nm`` integrates (trapezoid on its own grid) to 1 for a
    non-degenerate spectrum; ``total_rate_per_s`` is the photon emission
    rate the density was derived from.
    """

    wavelengths_nm: np.ndarray
    pdf_per_nm: np.ndarray
    total_rate_per_s: float
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.wavelengths_nm = np.asarray(self.wavelengths_nm, dtype=float)
        self.pdf_per_nm = np.asarray(self.pdf_per_nm, dtype=float)
        if self.is_degenerate:
            self._cdf = np.zeros_like(self.wavelengths_nm)
            return
        dl = np.diff(self.wavelengths_nm)
        seg = 0.5 * dl * (self.pdf_per_nm[1:] + self.pdf_per_nm[:-1])
        cdf = np.concatenate([[0.0], np.cumsum(seg)])
        norm = cdf[-1]
        self.pdf_per_nm = self.pdf_per_nm / norm
        self._cdf = cdf / norm

    @property
    def is_degenerate(self) -> bool:
        return self.total_rate_per_s <= 0.0 or not np.any(self.pdf_per_nm > 0.0)

    @classmethod
    def monochromatic(cls, wavelength_nm: float, rate_per_s: float = 1.0):
        """Single-line density; handy for per-photon decoherence factors."""
        lam = float(wavelength_nm)
        w = np.array([lam * (1 - 1e-9), lam, lam * (1 + 1e-9)])
        p = np.array([0.0, 1.0, 0.0])
        return cls(w, p, rate_per_s)


def sample_photon(density: SpectralDensity, rng) -> float:
    """Draw a photon wavelength in nm from a tabulated spectral density.

    Inverse-CDF sampling on the piecewise-linear density; deterministic
    for a given generator state.
    """
    if density.is_degenerate:
        raise DegenerateSpectrumError("cannot sample from a zero-rate spectrum")
    u = rng.random()
    cdf, lam, pdf = density._cdf, density.wavelengths_nm, density.pdf_per_nm
    k = int(np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, lam.size - 2))
    du = u - cdf[k]
    width = lam[k + 1] - lam[k]
    p0, p1 = pdf[k], pdf[k + 1]
    slope = (p1 - p0) / width
    if abs(slope) * width < 1e-14 * max(p0, 1e-300):
        t = du / p0 if p0 > 0 else 0.0
    else:
        disc = p0 * p0 + 2.0 * slope * du
        t = (math.sqrt(max(disc, 0.0)) - p0) / slope
    return float(lam[k] + np.clip(t, 0.0, width))


# ---------------------------------------------------------------------------
# Emission model: quadrature-backed rates, power and cooling
# ---------------------------------------------------------------------------

def _gauss_legendre_nodes(edges, order):
    """Composite Gauss-Legendre nodes/weights over consecutive intervals."""
    x, w = np.polynomial.legendre.leggauss(order)
    mids = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class EmissionModel:
    """Spectral photon emission of one hot molecule.

    Binds a :class:`CrossSectionTable` and a :class:`HeatCapacity` and
    precomputes a fixed composite Gauss-Legendre rule on the table grid
    (support intersected with the energy cutoff), so that rates, radiated
    power and the cooling curve are fast, deterministic functions of the
    microcanonical temperature.
    """

    MASTER_T_HIGH_K = 20000.0
    MASTER_T_LOW_K = 250.0

    def __init__(self, cross_section: CrossSectionTable | None = None,
                 heat_capacity: HeatCapacity | None = None,
                 nodes_per_interval: int = 6,
                 visible_band_nm: tuple[float, float] = (400.0, 800.0)):
        self.cross_section = cross_section or default_cross_section()
        self.heat_capacity = heat_capacity or HeatCapacity()
        self.visible_band_nm = (float(visible_band_nm[0]), float(visible_band_nm[1]))

        cs = self.cross_section
        lam_hi = min(cs.wavelengths_nm[-1], cs.cutoff_wavelength_nm)
        lam_lo = cs.wavelengths_nm[0]
        if lam_hi <= lam_lo:
            raise ValueError("cross-section support lies entirely below the cutoff")
        # table grid plus the visible-band edges, so the band mask is exact
        edges = np.concatenate([cs.wavelengths_nm, self.visible_band_nm])
        edges = edges[(edges > lam_lo) & (edges < lam_hi)]
        edges = np.unique(np.concatenate([[lam_lo], edges, [lam_hi]]))
        self._lam_nm, self._w_nm = _gauss_legendre_nodes(edges, nodes_per_interval)
        self._sigma = cs.sigma_at(self._lam_nm)
        lam_m = self._lam_nm * 1e-9
        # R_lambda(lam, T) = 8 pi c sigma(lam)/lam^4 * exp(-x - x^2/(2 C_V)),
        # x = hbar omega / k_B T; prefactor below is per nm.
        self._pref_per_nm = 8.0 * math.pi * C_LIGHT * self._sigma / lam_m ** 4 * 1e-9
        self._e_ev = photon_energy_ev(self._lam_nm)
        self._theta_k = self._e_ev / K_BOLTZMANN_EV
        lo, hi = self.visible_band_nm
        self._vis_mask = (self._lam_nm >= lo) & (self._lam_nm <= hi)

        self._power_spline = None
        self._master = None

    # -- basic state relations ------------------------------------------------

    @property
    def cv_ev_per_k(self) -> float:
        return self.heat_capacity.ev_per_k

    def temperature_k(self, energy_ev):
        """Microcanonical temperature for an internal energy in eV."""
        return np.asarray(energy_ev, dtype=float) / self.cv_ev_per_k

    def energy_ev(self, temperature_k):
        """Internal energy in eV at a microcanonical temperature in K."""
        return np.asarray(temperature_k, dtype=float) * self.cv_ev_per_k

    # -- spectral rates ---------------------------------------------------------

    def _boltzmann(self, t_kelvin):
        """exp(-x - x^2/(2 C_V/k_B)) on the quadrature nodes; rows = temperatures."""
        t = np.atleast_1d(np.asarray(t_kelvin, dtype=float))
        out = np.zeros((t.size, self._lam_nm.size))
        pos = t > 0.0
        if np.any(pos):
            x = self._theta_k[None, :] / t[pos, None]
            out[pos] = np.exp(-x - x * x / (2.0 * self.heat_capacity.cv_kb))
        return out

    def spectral_rate_lambda(self, wavelength_nm, t_kelvin: float):
        """Spectral emission rate R_lambda in photons/(s nm)."""
        lam = np.asarray(wavelength_nm, dtype=float)
        if t_kelvin <= 0.0:
            return np.zeros_like(lam) if lam.ndim else 0.0
        sg = self.cross_section.sigma_at(lam)
        lam_m = lam * 1e-9
        x = photon_energy_ev(lam) / (K_BOLTZMANN_EV * t_kelvin)
        val = (8.0 * math.pi * C_LIGHT * sg / lam_m ** 4 * 1e-9
               * np.exp(-x - x * x / (2.0 * self.heat_capacity.cv_kb)))
        return float(val) if np.ndim(wavelength_nm) == 0 else val

    def spectral_rate_omega(self, omega_rad_s, t_kelvin: float):
        """Spectral emission rate R_omega in photons/(s (rad/s))."""
        om = np.asarray(omega_rad_s, dtype=float)
        if t_kelvin <= 0.0:
            return np.zeros_like(om) if om.ndim else 0.0
        lam_nm = wavelength_nm_from_omega(om)
        sg = self.cross_section.sigma_at(lam_nm)
        x = HBAR * om / (K_BOLTZMANN * t_kelvin)
        val = (om ** 2 / (math.pi ** 2 * C_LIGHT ** 2) * sg
               * np.exp(-x - x * x / (2.0 * self.heat_capacity.cv_kb)))
        return float(val) if np.ndim(omega_rad_s) == 0 else val

    def total_rate(self, t_kelvin: float) -> float:
        """Total photon emission rate in photons/s at temperature T_m."""
        b = self._boltzmann(t_kelvin)[0]
        return float(np.dot(self._w_nm, self._pref_per_nm * b))

    def visible_rate(self, t_kelvin: float) -> float:
        """Photon emission rate restricted to the visible band, photons/s."""
        b = self._boltzmann(t_kelvin)[0]
        return float(np.dot(self._w_nm[self._vis_mask],
                            (self._pref_per_nm * b)[self._vis_mask]))

    def radiated_power_ev_per_s(self, t_kelvin) -> np.ndarray | float:
        """Radiated power, eV/s, possibly vectorized over temperatures."""
        b = self._boltzmann(t_kelvin)
        p = b @ (self._w_nm * self._pref_per_nm * self._e_ev)
        return float(p[0]) if np.ndim(t_kelvin) == 0 else p

    def radiated_power_w(self, t_kelvin) -> float:
        """Radiated power in W (integral of hbar*omega * R_omega)."""
        p = self.radiated_power_ev_per_s(t_kelvin)
        return p * EV

    def total_rate_and_density(self, t_kelvin: float) -> SpectralDensity:
        """Total rate plus the normalized wavelength density at T_m.

        Returns an explicitly degenerate (zero-rate) density at T_m = 0;
        callers must treat that as "no emission".
        """
        grid = self._density_grid()
        if t_kelvin <= 0.0:
            return SpectralDensity(grid, np.zeros_like(grid), 0.0)
        rtot = self.total_rate(t_kelvin)
        if rtot <= 0.0:
            return SpectralDensity(grid, np.zeros_like(grid), 0.0)
        pdf = self.spectral_rate_lambda(grid, t_kelvin) / rtot
        return SpectralDensity(grid, pdf, rtot)

    def _density_grid(self) -> np.ndarray:
        cs = self.cross_section
        lam_hi = min(cs.wavelengths_nm[-1], cs.cutoff_wavelength_nm)
        lam_lo = cs.wavelengths_nm[0]
        base = cs.wavelengths_nm[(cs.wavelengths_nm >= lam_lo)
                                 & (cs.wavelengths_nm <= lam_hi)]
        base = np.unique(np.concatenate([[lam_lo], base, [lam_hi]]))
        fine = [np.linspace(a, b, max(2, int(math.ceil((b - a) / 1.5)) + 1))[:-1]
                for a, b in zip(base[:-1], base[1:])]
        return np.concatenate(fine + [[lam_hi]])

    # -- radiative cooling -------------------------------------------------------

    def _power_of_energy(self):
        """Cubic-spline cache of log(radiated power) vs log(internal energy)."""
        if self._power_spline is None:
            t_grid = np.geomspace(150.0, self.MASTER_T_HIGH_K * 1.05, 1400)
            p = self.radiated_power_ev_per_s(t_grid)
            e = self.energy_ev(t_grid)
            self._power_spline = CubicSpline(np.log(e), np.log(p))
        return self._power_spline

    def _power_fast(self, energy_ev: float) -> float:
        return math.exp(float(self._power_of_energy()(math.log(energy_ev))))

    def _master_curve(self):
        """Autonomous cooling solution E(tau), built once and reused.

        dE/dtau = -P(E) is one-dimensional and autonomous, so cooling from
        any starting energy is a time shift along a single master curve.
        """
        if self._master is None:
            spline = self._power_of_energy()
            e_hi = self.energy_ev(self.MASTER_T_HIGH_K)
            e_lo = self.energy_ev(self.MASTER_T_LOW_K)

            def rhs(_t, y):
                return np.array([-math.exp(float(spline(math.log(y[0]))))])

            # integrate far enough in tau that E falls to the low floor
            taus = [0.0]
            es = [e_hi]
            t, e = 0.0, e_hi
            while e > e_lo:
                h = 1.5e-3 * e / math.exp(float(spline(math.log(e))))
                y = integrate_dp45(rhs, t, t + h, np.array([e]),
                                   rtol=1e-10, atol=1e-300, first_step=h)
                t += h
                e = float(y[0])
                taus.append(t)
                es.append(e)
            tau = np.array(taus)
            en = np.array(es)
            e_of_tau = PchipInterpolator(tau, en)
            tau_of_e = PchipInterpolator(en[::-1], tau[::-1])
            self._master = (tau, en, e_of_tau, tau_of_e)
        return self._master

    def cool_energy(self, energy_ev: float, dt_s) -> np.ndarray | float:
        """Energy in eV after radiating freely for dt seconds (dt may be an array)."""
        dt = np.asarray(dt_s, dtype=float)
        if np.any(dt < 0.0):
            raise ValueError("cooling duration must be >= 0")
        tau, en, e_of_tau, tau_of_e = self._master_curve()
        if energy_ev > en[0]:
            raise ValueError(
                f"energy {energy_ev:.3g} eV above the cooling-model range "
                f"({en[0]:.3g} eV)")
        if energy_ev <= en[-1]:
            out = np.full(dt.shape, energy_ev)  # effectively frozen
        else:
            t0 = float(tau_of_e(energy_ev))
            out = np.where(t0 + dt >= tau[-1], en[-1],
                           np.minimum(e_of_tau(np.minimum(t0 + dt, tau[-1])),
                                      energy_ev))
            out = np.where(dt == 0.0, energy_ev, out)  # exact identity
        return float(out) if np.ndim(dt_s) == 0 else out

    def cool(self, state: InternalState, dt_s: float) -> InternalState:
        """Radiatively cooled state after dt seconds; deterministic."""
        return InternalState(self.cool_energy(state.energy_ev, dt_s))
