"""Full-order model of a porous food slab heated from one side.

Cell-centered finite volumes on a 1-D grid running from the heated surface
(y = 0) to the insulated back (y = L). Each cell carries the primary
unknowns (T, p, c_v, c_w); in the Newton vector cell i owns entries
4i..4i+3. A time step is backward Euler on the residuals of energy, gas,
vapor and water conservation, solved by damped Newton with a colored
finite-difference Jacobian held in banded form. Step size is chosen by
step doubling.

Fluxes are positive in the +y direction. The surface keeps the pore
pressure at p_amb through a half-cell Darcy conductance, exchanges vapor and
heat with the oven air, and its face temperature is eliminated from the
linear surface heat balance.
"""
import collections
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg, optimize

from conf import settings
from records.material import Curve, FoodMaterial
from tools import dtcook_material
from tools.csv_helpers import CsvTable
from tools.dtcook_excite import Signal, sample
from tools.dtcook_metrics import mape

VARIABLES = ('T', 'p', 'c_v', 'c_w')
PROBE_COLUMNS = ('T_surf_K', 'T_core_K', 'moisture_kgm2', 'massloss_kgm2',
    'S_w_mean', 'S_w_surf', 'p_surf_Pa', 'p_max_Pa', 'T_oven_K')
TRAJECTORY_HEADER = ('t_s', 'y_m', 'T_K', 'p_Pa', 'c_v_kgm3', 'c_w_kgm3', 'S_w')

_N_VARS = 4
_BAND = 7 # three neighboring cells of four unknowns
_OFFSETS = np.arange(-_BAND, _BAND + 1)
_ERROR_SCALES = np.array([1.0, 1000.0, 0.01, 1.0]) # K, Pa, kg m-3, kg m-3
_TYPICAL = np.array([300.0, 1.0e5, 1.0e-3, 1.0])
_FD_STEP = 1.49e-8
_FRACTION_TO_BOUNDARY = 0.99
_LINE_SEARCH_HALVINGS = 10
_SLOW_CONTRACTION = 0.5

class NumericalFailure(Exception):
    """ custom exception that is thrown when a flux or residual evaluates to
    NaN or Inf """
    def __init__(self, message, index=None, *args, **kwargs):
        """ NumericalFailure constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                index : int
                    The first offending cell (or face) index
        """
        self.index = index
        if index is not None:
            message = '%s (cell %d)' % (message, index)
        super(NumericalFailure, self).__init__(message)

class SolverFailure(Exception):
    """ custom exception that is thrown when a time step does not converge
    at the minimum step size """
    def __init__(self, message, t=None, dt=None, residual_norms=None, *args, **kwargs):
        """ SolverFailure constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                t : float
                    Simulation time at the start of the failed step, s
                dt : float
                    The last step size tried, s
                residual_norms : list
                    Scaled residual max-norms of the last Newton iterations
        """
        self.t = t
        self.dt = dt
        self.residual_norms = list(residual_norms or [])
        if t is not None:
            message = '%s at t = %r s (dt = %r s, residual norms %s)' % (message, t, dt,
                ', '.join('%.3g' % norm for norm in self.residual_norms[-4:]))
        super(SolverFailure, self).__init__(message)

class _NewtonFailure(Exception):
    def __init__(self, norms):
        self.norms = list(norms)
        super(_NewtonFailure, self).__init__('newton iteration failed')

class Grid1D(object):
    """ cell-centered 1-D grid, first face at the surface y = 0 """

    def __init__(self, length, n_cells, grading_ratio=1.0):
        """ Grid1D constructor

            Parameters
            ----------
                length : float
                    Slab thickness L, m
                n_cells : int
                    Number of control volumes, at least 3
                grading_ratio : float
                    Width ratio of neighboring cells; above 1 the cells are
                    finest at the surface, 1 gives a uniform grid
        """
        if not length > 0.0:
            raise ValueError('grid length must be positive, got %r' % length)
        if int(n_cells) < 3:
            raise ValueError('a grid needs at least 3 cells, got %r' % n_cells)
        if not grading_ratio > 0.0:
            raise ValueError('grading ratio must be positive, got %r' % grading_ratio)
        self.length = float(length)
        self.n_cells = int(n_cells)
        self.grading_ratio = float(grading_ratio)
        widths = self.grading_ratio ** np.arange(self.n_cells)
        widths *= self.length / widths.sum()
        faces = np.concatenate([[0.0], np.cumsum(widths)])
        faces[-1] = self.length
        self.faces = faces
        self.widths = np.diff(faces)
        self.centers = 0.5 * (faces[:-1] + faces[1:])
        # center-to-face distances on either side of each interior face
        self.left = faces[1:-1] - self.centers[:-1]
        self.right = self.centers[1:] - faces[1:-1]
        self.spacing = self.left + self.right
        self.surface_distance = self.centers[0]

    def __eq__(self, other):
        return (isinstance(other, Grid1D) and self.n_cells == other.n_cells
            and np.array_equal(self.faces, other.faces))

    def __repr__(self):
        return 'Grid1D(length=%r, n_cells=%d, grading_ratio=%r)' % (self.length, self.n_cells, self.grading_ratio)

@dataclass(frozen=True, eq=False)
class FieldState:
    """ per-cell primary unknowns at simulation time t

        mass_loss is the cumulative moisture (water + vapor) that left
        through the surface since the start of the run, kg m-2.
    """
    grid: Grid1D
    T: np.ndarray
    p: np.ndarray
    c_v: np.ndarray
    c_w: np.ndarray
    t: float = 0.0
    mass_loss: float = 0.0

    def __post_init__(self):
        for name in VARIABLES:
            values = np.array(getattr(self, name), dtype=float)
            if values.shape != (self.grid.n_cells,):
                raise ValueError('%s has shape %r, the grid has %d cells' % (name, values.shape, self.grid.n_cells))
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    def __eq__(self, other):
        return (isinstance(other, FieldState) and self.grid == other.grid
            and self.t == other.t and self.mass_loss == other.mass_loss
            and all(np.array_equal(getattr(self, name), getattr(other, name)) for name in VARIABLES))

    @staticmethod
    def uniform(grid, T, p, c_v, c_w, t=0.0):
        n = grid.n_cells
        return FieldState(grid, np.full(n, float(T)), np.full(n, float(p)),
            np.full(n, float(c_v)), np.full(n, float(c_w)), t)

    @staticmethod
    def from_vector(grid, u, t, mass_loss=0.0):
        u = np.asarray(u, dtype=float).reshape(grid.n_cells, _N_VARS)
        return FieldState(grid, u[:, 0], u[:, 1], u[:, 2], u[:, 3], t, mass_loss)

    def vector(self):
        """ the (n_cells, 4) array of unknowns """
        return np.column_stack([self.T, self.p, self.c_v, self.c_w])

    def local(self, i):
        return dtcook_material.LocalState(float(self.T[i]), float(self.p[i]),
            float(self.c_v[i]), float(self.c_w[i]))

    def saturations(self, material):
        return dtcook_material.saturations(self.c_w, material)

    def validate(self, material):
        """ check every cell, raising MaterialDomainError naming the first bad cell """
        dtcook_material.LocalState(self.T, self.p, self.c_v, self.c_w).validate(material)
        return self

def _value_at(channel, t):
    if isinstance(channel, Signal):
        return sample(channel, t)
    return float(channel)

@dataclass(frozen=True)
class BoundarySpec:
    """ surface conditions; T_oven and rho_v_oven are a Signal or a constant """
    h_T: float
    h_m: float
    p_amb: float
    T_oven: Union[Signal, float]
    rho_v_oven: Union[Signal, float]

    def validate(self):
        errors = []
        if not self.h_T >= 0.0:
            errors.append('h_T must be nonnegative')
        if not self.h_m >= 0.0:
            errors.append('h_m must be nonnegative')
        if not self.p_amb > 0.0:
            errors.append('p_amb must be positive')
        if len(errors) > 0:
            raise ValueError('invalid boundary: ' + '; '.join(errors))
        return self

    def oven_temperature(self, t):
        return _value_at(self.T_oven, t)

    def oven_vapor_density(self, t):
        return _value_at(self.rho_v_oven, t)

    def max_oven_temperature(self):
        if isinstance(self.T_oven, Signal):
            return float(np.max(self.T_oven.values))
        return float(self.T_oven)

@dataclass(frozen=True)
class SolveConfig:
    dt_initial: float = settings._DT_INITIAL
    dt_min: float = settings._DT_MIN
    dt_max: float = settings._DT_MAX
    newton_tolerance: float = settings._NEWTON_TOLERANCE
    max_newton_iterations: int = settings._NEWTON_MAX_ITERATIONS
    output_interval: float = settings._OUTPUT_INTERVAL
    step_tolerance: float = settings._STEP_TOLERANCE
    adaptive: bool = True

    def validate(self):
        errors = []
        if not 0.0 < self.dt_min <= self.dt_max:
            errors.append('need 0 < dt_min <= dt_max')
        if not self.dt_initial > 0.0:
            errors.append('dt_initial must be positive')
        if not self.newton_tolerance > 0.0:
            errors.append('newton_tolerance must be positive')
        if not self.max_newton_iterations >= 1:
            errors.append('max_newton_iterations must be at least 1')
        if not self.output_interval > 0.0:
            errors.append('output_interval must be positive')
        if not self.step_tolerance > 0.0:
            errors.append('step_tolerance must be positive')
        if len(errors) > 0:
            raise ValueError('invalid solver config: ' + '; '.join(errors))
        return self

    @staticmethod
    def from_section(section):
        return SolveConfig(**dataclasses.asdict(section))

InteriorFluxes = collections.namedtuple('InteriorFluxes', ['j_g', 'j_v', 'j_w', 'q', 'enthalpy'])
InteriorFluxes.__doc__ = """ per-face fluxes at the n-1 interior faces, positive toward +y

    j_g, j_v, j_w in kg m-2 s-1, q (conduction) and enthalpy (convective
    enthalpy carried by j_g and j_w, upwinded) in W m-2 """

BoundaryFluxes = collections.namedtuple('BoundaryFluxes', ['j_v', 'j_w', 'q', 'p_surface', 'T_surface'])
BoundaryFluxes.__doc__ = """ surface exchange, mass fluxes positive leaving the food, q positive
    entering it; p_surface is the Dirichlet pressure and T_surface the
    temperature the heat flux was evaluated at """

_Cells = collections.namedtuple('_Cells', ['s_w', 's_g', 'rho_v', 'rho_g', 'omega_v', 'c_g',
    'cp_g', 'rho_cp', 'k_eff', 'mob_g', 'mob_w', 'diff_v', 'diff_w'])

_Faces = collections.namedtuple('_Faces', ['j_g', 'j_v', 'j_w', 'q', 'F'])

def _cell_properties(T, p, c_v, c_w, material):
    phi = material.porosity
    R = material.gas_constant
    s_w, s_g = dtcook_material._saturations(c_w, material)
    s_g_pos = np.clip(s_g, 0.0, 1.0)
    rho_v, rho_g, omega_v = dtcook_material.gas_phase(T, p, c_v, s_g, material)
    omega_v = np.clip(omega_v, 0.0, 1.0)
    p_v = rho_v * R * T / material.vapor.molar_mass
    c_g = c_v + s_g_pos * phi * (p - p_v) * material.gas.molar_mass / (R * T)
    cp_g = omega_v * material.vapor.specific_heat + (1.0 - omega_v) * material.gas.specific_heat
    mu_g = omega_v * material.vapor.dynamic_viscosity + (1.0 - omega_v) * material.gas.dynamic_viscosity
    k_rg, k_rw = dtcook_material.relative_permeabilities(s_w, material)
    rho_cp, k_eff = dtcook_material._effective_properties(T, p, c_v, c_w, material)
    return _Cells(
        s_w=s_w, s_g=s_g, rho_v=rho_v, rho_g=rho_g, omega_v=omega_v, c_g=c_g, cp_g=cp_g,
        rho_cp=rho_cp, k_eff=k_eff,
        mob_g=material.permeability_gas * k_rg / mu_g,
        mob_w=material.permeability_water * k_rw / material.water.dynamic_viscosity,
        diff_v=phi * s_g_pos * np.maximum(rho_g, 0.0) * material.gas_diffusivity,
        diff_w=np.maximum(0.0, material.capillary_diffusivity(np.clip(s_w, 0.0, 1.0))))

def _harmonic(a, h_a, b, h_b):
    """ distance-weighted harmonic mean at a face, zero when either side is """
    den = h_a * b + h_b * a
    safe = np.where(den > 0.0, den, 1.0)
    return np.where(den > 0.0, (h_a + h_b) * a * b / safe, 0.0)

def _interior_faces(grid, T, p, c_w, cells, material):
    dx = grid.spacing
    grad_p = (p[1:] - p[:-1]) / dx
    forward = grad_p <= 0.0 # Darcy flow toward +y, left cell upwind
    mob_g = _harmonic(cells.mob_g[:-1], grid.left, cells.mob_g[1:], grid.right)
    rho_g_up = np.where(forward, cells.rho_g[:-1], cells.rho_g[1:])
    omega_up = np.where(forward, cells.omega_v[:-1], cells.omega_v[1:])
    j_g = -rho_g_up * mob_g * grad_p

    diff_v = _harmonic(cells.diff_v[:-1], grid.left, cells.diff_v[1:], grid.right)
    j_v = omega_up * j_g - diff_v * (cells.omega_v[1:] - cells.omega_v[:-1]) / dx

    mob_w = _harmonic(cells.mob_w[:-1], grid.left, cells.mob_w[1:], grid.right)
    diff_w = _harmonic(cells.diff_w[:-1], grid.left, cells.diff_w[1:], grid.right)
    j_w = -material.water.density_ref * mob_w * grad_p - diff_w * (c_w[1:] - c_w[:-1]) / dx

    k_face = _harmonic(cells.k_eff[:-1], grid.left, cells.k_eff[1:], grid.right)
    q = -k_face * (T[1:] - T[:-1]) / dx
    cp_up = np.where(j_g >= 0.0, cells.cp_g[:-1], cells.cp_g[1:])
    F = j_g * cp_up + j_w * material.water.specific_heat
    return _Faces(j_g, j_v, j_w, q, F)

def _boundary_fluxes(T, c_v, c_w, bc, t, material, conductance=None):
    phi = material.porosity
    s_w, s_g = dtcook_material._saturations(c_w, material)
    s_g = np.clip(s_g, 0.0, 1.0)
    rho_v = c_v / (dtcook_material._clamped_gas_saturation(s_g) * phi)
    excess = rho_v - bc.oven_vapor_density(t)
    j_v = bc.h_m * phi * s_g * excess
    j_w = bc.h_m * phi * s_w * excess
    T_oven = bc.oven_temperature(t)
    T_s = T
    if conductance is not None and bc.h_T + conductance > 0.0:
        # h_T*(T_oven - T_s) - lambda*j_w = conductance*(T_s - T)
        T_s = (bc.h_T * T_oven - material.latent_heat * j_w + conductance * T) / (bc.h_T + conductance)
    q = bc.h_T * (T_oven - T_s) - material.latent_heat * j_w
    return BoundaryFluxes(j_v, j_w, q, bc.p_amb, T_s)

def interior_fluxes(state, material):
    """ fluxes at the interior faces of state

        Darcy flow of gas and liquid water, binary diffusion of vapor in the
        gas, capillary diffusion of water, conduction, and the upwinded
        convective enthalpy of the gas and water flows.

        Returns
        -------
            InteriorFluxes
                Arrays of length n_cells - 1; face i lies between cells i
                and i + 1

        Raises
        ------
            NumericalFailure
                If any flux is NaN or Inf
    """
    state.validate(material)
    with np.errstate(all='ignore'):
        cells = _cell_properties(state.T, state.p, state.c_v, state.c_w, material)
        faces = _interior_faces(state.grid, state.T, state.p, state.c_w, cells, material)
    upwind_T = np.where(faces.F >= 0.0, state.T[:-1], state.T[1:])
    fluxes = InteriorFluxes(faces.j_g, faces.j_v, faces.j_w, faces.q, faces.F * upwind_T)
    for name, values in zip(fluxes._fields, fluxes):
        bad = ~np.isfinite(values)
        if np.any(bad):
            raise NumericalFailure('non-finite %s' % name, int(np.argmax(bad)))
    return fluxes

def boundary_fluxes(surface, bc, t, material, conductance=None):
    """ exchange of the surface cell with the oven

        j_v = h_m*phi*S_g*(rho_v - rho_v,oven) and j_w likewise with S_w are
        positive when moisture leaves; q = h_T*(T_oven - T) - lambda*j_w is
        positive when heat enters. Without a conductance, T is the surface
        cell temperature; with the conductance k/d of the half cell, T is
        the surface temperature solved from the heat balance. The back face
        exchanges nothing.

        Parameters
        ----------
            surface : LocalState
                State of the cell adjacent to the surface
            bc : BoundarySpec
            t : float
                Time, s
            material : FoodMaterial
            conductance : float
                Optional k_eff/d of the surface half cell, W m-2 K-1

        Returns
        -------
            BoundaryFluxes
    """
    surface.validate(material)
    bc.validate()
    return _boundary_fluxes(float(surface.T), float(surface.c_v), float(surface.c_w), bc, t, material, conductance)

def total_moisture(state, grid=None):
    """ water plus vapor held by the slab, kg m-2, midpoint quadrature """
    grid = grid or state.grid
    return float(np.sum((state.c_w + state.c_v) * grid.widths))

def core_temperature(state):
    """ temperature at y = L from a quadratic with zero slope at the
    insulated back, through the last two cell centers """
    grid = state.grid
    d1 = grid.length - grid.centers[-1]
    d2 = grid.length - grid.centers[-2]
    b = (state.T[-2] - state.T[-1]) / (d2 ** 2 - d1 ** 2)
    return float(state.T[-1] - b * d1 ** 2)

_Storage = collections.namedtuple('_Storage', ['T', 'c_v', 'c_w', 'c_g'])

class FomSolver(object):
    """ backward-Euler Newton solver bound to one grid, boundary and material

        Not thread-safe; create one per simulation.
    """

    def __init__(self, grid, bc, material, cfg):
        """ FomSolver constructor

            Parameters
            ----------
                grid : Grid1D
                bc : BoundarySpec
                material : FoodMaterial
                cfg : SolveConfig
        """
        self.grid = grid
        self.bc = bc.validate()
        self.material = material
        self.cfg = cfg.validate()
        phi = material.porosity
        R = material.gas_constant
        # residual scales: 1 K of heating, the air content of the pores, and
        # fixed concentration units for vapor and water
        self.scales = np.array([
            (1.0 - phi) * material.solid.density_ref * material.solid.specific_heat
                + phi * material.water.density_ref * material.water.specific_heat,
            phi * bc.p_amb * material.gas.molar_mass / (R * 373.15),
            0.01,
            1.0])
        n = grid.n_cells * _N_VARS
        self.cells_of = np.arange(n) // _N_VARS
        self.groups = [np.flatnonzero((self.cells_of % 3 == g // _N_VARS) & (np.arange(n) % _N_VARS == g % _N_VARS))
            for g in range(3 * _N_VARS)]

    def _surface(self, T0, p0, c_v0, c_w0, cells, t):
        material = self.material
        bc = self.bc
        R = material.gas_constant
        d0 = self.grid.surface_distance
        T_oven = bc.oven_temperature(t)
        rho_v_oven = bc.oven_vapor_density(t)
        p_v_oven = rho_v_oven * R * T_oven / material.vapor.molar_mass
        rho_g_oven = rho_v_oven + (bc.p_amb - p_v_oven) * material.gas.molar_mass / (R * T_oven)
        omega_oven = rho_v_oven / rho_g_oven
        cp_oven = omega_oven * material.vapor.specific_heat + (1.0 - omega_oven) * material.gas.specific_heat

        grad_p = (p0 - bc.p_amb) / d0
        outflow = grad_p > 0.0
        rho_up = cells.rho_g[0] if outflow else rho_g_oven
        omega_up = cells.omega_v[0] if outflow else omega_oven
        cp_up = cells.cp_g[0] if outflow else cp_oven
        j_darcy = -rho_up * cells.mob_g[0] * grad_p

        exchange = _boundary_fluxes(T0, c_v0, c_w0, bc, t, material, cells.k_eff[0] / d0)
        j_g = j_darcy - exchange.j_v
        j_v = omega_up * j_darcy - exchange.j_v
        j_w = -exchange.j_w
        F = j_g * cp_up + j_w * material.water.specific_heat
        conductance = rho_up * cells.mob_g[0] / d0
        p_s = p0 + j_darcy / conductance if conductance > 0.0 else bc.p_amb
        return _Faces(j_g, j_v, j_w, exchange.q, F), exchange.T_surface, p_s

    def _storage(self, state):
        cells = _cell_properties(state.T, state.p, state.c_v, state.c_w, self.material)
        return _Storage(state.T, state.c_v, state.c_w, cells.c_g)

    def _fluxes(self, u, t):
        T, p, c_v, c_w = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        cells = _cell_properties(T, p, c_v, c_w, self.material)
        faces = _interior_faces(self.grid, T, p, c_w, cells, self.material)
        surface, T_s, p_s = self._surface(T[0], p[0], c_v[0], c_w[0], cells, t)
        return cells, faces, surface, T_s, p_s

    def _residual(self, u, old, dt, t):
        material = self.material
        w = self.grid.widths
        T, p, c_v, c_w = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
        with np.errstate(all='ignore'):
            cells, faces, surface, T_s, _ = self._fluxes(u, t)

            def divergence(inner, first):
                J = np.concatenate([[first], inner, [0.0]])
                return (J[1:] - J[:-1]) / w

            rate = dtcook_material._evaporation_rate(T, p, c_v, c_w, material)
            F = np.concatenate([[surface.F], faces.F, [0.0]])
            T_west = np.concatenate([[T_s], T[:-1]])
            T_east = np.concatenate([T[1:], [T[-1]]])
            advection = (np.minimum(F[1:], 0.0) * (T_east - T) + np.maximum(F[:-1], 0.0) * (T - T_west)) / w

            r = np.empty_like(u)
            r[:, 0] = cells.rho_cp * (T - old.T) + dt * (advection + divergence(faces.q, surface.q)
                + material.latent_heat * rate)
            r[:, 1] = cells.c_g - old.c_g + dt * (divergence(faces.j_g, surface.j_g) - rate)
            r[:, 2] = c_v - old.c_v + dt * (divergence(faces.j_v, surface.j_v) - rate)
            r[:, 3] = c_w - old.c_w + dt * (divergence(faces.j_w, surface.j_w) + rate)
            return r / self.scales

    def _jacobian(self, u, old, dt, t, r0):
        """ banded finite-difference Jacobian, one residual per color group """
        flat = u.ravel()
        n = flat.size
        delta = _FD_STEP * np.maximum(np.abs(flat), np.tile(_TYPICAL, self.grid.n_cells))
        r0 = r0.ravel()
        ab = np.zeros((2 * _BAND + 1, n))
        for cols in self.groups:
            trial = flat.copy()
            trial[cols] += delta[cols]
            dr = self._residual(trial.reshape(u.shape), old, dt, t).ravel() - r0
            rows = cols[None, :] + _OFFSETS[:, None]
            safe = np.clip(rows, 0, n - 1)
            valid = (rows >= 0) & (rows < n) & (np.abs(self.cells_of[safe] - self.cells_of[cols][None, :]) <= 1)
            ab[_BAND + _OFFSETS[:, None], cols[None, :]] = np.where(valid, dr[safe] / delta[cols][None, :], 0.0)
        return ab

    @staticmethod
    def _norm(r):
        if not np.all(np.isfinite(r)):
            return math.inf
        return float(np.max(np.abs(r)))

    def _max_step(self, u, du):
        """ largest step fraction keeping T, p, c_v positive and c_w below
        the pore volume """
        alpha = 1.0
        down = du < 0.0
        if np.any(down):
            alpha = min(alpha, float(np.min(_FRACTION_TO_BOUNDARY * u[down] / -du[down])))
        up = du[:, 3] > 0.0
        if np.any(up):
            room = self.material.max_water - u[up, 3]
            alpha = min(alpha, float(np.min(_FRACTION_TO_BOUNDARY * room / du[up, 3])))
        return alpha

    def _solve(self, state, dt, t_new):
        """ one backward-Euler step by damped modified Newton """
        cfg = self.cfg
        old = self._storage(state)
        u = state.vector()
        r = self._residual(u, old, dt, t_new)
        norm = self._norm(r)
        norms = [norm]
        if not math.isfinite(norm):
            raise _NewtonFailure(norms)
        jac = None
        fresh = False
        iteration = 0
        while norm > cfg.newton_tolerance:
            if iteration >= cfg.max_newton_iterations:
                raise _NewtonFailure(norms)
            if jac is None:
                jac = self._jacobian(u, old, dt, t_new, r)
                fresh = True
            try:
                du = linalg.solve_banded((_BAND, _BAND), jac, -r.ravel()).reshape(u.shape)
            except (linalg.LinAlgError, ValueError):
                raise _NewtonFailure(norms)
            if not np.all(np.isfinite(du)):
                raise _NewtonFailure(norms)
            alpha = self._max_step(u, du)
            trial_norm = math.inf
            for _ in range(_LINE_SEARCH_HALVINGS):
                trial = u + alpha * du
                r_trial = self._residual(trial, old, dt, t_new)
                trial_norm = self._norm(r_trial)
                if trial_norm <= cfg.newton_tolerance or trial_norm < (1.0 - 1e-4 * alpha) * norm:
                    break
                alpha *= 0.5
            else:
                if fresh:
                    raise _NewtonFailure(norms + [trial_norm])
                jac = None
                continue
            iteration += 1
            contraction = trial_norm / norm
            u, r, norm = trial, r_trial, trial_norm
            norms.append(norm)
            fresh = False
            if contraction > _SLOW_CONTRACTION:
                jac = None
        with np.errstate(all='ignore'):
            _, _, surface, _, _ = self._fluxes(u, t_new)
        outflow = -(surface.j_v + surface.j_w)
        return FieldState.from_vector(self.grid, u, t_new, state.mass_loss + dt * outflow)

    def step(self, state, dt, t_new=None):
        """ advance state by dt, halving into substeps while Newton fails """
        if not 0.0 < dt <= self.cfg.dt_max * (1.0 + 1e-12):
            raise ValueError('time step %r s outside (0, %r] s' % (dt, self.cfg.dt_max))
        t_new = state.t + dt if t_new is None else t_new
        try:
            return self._solve(state, dt, t_new)
        except _NewtonFailure as e:
            half = 0.5 * dt
            if half < self.cfg.dt_min:
                logging.error('newton failed at t = %r s with dt = %r s', state.t, dt)
                raise SolverFailure('no convergence at the minimum time step', state.t, dt, e.norms)
            logging.warning('newton failed at t = %r s, halving dt to %r s', state.t, half)
            middle = self.step(state, half, state.t + half)
            return self.step(middle, half, t_new)

    def _adaptive_step(self, state, h, t_target=None):
        """ one accepted step by step doubling; returns the two-half-step
        result and the suggested next step size """
        cfg = self.cfg
        while True:
            t_new = t_target if t_target is not None else state.t + h
            try:
                full = self._solve(state, h, t_new)
                half = self._solve(state, 0.5 * h, state.t + 0.5 * h)
                two = self._solve(half, 0.5 * h, t_new)
            except _NewtonFailure as e:
                if 0.5 * h < cfg.dt_min:
                    logging.error('newton failed at t = %r s with dt = %r s', state.t, h)
                    raise SolverFailure('no convergence at the minimum time step', state.t, h, e.norms)
                logging.warning('newton failed at t = %r s, halving dt to %r s', state.t, 0.5 * h)
                h *= 0.5
                t_target = None
                continue
            err = float(np.max(np.abs(two.vector() - full.vector()) / _ERROR_SCALES))
            factor = 0.9 * math.sqrt(cfg.step_tolerance / err) if err > 0.0 else 2.0
            if err <= cfg.step_tolerance or h <= cfg.dt_min:
                if err > cfg.step_tolerance:
                    logging.warning('accepting step error %.3g at dt_min, t = %r s', err, state.t)
                return two, min(cfg.dt_max, max(cfg.dt_min, h * min(2.0, max(0.2, factor))))
            logging.debug('rejected dt = %r s at t = %r s (error %.3g)', h, state.t, err)
            h = max(cfg.dt_min, h * max(0.2, factor))
            t_target = None

    def probes(self, state):
        """ scalar probes of one state, keyed by PROBE_COLUMNS """
        with np.errstate(all='ignore'):
            cells, _, _, T_s, p_s = self._fluxes(state.vector(), state.t)
        return {
            'T_surf_K': float(T_s),
            'T_core_K': core_temperature(state),
            'moisture_kgm2': total_moisture(state),
            'massloss_kgm2': float(state.mass_loss),
            'S_w_mean': float(np.sum(cells.s_w * self.grid.widths) / self.grid.length),
            'S_w_surf': float(cells.s_w[0]),
            'p_surf_Pa': float(p_s),
            'p_max_Pa': float(np.max(state.p)),
            'T_oven_K': self.bc.oven_temperature(state.t),
        }

    def simulate(self, init, t_end):
        """ run from init to t_end, sampling every output interval """
        if not t_end > init.t:
            raise ValueError('t_end = %r s must lie after the initial time %r s' % (t_end, init.t))
        init.validate(self.material)
        cfg = self.cfg
        times = output_times(init.t, t_end, cfg.output_interval)
        states = [init]
        probes = [self.probes(init)]
        state = init
        dt = min(cfg.dt_initial, cfg.dt_max)
        n_steps = 0
        for target in times[1:]:
            while state.t < target:
                remaining = target - state.t
                if remaining <= dt:
                    h, t_goal = remaining, target
                else:
                    h, t_goal = dt, None
                if cfg.adaptive:
                    state, dt_next = self._adaptive_step(state, h, t_goal)
                    # a step shortened only to land on an output time keeps dt
                    if t_goal is None or dt_next < h:
                        dt = dt_next
                else:
                    state = self.step(state, h, t_goal)
                n_steps += 1
            states.append(state)
            probes.append(self.probes(state))
        logging.debug('simulated %r s in %d steps on %d cells', t_end - init.t, n_steps, self.grid.n_cells)
        return Trajectory(self.grid, states, probes)

def output_times(t_start, t_end, interval):
    """ t_start, t_start + interval, ... and t_end itself """
    n = int(math.floor((t_end - t_start) / interval + 1e-9))
    times = [t_start + k * interval for k in range(n + 1)]
    if t_end - times[-1] > 1e-9 * interval:
        times.append(t_end)
    return times

class Trajectory(object):
    """ sampled states of one run plus their scalar probes """

    def __init__(self, grid, states, probes):
        self.grid = grid
        self.states = list(states)
        self.times = np.array([state.t for state in self.states])
        self.probes = {name: np.array([row[name] for row in probes]) for name in PROBE_COLUMNS}

    def __len__(self):
        return len(self.states)

    def probe(self, name):
        return self.probes[name]

    def final(self):
        return self.states[-1]

    def probe_signal(self, name):
        """ a probe as a Signal; requires uniform output times """
        steps = np.diff(self.times)
        if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
            raise ValueError('trajectory samples are not uniformly spaced')
        return Signal(self.probes[name], float(steps[0]), name)

    def probes_table(self):
        table = CsvTable(('t_s',) + PROBE_COLUMNS)
        for k, t in enumerate(self.times):
            table.append([float(t)] + [float(self.probes[name][k]) for name in PROBE_COLUMNS])
        return table

    def trajectory_table(self, material):
        table = CsvTable(TRAJECTORY_HEADER)
        for state in self.states:
            s_w, _ = dtcook_material._saturations(state.c_w, material)
            for i, y in enumerate(self.grid.centers):
                table.append([float(state.t), float(y), float(state.T[i]), float(state.p[i]),
                    float(state.c_v[i]), float(state.c_w[i]), float(s_w[i])])
        return table

    def to_csv(self, trajectory_path, probes_path, material):
        """ write the long-format trajectory CSV and the probes CSV """
        self.trajectory_table(material).write(trajectory_path)
        self.probes_table().write(probes_path)
        return trajectory_path, probes_path

def profile_at(trajectory, t):
    """ the sampled FieldState at time t

        Raises
        ------
            ValueError
                If t is not one of the sampled times
    """
    matches = np.flatnonzero(np.abs(trajectory.times - t) <= 1e-9 * max(1.0, abs(t)))
    if matches.size == 0:
        raise ValueError('t = %r s is not a sampled time' % t)
    return trajectory.states[int(matches[0])]

def step(state, dt, bc, material, cfg):
    """ advance state by one backward-Euler step of size dt

        Newton failures halve dt into substeps down to cfg.dt_min.

        Raises
        ------
            SolverFailure
                If a substep at dt_min does not converge; carries the last
                residual norms
    """
    return FomSolver(state.grid, bc, material, cfg).step(state, dt)

def simulate(init, bc, material, cfg, t_end):
    """ run the full-order model from init to t_end

        Parameters
        ----------
            init : FieldState
            bc : BoundarySpec
            material : FoodMaterial
            cfg : SolveConfig
            t_end : float
                Final time, s

        Returns
        -------
            Trajectory
                States and probes every cfg.output_interval, t_end included

        Raises
        ------
            SolverFailure
                With the simulation time of the failing step
    """
    return FomSolver(init.grid, bc, material, cfg).simulate(init, t_end)

@dataclass(frozen=True)
class FomCase:
    """ everything needed to build and run one slab case """
    material: FoodMaterial
    length: float
    n_cells: int
    T_init: float
    p_init: float
    S_w_init: float
    c_v_init: float # kg m-3
    boundary: BoundarySpec
    solver: SolveConfig
    t_end: float
    grading_ratio: float = 1.0
    name: str = 'case'

    @staticmethod
    def from_definition(definition):
        """ build a FomCase from a records.case.CaseDefinition """
        b = definition.boundary
        return FomCase(
            material=definition.material,
            length=definition.grid.length,
            n_cells=definition.grid.n_cells,
            T_init=definition.initial.T,
            p_init=definition.initial.p,
            S_w_init=definition.initial.S_w,
            c_v_init=definition.initial.c_v,
            boundary=BoundarySpec(b.h_T, b.h_m, b.p_amb, b.T_oven, b.rho_v_oven),
            solver=SolveConfig.from_section(definition.solver),
            t_end=definition.t_end,
            grading_ratio=definition.grid.grading_ratio,
            name=definition.name)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_boundary(self, **changes):
        return self.replace(boundary=dataclasses.replace(self.boundary, **changes))

    def with_solver(self, **changes):
        return self.replace(solver=dataclasses.replace(self.solver, **changes))

    def grid(self, n_cells=None):
        return Grid1D(self.length, n_cells or self.n_cells, self.grading_ratio)

    def initial_state(self, n_cells=None):
        c_w = self.S_w_init * self.material.max_water
        return FieldState.uniform(self.grid(n_cells), self.T_init, self.p_init, self.c_v_init, c_w)

    def build(self, n_cells=None):
        """ (init, bc, material, cfg) at the given resolution """
        return self.initial_state(n_cells), self.boundary, self.material, self.solver

    def run(self, n_cells=None, t_end=None):
        init, bc, material, cfg = self.build(n_cells)
        return simulate(init, bc, material, cfg, t_end or self.t_end)

    def pure_conduction(self, dt):
        """ the same slab with every mass transfer switched off and fixed
        steps of dt, leaving linear transient conduction """
        material = self.material.replace(
            k_evap=0.0,
            permeability_gas=0.0,
            permeability_water=0.0,
            gas_diffusivity=0.0,
            capillary_diffusivity=Curve('constant', (('value_m2_per_s', 0.0),)))
        return self.replace(
            material=material,
            boundary=dataclasses.replace(self.boundary, h_m=0.0),
            solver=dataclasses.replace(self.solver, adaptive=False, dt_initial=dt,
                dt_max=max(self.solver.dt_max, dt)),
            name=self.name + ' (conduction)')

    def conduction_parameters(self):
        """ (diffusivity m2 s-1, Biot number) of the initial state """
        c_w = self.S_w_init * self.material.max_water
        state = dtcook_material.LocalState(self.T_init, self.p_init, self.c_v_init, c_w)
        rho_cp, k_eff = dtcook_material.effective_properties(state, self.material)
        return float(k_eff / rho_cp), float(self.boundary.h_T * self.length / k_eff)

def analytic_slab_core_temperature(times, length, diffusivity, biot, T_init, T_oven, n_terms=100):
    """ insulated-back temperature of a slab with a convective surface

        Series solution of transient conduction: with beta_n the roots of
        beta*tan(beta) = Bi and C_n = 4 sin(beta_n)/(2 beta_n + sin(2 beta_n)),
        (T - T_oven)/(T_init - T_oven) = sum C_n exp(-beta_n^2 Fo) at the
        back face, Fo = diffusivity*t/L^2.
    """
    times = np.asarray(times, dtype=float)
    if biot == 0.0:
        return np.full_like(times, float(T_init))
    f = lambda b: b * math.sin(b) - biot * math.cos(b)
    betas = np.array([optimize.brentq(f, k * math.pi, k * math.pi + 0.5 * math.pi, xtol=1e-14)
        for k in range(n_terms)])
    coefficients = 4.0 * np.sin(betas) / (2.0 * betas + np.sin(2.0 * betas))
    fourier = diffusivity * times / length ** 2
    theta = np.sum(coefficients[None, :] * np.exp(-betas[None, :] ** 2 * fourier[:, None]), axis=1)
    return T_oven + (T_init - T_oven) * theta

@dataclass(frozen=True)
class GridConvergenceReport:
    resolutions: tuple
    observed_order: Optional[float]
    conclusive: bool
    deviations: tuple # MAPE of each resolution against the finest, percent
    differences: tuple # RMS over time of consecutive-resolution differences, K
    extrapolated_error: Optional[float] # estimated error of the finest grid, K
    times: np.ndarray = None
    core_temperatures: tuple = ()
    step_tolerance: Optional[float] = None # None for fixed-step runs

    def to_text(self):
        lines = ['grid convergence of the core temperature']
        for n, deviation in zip(self.resolutions, self.deviations):
            lines.append('  n = %-5d MAPE vs finest = %.5f%%' % (n, deviation))
        if self.conclusive:
            lines.append('  observed order %.3f, finest-grid error estimate %.3g K' % (
                self.observed_order, self.extrapolated_error))
        else:
            lines.append('  inconclusive (differences %s)' % ', '.join('%.3g' % d for d in self.differences))
        if self.step_tolerance is not None:
            lines.append('  step-doubling tolerance %g' % self.step_tolerance)
        return '\n'.join(lines)

def grid_convergence(case, resolutions, t_end=None, step_tolerance=settings._GRID_STEP_TOLERANCE):
    """ Richardson-style grid study on the core-temperature probe

        The observed order comes from the three finest resolutions:
        p = ln(e12/e23)/ln(r) with e the RMS over time of the difference
        between consecutive resolutions and r their ratio. It is conclusive
        only when e12 > e23 > 0.

        Parameters
        ----------
            case : FomCase
            resolutions : list
                At least three cell counts in geometric progression
            t_end : float
                Horizon, s; the case horizon by default
            step_tolerance : float
                Step-doubling tolerance of every run, tightened from the
                case tolerance so the time error stays below the grid error

        Raises
        ------
            ValueError
                If the resolutions are fewer than three or not geometric
    """
    resolutions = sorted(int(n) for n in resolutions)
    if len(resolutions) < 3:
        raise ValueError('grid convergence needs at least three resolutions')
    ratios = [b / float(a) for a, b in zip(resolutions, resolutions[1:])]
    if ratios[0] <= 1.0 or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError('resolutions %r are not a geometric progression' % (resolutions,))
    ratio = ratios[0]
    if case.solver.adaptive:
        case = case.with_solver(step_tolerance=min(case.solver.step_tolerance, step_tolerance))
    series = []
    times = None
    for n in resolutions:
        logging.info('grid convergence: %s on %d cells', case.name, n)
        trajectory = case.run(n, t_end)
        series.append(trajectory.probe('T_core_K'))
        times = trajectory.times
    finest = series[-1]
    deviations = tuple(mape(finest, s) for s in series)
    differences = tuple(float(np.sqrt(np.mean((a - b) ** 2))) for a, b in zip(series, series[1:]))
    e12, e23 = differences[-2], differences[-1]
    if e12 > e23 > 0.0:
        order = math.log(e12 / e23) / math.log(ratio)
        extrapolated = e23 / (ratio ** order - 1.0)
        conclusive = True
    else:
        order = None
        extrapolated = 0.0 if e12 == 0.0 and e23 == 0.0 else None
        conclusive = False
        logging.warning('grid convergence inconclusive: differences %r', differences)
    return GridConvergenceReport(tuple(resolutions), order, conclusive, deviations, differences,
        extrapolated, times, tuple(series), case.solver.step_tolerance if case.solver.adaptive else None)

def mass_loss_sensitivity(case, h_m_values, t_end=None):
    """ final cumulative mass loss, kg m-2, for each mass transfer
    coefficient h_m in h_m_values """
    results = []
    for h_m in h_m_values:
        trajectory = case.with_boundary(h_m=float(h_m)).run(t_end=t_end)
        results.append((float(h_m), float(trajectory.probe('massloss_kgm2')[-1])))
        logging.info('h_m = %r m/s: mass loss %r kg/m2', h_m, results[-1][1])
    return results
