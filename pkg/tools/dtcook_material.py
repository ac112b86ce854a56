"""Thermophysical and constitutive relations of the hygroscopic porous food.

Every function is pure and accepts scalars or numpy arrays. The public
operations validate their inputs and raise MaterialDomainError; the
underscore kernels skip validation and are what the solver calls inside
Newton iterations.
"""
import logging
from dataclasses import dataclass

import numpy as np

from conf import settings

_DEFAULT_SATURATION = (373.15, 101325.0, 2.39e6, 0.018015)

class MaterialDomainError(ValueError):
    """ custom exception that is thrown when a constitutive relation is
    evaluated outside its domain """
    def __init__(self, message, index=None, value=None, *args, **kwargs):
        """ MaterialDomainError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                index : int
                    The offending cell index for array input, or None
                value : float
                    The offending value
        """
        self.index = index
        self.value = value
        if index is not None:
            message = '%s (cell %d, value %r)' % (message, index, value)
        elif value is not None:
            message = '%s (value %r)' % (message, value)
        super(MaterialDomainError, self).__init__(message)

def _first_violation(values, mask, message):
    """ raise MaterialDomainError for the first True entry of mask """
    if np.any(mask):
        values = np.atleast_1d(values)
        mask = np.atleast_1d(mask)
        i = int(np.argmax(mask))
        index = i if values.size > 1 else None
        raise MaterialDomainError(message, index, float(values[i]))

@dataclass(frozen=True)
class LocalState:
    """ primary unknowns of one control volume """
    T: float
    p: float
    c_v: float
    c_w: float

    def validate(self, material):
        """ check the LocalState invariants, raising MaterialDomainError """
        _first_violation(self.T, np.asarray(self.T) <= 0.0, 'temperature must be positive')
        _first_violation(self.p, np.asarray(self.p) <= 0.0, 'pressure must be positive')
        _first_violation(self.c_v, np.asarray(self.c_v) < 0.0, 'vapor concentration must be nonnegative')
        check_water(self.c_w, material)
        return self

def gas_constant(material=None):
    return material.gas_constant if material is not None else settings._GAS_CONSTANT

def check_water(c_w, material):
    c_w = np.asarray(c_w, dtype=float)
    _first_violation(c_w, (c_w < 0.0) | (c_w > material.max_water) | ~np.isfinite(c_w),
        'water concentration outside [0, phi*rho_w]')

def saturations(c_w, material):
    """ water and gas saturations from the water concentration

        Parameters
        ----------
            c_w : float or ndarray
                Water concentration, kg m-3, within [0, phi*rho_w]
            material : FoodMaterial

        Returns
        -------
            tuple
                (S_w, S_g), both within [0, 1] and summing to one
    """
    check_water(c_w, material)
    return _saturations(c_w, material)

def _saturations(c_w, material):
    s_w = np.asarray(c_w, dtype=float) / material.max_water
    return s_w, 1.0 - s_w

def _clamped_gas_saturation(s_g):
    eps = settings._SATURATION_EPSILON
    return np.clip(s_g, eps, 1.0 - eps)

def gas_density(p, T, M_g, material=None):
    """ ideal-gas density p*M_g/(R*T) in kg m-3 """
    _first_violation(p, np.asarray(p) <= 0.0, 'pressure must be positive')
    _first_violation(T, np.asarray(T) <= 0.0, 'temperature must be positive')
    return np.asarray(p, dtype=float) * M_g / (gas_constant(material) * np.asarray(T, dtype=float))

def saturation_pressure(T, material=None):
    """ vapor saturation pressure, Pa

        Clausius-Clapeyron exponential anchored at the reference point of the
        material (373.15 K, 101325 Pa by default) with slope lambda*M_v/R.

        Raises
        ------
            MaterialDomainError
                For T outside [273.15 K, 500 K]
    """
    lo, hi = settings._SATURATION_DOMAIN
    T = np.asarray(T, dtype=float)
    _first_violation(T, (T < lo) | (T > hi) | ~np.isfinite(T),
        'temperature outside saturation-pressure domain [%g K, %g K]' % (lo, hi))
    return _saturation_pressure(T, material)

def _saturation_pressure(T, material=None):
    if material is None:
        T_ref, p_ref, latent, M_v = _DEFAULT_SATURATION
    else:
        (T_ref, p_ref), latent, M_v = material.saturation_reference, material.saturation_latent_heat, material.vapor.molar_mass
    slope = latent * M_v / gas_constant(material)
    return p_ref * np.exp(slope * (1.0 / T_ref - 1.0 / np.asarray(T, dtype=float)))

def water_activity(c_w, T, material):
    """ water activity a_w(c_w, T), within [0, 1] """
    check_water(c_w, material)
    return _water_activity(c_w, material)

def _water_activity(c_w, material):
    s_w, _ = _saturations(c_w, material)
    return np.clip(material.water_activity(s_w), 0.0, 1.0)

def equilibrium_vapor_density(T, c_w, material):
    """ vapor density in equilibrium with the bound water, a_w*p_sat*M_v/(R*T) """
    p_sat = saturation_pressure(T, material)
    return water_activity(c_w, T, material) * p_sat * material.vapor.molar_mass / (material.gas_constant * np.asarray(T, dtype=float))

def _equilibrium_vapor_density(T, c_w, material):
    p_sat = _saturation_pressure(T, material)
    return _water_activity(c_w, material) * p_sat * material.vapor.molar_mass / (material.gas_constant * T)

def relative_permeabilities(s_w, material):
    """ (k_rg, k_rw) at water saturation s_w """
    s_w = np.asarray(s_w, dtype=float)
    return (np.maximum(0.0, material.relative_permeability_gas(s_w)),
        np.maximum(0.0, material.relative_permeability_water(s_w)))

def capillary_diffusivity(c_w, T, material):
    """ capillary diffusivity D_w,cw(c_w, T), m2 s-1 """
    check_water(c_w, material)
    s_w, _ = _saturations(c_w, material)
    return np.maximum(0.0, material.capillary_diffusivity(s_w))

def gas_phase(T, p, c_v, s_g, material):
    """ composition of the pore gas

        Returns
        -------
            tuple
                (rho_v, rho_g, omega_v) in kg m-3, kg m-3 and dimensionless,
                with the gas saturation regularized away from zero
    """
    R = material.gas_constant
    s_gc = _clamped_gas_saturation(s_g)
    rho_v = c_v / (s_gc * material.porosity)
    p_v = rho_v * R * T / material.vapor.molar_mass
    rho_a = (p - p_v) * material.gas.molar_mass / (R * T)
    rho_g = rho_v + rho_a
    omega_v = rho_v / np.where(np.abs(rho_g) > 1e-12, rho_g, 1e-12)
    return rho_v, rho_g, omega_v

def _evaporation_rate(T, p, c_v, c_w, material):
    s_w, s_g = _saturations(c_w, material)
    s_gc = _clamped_gas_saturation(s_g)
    rho_equ = _equilibrium_vapor_density(T, c_w, material)
    rate = material.k_evap * (rho_equ * s_gc * material.porosity - c_v)
    return np.where(s_g > 0.0, rate, 0.0)

def evaporation_rate(state, material):
    """ non-equilibrium volumetric evaporation rate, kg m-3 s-1

        K_evap*(rho_v,equ - rho_v)*S_g*phi with rho_v = c_v/(S_g*phi);
        positive for evaporation, negative for condensation, zero without
        gas space.
    """
    state.validate(material)
    saturation_pressure(state.T, material)
    return _evaporation_rate(np.asarray(state.T, dtype=float), state.p, state.c_v, state.c_w, material)

def _effective_properties(T, p, c_v, c_w, material):
    phi = material.porosity
    s_w, s_g = _saturations(c_w, material)
    _, rho_g, omega_v = gas_phase(T, p, c_v, s_g, material)
    omega_v = np.clip(omega_v, 0.0, 1.0)
    cp_g = omega_v * material.vapor.specific_heat + (1.0 - omega_v) * material.gas.specific_heat
    rho_cp = (material.solid.density_ref * (1.0 - phi) * material.solid.specific_heat
        + rho_g * s_g * phi * cp_g
        + material.water.density_ref * s_w * phi * material.water.specific_heat)
    k_eff = (material.solid.thermal_conductivity * (1.0 - phi)
        + material.gas.thermal_conductivity * s_g * phi
        + material.water.thermal_conductivity * s_w * phi)
    return rho_cp, k_eff

def effective_properties(state, material):
    """ volume-averaged ((rho*c_p)_eff, k_eff) of the REV """
    state.validate(material)
    return _effective_properties(np.asarray(state.T, dtype=float), state.p, state.c_v, state.c_w, material)

def pore_reynolds(velocity, density, viscosity, permeability):
    """ pore Reynolds number rho*|v|*sqrt(k)/mu

        Diagnostic only: Darcy flow is trusted below roughly 1 to 10.
    """
    re = density * np.abs(velocity) * np.sqrt(permeability) / viscosity
    if np.any(re > 10.0):
        logging.debug('pore Reynolds number above the Darcy range: %r', np.max(re))
    return re
