import dataclasses
import unittest

import numpy as np

from records.material import Curve, load_material
from tools import dtcook_material as material_module
from tools.dtcook_material import (LocalState, MaterialDomainError, effective_properties,
    equilibrium_vapor_density, evaporation_rate, gas_density, pore_reynolds,
    relative_permeabilities, saturation_pressure, saturations, water_activity)

def flat_activity(value):
    return Curve('table', (), ((0.0, 1.0), (value, value)))

class TestSaturations(unittest.TestCase):

    def setUp(self):
        self.material = load_material()

    def test_half_saturated(self):
        s_w, s_g = saturations(375.0, self.material)
        self.assertEqual(s_w, 0.5)
        self.assertEqual(s_g, 0.5)

    def test_dry_and_saturated_limits(self):
        self.assertEqual(saturations(0.0, self.material), (0.0, 1.0))
        s_w, s_g = saturations(750.0, self.material)
        self.assertEqual(s_w, 1.0)
        self.assertEqual(s_g, 0.0)

    def test_closure_on_arrays(self):
        c_w = np.linspace(0.0, 750.0, 101)
        s_w, s_g = saturations(c_w, self.material)
        np.testing.assert_array_equal(s_w + s_g, np.ones_like(c_w))

    def test_out_of_range_names_the_cell(self):
        with self.assertRaises(MaterialDomainError) as context:
            saturations(np.array([100.0, 900.0, 200.0]), self.material)
        self.assertEqual(context.exception.index, 1)
        self.assertEqual(context.exception.value, 900.0)
        with self.assertRaises(MaterialDomainError):
            saturations(-1.0, self.material)

class TestGasLaw(unittest.TestCase):

    def test_air_density(self):
        self.assertAlmostEqual(float(gas_density(101325.0, 293.15, 0.0289)), 1.2014, delta=1e-4)

    def test_doubling_temperature_halves_density(self):
        cold = float(gas_density(101325.0, 300.0, 0.0289))
        hot = float(gas_density(101325.0, 600.0, 0.0289))
        self.assertAlmostEqual(hot, 0.5 * cold, places=12)

    def test_nonpositive_pressure(self):
        with self.assertRaises(MaterialDomainError):
            gas_density(0.0, 300.0, 0.0289)
        with self.assertRaises(MaterialDomainError):
            gas_density(101325.0, -1.0, 0.0289)

class TestSaturationPressure(unittest.TestCase):

    def test_anchor(self):
        self.assertEqual(float(saturation_pressure(373.15)), 101325.0)

    def test_steam_table_points(self):
        self.assertAlmostEqual(float(saturation_pressure(323.15)), 12350.0, delta=0.05 * 12350.0)
        self.assertAlmostEqual(float(saturation_pressure(273.16)), 611.0, delta=0.05 * 611.0)

    def test_monotone(self):
        p = saturation_pressure(np.linspace(273.15, 500.0, 200))
        self.assertTrue(np.all(np.diff(p) > 0.0))

    def test_domain(self):
        with self.assertRaises(MaterialDomainError):
            saturation_pressure(270.0)
        with self.assertRaises(MaterialDomainError):
            saturation_pressure(500.5)

class TestEquilibriumVaporDensity(unittest.TestCase):

    def setUp(self):
        self.material = load_material()

    def test_free_water(self):
        material = self.material.replace(water_activity=flat_activity(1.0))
        self.assertAlmostEqual(float(equilibrium_vapor_density(373.15, 375.0, material)), 0.5879, delta=1e-3)

    def test_bound_water_and_linearity(self):
        full = float(equilibrium_vapor_density(350.0, 375.0, self.material.replace(water_activity=flat_activity(1.0))))
        half = float(equilibrium_vapor_density(350.0, 375.0, self.material.replace(water_activity=flat_activity(0.5))))
        none = float(equilibrium_vapor_density(350.0, 375.0, self.material.replace(water_activity=flat_activity(0.0))))
        self.assertEqual(none, 0.0)
        self.assertAlmostEqual(half, 0.5 * full, places=14)

    def test_increasing_in_temperature(self):
        material = self.material.replace(water_activity=flat_activity(1.0))
        rho = equilibrium_vapor_density(np.linspace(280.0, 450.0, 50), 375.0, material)
        self.assertTrue(np.all(np.diff(rho) > 0.0))

    def test_default_isotherm_is_free_water_at_half_saturation(self):
        self.assertGreater(float(water_activity(375.0, 300.0, self.material)), 0.99)

    def test_propagates_domain_error(self):
        with self.assertRaises(MaterialDomainError):
            equilibrium_vapor_density(600.0, 375.0, self.material)

class TestEvaporationRate(unittest.TestCase):

    def setUp(self):
        self.material = load_material()
        self.T = 373.15
        self.rho_equ = float(equilibrium_vapor_density(self.T, 375.0, self.material))

    def state(self, rho_v, c_w=375.0):
        s_g = 1.0 - c_w / self.material.max_water
        return LocalState(self.T, 101325.0, rho_v * s_g * self.material.porosity, c_w)

    def test_equilibrium(self):
        self.assertAlmostEqual(float(evaporation_rate(self.state(self.rho_equ), self.material)), 0.0, delta=1e-9)

    def test_rate_arithmetic(self):
        rate = float(evaporation_rate(self.state(self.rho_equ - 0.1), self.material))
        self.assertAlmostEqual(rate, 37.5, places=6)

    def test_condensation(self):
        self.assertLess(float(evaporation_rate(self.state(self.rho_equ + 0.05), self.material)), 0.0)

    def test_no_gas_space(self):
        state = LocalState(self.T, 101325.0, 0.0, self.material.max_water)
        self.assertEqual(float(evaporation_rate(state, self.material)), 0.0)

    def test_slope_in_vapor_concentration(self):
        base = self.state(self.rho_equ)
        h = 1e-6
        shifted = dataclasses.replace(base, c_v=base.c_v + h)
        slope = (float(evaporation_rate(shifted, self.material)) - float(evaporation_rate(base, self.material))) / h
        self.assertAlmostEqual(slope / self.material.k_evap, -1.0, places=5)

class TestEffectiveProperties(unittest.TestCase):

    def setUp(self):
        material = load_material()
        self.material = material.replace(solid=dataclasses.replace(material.solid, thermal_conductivity=0.2))

    def k_eff(self, c_w):
        _, k = effective_properties(LocalState(300.0, 101325.0, 0.0, c_w), self.material)
        return float(k)

    def test_dry_and_saturated(self):
        self.assertAlmostEqual(self.k_eff(0.0), 0.0695, places=12)
        self.assertAlmostEqual(self.k_eff(750.0), 0.4775, places=12)

    def test_affine_in_water_saturation(self):
        self.assertAlmostEqual(self.k_eff(375.0), 0.5 * (0.0695 + 0.4775), places=12)
        self.assertAlmostEqual(self.k_eff(187.5), 0.75 * 0.0695 + 0.25 * 0.4775, places=12)

    def test_heat_capacity_increases_with_water(self):
        values = [float(effective_properties(LocalState(300.0, 101325.0, 0.0, c_w), self.material)[0])
            for c_w in np.linspace(0.0, 750.0, 11)]
        self.assertTrue(np.all(np.diff(values) > 0.0))

class TestCurves(unittest.TestCase):

    def test_relative_permeabilities(self):
        material = load_material()
        k_rg, k_rw = relative_permeabilities(np.array([0.0, 0.08, 1.0]), material)
        np.testing.assert_allclose(k_rg, [1.01, 1.01 - 1.01 * 0.08, 0.0], atol=1e-12)
        np.testing.assert_allclose(k_rw, [0.0, 0.0, 1.0], atol=1e-12)

    def test_capillary_diffusivity_default(self):
        material = load_material()
        self.assertEqual(float(material_module.capillary_diffusivity(375.0, 300.0, material)), 1e-8)

    def test_pore_reynolds(self):
        self.assertAlmostEqual(float(pore_reynolds(1e-3, 1.0, 1e-5, 1e-14)), 1e-3 * 1e-7 / 1e-5, places=15)
