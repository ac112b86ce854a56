import unittest

import numpy as np

from conf import settings
from records.case import load_case
from records.material import load_material
from tools import dtcook_fom as fom
from tools.dtcook_fom import (BoundarySpec, FieldState, FomCase, Grid1D, SolveConfig,
    analytic_slab_core_temperature, boundary_fluxes, core_temperature, grid_convergence,
    interior_fluxes, mass_loss_sensitivity, profile_at, total_moisture)
from tools.dtcook_material import LocalState, effective_properties, equilibrium_vapor_density

class TestGrid(unittest.TestCase):

    def test_uniform(self):
        grid = Grid1D(0.01, 4)
        np.testing.assert_allclose(grid.widths, 0.0025, rtol=1e-12)
        np.testing.assert_allclose(grid.centers, [0.00125, 0.00375, 0.00625, 0.00875], rtol=1e-12)
        np.testing.assert_allclose(grid.spacing, 0.0025, rtol=1e-12)
        self.assertEqual(grid.surface_distance, 0.00125)

    def test_graded_is_finest_at_the_surface(self):
        grid = Grid1D(0.01, 10, 1.1)
        self.assertEqual(grid.faces[-1], 0.01)
        self.assertTrue(np.all(np.diff(grid.widths) > 0.0))
        self.assertAlmostEqual(grid.widths[1] / grid.widths[0], 1.1, places=12)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            Grid1D(0.01, 2)
        with self.assertRaises(ValueError):
            Grid1D(0.0, 10)
        with self.assertRaises(ValueError):
            Grid1D(0.01, 10, 0.0)

    def test_state_shape_must_match(self):
        with self.assertRaises(ValueError):
            FieldState(Grid1D(0.01, 3), np.ones(4), np.ones(3), np.ones(3), np.ones(3))

class TestInteriorFluxes(unittest.TestCase):

    def setUp(self):
        self.material = load_material()
        self.grid = Grid1D(0.01, 3)

    def state(self, T=(330.0,) * 3, p=(101325.0,) * 3, c_v=(0.01,) * 3, c_w=(375.0,) * 3):
        return FieldState(self.grid, np.array(T), np.array(p), np.array(c_v), np.array(c_w))

    def test_uniform_state_has_no_flux(self):
        fluxes = interior_fluxes(self.state(), self.material)
        for values in fluxes:
            self.assertEqual(values.shape, (2,))
            np.testing.assert_array_equal(values, 0.0)

    def test_darcy_flow_runs_down_the_pressure_gradient(self):
        fluxes = interior_fluxes(self.state(p=(101325.0, 102325.0, 101325.0)), self.material)
        self.assertLess(fluxes.j_g[0], 0.0)
        self.assertGreater(fluxes.j_g[1], 0.0)
        self.assertLess(fluxes.j_w[0], 0.0)
        self.assertGreater(fluxes.j_w[1], 0.0)
        np.testing.assert_array_equal(fluxes.q, 0.0)

    def test_capillary_flow_runs_from_wet_to_dry(self):
        fluxes = interior_fluxes(self.state(c_w=(400.0, 375.0, 350.0)), self.material)
        self.assertTrue(np.all(fluxes.j_w > 0.0))
        np.testing.assert_array_equal(fluxes.j_g, 0.0)
        np.testing.assert_array_equal(fluxes.q, 0.0)

    def test_conduction_runs_from_hot_to_cold(self):
        fluxes = interior_fluxes(self.state(T=(350.0, 330.0, 320.0)), self.material)
        self.assertTrue(np.all(fluxes.q > 0.0))

class TestBoundaryFluxes(unittest.TestCase):

    def setUp(self):
        self.material = load_material()
        self.bc = BoundarySpec(h_T=20.0, h_m=0.01, p_amb=101325.0, T_oven=373.15, rho_v_oven=0.1)

    def surface(self, rho_v):
        # S_g = 0.5 and porosity 0.75
        return LocalState(373.15, 101325.0, rho_v * 0.375, 375.0)

    def test_oven_equilibrium(self):
        fluxes = boundary_fluxes(self.surface(0.1), self.bc, 0.0, self.material)
        self.assertAlmostEqual(fluxes.j_v, 0.0, delta=1e-15)
        self.assertAlmostEqual(fluxes.j_w, 0.0, delta=1e-15)
        self.assertAlmostEqual(fluxes.q, 0.0, delta=1e-9)
        self.assertEqual(fluxes.p_surface, 101325.0)

    def test_vapor_excess(self):
        fluxes = boundary_fluxes(self.surface(0.3), self.bc, 0.0, self.material)
        self.assertAlmostEqual(fluxes.j_v, 7.5e-4, places=12)
        self.assertAlmostEqual(fluxes.j_w, 7.5e-4, places=12)
        self.assertAlmostEqual(fluxes.q, -self.material.latent_heat * 7.5e-4, places=6)

    def test_heating(self):
        bc = BoundarySpec(h_T=20.0, h_m=0.0, p_amb=101325.0, T_oven=450.15, rho_v_oven=0.1)
        fluxes = boundary_fluxes(self.surface(0.3), bc, 0.0, self.material)
        self.assertAlmostEqual(fluxes.q, 20.0 * (450.15 - 373.15), places=9)
        self.assertEqual(fluxes.j_v, 0.0)

    def test_closed_surface(self):
        bc = BoundarySpec(h_T=0.0, h_m=0.0, p_amb=101325.0, T_oven=450.15, rho_v_oven=0.0)
        fluxes = boundary_fluxes(self.surface(0.3), bc, 0.0, self.material)
        self.assertEqual((fluxes.j_v, fluxes.j_w, fluxes.q), (0.0, 0.0, 0.0))

    def test_invalid_boundary(self):
        bc = BoundarySpec(h_T=-1.0, h_m=0.0, p_amb=101325.0, T_oven=450.15, rho_v_oven=0.0)
        with self.assertRaises(ValueError):
            boundary_fluxes(self.surface(0.3), bc, 0.0, self.material)

class TestProbes(unittest.TestCase):

    def test_total_moisture(self):
        grid = Grid1D(0.01, 5)
        self.assertAlmostEqual(total_moisture(FieldState.uniform(grid, 300.0, 101325.0, 0.0, 375.0)), 3.75, places=12)
        self.assertEqual(total_moisture(FieldState.uniform(grid, 300.0, 101325.0, 0.0, 0.0)), 0.0)
        half = total_moisture(FieldState.uniform(grid, 300.0, 101325.0, 0.0, 187.5))
        self.assertAlmostEqual(half, 1.875, places=12)

    def test_core_temperature_of_a_quadratic_profile(self):
        grid = Grid1D(0.01, 8, 1.2)
        T = 350.0 + 2.0e5 * (grid.centers - 0.01) ** 2
        state = FieldState(grid, T, np.full(8, 101325.0), np.zeros(8), np.full(8, 375.0))
        self.assertAlmostEqual(core_temperature(state), 350.0, places=9)

class TestStep(unittest.TestCase):

    def setUp(self):
        self.material = load_material()
        self.cfg = SolveConfig(adaptive=False)

    def test_insulated_equilibrium_is_steady(self):
        T = 330.0
        c_w = 375.0
        c_v = float(equilibrium_vapor_density(T, c_w, self.material)) * 0.375
        state = FieldState.uniform(Grid1D(0.01, 6), T, 101325.0, c_v, c_w)
        bc = BoundarySpec(h_T=0.0, h_m=0.0, p_amb=101325.0, T_oven=T, rho_v_oven=c_v / 0.375)
        after = fom.step(state, 1.0, bc, self.material, self.cfg)
        self.assertEqual(after.t, 1.0)
        for name in fom.VARIABLES:
            np.testing.assert_allclose(getattr(after, name), getattr(state, name), rtol=1e-9)
        self.assertAlmostEqual(after.mass_loss, 0.0, delta=1e-12)

    def test_evaporation_draws_its_latent_heat(self):
        material = self.material.replace(permeability_gas=0.0)
        T = 330.0
        c_w = 375.0
        c_v = 0.5 * float(equilibrium_vapor_density(T, c_w, material)) * 0.375
        state = FieldState.uniform(Grid1D(0.01, 4), T, 101325.0, c_v, c_w)
        bc = BoundarySpec(h_T=0.0, h_m=0.0, p_amb=101325.0, T_oven=T, rho_v_oven=0.0)
        after = fom.step(state, 1.0, bc, material, self.cfg)
        evaporated = c_w - after.c_w
        self.assertTrue(np.all(evaporated > 0.0))
        np.testing.assert_allclose(after.c_v - c_v, evaporated, rtol=1e-5)
        rho_cp, _ = effective_properties(LocalState(after.T, after.p, after.c_v, after.c_w), material)
        np.testing.assert_allclose(rho_cp * (after.T - T), -material.latent_heat * evaporated, rtol=1e-4)

    def test_step_outside_the_allowed_range(self):
        state = FomCase.from_definition(load_case()).initial_state(5)
        bc = FomCase.from_definition(load_case()).boundary
        with self.assertRaises(ValueError):
            fom.step(state, 10.0, bc, self.material, self.cfg)
        with self.assertRaises(ValueError):
            fom.step(state, 0.0, bc, self.material, self.cfg)

class TestBenchmarkRun(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.case = FomCase.from_definition(load_case())
        cls.trajectory = cls.case.run(t_end=30.0)

    def test_output_times(self):
        np.testing.assert_allclose(self.trajectory.times, np.arange(31.0), atol=1e-9)
        self.assertEqual(len(self.trajectory.probes_table().rows), 31)

    def test_surface_heats_and_dries(self):
        first = self.trajectory.states[0]
        last = self.trajectory.final()
        self.assertGreater(last.T[0], first.T[0])
        self.assertLess(last.c_w[0], first.c_w[0])
        self.assertTrue(np.all(self.trajectory.probe('T_surf_K')[1:] > self.case.T_init))

    def test_bounded_by_the_oven(self):
        for state in self.trajectory.states:
            self.assertTrue(np.all(state.T <= self.case.boundary.T_oven))
        self.assertTrue(np.all(self.trajectory.probe('T_core_K') >= self.case.T_init - 0.1))

    def test_surface_pressure_is_ambient(self):
        p_amb = self.case.boundary.p_amb
        # the outer cell is pressurized, the face pressure follows from its Darcy outflow
        self.assertGreater(self.trajectory.final().p[0], p_amb)
        np.testing.assert_allclose(self.trajectory.probe('p_surf_Pa'), p_amb, rtol=0.0, atol=1e-6)

    def test_surface_pressure_without_gas_flow(self):
        case = self.case.pure_conduction(1.0)
        trajectory = case.run(10, 5.0)
        np.testing.assert_array_equal(trajectory.probe('p_surf_Pa'), case.boundary.p_amb)

    def test_moisture_is_conserved(self):
        moisture = self.trajectory.probe('moisture_kgm2')
        loss = self.trajectory.probe('massloss_kgm2')
        self.assertGreater(loss[-1], 0.0)
        self.assertAlmostEqual(moisture[0] - moisture[-1], loss[-1], delta=1e-6 + 0.005 * loss[-1])

    def test_deterministic(self):
        again = self.case.run(t_end=30.0)
        for name in fom.PROBE_COLUMNS:
            np.testing.assert_array_equal(again.probe(name), self.trajectory.probe(name))

    def test_profile_at(self):
        state = profile_at(self.trajectory, 10.0)
        self.assertAlmostEqual(state.t, 10.0, places=9)
        with self.assertRaises(ValueError):
            profile_at(self.trajectory, 10.5)

class TestConduction(unittest.TestCase):

    def setUp(self):
        self.case = FomCase.from_definition(load_case()).pure_conduction(1.0)

    def test_matches_the_series_solution(self):
        trajectory = self.case.run(20, 300.0)
        diffusivity, biot = self.case.conduction_parameters()
        exact = analytic_slab_core_temperature(trajectory.times, self.case.length, diffusivity, biot,
            self.case.T_init, self.case.boundary.T_oven)
        self.assertAlmostEqual(exact[0], self.case.T_init, delta=0.01)
        self.assertGreater(exact[-1], self.case.T_init + 1.0)
        np.testing.assert_allclose(trajectory.probe('T_core_K'), exact, atol=1.0)
        np.testing.assert_allclose(trajectory.probe('massloss_kgm2'), 0.0, atol=1e-12)

    def test_refinement_converges(self):
        report = grid_convergence(self.case, [10, 20, 40], 120.0)
        self.assertTrue(report.conclusive)
        self.assertLessEqual(abs(report.observed_order - 2.0), 0.3)
        self.assertEqual(report.deviations[-1], 0.0)
        diffusivity, biot = self.case.conduction_parameters()
        exact = analytic_slab_core_temperature(report.times, self.case.length, diffusivity, biot,
            self.case.T_init, self.case.boundary.T_oven)
        errors = [float(np.max(np.abs(T - exact))) for T in report.core_temperatures]
        self.assertLess(errors[-1], 0.2)
        self.assertLessEqual(errors[-1], errors[0] + 1e-3)
        self.assertIn('observed order', report.to_text())

    def test_resolutions_must_be_geometric(self):
        with self.assertRaises(ValueError):
            grid_convergence(self.case, [10, 20])
        with self.assertRaises(ValueError):
            grid_convergence(self.case, [10, 20, 30])

class TestStudies(unittest.TestCase):

    def setUp(self):
        self.case = FomCase.from_definition(load_case())

    def test_grid_study_tightens_the_step_tolerance(self):
        self.assertGreater(self.case.solver.step_tolerance, settings._GRID_STEP_TOLERANCE)
        report = grid_convergence(self.case, [5, 10, 20], 5.0)
        self.assertEqual(report.step_tolerance, settings._GRID_STEP_TOLERANCE)
        self.assertIn('step-doubling tolerance', report.to_text())
        self.assertEqual(len(report.core_temperatures), 3)

    def test_fixed_step_study_keeps_its_step(self):
        report = grid_convergence(self.case.pure_conduction(1.0), [5, 10, 20], 5.0)
        self.assertIsNone(report.step_tolerance)

    def test_mass_loss_grows_with_the_transfer_coefficient(self):
        results = mass_loss_sensitivity(self.case, [0.005, 0.01, 0.0125], 20.0)
        self.assertEqual([h_m for h_m, _ in results], [0.005, 0.01, 0.0125])
        losses = [loss for _, loss in results]
        self.assertGreater(losses[0], 0.0)
        self.assertTrue(all(b > a for a, b in zip(losses, losses[1:])))

class TestSeriesSolution(unittest.TestCase):

    def test_limits(self):
        times = np.array([0.0, 1.0e7])
        T = analytic_slab_core_temperature(times, 0.01, 1.0e-7, 0.5, 300.0, 400.0)
        self.assertAlmostEqual(T[0], 300.0, delta=0.5)
        self.assertAlmostEqual(T[1], 400.0, places=6)
        np.testing.assert_array_equal(analytic_slab_core_temperature(times, 0.01, 1.0e-7, 0.0, 300.0, 400.0), 300.0)
