"""Case definition file: grid, initial state, boundary, solver, and the
optional excitation, identification and pipeline sections.

Every physical key carries its unit in the name. The vapor concentration is
given in mol m-3 and converted to kg m-3 with the vapor molar mass of the
referenced material when the record is built.
"""
import logging
import os
from dataclasses import dataclass
from typing import Optional

from conf import settings
from records.material import FoodMaterial, load_material
from records.record import Document, InvalidDocument

@dataclass(frozen=True)
class GridSection:
    length: float
    n_cells: int
    grading_ratio: float = 1.0

@dataclass(frozen=True)
class InitialSection:
    T: float
    p: float
    S_w: float
    c_v: float # kg m-3

@dataclass(frozen=True)
class BoundarySection:
    h_T: float
    h_m: float
    p_amb: float
    T_oven: float
    rho_v_oven: float

@dataclass(frozen=True)
class SolverSection:
    dt_initial: float = settings._DT_INITIAL
    dt_min: float = settings._DT_MIN
    dt_max: float = settings._DT_MAX
    newton_tolerance: float = settings._NEWTON_TOLERANCE
    max_newton_iterations: int = settings._NEWTON_MAX_ITERATIONS
    output_interval: float = settings._OUTPUT_INTERVAL
    step_tolerance: float = settings._STEP_TOLERANCE
    adaptive: bool = True

@dataclass(frozen=True)
class AprbsSection:
    T_lo: float = settings._APRBS_RANGE[0]
    T_hi: float = settings._APRBS_RANGE[1]
    hold: float = settings._APRBS_HOLD
    f_lo: float = settings._APRBS_FREQUENCY[0]
    f_hi: float = settings._APRBS_FREQUENCY[1]
    duration_min: float = 10000.0
    duration_max: float = 12500.0

@dataclass(frozen=True)
class SysidSection:
    sampling_interval: float = settings._SAMPLING_INTERVAL
    output_lags: int = settings._OUTPUT_LAGS
    input_lags: int = settings._INPUT_LAGS
    max_degree: int = settings._MAX_DEGREE
    ridge: float = settings._RIDGE
    ridge_fallback: float = settings._RIDGE_FALLBACK
    min_improvement: float = settings._MIN_IMPROVEMENT
    selection_budget: int = settings._SELECTION_BUDGET
    shortlist: int = settings._SHORTLIST

@dataclass(frozen=True)
class PipelineSection:
    n_train: int = 4
    n_eval: int = 5
    seed: int = settings._SEED
    workers: int = settings._WORKERS

@dataclass(frozen=True)
class CaseDefinition:
    """ a validated case document with its material resolved """
    name: str
    source: Optional[str]
    material_file: str
    material: FoodMaterial
    grid: GridSection
    initial: InitialSection
    boundary: BoundarySection
    solver: SolverSection
    t_end: float
    aprbs: AprbsSection = AprbsSection()
    sysid: SysidSection = SysidSection()
    pipeline: PipelineSection = PipelineSection()

def _positive(**kwargs):
    rule = {'type': 'number', 'min': 0.0}
    rule.update(kwargs)
    return rule

class CaseType(Document):
    """ the case definition file contract """

    @property
    def schema(self):
        """ the cerberus schema definition used for validation of a case """
        return {
            'name': {'type': 'string', 'default': 'case'},
            'description': {'type': 'string'},
            'material_file': {'type': 'string', 'required': True, 'empty': False},
            'grid': {'type': 'dict', 'required': True, 'schema': {
                'length_m': _positive(required=True),
                'n_cells': {'type': 'integer', 'min': 3, 'required': True},
                'grading_ratio': _positive(default=1.0)}},
            'initial': {'type': 'dict', 'required': True, 'schema': {
                'T_K': _positive(required=True),
                'p_Pa': _positive(required=True),
                'S_w': {'type': 'number', 'min': 0.0, 'max': 1.0, 'required': True},
                'c_v_mol_per_m3': _positive(required=True)}},
            'boundary': {'type': 'dict', 'required': True, 'schema': {
                'h_T_W_per_m2K': _positive(required=True),
                'h_m_m_per_s': _positive(required=True),
                'p_amb_Pa': _positive(required=True),
                'T_oven_K': _positive(required=True),
                'rho_v_oven_kg_per_m3': _positive(required=True)}},
            'solver': {'type': 'dict', 'default': {}, 'schema': {
                'dt_initial_s': _positive(default=settings._DT_INITIAL),
                'dt_min_s': _positive(default=settings._DT_MIN),
                'dt_max_s': _positive(default=settings._DT_MAX),
                'newton_tolerance': _positive(default=settings._NEWTON_TOLERANCE),
                'max_newton_iterations': {'type': 'integer', 'min': 1, 'default': settings._NEWTON_MAX_ITERATIONS},
                'output_interval_s': _positive(default=settings._OUTPUT_INTERVAL),
                'step_tolerance': _positive(default=settings._STEP_TOLERANCE),
                'adaptive': {'type': 'boolean', 'default': True}}},
            't_end_s': _positive(required=True),
            'aprbs': {'type': 'dict', 'default': {}, 'schema': {
                'T_lo_K': _positive(default=settings._APRBS_RANGE[0]),
                'T_hi_K': _positive(default=settings._APRBS_RANGE[1]),
                'hold_s': _positive(default=settings._APRBS_HOLD),
                'f_lo_Hz': _positive(default=settings._APRBS_FREQUENCY[0]),
                'f_hi_Hz': _positive(default=settings._APRBS_FREQUENCY[1]),
                'duration_min_s': _positive(default=10000.0),
                'duration_max_s': _positive(default=12500.0)}},
            'sysid': {'type': 'dict', 'default': {}, 'schema': {
                'sampling_interval_s': _positive(default=settings._SAMPLING_INTERVAL),
                'output_lags': {'type': 'integer', 'min': 1, 'default': settings._OUTPUT_LAGS},
                'input_lags': {'type': 'integer', 'min': 1, 'default': settings._INPUT_LAGS},
                'max_degree': {'type': 'integer', 'min': 1, 'default': settings._MAX_DEGREE},
                'ridge': _positive(default=settings._RIDGE),
                'ridge_fallback': _positive(default=settings._RIDGE_FALLBACK),
                'min_improvement': _positive(default=settings._MIN_IMPROVEMENT),
                'selection_budget': {'type': 'integer', 'min': 0, 'default': settings._SELECTION_BUDGET},
                'shortlist': {'type': 'integer', 'min': 0, 'default': settings._SHORTLIST}}},
            'pipeline': {'type': 'dict', 'default': {}, 'schema': {
                'n_train': {'type': 'integer', 'min': 1, 'default': 4},
                'n_eval': {'type': 'integer', 'min': 0, 'default': 5},
                'seed': {'type': 'integer', 'min': 0, 'max': 2 ** 64 - 1, 'default': settings._SEED},
                'workers': {'type': 'integer', 'min': 1, 'default': settings._WORKERS}}},
        }

    def material_path(self, fields):
        """ the material file, relative paths resolved against the case file """
        path = fields['material_file']
        if os.path.isabs(path) or self.source is None:
            return path
        return os.path.join(os.path.dirname(os.path.abspath(self.source)), path)

    def record(self):
        """ validate the document, load its material and build the
        CaseDefinition

            Raises
            ------
                InvalidDocument
                    Listing every offending key of the case or its material
                MissingDocument
                    If the material file does not exist
        """
        fields = self.normalized()
        errors = []
        grid = fields['grid']
        if grid['length_m'] <= 0.0:
            errors.append('grid.length_m: must be positive')
        if grid['grading_ratio'] <= 0.0:
            errors.append('grid.grading_ratio: must be positive')
        solver = fields['solver']
        for key in ['dt_initial_s', 'dt_min_s', 'dt_max_s', 'newton_tolerance', 'output_interval_s', 'step_tolerance']:
            if solver[key] <= 0.0:
                errors.append('solver.%s: must be positive' % key)
        if solver['dt_min_s'] > solver['dt_max_s']:
            errors.append('solver.dt_min_s: must not exceed dt_max_s')
        for key in ['T_K', 'p_Pa']:
            if fields['initial'][key] <= 0.0:
                errors.append('initial.%s: must be positive' % key)
        if fields['boundary']['p_amb_Pa'] <= 0.0:
            errors.append('boundary.p_amb_Pa: must be positive')
        if fields['t_end_s'] <= 0.0:
            errors.append('t_end_s: must be positive')
        aprbs = fields['aprbs']
        if not aprbs['T_lo_K'] < aprbs['T_hi_K']:
            errors.append('aprbs.T_lo_K: must be below T_hi_K')
        if not 0.0 < aprbs['f_lo_Hz'] <= aprbs['f_hi_Hz']:
            errors.append('aprbs.f_lo_Hz: must satisfy 0 < f_lo_Hz <= f_hi_Hz')
        if not 0.0 < aprbs['duration_min_s'] <= aprbs['duration_max_s']:
            errors.append('aprbs.duration_min_s: must satisfy 0 < duration_min_s <= duration_max_s')
        if fields['sysid']['sampling_interval_s'] <= 0.0:
            errors.append('sysid.sampling_interval_s: must be positive')
        if len(errors) > 0:
            logging.error('invalid case %s: %r', self.source, errors)
            raise InvalidDocument('invalid case %s' % (self.source or '<memory>'), errors)

        material_file = self.material_path(fields)
        material = load_material(material_file)
        initial = fields['initial']
        boundary = fields['boundary']
        sysid = fields['sysid']
        pipeline = fields['pipeline']
        return CaseDefinition(
            name=fields['name'],
            source=self.source,
            material_file=material_file,
            material=material,
            grid=GridSection(float(grid['length_m']), int(grid['n_cells']), float(grid['grading_ratio'])),
            initial=InitialSection(
                T=float(initial['T_K']),
                p=float(initial['p_Pa']),
                S_w=float(initial['S_w']),
                c_v=float(initial['c_v_mol_per_m3']) * material.vapor.molar_mass),
            boundary=BoundarySection(
                h_T=float(boundary['h_T_W_per_m2K']),
                h_m=float(boundary['h_m_m_per_s']),
                p_amb=float(boundary['p_amb_Pa']),
                T_oven=float(boundary['T_oven_K']),
                rho_v_oven=float(boundary['rho_v_oven_kg_per_m3'])),
            solver=SolverSection(
                dt_initial=float(solver['dt_initial_s']),
                dt_min=float(solver['dt_min_s']),
                dt_max=float(solver['dt_max_s']),
                newton_tolerance=float(solver['newton_tolerance']),
                max_newton_iterations=int(solver['max_newton_iterations']),
                output_interval=float(solver['output_interval_s']),
                step_tolerance=float(solver['step_tolerance']),
                adaptive=bool(solver['adaptive'])),
            t_end=float(fields['t_end_s']),
            aprbs=AprbsSection(
                T_lo=float(aprbs['T_lo_K']),
                T_hi=float(aprbs['T_hi_K']),
                hold=float(aprbs['hold_s']),
                f_lo=float(aprbs['f_lo_Hz']),
                f_hi=float(aprbs['f_hi_Hz']),
                duration_min=float(aprbs['duration_min_s']),
                duration_max=float(aprbs['duration_max_s'])),
            sysid=SysidSection(
                sampling_interval=float(sysid['sampling_interval_s']),
                output_lags=int(sysid['output_lags']),
                input_lags=int(sysid['input_lags']),
                max_degree=int(sysid['max_degree']),
                ridge=float(sysid['ridge']),
                ridge_fallback=float(sysid['ridge_fallback']),
                min_improvement=float(sysid['min_improvement']),
                selection_budget=int(sysid['selection_budget']),
                shortlist=int(sysid['shortlist'])),
            pipeline=PipelineSection(
                n_train=int(pipeline['n_train']),
                n_eval=int(pipeline['n_eval']),
                seed=int(pipeline['seed']),
                workers=int(pipeline['workers'])))

def load_case(path=None):
    """ load a case file, the shipped benchmark when path is None """
    path = path or settings._BENCHMARK_CASE_FILE
    return CaseType(Document.read_json(path), source=path).record()
