"""Material definition file: schema, curves and the FoodMaterial record.

Curves are given either as a named built-in model with parameters or as a
monotone breakpoint table over water saturation S_w.
"""
import dataclasses
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from conf import settings
from records.record import Document, InvalidDocument

def _phase_schema(gas_law):
    schema = {
        'dynamic_viscosity_Pa_s': {'type': 'number', 'min': 0.0, 'required': True},
        'specific_heat_J_per_kgK': {'type': 'number', 'min': 0.0, 'required': True},
        'thermal_conductivity_W_per_mK': {'type': 'number', 'min': 0.0, 'required': True},
    }
    if gas_law:
        schema['molar_mass_kg_per_mol'] = {'type': 'number', 'min': 0.0, 'required': True}
    else:
        schema['molar_mass_kg_per_mol'] = {'type': 'number', 'min': 0.0, 'nullable': True}
    if gas_law:
        schema['ideal_gas'] = {'type': 'boolean', 'allowed': [True], 'default': True}
    else:
        schema['density_kg_per_m3'] = {'type': 'number', 'min': 0.0, 'required': True}
    return {'type': 'dict', 'required': True, 'schema': schema}

_CURVE_SCHEMA = {
    'type': 'dict',
    'required': True,
    'schema': {
        'model': {'type': 'string', 'required': True,
            'allowed': ['constant', 'exponential', 'power', 'linear', 'table']},
        'value_m2_per_s': {'type': 'number', 'min': 0.0},
        'reference_m2_per_s': {'type': 'number', 'min': 0.0},
        'slope': {'type': 'number'},
        'E': {'type': 'number', 'min': 0.0},
        'residual_saturation': {'type': 'number', 'min': 0.0, 'max': 1.0},
        'exponent': {'type': 'number', 'min': 0.0},
        'intercept': {'type': 'number'},
        'saturation': {'type': 'list', 'minlength': 2, 'schema': {'type': 'number', 'min': 0.0, 'max': 1.0}},
        'values': {'type': 'list', 'minlength': 2, 'schema': {'type': 'number', 'min': 0.0}},
    }
}

# which built-in models each curve accepts and the parameters they need
_CURVE_MODELS = {
    'capillary_diffusivity': {
        'constant': ['value_m2_per_s'],
        'exponential': ['reference_m2_per_s', 'slope'],
        'table': ['saturation', 'values']},
    'water_activity': {
        'exponential': ['E'],
        'table': ['saturation', 'values']},
    'relative_permeability_water': {
        'power': ['residual_saturation', 'exponent'],
        'table': ['saturation', 'values']},
    'relative_permeability_gas': {
        'linear': ['intercept', 'slope'],
        'table': ['saturation', 'values']},
}

@dataclass(frozen=True)
class PhaseProperties:
    """ properties of one phase; density_ref is None for gas-law phases """
    dynamic_viscosity: float
    specific_heat: float
    thermal_conductivity: float
    molar_mass: Optional[float] = None
    density_ref: Optional[float] = None

    @property
    def ideal_gas(self):
        return self.density_ref is None

@dataclass(frozen=True)
class Curve:
    """ a constitutive curve over water saturation

        model is one of the built-in names in _CURVE_MODELS or 'table'; for
        tables, breakpoints holds (saturation, values).
    """
    model: str
    parameters: Tuple[Tuple[str, float], ...] = ()
    breakpoints: Optional[Tuple[Tuple[float, ...], Tuple[float, ...]]] = None

    def param(self, name):
        return dict(self.parameters)[name]

    def __call__(self, saturation):
        """ evaluate the curve at the water saturation(s) given """
        s = np.asarray(saturation, dtype=float)
        if self.model == 'table':
            return np.interp(s, self.breakpoints[0], self.breakpoints[1])
        if self.model == 'constant':
            return np.full_like(s, self.param('value_m2_per_s'))
        if self.model == 'exponential' and 'E' in dict(self.parameters):
            return 1.0 - np.exp(-self.param('E') * s)
        if self.model == 'exponential':
            return self.param('reference_m2_per_s') * np.exp(self.param('slope') * (s - 1.0))
        if self.model == 'power':
            s_ir = self.param('residual_saturation')
            reduced = np.maximum(0.0, (s - s_ir) / (1.0 - s_ir))
            return reduced ** self.param('exponent')
        if self.model == 'linear':
            return np.maximum(0.0, self.param('intercept') - self.param('slope') * s)
        raise ValueError('unknown curve model %r' % self.model)

@dataclass(frozen=True)
class FoodMaterial:
    """ constitutive parameters and curves of the porous food """
    porosity: float
    solid: PhaseProperties
    water: PhaseProperties
    gas: PhaseProperties
    vapor: PhaseProperties
    permeability_gas: float
    permeability_water: float
    relative_permeability_gas: Curve
    relative_permeability_water: Curve
    capillary_diffusivity: Curve
    gas_diffusivity: float
    water_activity: Curve
    k_evap: float
    latent_heat: float
    saturation_reference: Tuple[float, float] = (373.15, 101325.0)
    saturation_latent_heat: float = 2.39e6
    gas_constant: float = settings._GAS_CONSTANT
    name: str = ''

    @property
    def max_water(self):
        """ c_w of the fully saturated pore space, phi * rho_w """
        return self.porosity * self.water.density_ref

    def replace(self, **changes):
        """ copy with some fields changed (sensitivity studies, sub-cases) """
        return dataclasses.replace(self, **changes)

class MaterialType(Document):
    """ the material definition file contract """

    @property
    def schema(self):
        """ the cerberus schema definition used for validation of a material """
        return {
            'name': {'type': 'string', 'default': ''},
            'description': {'type': 'string'},
            'porosity': {'type': 'number', 'min': 0.0, 'max': 1.0, 'required': True},
            'solid': {'type': 'dict', 'required': True, 'schema': {
                'density_kg_per_m3': {'type': 'number', 'min': 0.0, 'required': True},
                'specific_heat_J_per_kgK': {'type': 'number', 'min': 0.0, 'required': True},
                'thermal_conductivity_W_per_mK': {'type': 'number', 'min': 0.0, 'required': True}}},
            'water': _phase_schema(False),
            'gas': _phase_schema(True),
            'vapor': _phase_schema(True),
            'intrinsic_permeability_gas_m2': {'type': 'number', 'min': 0.0, 'required': True},
            'intrinsic_permeability_water_m2': {'type': 'number', 'min': 0.0, 'required': True},
            'relative_permeability_gas': _CURVE_SCHEMA,
            'relative_permeability_water': _CURVE_SCHEMA,
            'capillary_diffusivity': _CURVE_SCHEMA,
            'effective_gas_diffusivity_m2_per_s': {'type': 'number', 'min': 0.0, 'required': True},
            'water_activity': _CURVE_SCHEMA,
            'k_evap_per_s': {'type': 'number', 'min': 0.0, 'required': True},
            'latent_heat_J_per_kg': {'type': 'number', 'min': 0.0, 'required': True},
            'saturation_pressure': {'type': 'dict', 'required': True, 'schema': {
                'model': {'type': 'string', 'allowed': ['clausius_clapeyron'], 'required': True},
                'reference_temperature_K': {'type': 'number', 'min': 0.0, 'default': 373.15},
                'reference_pressure_Pa': {'type': 'number', 'min': 0.0, 'default': 101325.0},
                'latent_heat_J_per_kg': {'type': 'number', 'min': 0.0, 'required': True}}},
        }

    @staticmethod
    def build_curve(name, fields):
        """ build a Curve from its document section

            Raises
            ------
                InvalidDocument
                    If the model is not allowed for this curve, a parameter is
                    missing, or a table is not monotone
        """
        models = _CURVE_MODELS[name]
        model = fields['model']
        if model not in models:
            raise InvalidDocument('invalid material', ['%s.model: %r not one of %r' % (name, model, sorted(models))])
        missing = [key for key in models[model] if key not in fields]
        if len(missing) > 0:
            raise InvalidDocument('invalid material', ['%s.%s: required field' % (name, key) for key in missing])
        if model == 'table':
            saturation = tuple(float(x) for x in fields['saturation'])
            values = tuple(float(x) for x in fields['values'])
            errors = []
            if len(saturation) != len(values):
                errors.append('%s.values: length differs from saturation' % name)
            if any(b <= a for a, b in zip(saturation, saturation[1:])):
                errors.append('%s.saturation: breakpoints must be strictly increasing' % name)
            diffs = np.diff(values)
            if not (np.all(diffs >= 0.0) or np.all(diffs <= 0.0)):
                errors.append('%s.values: table must be monotone' % name)
            if name == 'water_activity' and max(values) > 1.0:
                errors.append('%s.values: water activity must not exceed 1' % name)
            if len(errors) > 0:
                raise InvalidDocument('invalid material', errors)
            return Curve(model, (), (saturation, values))
        parameters = tuple((key, float(fields[key])) for key in models[model])
        return Curve(model, parameters)

    @staticmethod
    def build_phase(fields):
        return PhaseProperties(
            dynamic_viscosity=float(fields['dynamic_viscosity_Pa_s']),
            specific_heat=float(fields['specific_heat_J_per_kgK']),
            thermal_conductivity=float(fields['thermal_conductivity_W_per_mK']),
            molar_mass=None if fields.get('molar_mass_kg_per_mol') is None else float(fields['molar_mass_kg_per_mol']),
            density_ref=None if 'density_kg_per_m3' not in fields else float(fields['density_kg_per_m3']))

    def record(self):
        """ validate the document and build the FoodMaterial """
        fields = self.normalized()
        errors = []
        if not 0.0 < fields['porosity'] < 1.0:
            errors.append('porosity: must lie strictly between 0 and 1')
        for key in ['k_evap_per_s', 'latent_heat_J_per_kg']:
            if fields[key] <= 0.0:
                errors.append('%s: must be positive' % key)
        if len(errors) > 0:
            raise InvalidDocument('invalid material %s' % self.source, errors)

        solid = fields['solid']
        saturation = fields['saturation_pressure']
        return FoodMaterial(
            porosity=float(fields['porosity']),
            solid=PhaseProperties(
                dynamic_viscosity=0.0,
                specific_heat=float(solid['specific_heat_J_per_kgK']),
                thermal_conductivity=float(solid['thermal_conductivity_W_per_mK']),
                density_ref=float(solid['density_kg_per_m3'])),
            water=MaterialType.build_phase(fields['water']),
            gas=MaterialType.build_phase(fields['gas']),
            vapor=MaterialType.build_phase(fields['vapor']),
            permeability_gas=float(fields['intrinsic_permeability_gas_m2']),
            permeability_water=float(fields['intrinsic_permeability_water_m2']),
            relative_permeability_gas=MaterialType.build_curve('relative_permeability_gas', fields['relative_permeability_gas']),
            relative_permeability_water=MaterialType.build_curve('relative_permeability_water', fields['relative_permeability_water']),
            capillary_diffusivity=MaterialType.build_curve('capillary_diffusivity', fields['capillary_diffusivity']),
            gas_diffusivity=float(fields['effective_gas_diffusivity_m2_per_s']),
            water_activity=MaterialType.build_curve('water_activity', fields['water_activity']),
            k_evap=float(fields['k_evap_per_s']),
            latent_heat=float(fields['latent_heat_J_per_kg']),
            saturation_reference=(float(saturation['reference_temperature_K']),
                float(saturation['reference_pressure_Pa'])),
            saturation_latent_heat=float(saturation['latent_heat_J_per_kg']),
            name=fields['name'])

def load_material(path=None):
    """ load a material file, the shipped default when path is None """
    path = path or settings._DEFAULT_MATERIAL_FILE
    return MaterialType(Document.read_json(path), source=path).record()
