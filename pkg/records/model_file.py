from records.record import Document

class ModelFileType(Document):
    """ the payload contract of a .dtrom model file """

    @property
    def schema(self):
        """ the cerberus schema definition used for validation of a model
        payload """
        return {
            'output_lags': {'type': 'integer', 'min': 1, 'required': True},
            'input_lags': {'type': 'integer', 'min': 1, 'required': True},
            'sampling_interval_s': {'type': 'number', 'min': 0.0, 'required': True},
            'terms': {'type': 'list', 'required': True, 'schema': {
                'type': 'list', 'schema': {'type': 'integer', 'min': 0}}},
            'coefficients': {'type': 'list', 'required': True, 'schema': {'type': 'number'}},
            'normalization': {'type': 'dict', 'required': True, 'schema': {
                'center_y': {'type': 'number', 'required': True},
                'scale_y': {'type': 'number', 'min': 0.0, 'required': True},
                'center_u': {'type': 'number', 'required': True},
                'scale_u': {'type': 'number', 'min': 0.0, 'required': True}}},
            'output_range': {'type': 'number', 'min': 0.0, 'default': 0.0},
            'metadata': {'type': 'dict', 'default': {}, 'schema': {
                'training_cases': {'type': 'list', 'schema': {'type': 'string'}},
                'fit_timestamp': {'type': 'integer'},
                'format_version': {'type': 'integer'},
                'one_step_rmse': {'type': 'number'},
                'ridge': {'type': 'number'},
                'ridge_fallback_used': {'type': 'boolean'},
                'warning': {'type': 'string'},
                'selection': {'type': 'list', 'schema': {'type': 'list'}}},
                'allow_unknown': True},
        }
