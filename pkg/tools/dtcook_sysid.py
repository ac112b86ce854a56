"""Polynomial NARX identification of the oven-to-core temperature response.

Regressors at sample k are the normalized past outputs y(k-1) .. y(k-n_a)
and the normalized inputs u(k) .. u(k-n_b+1). A model is a list of
monomials over these regressors (exponent vectors, total degree at most
d_max) with one coefficient each, fitted by ridge-regularized least squares
on the normalized target y(k).

Structure is grown greedily: starting from every degree-1 term, the
nonlinear term that most reduces the leave-one-case-out free-run RMSE is
added until the gain drops below the configured fraction or the budget is
spent.
"""
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.preprocessing import PolynomialFeatures

from conf import settings
from tools.csv_helpers import CsvTable, read_columns
from tools.dtcook_excite import Signal
from tools.dtcook_metrics import error_report, rmse, resample

class IdentificationError(Exception):
    """ custom exception that is thrown when a model cannot be identified
    from the given data """
    def __init__(self, message, *args, **kwargs):
        """ IdentificationError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
        """
        super(IdentificationError, self).__init__(message)

class DivergenceError(Exception):
    """ custom exception that is thrown when a free run leaves the trusted
    output range or produces NaN """
    def __init__(self, message, step=None, *args, **kwargs):
        """ DivergenceError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                step : int
                    The sample index at which the run diverged
        """
        self.step = step
        if step is not None:
            message = '%s at step %d' % (message, step)
        super(DivergenceError, self).__init__(message)

@dataclass(frozen=True)
class SysidConfig:
    output_lags: int = settings._OUTPUT_LAGS
    input_lags: int = settings._INPUT_LAGS
    max_degree: int = settings._MAX_DEGREE
    ridge: float = settings._RIDGE
    ridge_fallback: float = settings._RIDGE_FALLBACK
    min_improvement: float = settings._MIN_IMPROVEMENT
    selection_budget: int = settings._SELECTION_BUDGET
    shortlist: int = settings._SHORTLIST

    def validate(self):
        if self.output_lags < 1 or self.input_lags < 1:
            raise IdentificationError('lag counts must be at least 1')
        if self.max_degree < 1:
            raise IdentificationError('max_degree must be at least 1')
        if self.ridge < 0.0 or self.ridge_fallback <= 0.0:
            raise IdentificationError('ridge must be nonnegative and the fallback positive')
        return self

    @staticmethod
    def from_section(section):
        """ build from a records.case.SysidSection """
        fields = dataclasses.asdict(section)
        fields.pop('sampling_interval')
        return SysidConfig(**fields)

@dataclass(frozen=True)
class Normalization:
    """ affine maps x_n = (x - center)/scale of output and input """
    center_y: float = 0.0
    scale_y: float = 1.0
    center_u: float = 0.0
    scale_u: float = 1.0

    def __post_init__(self):
        if not (self.scale_y > 0.0 and self.scale_u > 0.0):
            raise ValueError('normalization scales must be positive')

    @staticmethod
    def fit(inputs, outputs):
        u = np.concatenate([np.asarray(x, dtype=float) for x in inputs])
        y = np.concatenate([np.asarray(x, dtype=float) for x in outputs])
        scale_u = float(np.std(u))
        scale_y = float(np.std(y))
        return Normalization(float(np.mean(y)), scale_y if scale_y > 0.0 else 1.0,
            float(np.mean(u)), scale_u if scale_u > 0.0 else 1.0)

@dataclass(frozen=True)
class SelectionStep:
    """ one accepted structure step; term is None for the degree-1 start """
    step: int
    term: object
    name: str
    loco_rmse: float
    one_step_rmse: float

    HEADER = ('step', 'term_index', 'term', 'loco_free_run_rmse', 'one_step_rmse')

    def to_csv_row(self):
        return [self.step, -1 if self.term is None else self.term, self.name, self.loco_rmse, self.one_step_rmse]

@dataclass(frozen=True)
class NarxModel:
    """ an identified polynomial NARX model

        terms holds one exponent vector per monomial over the regressors
        (y(k-1) .. y(k-n_a), u(k) .. u(k-n_b+1)); coefficients act on the
        normalized target.
    """
    output_lags: int
    input_lags: int
    sampling_interval: float
    terms: Tuple[Tuple[int, ...], ...]
    coefficients: Tuple[float, ...]
    normalization: Normalization = Normalization()
    output_range: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(tuple(int(e) for e in term) for term in self.terms))
        object.__setattr__(self, 'coefficients', tuple(float(c) for c in self.coefficients))
        if self.output_lags < 1 or self.input_lags < 1:
            raise ValueError('lag counts must be at least 1')
        if len(self.terms) != len(self.coefficients):
            raise ValueError('%d terms but %d coefficients' % (len(self.terms), len(self.coefficients)))
        n_reg = self.output_lags + self.input_lags
        for term in self.terms:
            if len(term) != n_reg or min(term) < 0:
                raise ValueError('term %r does not fit %d regressors' % (term, n_reg))
        if not self.sampling_interval > 0.0:
            raise ValueError('sampling interval must be positive')

    @property
    def max_lag(self):
        return max(self.output_lags, self.input_lags - 1)

    @property
    def degree(self):
        return max(sum(term) for term in self.terms) if len(self.terms) > 0 else 0

    def powers(self):
        return np.array(self.terms, dtype=int).reshape(len(self.terms), self.output_lags + self.input_lags)

    def term_names(self):
        return [term_name(term, self.output_lags) for term in self.terms]

    def linear_coefficients(self):
        """ physical-unit ARX form of a degree-1 model

            Returns
            -------
                dict
                    'intercept', 'a' (a_i on y(k-i)) and 'b' (b_j on u(k-j))
                    with y(k) = intercept + sum a_i y(k-i) + sum b_j u(k-j)

            Raises
            ------
                IdentificationError
                    If the model has a term of degree above 1
        """
        if self.degree > 1:
            raise IdentificationError('linear coefficients need a degree-1 model, this one has degree %d' % self.degree)
        norm = self.normalization
        theta0 = 0.0
        a = np.zeros(self.output_lags)
        b = np.zeros(self.input_lags)
        for term, coef in zip(self.terms, self.coefficients):
            if sum(term) == 0:
                theta0 += coef
                continue
            i = term.index(1)
            if i < self.output_lags:
                a[i] += coef
            else:
                b[i - self.output_lags] += coef * norm.scale_y / norm.scale_u
        intercept = norm.center_y + norm.scale_y * theta0 - a.sum() * norm.center_y - b.sum() * norm.center_u
        return {'intercept': float(intercept), 'a': [float(x) for x in a], 'b': [float(x) for x in b]}

    def selection_trace(self):
        return [SelectionStep(*row) for row in self.metadata.get('selection', [])]

    def describe(self):
        lines = ['NARX model: n_a = %d, n_b = %d, degree %d, %d terms, dt = %r s' % (
            self.output_lags, self.input_lags, self.degree, len(self.terms), self.sampling_interval)]
        for name, coef in zip(self.term_names(), self.coefficients):
            lines.append('  %+.10e  %s' % (coef, name))
        return '\n'.join(lines)

def term_name(term, output_lags):
    factors = []
    for i, exponent in enumerate(term):
        if exponent == 0:
            continue
        label = 'y[k-%d]' % (i + 1) if i < output_lags else ('u[k]' if i == output_lags else 'u[k-%d]' % (i - output_lags))
        factors.append(label if exponent == 1 else '%s^%d' % (label, exponent))
    return '*'.join(factors) if len(factors) > 0 else '1'

def candidate_terms(output_lags, input_lags, max_degree):
    """ every monomial of total degree <= max_degree over the regressors,
    in graded order (constant, degree 1, degree 2, ...) """
    poly = PolynomialFeatures(degree=max_degree, include_bias=True)
    poly.fit(np.zeros((1, output_lags + input_lags)))
    return [tuple(int(e) for e in row) for row in poly.powers_]

class TrainingSet(object):
    """ co-sampled (input, output) signal pairs """

    def __init__(self, pairs, case_ids=None):
        """ TrainingSet constructor

            Parameters
            ----------
                pairs : list
                    (input Signal, output Signal) tuples
                case_ids : list
                    One identifier per pair; defaults to case-0, case-1, ...

            Raises
            ------
                IdentificationError
                    For an empty list or pairs that are not co-sampled
        """
        self.pairs = list(pairs)
        if len(self.pairs) == 0:
            raise IdentificationError('a training set needs at least one case')
        self.case_ids = list(case_ids) if case_ids is not None else ['case-%d' % i for i in range(len(self.pairs))]
        if len(self.case_ids) != len(self.pairs):
            raise IdentificationError('%d case ids for %d pairs' % (len(self.case_ids), len(self.pairs)))
        dt = self.pairs[0][0].dt
        for case_id, (u, y) in zip(self.case_ids, self.pairs):
            if len(u) != len(y) or u.dt != y.dt:
                raise IdentificationError('case %s: input and output are not co-sampled' % case_id)
            if abs(u.dt - dt) > 1e-9 * dt:
                raise IdentificationError('case %s: sampling interval %r s differs from %r s' % (case_id, u.dt, dt))
        self.sampling_interval = dt

    def __len__(self):
        return len(self.pairs)

    def subset(self, indices):
        return TrainingSet([self.pairs[i] for i in indices], [self.case_ids[i] for i in indices])

    @staticmethod
    def from_probes(path, sampling_interval=None, input_column='T_oven_K', output_column='T_core_K'):
        """ (input, output) pair from a probes CSV, resampled to
        sampling_interval when given """
        columns, _ = read_columns(path)
        times = np.array(columns['t_s'])
        u = np.array(columns[input_column])
        y = np.array(columns[output_column])
        if sampling_interval is None:
            dt = float(times[1] - times[0])
        else:
            dt = float(sampling_interval)
            n = int(math.floor((times[-1] - times[0]) / dt + 1e-9)) + 1
            grid = times[0] + dt * np.arange(n)
            u = resample(times, u, grid)
            y = resample(times, y, grid)
        return Signal(u, dt, input_column), Signal(y, dt, output_column)

    @staticmethod
    def from_manifest(path, sampling_interval=None):
        """ load the cases listed by a training manifest

            The manifest is a JSON object mapping case id to a probes CSV;
            relative paths are resolved against the manifest's directory.
        """
        with open(path, 'r') as infile:
            manifest = json.load(infile)
        cases = manifest.get('cases', manifest)
        directory = os.path.dirname(os.path.abspath(path))
        pairs = []
        case_ids = []
        for case_id in sorted(cases):
            probes_path = cases[case_id]
            if not os.path.isabs(probes_path):
                probes_path = os.path.join(directory, probes_path)
            pairs.append(TrainingSet.from_probes(probes_path, sampling_interval))
            case_ids.append(case_id)
        return TrainingSet(pairs, case_ids)

def _as_array(series):
    return np.asarray(series.values if isinstance(series, Signal) else series, dtype=float)

def _features(X, powers):
    """ evaluate the monomials of powers on the regressor rows X """
    F = np.ones((X.shape[0], len(powers)))
    for j, exponents in enumerate(powers):
        for i in np.flatnonzero(exponents):
            F[:, j] *= X[:, i] ** exponents[i]
    return F

def _lagged(u, y, output_lags, input_lags):
    """ raw regressor rows and targets for k = max_lag .. N-1 """
    max_lag = max(output_lags, input_lags - 1)
    n = y.size
    rows = n - max_lag
    X = np.empty((rows, output_lags + input_lags))
    for i in range(output_lags):
        X[:, i] = y[max_lag - 1 - i:n - 1 - i]
    for j in range(input_lags):
        X[:, output_lags + j] = u[max_lag - j:n - j]
    return X, y[max_lag:]

def build_regressors(pair, output_lags, input_lags, basis, normalization=None):
    """ design matrix and targets of one co-sampled series pair

        Parameters
        ----------
            pair : tuple
                (input, output) as Signals or arrays of equal length
            output_lags : int
                n_a
            input_lags : int
                n_b
            basis : list
                Exponent vectors of length n_a + n_b
            normalization : Normalization
                Identity when None

        Returns
        -------
            tuple
                (X, y): one row per predictable sample k = max_lag .. N-1,
                with the normalized target y(k)

        Raises
        ------
            IdentificationError
                If the series is not longer than max(n_a, n_b)
    """
    norm = normalization or Normalization()
    u = (_as_array(pair[0]) - norm.center_u) / norm.scale_u
    y = (_as_array(pair[1]) - norm.center_y) / norm.scale_y
    if u.size != y.size:
        raise IdentificationError('input and output lengths differ: %d and %d' % (u.size, y.size))
    if y.size <= max(output_lags, input_lags):
        raise IdentificationError('series of %d samples is too short for n_a = %d, n_b = %d'
            % (y.size, output_lags, input_lags))
    X, target = _lagged(u, y, output_lags, input_lags)
    return _features(X, np.array(basis, dtype=int).reshape(len(basis), output_lags + input_lags)), target

def _least_squares(X, y, config):
    """ coefficients and whether the ridge fallback was used """
    if config.ridge > 0.0:
        estimator = Ridge(alpha=config.ridge, fit_intercept=False, solver='cholesky')
        return estimator.fit(X, y).coef_.copy(), False
    condition = np.linalg.cond(X.T @ X)
    if not condition <= settings._CONDITION_LIMIT:
        logging.warning('normal equations ill-conditioned (cond %.3g), ridge fallback %g', condition, config.ridge_fallback)
        estimator = Ridge(alpha=config.ridge_fallback, fit_intercept=False, solver='cholesky')
        return estimator.fit(X, y).coef_.copy(), True
    return LinearRegression(fit_intercept=False).fit(X, y).coef_.copy(), False

def _run(powers, theta, u_n, y_init_n, output_lags, input_lags, limit):
    """ recursive simulation in normalized units """
    n = u_n.size
    k0 = y_init_n.size
    y_n = np.empty(n)
    y_n[:k0] = y_init_n
    x = np.empty(output_lags + input_lags)
    for k in range(k0, n):
        x[:output_lags] = y_n[k - output_lags:k][::-1]
        x[output_lags:] = u_n[k - input_lags + 1:k + 1][::-1]
        value = float(np.prod(x ** powers, axis=1) @ theta)
        if not abs(value) <= limit:
            raise DivergenceError('free run diverged (normalized output %r)' % value, k)
        y_n[k] = value
    return y_n

def free_run(model, input, y_init):
    """ open-loop simulation feeding back the model's own outputs

        Parameters
        ----------
            model : NarxModel
            input : Signal
                Input co-sampled at the model's sampling interval
            y_init : array-like
                Warmup outputs; the first max_lag samples seed the lags and
                are copied to the output

        Returns
        -------
            Signal
                Same length as input

        Raises
        ------
            DivergenceError
                On NaN or once the output leaves the center of the training
                data by more than ten training output ranges
    """
    u = _as_array(input)
    y_init = _as_array(y_init)
    k0 = model.max_lag
    if y_init.size < k0:
        raise IdentificationError('warmup of %d samples, the model needs %d' % (y_init.size, k0))
    if u.size < k0:
        raise IdentificationError('input of %d samples is shorter than the warmup' % u.size)
    if isinstance(input, Signal) and abs(input.dt - model.sampling_interval) > 1e-9 * model.sampling_interval:
        raise IdentificationError('input sampled at %r s, model at %r s' % (input.dt, model.sampling_interval))
    norm = model.normalization
    limit = math.inf
    if model.output_range > 0.0:
        limit = settings._DIVERGENCE_FACTOR * model.output_range / norm.scale_y
    y_n = _run(model.powers(), np.array(model.coefficients), (u - norm.center_u) / norm.scale_u,
        (y_init[:k0] - norm.center_y) / norm.scale_y, model.output_lags, model.input_lags, limit)
    y = norm.center_y + norm.scale_y * y_n
    y[:k0] = y_init[:k0]
    return Signal(y, model.sampling_interval, 'y')

def one_step(model, pair):
    """ one-step-ahead predictions from measured lags; the first max_lag
    samples are the measurements themselves """
    norm = model.normalization
    X, _ = build_regressors(pair, model.output_lags, model.input_lags, model.terms, norm)
    y = _as_array(pair[1]).copy()
    y[model.max_lag:] = norm.center_y + norm.scale_y * (X @ np.array(model.coefficients))
    return Signal(y, model.sampling_interval, 'y')

class _Fitter(object):
    """ design matrices of every candidate term, per case """

    def __init__(self, training, config):
        self.training = training
        self.config = config
        self.terms = candidate_terms(config.output_lags, config.input_lags, config.max_degree)
        inputs = [_as_array(u) for u, _ in training.pairs]
        outputs = [_as_array(y) for _, y in training.pairs]
        self.normalization = Normalization.fit(inputs, outputs)
        y_all = np.concatenate(outputs)
        self.output_range = float(np.max(y_all) - np.min(y_all)) or 1.0
        self.designs = [build_regressors(pair, config.output_lags, config.input_lags, self.terms, self.normalization)
            for pair in training.pairs]
        self.ridge_fallback_used = False

    def coefficients(self, selected, cases):
        X = np.vstack([self.designs[c][0][:, selected] for c in cases])
        y = np.concatenate([self.designs[c][1] for c in cases])
        theta, fell_back = _least_squares(X, y, self.config)
        if not np.all(np.isfinite(theta)):
            raise IdentificationError('least squares produced non-finite coefficients')
        self.ridge_fallback_used = self.ridge_fallback_used or fell_back
        return theta

    def model(self, selected, theta, metadata=None):
        return NarxModel(self.config.output_lags, self.config.input_lags, self.training.sampling_interval,
            tuple(self.terms[j] for j in selected), tuple(theta), self.normalization, self.output_range,
            metadata or {})

    def one_step_rmse(self, selected, theta=None, cases=None):
        """ one-step RMSE in output units over the given cases """
        cases = range(len(self.designs)) if cases is None else cases
        theta = self.coefficients(selected, cases) if theta is None else theta
        residuals = np.concatenate([self.designs[c][0][:, selected] @ theta - self.designs[c][1] for c in cases])
        return float(np.sqrt(np.mean(residuals ** 2)) * self.normalization.scale_y)

    def loco_rmse(self, selected):
        """ mean free-run RMSE over held-out cases (in-sample with one case) """
        n_cases = len(self.designs)
        folds = [[c] for c in range(n_cases)]
        scores = []
        for held_out in folds:
            train = [c for c in range(n_cases) if c not in held_out] or held_out
            theta = self.coefficients(selected, train)
            model = self.model(selected, theta)
            for c in held_out:
                u, y = self.training.pairs[c]
                try:
                    prediction = free_run(model, u, _as_array(y))
                except DivergenceError as e:
                    logging.debug('candidate %r diverged on case %s: %s', selected[-1], self.training.case_ids[c], e)
                    return math.inf
                k0 = model.max_lag
                scores.append(rmse(_as_array(y)[k0:], prediction.values[k0:]))
        return float(np.mean(scores))

def fit(training, config=None):
    """ identify a polynomial NARX model by greedy forward selection

        Parameters
        ----------
            training : TrainingSet
            config : SysidConfig

        Returns
        -------
            NarxModel
                Fitted on every training case; metadata records the
                training case ids, fit timestamp, format version, the
                one-step training RMSE, whether the ridge fallback was
                needed, and the selection trace

        Raises
        ------
            IdentificationError
                If the data cannot support the regressors or the fit is
                not finite
    """
    config = (config or SysidConfig()).validate()
    if not isinstance(training, TrainingSet):
        training = TrainingSet(training)
    fitter = _Fitter(training, config)
    degrees = [sum(term) for term in fitter.terms]
    selected = [j for j, d in enumerate(degrees) if d <= 1]
    candidates = [j for j, d in enumerate(degrees) if d > 1]
    y_floor = 1e-9 * fitter.normalization.scale_y

    current = fitter.loco_rmse(selected)
    trace = [SelectionStep(0, None, 'degree-1 terms', current, fitter.one_step_rmse(selected))]
    logging.info('linear start: %d terms, leave-one-case-out RMSE %.6g', len(selected), current)
    while len(candidates) > 0 and len(trace) - 1 < config.selection_budget and current > y_floor:
        ranked = candidates
        if config.shortlist > 0:
            ranked = sorted(candidates, key=lambda j: (fitter.one_step_rmse(selected + [j]), j))
            ranked = sorted(ranked[:config.shortlist])
        best, best_score = None, math.inf
        for j in ranked:
            score = fitter.loco_rmse(selected + [j])
            if score < best_score:
                best, best_score = j, score
        if best is None:
            break
        gain = 1.0 if not math.isfinite(current) else (current - best_score) / current
        if gain < config.min_improvement:
            break
        selected.append(best)
        candidates.remove(best)
        current = best_score
        trace.append(SelectionStep(len(trace), best, term_name(fitter.terms[best], config.output_lags),
            current, fitter.one_step_rmse(selected)))
        logging.info('added %s: leave-one-case-out RMSE %.6g', trace[-1].name, current)

    theta = fitter.coefficients(selected, range(len(training)))
    one_step_error = fitter.one_step_rmse(selected, theta)
    metadata = {
        'training_cases': list(training.case_ids),
        'fit_timestamp': settings._FIT_TIMESTAMP,
        'format_version': settings._MODEL_FORMAT_VERSION,
        'one_step_rmse': one_step_error,
        'ridge': config.ridge,
        'ridge_fallback_used': fitter.ridge_fallback_used,
        'selection': [[s.step, s.term, s.name, s.loco_rmse, s.one_step_rmse] for s in trace],
    }
    if fitter.ridge_fallback_used:
        metadata['warning'] = 'ill-conditioned normal equations, ridge %g applied' % config.ridge_fallback
    return fitter.model(selected, theta, metadata)

def fit_linear(training, config=None):
    """ the linear (degree-1) baseline: fit with max_degree = 1 """
    config = config or SysidConfig()
    return fit(training, dataclasses.replace(config, max_degree=1))

def evaluate(model, cases):
    """ free-run every case and compare with its measured output

        Returns
        -------
            list
                One ErrorReport per case, labeled with the case id, over the
                samples after the warmup

        Raises
        ------
            IdentificationError
                For an empty case list
            DivergenceError
                If a free run diverges
    """
    if not isinstance(cases, TrainingSet):
        cases = TrainingSet(cases)
    reports = []
    k0 = model.max_lag
    for case_id, (u, y) in zip(cases.case_ids, cases.pairs):
        prediction = free_run(model, u, _as_array(y))
        reports.append(error_report(_as_array(y)[k0:], prediction.values[k0:], label=case_id))
    return reports

def selection_table(model):
    table = CsvTable(SelectionStep.HEADER)
    for step in model.selection_trace():
        table.append(step.to_csv_row())
    return table
