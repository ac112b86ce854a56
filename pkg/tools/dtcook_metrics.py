"""Error measures between a reference series R and a forecast F.

mape uses the symmetric denominator |R+F|/2, so both measures are symmetric
under exchange of R and F. Series must be co-sampled; use resample first
when they are not.
"""
import logging
from dataclasses import dataclass

import numpy as np

from tools.csv_helpers import CsvTable

class MetricDomainError(ValueError):
    """ custom exception that is thrown when an error measure is undefined
    for the given series """
    def __init__(self, message, index=None, *args, **kwargs):
        """ MetricDomainError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                index : int
                    The offending sample index, or None
        """
        self.index = index
        super(MetricDomainError, self).__init__(message)

def _pair(reference, forecast):
    reference = np.asarray(reference, dtype=float).ravel()
    forecast = np.asarray(forecast, dtype=float).ravel()
    if reference.size != forecast.size:
        raise MetricDomainError('length mismatch: reference has %d samples, forecast %d'
            % (reference.size, forecast.size))
    if reference.size < 1:
        raise MetricDomainError('at least one sample is required')
    return reference, forecast

def _relative_errors(reference, forecast):
    denominator = 0.5 * np.abs(reference + forecast)
    zero = denominator == 0.0
    if np.any(zero):
        i = int(np.argmax(zero))
        raise MetricDomainError('reference + forecast is zero at sample %d' % i, i)
    return np.abs(reference - forecast) / denominator

def mape(reference, forecast):
    """ symmetric mean absolute percentage error, percent

        Parameters
        ----------
            reference : array-like
                Reference series R
            forecast : array-like
                Forecast series F, same length as R

        Returns
        -------
            float
                (100/N) * sum(|R-F| / (|R+F|/2))

        Raises
        ------
            MetricDomainError
                On a length mismatch, an empty series, or a sample with
                R + F = 0 (the index is carried on the exception)
    """
    reference, forecast = _pair(reference, forecast)
    return float(100.0 * np.mean(_relative_errors(reference, forecast)))

def max_ape(reference, forecast):
    """ the largest pointwise symmetric percentage error, percent """
    reference, forecast = _pair(reference, forecast)
    return float(100.0 * np.max(_relative_errors(reference, forecast)))

def rmse(reference, forecast):
    """ root-mean-square error, in the unit of the series """
    reference, forecast = _pair(reference, forecast)
    return float(np.sqrt(np.mean((reference - forecast) ** 2)))

def max_abs_error(reference, forecast):
    reference, forecast = _pair(reference, forecast)
    return float(np.max(np.abs(reference - forecast)))

def resample(times, values, reference_times):
    """ linear interpolation of (times, values) onto reference_times

        Raises
        ------
            MetricDomainError
                If a reference time lies outside the sampled span
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    reference_times = np.asarray(reference_times, dtype=float)
    if times.size != values.size or times.size < 1:
        raise MetricDomainError('times and values must be nonempty and of equal length')
    if np.any(np.diff(times) <= 0.0):
        raise MetricDomainError('sample times must be strictly increasing')
    slack = 1e-9 * max(1.0, abs(times[-1]))
    outside = (reference_times < times[0] - slack) | (reference_times > times[-1] + slack)
    if np.any(outside):
        i = int(np.argmax(outside))
        raise MetricDomainError('reference time %r outside the sampled span' % reference_times[i], i)
    return np.interp(reference_times, times, values)

@dataclass(frozen=True)
class ErrorReport:
    """ error summary of one forecast against its reference """
    mape: float
    rmse: float
    max_abs_error: float
    n_samples: int
    max_ape: float = 0.0
    label: str = ''

    HEADER = ('label', 'n_samples', 'mape_pct', 'max_ape_pct', 'rmse', 'max_abs_error')

    def to_csv_row(self):
        return [self.label, self.n_samples, self.mape, self.max_ape, self.rmse, self.max_abs_error]

    def to_text(self):
        return '%-12s n=%-6d MAPE=%.4f%%  maxAPE=%.4f%%  RMSE=%.4g  max|e|=%.4g' % (
            self.label or '-', self.n_samples, self.mape, self.max_ape, self.rmse, self.max_abs_error)

def error_report(reference, forecast, label=''):
    """ build the ErrorReport of a co-sampled (reference, forecast) pair """
    reference, forecast = _pair(reference, forecast)
    report = ErrorReport(
        mape=mape(reference, forecast),
        rmse=rmse(reference, forecast),
        max_abs_error=max_abs_error(reference, forecast),
        n_samples=int(reference.size),
        max_ape=max_ape(reference, forecast),
        label=label)
    logging.debug('error report %s', report.to_text())
    return report

def aggregate(reports, label='worst'):
    """ combine per-case reports

        label 'worst' takes the maximum of every measure, 'mean' the per-case
        mean of mape and rmse (each case weighs the same).
    """
    reports = list(reports)
    if len(reports) == 0:
        raise MetricDomainError('no reports to aggregate')
    n_total = sum(r.n_samples for r in reports)
    if label == 'worst':
        return ErrorReport(
            mape=max(r.mape for r in reports),
            rmse=max(r.rmse for r in reports),
            max_abs_error=max(r.max_abs_error for r in reports),
            n_samples=n_total,
            max_ape=max(r.max_ape for r in reports),
            label=label)
    if label == 'mean':
        return ErrorReport(
            mape=float(np.mean([r.mape for r in reports])),
            rmse=float(np.mean([r.rmse for r in reports])),
            max_abs_error=max(r.max_abs_error for r in reports),
            n_samples=n_total,
            max_ape=max(r.max_ape for r in reports),
            label=label)
    raise ValueError('unknown aggregate %r' % label)

def reports_table(reports):
    """ a CsvTable with one row per report """
    table = CsvTable(ErrorReport.HEADER)
    for report in reports:
        table.append(report.to_csv_row())
    return table
