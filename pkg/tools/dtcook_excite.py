"""Amplitude-modulated pseudo-random binary signals with sined transitions.

Used as the oven-temperature excitation of the training cases: random hold
levels, each held at least the minimum hold time, joined by half-cosine
ramps whose frequency models the heating rate of the oven.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from conf import settings
from tools.csv_helpers import CsvTable, read_columns

class ExcitationConfigError(Exception):
    """ custom exception that is thrown when an excitation specification or
    its sampling interval is inconsistent """
    def __init__(self, message, *args, **kwargs):
        """ ExcitationConfigError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
        """
        super(ExcitationConfigError, self).__init__(message)

class SignalDomainError(ValueError):
    """ custom exception that is thrown when a signal is sampled outside its
    time span """
    def __init__(self, message, *args, **kwargs):
        """ SignalDomainError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
        """
        super(SignalDomainError, self).__init__(message)

class Signal(object):
    """ a uniformly sampled time series starting at t = 0 """

    def __init__(self, values, dt, name='value'):
        """ Signal constructor

            Parameters
            ----------
                values : array-like
                    Finite samples at t = 0, dt, 2*dt, ...
                dt : float
                    Sampling interval, s
                name : str
                    Column name used in CSV output
        """
        values = np.array(values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise ValueError('a signal needs a one-dimensional, nonempty sample array')
        if not dt > 0.0:
            raise ValueError('sampling interval must be positive, got %r' % dt)
        if not np.all(np.isfinite(values)):
            raise ValueError('signal %s has non-finite samples' % name)
        values.setflags(write=False)
        self.values = values
        self.dt = float(dt)
        self.name = name

    @property
    def times(self):
        return np.arange(self.values.size) * self.dt

    @property
    def duration(self):
        return (self.values.size - 1) * self.dt

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return (isinstance(other, Signal) and self.dt == other.dt
            and np.array_equal(self.values, other.values))

    def __repr__(self):
        return 'Signal(%s, n=%d, dt=%r)' % (self.name, self.values.size, self.dt)

    def to_csv(self, path):
        table = CsvTable(['t_s', self.name])
        table.extend(zip(self.times, self.values))
        return table.write(path)

    @staticmethod
    def from_csv(path, column=None):
        """ read a signal written by to_csv (or any CSV with a t_s column) """
        columns, header = read_columns(path)
        times = np.array(columns['t_s'])
        name = column or [key for key in header if key != 't_s'][0]
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0.0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-9):
                raise ValueError('%s: samples are not uniformly spaced' % path)
            dt = float(steps[0])
        else:
            dt = 1.0
        return Signal(columns[name], dt, name)

def sample(signal, t):
    """ linear interpolation between stored samples, exact at sample times

        Raises
        ------
            SignalDomainError
                For t outside [0, duration]
    """
    slack = 1e-9 * signal.dt
    if t < -slack or t > signal.duration + slack:
        raise SignalDomainError('t = %r s outside signal span [0, %r] s' % (t, signal.duration))
    return float(np.interp(t, signal.times, signal.values))

def constant_signal(value, duration, dt):
    """ a constant signal covering [0, duration] """
    n = int(math.ceil(duration / dt - 1e-9)) + 1
    return Signal(np.full(n, float(value)), dt)

@dataclass(frozen=True)
class AprbsSpec:
    """ design of one APRBS oven-temperature excitation """
    T_lo: float = settings._APRBS_RANGE[0]
    T_hi: float = settings._APRBS_RANGE[1]
    hold: float = settings._APRBS_HOLD
    f_lo: float = settings._APRBS_FREQUENCY[0]
    f_hi: float = settings._APRBS_FREQUENCY[1]
    duration: float = 10000.0
    seed: int = 0

    def validate(self):
        errors = []
        if not self.T_lo < self.T_hi:
            errors.append('T_lo must be below T_hi')
        if not self.hold >= 0.0:
            errors.append('hold must be nonnegative')
        if not 0.0 < self.f_lo <= self.f_hi:
            errors.append('frequencies must satisfy 0 < f_lo <= f_hi')
        if not self.duration > 0.0:
            errors.append('duration must be positive')
        if not 0 <= self.seed < 2 ** 64:
            errors.append('seed must be an unsigned 64-bit integer')
        if len(errors) > 0:
            raise ExcitationConfigError('invalid APRBS spec: ' + '; '.join(errors))
        return self

def _segments(spec, rng, sampling_dt):
    """ draw the (start, end, from, to) pieces of the signal; holds have
    from == to and end on the sampling grid, ramps are half-cosine
    transitions """
    pieces = []
    t = 0.0
    level = rng.uniform(spec.T_lo, spec.T_hi)
    while True:
        hold = rng.uniform(spec.hold, 2.0 * spec.hold)
        frequency = rng.uniform(spec.f_lo, spec.f_hi)
        ramp = 0.5 / frequency
        hold_end = math.ceil((t + hold) / sampling_dt - 1e-9) * sampling_dt
        # the last hold runs to the end and must still be a full hold
        if hold_end + ramp + spec.hold >= spec.duration:
            break
        target = rng.uniform(spec.T_lo, spec.T_hi)
        pieces.append((t, hold_end, level, level))
        pieces.append((hold_end, hold_end + ramp, level, target))
        t = hold_end + ramp
        level = target
    pieces.append((t, spec.duration, level, level))
    return pieces

def generate_aprbs(spec, sampling_dt):
    """ synthesize the APRBS described by spec

        The stream comes from numpy's PCG64 generator seeded with spec.seed,
        drawn in a fixed order (first level, then per piece: hold, frequency,
        next level), so a spec and seed fully determine the signal.

        Parameters
        ----------
            spec : AprbsSpec
            sampling_dt : float
                Sampling interval, s; at least eight samples must fall in
                the half period of the fastest transition

        Returns
        -------
            Signal
                Samples on [0, duration]

        Raises
        ------
            ExcitationConfigError
                For an invalid spec or a sampling interval too coarse
    """
    spec.validate()
    half_period = 0.5 / spec.f_hi
    if not 0.0 < sampling_dt <= half_period / settings._APRBS_MIN_SAMPLES_PER_HALF_PERIOD:
        raise ExcitationConfigError('sampling interval %r s does not resolve a %r s transition '
            '(needs at least %d samples)' % (sampling_dt, half_period, settings._APRBS_MIN_SAMPLES_PER_HALF_PERIOD))

    rng = np.random.default_rng(spec.seed)
    pieces = _segments(spec, rng, sampling_dt)
    n = int(math.floor(spec.duration / sampling_dt + 1e-9)) + 1
    times = np.arange(n) * sampling_dt
    values = np.empty(n)
    for start, end, v_from, v_to in pieces:
        mask = (times >= start) & (times <= end)
        if v_from == v_to:
            values[mask] = v_from
        else:
            phase = np.pi * (times[mask] - start) / (end - start)
            values[mask] = v_from + (v_to - v_from) * 0.5 * (1.0 - np.cos(phase))
    logging.debug('aprbs seed %d: %d pieces over %r s', spec.seed, len(pieces), spec.duration)
    return Signal(np.clip(values, spec.T_lo, spec.T_hi), sampling_dt, 'T_oven_K')

def hold_levels(spec, sampling_dt):
    """ the hold levels generate_aprbs uses for spec, in order """
    pieces = _segments(spec.validate(), np.random.default_rng(spec.seed), sampling_dt)
    return [v_from for _, _, v_from, v_to in pieces if v_from == v_to]

def case_seeds(global_seed, n, offset=0):
    """ per-case sub-seeds of a global seed

        Case i gets the first 64-bit word of
        SeedSequence(entropy=global_seed, spawn_key=(i,)); the scheme is a
        counter, so case i's seed does not depend on how many cases run.
    """
    seeds = []
    for i in range(offset, offset + n):
        sequence = np.random.SeedSequence(entropy=global_seed, spawn_key=(i,))
        seeds.append(int(sequence.generate_state(1, dtype=np.uint64)[0]))
    return seeds
