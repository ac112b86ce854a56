"""Runtime of an identified model: the .dtrom model file, timed open-loop
prediction, scenario fan-out and the speedup benchmark against the
full-order model.

A .dtrom file is text:

    DTROM <format version>
    sha256 <hex digest of the payload>
    <payload: canonical JSON, sorted keys>

Floats are written with repr, so coefficients survive a round trip exactly.
"""
import collections
import hashlib
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from conf import settings
from records.model_file import ModelFileType
from records.record import InvalidDocument
from tools.csv_helpers import CsvTable, atomic_write_text
from tools.dtcook_excite import Signal, constant_signal, sample
from tools.dtcook_metrics import error_report
from tools.dtcook_sysid import DivergenceError, NarxModel, Normalization, free_run

_MAGIC = 'DTROM'

class ModelFileError(Exception):
    """ custom exception that is thrown when a model file cannot be
    imported """
    def __init__(self, message, path=None, *args, **kwargs):
        """ ModelFileError constructor

            Parameters
            ----------
                message : str
                    A descriptive message of the error
                path : str
                    The offending file
        """
        self.path = path
        if path is not None:
            message = '%s: %s' % (path, message)
        super(ModelFileError, self).__init__(message)

class ModelVersionError(ModelFileError):
    """ the file declares a format version this program does not read """
    def __init__(self, found, expected, path=None, *args, **kwargs):
        self.found = found
        self.expected = expected
        super(ModelVersionError, self).__init__(
            'model format version %s is not supported (expected %s)' % (found, expected), path)

class ModelChecksumError(ModelFileError):
    """ the payload does not match its recorded checksum (corrupt or
    truncated file) """

class ModelParseError(ModelFileError):
    """ the payload is not a valid model document """

ModelFile = collections.namedtuple('ModelFile', ['path', 'version', 'checksum'])

def model_payload(model):
    """ the JSON-ready payload of a NarxModel """
    norm = model.normalization
    return {
        'output_lags': model.output_lags,
        'input_lags': model.input_lags,
        'sampling_interval_s': model.sampling_interval,
        'terms': [list(term) for term in model.terms],
        'coefficients': list(model.coefficients),
        'normalization': {
            'center_y': norm.center_y,
            'scale_y': norm.scale_y,
            'center_u': norm.center_u,
            'scale_u': norm.scale_u,
        },
        'output_range': model.output_range,
        'metadata': model.metadata,
    }

def model_from_payload(payload, path=None):
    """ validate a payload against ModelFileType and build the model

        Raises
        ------
            ModelParseError
                For a payload that breaks the schema or the model invariants
    """
    try:
        fields = ModelFileType(payload, source=path).normalized()
        norm = fields['normalization']
        return NarxModel(
            output_lags=fields['output_lags'],
            input_lags=fields['input_lags'],
            sampling_interval=float(fields['sampling_interval_s']),
            terms=fields['terms'],
            coefficients=fields['coefficients'],
            normalization=Normalization(float(norm['center_y']), float(norm['scale_y']),
                float(norm['center_u']), float(norm['scale_u'])),
            output_range=float(fields['output_range']),
            metadata=json.loads(json.dumps(fields['metadata'])))
    except (InvalidDocument, ValueError, TypeError) as e:
        raise ModelParseError('invalid model payload (%s)' % e, path)

def encode_model(model, version=None):
    """ the full text of a model file """
    version = settings._MODEL_FORMAT_VERSION if version is None else version
    payload = json.dumps(model_payload(model), sort_keys=True) + '\n'
    digest = hashlib.sha256(payload.encode('utf-8')).hexdigest()
    return '%s %d\nsha256 %s\n%s' % (_MAGIC, version, digest, payload)

def _header_prefix(line):
    magic, _, version = line.partition(' ')
    return _MAGIC.startswith(magic) and (version == '' or version.isdigit())

def decode_model(text, path=None):
    """ parse model file text; version, checksum and payload are checked in
    that order, each failure with its own ModelFileError subclass """
    lines = text.split('\n', 2)
    if len(lines) == 1 and _header_prefix(lines[0]):
        raise ModelChecksumError('file ends inside its header line (truncated file?)', path)
    header = lines[0].split()
    if len(header) != 2 or header[0] != _MAGIC:
        raise ModelParseError('not a model file (header %r)' % lines[0][:40], path)
    try:
        version = int(header[1])
    except ValueError:
        raise ModelParseError('unreadable format version %r' % header[1], path)
    if version != settings._MODEL_FORMAT_VERSION:
        raise ModelVersionError(version, settings._MODEL_FORMAT_VERSION, path)
    if len(lines) < 3 or not lines[1].startswith('sha256 '):
        raise ModelChecksumError('checksum line or payload missing (truncated file?)', path)
    expected = lines[1][len('sha256 '):].strip()
    payload = lines[2]
    if hashlib.sha256(payload.encode('utf-8')).hexdigest() != expected:
        raise ModelChecksumError('payload does not match its checksum', path)
    try:
        document = json.loads(payload)
    except ValueError as e:
        raise ModelParseError('payload is not JSON (%s)' % e, path)
    return model_from_payload(document, path)

def export_model(model, path):
    """ write model to path (atomically)

        Returns
        -------
            ModelFile
                The path, format version and payload checksum written
    """
    text = encode_model(model)
    atomic_write_text(path, text)
    checksum = text.split('\n', 2)[1].split()[1]
    logging.info('exported model with %d terms to %s', len(model.terms), path)
    return ModelFile(path, settings._MODEL_FORMAT_VERSION, checksum)

def import_model(path):
    """ read a model file

        Raises
        ------
            ModelVersionError
                For an unknown format version, naming found and expected
            ModelChecksumError
                For a corrupt or truncated file
            ModelParseError
                For a file that is not a valid model document
    """
    try:
        with open(path, 'r', newline='') as infile:
            text = infile.read()
    except UnicodeDecodeError as e:
        raise ModelParseError('not a text file (%s)' % e, path)
    return decode_model(text, path)

@dataclass(frozen=True)
class BenchReport:
    """ timing of open-loop predictions

        wall_time is the median wall-clock time of one prediction over
        `repetitions` timed runs after one warm-up run, measured with
        time.perf_counter. speedup = horizon / wall_time.
    """
    horizon: float
    wall_time: float
    speedup: float
    predictions_per_minute_1h: float
    steps: int
    n_predictions: int = 1
    repetitions: int = settings._BENCH_REPETITIONS
    fom_wall_time: Optional[float] = None
    speedup_vs_fom: Optional[float] = None
    failed: tuple = ()
    label: str = 'rom'

    HEADER = ('label', 'horizon_s', 'steps', 'n_predictions', 'repetitions', 'wall_time_s',
        'speedup_vs_realtime', 'time_per_1h_prediction_s', 'predictions_per_minute_1h',
        'fom_wall_time_s', 'speedup_vs_fom', 'failed')

    def __post_init__(self):
        if not (self.horizon > 0.0 and self.wall_time > 0.0 and self.speedup > 0.0
                and self.predictions_per_minute_1h > 0.0):
            raise ValueError('bench report quantities must be positive')

    @staticmethod
    def measure(horizon, wall_time, steps, **kwargs):
        """ build a report from a per-prediction wall time """
        if not horizon > 0.0:
            raise ValueError('bench horizon must be positive, got %r s' % horizon)
        wall_time = max(wall_time, 1e-9)
        time_per_hour = wall_time / horizon * 3600.0
        return BenchReport(horizon=horizon, wall_time=wall_time, speedup=horizon / wall_time,
            predictions_per_minute_1h=60.0 / time_per_hour, steps=steps, **kwargs)

    @property
    def time_per_1h_prediction(self):
        return self.wall_time / self.horizon * 3600.0

    def to_csv_row(self):
        return [self.label, self.horizon, self.steps, self.n_predictions, self.repetitions, self.wall_time,
            self.speedup, self.time_per_1h_prediction, self.predictions_per_minute_1h,
            '' if self.fom_wall_time is None else self.fom_wall_time,
            '' if self.speedup_vs_fom is None else self.speedup_vs_fom,
            ' '.join(str(i) for i in self.failed)]

    def to_csv(self, path):
        table = CsvTable(BenchReport.HEADER)
        table.append(self.to_csv_row())
        return table.write(path)

    def to_text(self):
        lines = [
            'horizon %.6g s (%d steps), %d prediction(s), median of %d runs' % (
                self.horizon, self.steps, self.n_predictions, self.repetitions),
            '  wall time per prediction %.6g s, speedup vs real time %.6g' % (self.wall_time, self.speedup),
            '  time per 1 h prediction %.6g s, %.6g predictions per minute' % (
                self.time_per_1h_prediction, self.predictions_per_minute_1h),
        ]
        if self.fom_wall_time is not None:
            lines.append('  full-order model %.6g s, ROM speedup vs FOM %.6g' % (self.fom_wall_time, self.speedup_vs_fom))
        if len(self.failed) > 0:
            lines.append('  diverged candidates: %s' % ', '.join(str(i) for i in self.failed))
        return '\n'.join(lines)

def timed(function, repetitions=None):
    """ run function once to warm up, then time it repetitions times

        Returns
        -------
            tuple
                (result of the last run, median wall time in s)
    """
    repetitions = repetitions or settings._BENCH_REPETITIONS
    result = function()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        result = function()
        times.append(time.perf_counter() - start)
    return result, statistics.median(times)

def horizon_of(model, input):
    """ the predicted span of input in seconds and in model steps """
    steps = len(input) - 1
    return steps * model.sampling_interval, steps

def predict(model, input, warmup):
    """ open-loop prediction of the core temperature for an oven input;
    identical to sysid.free_run """
    return free_run(model, input, warmup)

def timed_predict(model, input, warmup, repetitions=None):
    """ predict with wall-clock instrumentation

        Returns
        -------
            tuple
                (prediction Signal, BenchReport)
    """
    horizon, steps = horizon_of(model, input)
    if not horizon > 0.0:
        raise ValueError('prediction horizon must be positive')
    prediction, wall_time = timed(lambda: free_run(model, input, warmup), repetitions)
    report = BenchReport.measure(horizon, wall_time, steps, repetitions=repetitions or settings._BENCH_REPETITIONS)
    logging.info('predicted %r s in %.3g s (speedup %.4g)', horizon, report.wall_time, report.speedup)
    return prediction, report

def _fanout_once(model, candidates, warmup, workers):
    def run(candidate):
        try:
            return free_run(model, candidate, warmup), None
        except DivergenceError as e:
            return None, e
    if workers <= 1 or len(candidates) <= 1:
        return [run(candidate) for candidate in candidates]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run, candidates))

def scenario_fanout(model, candidates, warmup, workers=None, repetitions=None):
    """ open-loop predictions for several candidate oven inputs

        Candidates may run concurrently; results keep the candidate order.
        A diverging candidate yields None in its slot and is listed in
        report.failed, the others are returned normally.

        Parameters
        ----------
            model : NarxModel
            candidates : list
                Input Signals, all of the same length and sampling interval
            warmup : array-like
                Warmup outputs shared by every candidate
            workers : int
                Threads, settings._WORKERS by default

        Returns
        -------
            tuple
                (list of Signal or None, BenchReport)
    """
    candidates = list(candidates)
    if len(candidates) == 0:
        raise ValueError('scenario fan-out needs at least one candidate')
    for i, candidate in enumerate(candidates):
        if len(candidate) != len(candidates[0]) or candidate.dt != candidates[0].dt:
            raise ValueError('candidate %d is not co-sampled with candidate 0' % i)
    workers = workers or settings._WORKERS
    horizon, steps = horizon_of(model, candidates[0])
    if not horizon > 0.0:
        raise ValueError('prediction horizon must be positive')
    results, wall_time = timed(lambda: _fanout_once(model, candidates, warmup, workers), repetitions)
    failed = tuple(i for i, (_, error) in enumerate(results) if error is not None)
    for i in failed:
        logging.warning('candidate %d diverged: %s', i, results[i][1])
    report = BenchReport.measure(horizon, wall_time / len(candidates), steps,
        n_predictions=len(candidates), repetitions=repetitions or settings._BENCH_REPETITIONS,
        failed=failed, label='fanout')
    return [output for output, _ in results], report

ScenarioRank = collections.namedtuple('ScenarioRank', ['index', 'temperature', 'distance'])

def select_scenario(results, target_K, deadline_s):
    """ rank fan-out outputs by how close the predicted core temperature at
    deadline_s comes to target_K

        Diverged candidates (None) are left out; ties go to the lower index.

        Returns
        -------
            list
                ScenarioRank tuples, best first
    """
    ranks = []
    for i, output in enumerate(results):
        if output is None:
            continue
        temperature = sample(output, deadline_s)
        ranks.append(ScenarioRank(i, temperature, abs(temperature - target_K)))
    ranks.sort(key=lambda rank: (rank.distance, rank.index))
    return ranks

def bench_speedup(model, case, horizon, input=None, repetitions=None):
    """ time the full-order model and the ROM on the same physical case

        The FOM runs once with its output interval set to the model's
        sampling interval; the ROM is driven by the same oven input and
        warmed up with the FOM's first core temperatures.

        Parameters
        ----------
            model : NarxModel
            case : FomCase
            horizon : float
                Real-time span, s
            input : Signal
                Oven temperature; the case's oven temperature held constant
                by default

        Returns
        -------
            BenchReport
                With fom_wall_time and speedup_vs_fom filled in

        Raises
        ------
            ValueError
                For a horizon that is not positive
    """
    if not horizon > 0.0:
        raise ValueError('bench horizon must be positive, got %r s' % horizon)
    dt = model.sampling_interval
    if input is None:
        T_oven = case.boundary.T_oven
        level = T_oven.values[0] if isinstance(T_oven, Signal) else T_oven
        input = constant_signal(level, horizon, dt)
    fom_case = case.with_boundary(T_oven=input).with_solver(output_interval=dt)
    start = time.perf_counter()
    trajectory = fom_case.run(t_end=horizon)
    fom_wall_time = time.perf_counter() - start
    oven = trajectory.probe_signal('T_oven_K')
    core = trajectory.probe('T_core_K')
    prediction, report = timed_predict(model, oven, core, repetitions)
    k0 = model.max_lag
    agreement = error_report(core[k0:], prediction.values[k0:], label='rom-vs-fom')
    logging.info('bench %s: FOM %.3g s, ROM %.3g s, %s', case.name, fom_wall_time, report.wall_time,
        agreement.to_text())
    return BenchReport.measure(report.horizon, report.wall_time, report.steps,
        repetitions=report.repetitions, fom_wall_time=fom_wall_time,
        speedup_vs_fom=fom_wall_time / max(report.wall_time, 1e-9), label='bench')
