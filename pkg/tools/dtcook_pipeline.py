"""End-to-end reduction: APRBS cases, full-order runs, identification of the
nonlinear and linear models, and their comparison on unseen cases.

Output directory layout:

    cases/<case id>_oven.csv      APRBS oven temperature
    cases/<case id>_probes.csv    FOM probes at the sampling interval
    train_manifest.json           training case id -> probes CSV
    eval_manifest.json            evaluation case id -> probes CSV
    narx.dtrom, linear.dtrom      the identified models
    selection.csv                 term selection trace of the nonlinear fit
    report.txt, report.csv        per-case errors and the linear/nonlinear ratio
    pipeline_manifest.json        seeds, durations and files of the run
"""
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from conf import settings
from tools.csv_helpers import CsvTable, atomic_write_text
from tools.dtcook_excite import AprbsSpec, case_seeds, generate_aprbs
from tools.dtcook_fom import FomCase
from tools.dtcook_metrics import ErrorReport, aggregate
from tools.dtcook_sysid import SysidConfig, TrainingSet, evaluate, fit, fit_linear, selection_table
from tools.dtcook_twin import export_model

class PipelineStageError(Exception):
    """ custom exception that is thrown when a pipeline stage fails """
    def __init__(self, stage, case_id, cause, *args, **kwargs):
        """ PipelineStageError constructor

            Parameters
            ----------
                stage : str
                    The failing stage (excite, fom, fit, evaluate, export)
                case_id : str
                    The case or model being processed, or None
                cause : Exception
                    The original error
        """
        self.stage = stage
        self.case_id = case_id
        self.cause = cause
        message = 'stage %s failed' % stage
        if case_id is not None:
            message += ' for %s' % case_id
        super(PipelineStageError, self).__init__('%s: %s' % (message, cause))

@dataclass(frozen=True)
class PipelineConfig:
    """ a case definition plus the run options that may override it """
    case: object # records.case.CaseDefinition
    output_dir: str = settings._OUTPUT_DIR
    seed: int = settings._SEED
    n_train: int = 4
    n_eval: int = 5
    workers: int = settings._WORKERS

    def validate(self):
        if self.n_train < 1:
            raise ValueError('n_train must be at least 1')
        if self.n_eval < 0:
            raise ValueError('n_eval must be nonnegative')
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError('seed must be an unsigned 64-bit integer')
        return self

    @staticmethod
    def from_case(case, output_dir=None, seed=None, n_train=None, n_eval=None, workers=None):
        section = case.pipeline
        return PipelineConfig(
            case=case,
            output_dir=output_dir or settings._OUTPUT_DIR,
            seed=section.seed if seed is None else seed,
            n_train=section.n_train if n_train is None else n_train,
            n_eval=section.n_eval if n_eval is None else n_eval,
            workers=section.workers if workers is None else workers).validate()

@dataclass(frozen=True)
class ExcitationCase:
    case_id: str
    role: str # 'train' or 'eval'
    seed: int
    duration: float
    oven: object # Signal

def case_duration(seed, duration_min, duration_max, sampling_interval):
    """ a case length drawn uniformly in [duration_min, duration_max],
    rounded to the sampling grid, from its own stream of the case seed """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    duration = rng.uniform(duration_min, duration_max)
    return max(1, int(round(duration / sampling_interval))) * sampling_interval

def excitation_cases(config):
    """ the n_train + n_eval APRBS cases of a run, in order

        Case i takes sub-seed i of the global seed; training cases come
        first, so adding evaluation cases never changes the training set.
    """
    case = config.case
    aprbs = case.aprbs
    dt = case.sysid.sampling_interval
    seeds = case_seeds(config.seed, config.n_train + config.n_eval)
    cases = []
    for i, seed in enumerate(seeds):
        role = 'train' if i < config.n_train else 'eval'
        case_id = '%s-%02d' % (role, i if role == 'train' else i - config.n_train)
        duration = case_duration(seed, aprbs.duration_min, aprbs.duration_max, dt)
        spec = AprbsSpec(aprbs.T_lo, aprbs.T_hi, aprbs.hold, aprbs.f_lo, aprbs.f_hi, duration, seed)
        try:
            oven = generate_aprbs(spec, dt)
        except Exception as e:
            raise PipelineStageError('excite', case_id, e)
        cases.append(ExcitationCase(case_id, role, seed, duration, oven))
    return cases

def run_fom_case(fom_case, t_end):
    """ run one full-order case; module-level so worker processes can
    unpickle it """
    return fom_case.run(t_end=t_end)

def fom_cases(config, cases):
    """ FomCase per excitation case, oven temperature from its APRBS and
    probes sampled at the identification interval """
    base = FomCase.from_definition(config.case)
    dt = config.case.sysid.sampling_interval
    return [base.with_boundary(T_oven=c.oven).with_solver(output_interval=dt).replace(name=c.case_id)
        for c in cases]

def run_fom_cases(config, cases):
    """ run the full-order model for every case, in parallel when
    config.workers > 1; results keep the case order

        Raises
        ------
            PipelineStageError
                Naming the first case (in order) whose run failed
    """
    runs = fom_cases(config, cases)
    trajectories = []
    if config.workers <= 1:
        for c, fom_case in zip(cases, runs):
            logging.info('fom: running %s (%r s)', c.case_id, c.duration)
            try:
                trajectories.append(run_fom_case(fom_case, c.duration))
            except Exception as e:
                raise PipelineStageError('fom', c.case_id, e)
        return trajectories
    with ProcessPoolExecutor(max_workers=config.workers) as executor:
        futures = [executor.submit(run_fom_case, fom_case, c.duration) for c, fom_case in zip(cases, runs)]
        for c, future in zip(cases, futures):
            logging.info('fom: collecting %s', c.case_id)
            try:
                trajectories.append(future.result())
            except Exception as e:
                raise PipelineStageError('fom', c.case_id, e)
    return trajectories

def write_manifest(path, entries, sampling_interval):
    """ case id -> probes CSV, paths relative to the manifest """
    directory = os.path.dirname(os.path.abspath(path))
    cases = {case_id: os.path.relpath(os.path.abspath(p), directory) for case_id, p in entries}
    text = json.dumps({'sampling_interval_s': sampling_interval, 'cases': cases}, sort_keys=True, indent=2)
    atomic_write_text(path, text + '\n')
    return path

@dataclass(frozen=True)
class ComparisonReport:
    """ free-run errors of the nonlinear and linear models on the evaluation
    cases """
    nonlinear: tuple
    linear: tuple
    training_one_step_rmse: float
    linear_training_one_step_rmse: float
    n_terms: int

    @property
    def rmse_ratio(self):
        """ mean linear RMSE over mean nonlinear RMSE """
        nonlinear = aggregate(self.nonlinear, 'mean').rmse
        linear = aggregate(self.linear, 'mean').rmse
        if nonlinear == 0.0:
            return float('inf')
        return linear / nonlinear

    def table(self):
        table = CsvTable(('model',) + ErrorReport.HEADER)
        for name, reports in [('narx', self.nonlinear), ('linear', self.linear)]:
            for report in list(reports) + [aggregate(reports, 'mean'), aggregate(reports, 'worst')]:
                table.append([name] + report.to_csv_row())
        return table

    def to_text(self):
        lines = [
            'nonlinear model: %d terms, one-step training RMSE %.4g K' % (self.n_terms, self.training_one_step_rmse),
            'linear model: one-step training RMSE %.4g K' % self.linear_training_one_step_rmse,
            '',
            'free-run errors on unseen cases',
        ]
        for name, reports in [('narx', self.nonlinear), ('linear', self.linear)]:
            lines.append('[%s]' % name)
            for report in list(reports) + [aggregate(reports, 'mean'), aggregate(reports, 'worst')]:
                lines.append('  ' + report.to_text())
        lines.append('')
        lines.append('linear/nonlinear mean RMSE ratio: %.4g' % self.rmse_ratio)
        return '\n'.join(lines) + '\n'

@dataclass(frozen=True)
class PipelineResult:
    model_path: str
    linear_model_path: str
    report: object # ComparisonReport or None without evaluation cases
    files: tuple

def _pairs(trajectories):
    return [(t.probe_signal('T_oven_K'), t.probe_signal('T_core_K')) for t in trajectories]

def run_pipeline(config):
    """ run the whole reduction for config

        Returns
        -------
            PipelineResult

        Raises
        ------
            PipelineStageError
                Naming the failing stage and case (or model) id
    """
    config.validate()
    out = config.output_dir
    dt = config.case.sysid.sampling_interval
    files = []
    logging.info('pipeline: seed %d, %d training and %d evaluation cases', config.seed, config.n_train, config.n_eval)

    cases = excitation_cases(config)
    for c in cases:
        files.append(c.oven.to_csv(os.path.join(out, 'cases', '%s_oven.csv' % c.case_id)))
    trajectories = run_fom_cases(config, cases)
    probe_files = []
    for c, trajectory in zip(cases, trajectories):
        path = trajectory.probes_table().write(os.path.join(out, 'cases', '%s_probes.csv' % c.case_id))
        probe_files.append((c.case_id, path))
        files.append(path)

    train = [i for i, c in enumerate(cases) if c.role == 'train']
    held_out = [i for i, c in enumerate(cases) if c.role == 'eval']
    files.append(write_manifest(os.path.join(out, 'train_manifest.json'), [probe_files[i] for i in train], dt))
    if len(held_out) > 0:
        files.append(write_manifest(os.path.join(out, 'eval_manifest.json'), [probe_files[i] for i in held_out], dt))

    pairs = _pairs(trajectories)
    sysid_config = SysidConfig.from_section(config.case.sysid)
    training = TrainingSet([pairs[i] for i in train], [cases[i].case_id for i in train])
    logging.info('fit: nonlinear model on %s', ', '.join(training.case_ids))
    try:
        model = fit(training, sysid_config)
    except Exception as e:
        raise PipelineStageError('fit', 'narx', e)
    logging.info('fit: linear model')
    try:
        linear = fit_linear(training, sysid_config)
    except Exception as e:
        raise PipelineStageError('fit', 'linear', e)

    model_path = os.path.join(out, 'narx' + settings._MODEL_EXTENSION)
    linear_path = os.path.join(out, 'linear' + settings._MODEL_EXTENSION)
    export_model(model, model_path)
    export_model(linear, linear_path)
    files.extend([model_path, linear_path])
    files.append(selection_table(model).write(os.path.join(out, 'selection.csv')))

    report = None
    if len(held_out) > 0:
        evaluation = TrainingSet([pairs[i] for i in held_out], [cases[i].case_id for i in held_out])
        results = {}
        for name, m in [('narx', model), ('linear', linear)]:
            logging.info('evaluate: %s model', name)
            try:
                results[name] = evaluate(m, evaluation)
            except Exception as e:
                raise PipelineStageError('evaluate', name, e)
        report = ComparisonReport(tuple(results['narx']), tuple(results['linear']),
            model.metadata['one_step_rmse'], linear.metadata['one_step_rmse'], len(model.terms))
        files.append(report.table().write(os.path.join(out, 'report.csv')))
        report_path = os.path.join(out, 'report.txt')
        atomic_write_text(report_path, report.to_text())
        files.append(report_path)

    manifest = {
        'seed': config.seed,
        'sampling_interval_s': dt,
        'cases': [{'case_id': c.case_id, 'role': c.role, 'seed': c.seed, 'duration_s': c.duration}
            for c in cases],
        'files': sorted(os.path.relpath(os.path.abspath(f), os.path.abspath(out)) for f in files),
    }
    manifest_path = os.path.join(out, 'pipeline_manifest.json')
    atomic_write_text(manifest_path, json.dumps(manifest, sort_keys=True, indent=2) + '\n')
    files.append(manifest_path)
    logging.info('pipeline: wrote %d files to %s', len(files), out)
    return PipelineResult(model_path, linear_path, report, tuple(files))
