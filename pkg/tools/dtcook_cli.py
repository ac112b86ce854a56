import argparse
import logging
import os

import numpy as np

from conf import settings
from records.case import load_case
from records.record import InvalidDocument, MissingDocument
from tools.csv_helpers import CsvTable, atomic_write_text
from tools.dtcook_excite import AprbsSpec, ExcitationConfigError, Signal, case_seeds, generate_aprbs
from tools.dtcook_fom import FomCase, NumericalFailure, SolverFailure
from tools.dtcook_material import MaterialDomainError
from tools.dtcook_metrics import MetricDomainError, aggregate, reports_table
from tools.dtcook_pipeline import PipelineConfig, PipelineStageError, run_pipeline
from tools.dtcook_sysid import (DivergenceError, IdentificationError, SysidConfig, TrainingSet,
    evaluate, fit, fit_linear, selection_table)
from tools.dtcook_twin import (BenchReport, ModelFileError, bench_speedup, export_model, import_model,
    scenario_fanout, timed_predict)

def positive_int(value):
    """ argparse type of a count that must be at least 1 """
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not an integer' % value)
    if number < 1:
        raise argparse.ArgumentTypeError('must be at least 1, got %d' % number)
    return number

def seed_value(value):
    """ argparse type of an unsigned 64-bit seed """
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError('%r is not an integer' % value)
    if not 0 <= number < 2 ** 64:
        raise argparse.ArgumentTypeError('seed must be an unsigned 64-bit integer')
    return number

def exit_code(error):
    """ the process exit code of an exception raised by a subcommand """
    if isinstance(error, PipelineStageError):
        return exit_code(error.cause)
    if isinstance(error, DivergenceError):
        return settings._EXIT_DIVERGENCE
    if isinstance(error, IdentificationError):
        return settings._EXIT_IDENTIFICATION
    if isinstance(error, (SolverFailure, NumericalFailure, MaterialDomainError)):
        return settings._EXIT_SOLVER
    if isinstance(error, (InvalidDocument, MissingDocument, ExcitationConfigError, ModelFileError,
            MetricDomainError, ValueError, OSError)):
        return settings._EXIT_CONFIG
    return None

class DtcookCli(object):
    """ Command line tool to simulate a cooking case, identify its reduced
    model and run the model as a digital twin """

    def __init__(self):
        self.parser = argparse.ArgumentParser(description='full-order cooking ' \
            'simulation, NARX model reduction and fast open-loop prediction.')

    @staticmethod
    def add_common_args(parser, config_default=None):
        """ the options every subcommand understands """
        parser.add_argument('-v', '--verbose',
            action="store_true",
            help="verbose output")

        parser.add_argument('-c', '--config',
            default=config_default,
            help='the case definition file (Default: %s)' % (
                os.path.basename(config_default) if config_default else 'none'))

        parser.add_argument('-s', '--seed',
            type=seed_value,
            default=None,
            help='the global seed (Default: from the case file, else %d)' % settings._SEED)

        parser.add_argument('-o', '--out',
            default=settings._OUTPUT_DIR,
            help='the output directory (Default: %s)' % settings._OUTPUT_DIR)

    def add_args(self):
        """ add the subcommands and their arguments to the argparse
        command-line program """
        subparsers = self.parser.add_subparsers(dest='command', metavar='command')
        subparsers.required = True

        simulate = subparsers.add_parser('simulate', help='run the full-order model on a case')
        DtcookCli.add_common_args(simulate, settings._BENCHMARK_CASE_FILE)
        simulate.add_argument('-t', '--t-end', type=float, default=None,
            help='the final time in s (Default: from the case file)')
        simulate.add_argument('-n', '--cells', type=positive_int, default=None,
            help='the number of cells (Default: from the case file)')
        simulate.set_defaults(handler=self.cmd_simulate)

        excite = subparsers.add_parser('excite', help='write an APRBS oven-temperature signal')
        DtcookCli.add_common_args(excite, settings._PIPELINE_CASE_FILE)
        excite.add_argument('-d', '--duration', type=float, default=None,
            help='the signal length in s (Default: aprbs.duration_min_s of the case)')
        excite.add_argument('-i', '--index', type=int, default=0,
            help='the case index whose sub-seed of the global seed is used (Default: 0)')
        excite.set_defaults(handler=self.cmd_excite)

        fit_parser = subparsers.add_parser('fit', help='identify a model from a training manifest')
        DtcookCli.add_common_args(fit_parser, settings._PIPELINE_CASE_FILE)
        fit_parser.add_argument('manifest', help='the training manifest (case id -> probes CSV)')
        fit_parser.add_argument('--linear', action='store_true',
            help='fit the degree-1 baseline instead of the nonlinear model')
        fit_parser.set_defaults(handler=self.cmd_fit)

        evaluate_parser = subparsers.add_parser('evaluate', help='free-run a model on the cases of a manifest')
        DtcookCli.add_common_args(evaluate_parser)
        evaluate_parser.add_argument('model', help='the %s model file' % settings._MODEL_EXTENSION)
        evaluate_parser.add_argument('manifest', help='the evaluation manifest (case id -> probes CSV)')
        evaluate_parser.set_defaults(handler=self.cmd_evaluate)

        predict = subparsers.add_parser('predict', help='predict the core temperature for an oven input')
        DtcookCli.add_common_args(predict)
        predict.add_argument('model', help='the %s model file' % settings._MODEL_EXTENSION)
        predict.add_argument('input', nargs='+',
            help='oven-temperature CSV(s) with a t_s column; several inputs run as a scenario fan-out')
        predict.add_argument('-w', '--warmup', type=float, default=None,
            help='the core temperature before the prediction in K, held over the model warmup '
                '(Default: the first oven-temperature sample of the first input, i.e. the product '
                'starts at the oven temperature)')
        predict.add_argument('--workers', type=positive_int, default=settings._WORKERS,
            help='threads of the scenario fan-out (Default: %d)' % settings._WORKERS)
        predict.set_defaults(handler=self.cmd_predict)

        bench = subparsers.add_parser('bench', help='time the model against the full-order model')
        DtcookCli.add_common_args(bench, settings._BENCHMARK_CASE_FILE)
        bench.add_argument('model', help='the %s model file' % settings._MODEL_EXTENSION)
        bench.add_argument('-t', '--horizon', type=float, default=None,
            help='the predicted span in s (Default: t_end_s of the case)')
        bench.add_argument('-m', '--candidates', type=positive_int, default=1,
            help='APRBS candidates of a scenario fan-out timed after the bench (Default: 1)')
        bench.set_defaults(handler=self.cmd_bench)

        pipeline = subparsers.add_parser('pipeline', help='generate cases, reduce, and compare models')
        DtcookCli.add_common_args(pipeline, settings._PIPELINE_CASE_FILE)
        pipeline.add_argument('--n-train', type=positive_int, default=None,
            help='training cases (Default: from the case file)')
        pipeline.add_argument('--n-eval', type=int, default=None,
            help='evaluation cases (Default: from the case file)')
        pipeline.add_argument('--workers', type=positive_int, default=None,
            help='processes running full-order cases (Default: from the case file)')
        pipeline.set_defaults(handler=self.cmd_pipeline)

    def cmd_simulate(self, args):
        case = FomCase.from_definition(load_case(args.config))
        trajectory = case.run(args.cells, args.t_end)
        trajectory_path, probes_path = trajectory.to_csv(os.path.join(args.out, 'trajectory.csv'),
            os.path.join(args.out, 'probes.csv'), case.material)
        print('wrote %s and %s' % (trajectory_path, probes_path))

    def cmd_excite(self, args):
        case = load_case(args.config)
        aprbs = case.aprbs
        seed = args.seed if args.seed is not None else case.pipeline.seed
        case_seed = case_seeds(seed, 1, offset=args.index)[0]
        duration = args.duration or aprbs.duration_min
        spec = AprbsSpec(aprbs.T_lo, aprbs.T_hi, aprbs.hold, aprbs.f_lo, aprbs.f_hi, duration, case_seed)
        signal = generate_aprbs(spec, case.sysid.sampling_interval)
        path = signal.to_csv(os.path.join(args.out, 'aprbs_%02d.csv' % args.index))
        print('wrote %s (%d samples, seed %d)' % (path, len(signal), case_seed))

    def cmd_fit(self, args):
        case = load_case(args.config)
        training = TrainingSet.from_manifest(args.manifest, case.sysid.sampling_interval)
        config = SysidConfig.from_section(case.sysid)
        model = fit_linear(training, config) if args.linear else fit(training, config)
        name = 'linear' if args.linear else 'narx'
        model_path = export_model(model, os.path.join(args.out, name + settings._MODEL_EXTENSION)).path
        selection_table(model).write(os.path.join(args.out, name + '_selection.csv'))
        text = model.describe() + '\none-step training RMSE %.6g K\n' % model.metadata['one_step_rmse']
        atomic_write_text(os.path.join(args.out, name + '_fit.txt'), text)
        print(text.rstrip())
        print('wrote %s' % model_path)

    def cmd_evaluate(self, args):
        model = import_model(args.model)
        cases = TrainingSet.from_manifest(args.manifest, model.sampling_interval)
        reports = evaluate(model, cases)
        reports_table(reports + [aggregate(reports, 'mean'), aggregate(reports, 'worst')]).write(
            os.path.join(args.out, 'evaluation.csv'))
        for report in reports + [aggregate(reports, 'worst')]:
            print(report.to_text())

    def _warmup(self, model, input, value):
        level = input.values[0] if value is None else value
        if value is None:
            logging.info('no warmup given, holding the first oven sample %r K', level)
        return np.full(model.max_lag, float(level))

    def cmd_predict(self, args):
        model = import_model(args.model)
        inputs = [Signal.from_csv(path) for path in args.input]
        warmup = self._warmup(model, inputs[0], args.warmup)
        if len(inputs) == 1:
            prediction, report = timed_predict(model, inputs[0], warmup)
            outputs = [prediction]
        else:
            outputs, report = scenario_fanout(model, inputs, warmup, args.workers)
        for path, output in zip(args.input, outputs):
            if output is None:
                continue
            name = os.path.splitext(os.path.basename(path))[0]
            Signal(output.values, output.dt, 'T_core_K').to_csv(os.path.join(args.out, name + '_prediction.csv'))
        report.to_csv(os.path.join(args.out, 'predict_bench.csv'))
        print(report.to_text())
        if all(output is None for output in outputs):
            raise DivergenceError('every candidate diverged')

    def cmd_bench(self, args):
        definition = load_case(args.config)
        model = import_model(args.model)
        case = FomCase.from_definition(definition)
        horizon = definition.t_end if args.horizon is None else args.horizon
        report = bench_speedup(model, case, horizon)
        text = report.to_text()
        rows = [report]
        if args.candidates > 1:
            seed = args.seed if args.seed is not None else definition.pipeline.seed
            aprbs = definition.aprbs
            candidates = [generate_aprbs(AprbsSpec(aprbs.T_lo, aprbs.T_hi, aprbs.hold, aprbs.f_lo, aprbs.f_hi,
                horizon, s), model.sampling_interval) for s in case_seeds(seed, args.candidates)]
            warmup = np.full(model.max_lag, definition.initial.T)
            _, fanout = scenario_fanout(model, candidates, warmup)
            text += '\n' + fanout.to_text()
            rows.append(fanout)
        table = CsvTable(BenchReport.HEADER)
        table.extend(row.to_csv_row() for row in rows)
        table.write(os.path.join(args.out, 'bench.csv'))
        atomic_write_text(os.path.join(args.out, 'bench.txt'), text + '\n')
        print(text)

    def cmd_pipeline(self, args):
        case = load_case(args.config)
        config = PipelineConfig.from_case(case, output_dir=args.out, seed=args.seed,
            n_train=args.n_train, n_eval=args.n_eval, workers=args.workers)
        result = run_pipeline(config)
        if result.report is not None:
            print(result.report.to_text().rstrip())
        print('wrote %d files to %s' % (len(result.files), args.out))

    def run(self, *args):
        """ kickoff the program; returns the process exit code """
        self.add_args()

        if len(args) > 0:
            program_args = self.parser.parse_args(args)
        else:
            program_args = self.parser.parse_args()

        logging.basicConfig(format='%(levelname)s %(message)s')
        if program_args.verbose or settings._DEBUG:
            logging.getLogger().setLevel(logging.DEBUG if settings._DEBUG else logging.INFO)

        try:
            program_args.handler(program_args)
        except Exception as e:
            code = exit_code(e)
            if code is None:
                raise
            logging.error('%s: %s', program_args.command, e)
            return code
        return settings._EXIT_OK
