"""Command-line front end: ``okl {synth,path,eval,predict,rankscan}``.

Options can also come from a flat ``key=value`` file passed with
``--config``; keys are option names with dashes or underscores. Precedence
is command line, then config file, then built-in default. Every command
writes ``manifest.txt`` with the fully resolved configuration.
"""

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import __version__, data, kernels
from .evaluation import masked_mse, metric_report, select_lambda, write_metrics_csv
from .experiments import METHODS, fit_path, rank_scan
from .persist import ModelFormatError, load_model, save_model
from .solver import A_SOLVERS, GridNotDescending, SolverConfig, default_grid

log = logging.getLogger('okl')


class ConfigError(ValueError):
    pass


def _read_config_file(path):
    values = {}
    with open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError("%s:%d: expected key=value" % (path, lineno))
            k, v = line.split('=', 1)
            values[k.strip().replace('-', '_')] = v.strip()
    return values


def _add_kernel(p):
    p.add_argument('--kernel', choices=kernels.VARIANTS, default='exp_covariance',
                   help="input kernel (default: %(default)s)")
    p.add_argument('--decay', type=float, default=10.0,
                   help="decay of exp_covariance (default: %(default)s)")


def _add_data(p, name, required):
    p.add_argument('--' + name, required=required, default=None,
                   help="%s observations: triplet file (row,col,value) or MovieLens ratings" % name)


def _add_format(p):
    p.add_argument('--format', choices=('triplets', 'ml100k', 'ml1m'), default='triplets',
                   help="data file format (default: %(default)s)")
    p.add_argument('--inputs', default=None,
                   help="training inputs, one per line (triplets format; default: row index)")
    p.add_argument('--items', default=None, help="MovieLens items/movies file")


def _add_solver(p):
    p.add_argument('--solver', choices=A_SOLVERS, default='cholesky',
                   help="A-subproblem solver (default: %(default)s)")
    p.add_argument('--tol', type=float, default=1e-8, help="CG/GMRES relative tolerance")
    p.add_argument('--max-iter', type=int, default=None, help="CG/GMRES iteration cap")
    p.add_argument('--rel-obj-tol', type=float, default=1e-6,
                   help="block descent stop on relative objective decrease")
    p.add_argument('--max-outer', type=int, default=50, help="outer iterations, cold start")
    p.add_argument('--max-outer-warm', type=int, default=5, help="outer iterations, warm start")
    p.add_argument('--lambda-max', type=float, default=None,
                   help="largest lambda (default: ||Y||_F^2 / l)")
    p.add_argument('--lambda-min', type=float, default=None,
                   help="smallest lambda (default: lambda-max / 1e5)")
    p.add_argument('--lambda-count', type=int, default=30, help="grid size (default: 30)")
    p.add_argument('--lambdas', default=None,
                   help="explicit comma-separated grid, must be strictly decreasing")


def build_parser():
    parser = argparse.ArgumentParser(prog='okl', description=__doc__.split('\n')[0])
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help="generate the synthetic Gaussian-process benchmark")
    p.add_argument('--config', default=None)
    p.add_argument('--out', required=True, help="output directory")
    for name, default in (('n-latent', 50), ('m', 200), ('grid-size', 200),
                          ('n-sampled', 100), ('n-train', 70)):
        p.add_argument('--' + name, type=int, default=default)
    p.add_argument('--decay', type=float, default=10.0)
    p.add_argument('--snr', type=float, default=1.0, help="signal/noise std ratio; inf = no noise")
    p.add_argument('--seed', type=int, default=0)

    p = sub.add_parser('path', help="fit a warm-started regularization path")
    p.add_argument('--config', default=None)
    _add_data(p, 'train', True)
    _add_data(p, 'valid', False)
    _add_format(p)
    p.add_argument('--truth', default=None, help="noiseless l x m matrix for mse_truth")
    _add_kernel(p)
    p.add_argument('--method', choices=METHODS, default='okl')
    p.add_argument('--p', type=int, default=None, help="rank bound (default: number of tasks)")
    _add_solver(p)
    p.add_argument('--metric', choices=('rmse', 'mae', 'nmae', 'mse'), default='rmse',
                   help="validation metric for selecting lambda")
    p.add_argument('--clip', action='store_true', help="clip predictions to [r-min, r-max]")
    p.add_argument('--r-min', type=float, default=1.0)
    p.add_argument('--r-max', type=float, default=5.0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True)

    p = sub.add_parser('eval', help="score a saved model on a dataset")
    p.add_argument('--config', default=None)
    p.add_argument('--model', required=True)
    _add_data(p, 'test', True)
    _add_format(p)
    p.add_argument('--truth', default=None)
    p.add_argument('--clip', action='store_true')
    p.add_argument('--r-min', type=float, default=1.0)
    p.add_argument('--r-max', type=float, default=5.0)
    p.add_argument('--out', required=True, help="metrics CSV")

    p = sub.add_parser('predict', help="predict every task at new inputs")
    p.add_argument('--config', default=None)
    p.add_argument('--model', required=True)
    p.add_argument('--inputs', required=True, help="inputs file, one per line")
    p.add_argument('--out', required=True, help="predictions CSV")

    p = sub.add_parser('rankscan', help="validation-tuned fits for several rank bounds")
    p.add_argument('--config', default=None)
    p.add_argument('--data', required=True, help="directory written by 'okl synth'")
    p.add_argument('--p-list', required=True, help="comma-separated rank bounds")
    _add_kernel(p)
    _add_solver(p)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help="CSV with p,lambda,validation_mse,mse_truth,fit_seconds")
    return parser


def parse_args(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', default=None)
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        values = _read_config_file(known.config)
        command = next((a for a in argv if a in COMMANDS), None)
        if command is None:
            raise ConfigError("no subcommand given")
        sub = parser._subparsers._group_actions[0].choices[command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in values.items():
            if k not in actions or k in ('config', 'help'):
                raise ConfigError("unknown config key %r for %s" % (k, command))
            a = actions[k]
            if isinstance(a, argparse._StoreTrueAction):
                v = v.lower() in ('1', 'true', 'yes', 'on')
            elif a.type is not None:
                v = a.type(v)
            if a.choices is not None and v not in a.choices:
                raise ConfigError("invalid value %r for %s" % (v, k))
            a.required = False
            defaults[k] = v
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _write_manifest(args, directory, extra=None):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, 'manifest.txt'), 'w', encoding='utf-8') as fh:
        fh.write("okl_version=%s\n" % __version__)
        for k, v in sorted(vars(args).items()):
            fh.write("%s=%s\n" % (k, '' if v is None else v))
        for k, v in (extra or {}).items():
            fh.write("%s=%s\n" % (k, v))


def _manifest_dir(out):
    return out if os.path.splitext(out)[1] == '' else (os.path.dirname(out) or '.')


def _spec(args):
    return kernels.KernelSpec(args.kernel, decay=args.decay)


def _grid(args, Y):
    if args.lambdas:
        grid = np.array([float(v) for v in args.lambdas.split(',')])
    else:
        top = args.lambda_max if args.lambda_max is not None else default_grid(Y, count=1)[0]
        bottom = args.lambda_min if args.lambda_min is not None else top * 1e-5
        if not 0 < bottom < top:
            raise ConfigError("need 0 < lambda-min < lambda-max")
        grid = np.logspace(np.log10(top), np.log10(bottom), args.lambda_count)
    if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
        raise GridNotDescending("lambda grid must be positive and strictly decreasing")
    return grid


def _solver_config(args):
    return SolverConfig(a_solver=args.solver, tol=args.tol, max_iter=args.max_iter,
                        rel_obj_tol=args.rel_obj_tol, max_outer=args.max_outer,
                        max_outer_warm=args.max_outer_warm, seed=args.seed)


def _load(path, args, inputs=None, users=None, shape=None):
    if args.format == 'triplets':
        if inputs is None and args.inputs:
            inputs = data.load_inputs(args.inputs)
        return data.load_triplets(path, shape=shape, inputs=inputs)
    if not args.items:
        raise ConfigError("--items is required for MovieLens formats")
    return data.load_movielens(path, args.items, args.format, users=users)


def _load_truth(path, shape):
    truth = np.loadtxt(path, ndmin=2)
    if truth.shape != shape:
        raise ConfigError("truth matrix has shape %s, expected %s" % (truth.shape, shape))
    return truth


def cmd_synth(args):
    try:
        cfg = data.SynthConfig(n_latent=args.n_latent, m=args.m, grid_size=args.grid_size,
                               n_sampled=args.n_sampled, n_train=args.n_train,
                               decay=args.decay, snr=args.snr, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    ds, valid = data.synth_gp_generate(cfg)
    train = ds.masked(~valid.dense)
    os.makedirs(args.out, exist_ok=True)
    data.save_inputs(ds.inputs, os.path.join(args.out, 'inputs.txt'))
    data.save_triplets(train, os.path.join(args.out, 'train.csv'))
    data.save_triplets(ds.masked(valid), os.path.join(args.out, 'valid.csv'))
    np.savetxt(os.path.join(args.out, 'truth.txt'), ds.ground_truth, fmt='%.17e')
    _write_manifest(args, args.out)
    print("wrote %d inputs, %d tasks, %d train / %d validation observations to %s"
          % (ds.shape[0], ds.shape[1], train.n_observed, valid.count, args.out))
    return 0


def read_synth_dir(directory):
    """Train and validation datasets (with ground truth) from an ``okl synth`` directory."""
    inputs = data.load_inputs(os.path.join(directory, 'inputs.txt'))
    truth = np.loadtxt(os.path.join(directory, 'truth.txt'), ndmin=2)
    shape = truth.shape
    out = []
    for name in ('train.csv', 'valid.csv'):
        ds = data.load_triplets(os.path.join(directory, name), shape=shape, inputs=inputs)
        ds.ground_truth = truth
        out.append(ds)
    return tuple(out)


def cmd_path(args):
    if args.method in ('independent', 'pooled') and args.p is not None:
        log.warning("method=%s ignores --p", args.method)
        print("warning: method=%s ignores --p" % args.method, file=sys.stderr)
    train = _load(args.train, args)
    users = train.task_names
    valid = None
    if args.valid:
        valid = _load(args.valid, args, inputs=train.inputs, users=users, shape=train.shape)
    if args.truth:
        train.ground_truth = _load_truth(args.truth, train.shape)
        if valid is not None:
            valid.ground_truth = train.ground_truth
    grid = _grid(args, train.Y)
    p = None if args.method in ('independent', 'pooled') else args.p
    if p is not None and not 1 <= p <= train.shape[1]:
        raise ConfigError("p must lie in [1, %d]" % train.shape[1])

    t0 = time.perf_counter()
    path = fit_path(args.method, train, _spec(args), grid, p, _solver_config(args))
    seconds = time.perf_counter() - t0

    target = valid if valid is not None else train
    clip = (args.r_min, args.r_max) if args.clip else None
    reports = []
    os.makedirs(os.path.join(args.out, 'models'), exist_ok=True)
    for k, pt in enumerate(path):
        save_model(pt.model, os.path.join(args.out, 'models', 'lambda_%03d' % k))
        pred = pt.model.predict_many(target.inputs)
        reports.append(metric_report(pred, target, args.r_min, args.r_max, lam=pt.lam,
                                     clip=args.clip))
    write_metrics_csv(reports, os.path.join(args.out, 'metrics.csv'))
    metric = masked_mse if args.metric == 'mse' else args.metric
    lam, model, score = select_lambda(path, target, metric=metric, clip=clip)
    k = [pt.lam for pt in path].index(lam)
    with open(os.path.join(args.out, 'selected.txt'), 'w', encoding='utf-8') as fh:
        fh.write("lambda=%r\nindex=%d\nmodel=models/lambda_%03d\n%s=%r\non=%s\n"
                 % (lam, k, k, args.metric, score, 'validation' if valid is not None else 'train'))
    _write_manifest(args, args.out, {'fit_seconds': '%.3f' % seconds,
                                     'grid': ','.join('%r' % g for g in grid)})
    print("fitted %d lambdas in %.2fs; selected lambda=%.4g (%s=%.4g)"
          % (len(path), seconds, lam, args.metric, score))
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    m = model.n_tasks
    if args.format == 'triplets':
        inputs = data.load_inputs(args.inputs) if args.inputs else model.train_inputs
        test = data.load_triplets(args.test, shape=(len(inputs), m), inputs=inputs)
    else:
        test = _load(args.test, args, users=model.task_names)
    if test.shape[1] != m:
        raise ConfigError("test data has %d tasks, model has %d" % (test.shape[1], m))
    if args.truth:
        test.ground_truth = _load_truth(args.truth, test.shape)
    try:
        pred = model.predict_many(test.inputs)
    except kernels.KernelError as exc:
        raise ModelFormatError("test inputs incompatible with the model kernel: %s" % exc)
    report = metric_report(pred, test, args.r_min, args.r_max, lam=model.lam, clip=args.clip)
    write_metrics_csv([report], args.out)
    _write_manifest(args, _manifest_dir(args.out))
    print("rmse=%.6g mae=%.6g nmae=%.6g" % (report.rmse, report.mae, report.nmae))
    return 0


def cmd_predict(args):
    model = load_model(args.model)
    inputs = data.load_inputs(args.inputs)
    try:
        pred = model.predict_many(inputs)
    except kernels.KernelError as exc:
        raise ModelFormatError("inputs incompatible with the model kernel: %s" % exc)
    names = model.task_names or list(range(model.n_tasks))
    with open(args.out, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['input'] + ['task_%s' % t for t in names])
        for x, row in zip(inputs, pred):
            w.writerow([data.format_input(x).replace('\t', ':')] + ['%.17g' % v for v in row])
    _write_manifest(args, _manifest_dir(args.out))
    return 0


def cmd_rankscan(args):
    train, valid = read_synth_dir(args.data)
    p_list = sorted({int(v) for v in args.p_list.split(',') if v.strip()})
    if not p_list or p_list[0] < 1 or p_list[-1] > train.shape[1]:
        raise ConfigError("p values must lie in [1, %d]" % train.shape[1])
    grid = _grid(args, train.Y)
    rows = rank_scan(train, valid, _spec(args), p_list, grid, _solver_config(args))
    with open(args.out, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['p', 'lambda', 'validation_mse', 'mse_truth', 'fit_seconds'])
        for r in rows:
            w.writerow([r.p, '%.10g' % r.lam, '%.10g' % r.validation_mse,
                        '%.10g' % r.mse_truth, '%.4f' % r.fit_seconds])
    _write_manifest(args, _manifest_dir(args.out))
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'path': cmd_path,
    'eval': cmd_eval,
    'predict': cmd_predict,
    'rankscan': cmd_rankscan,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except (ConfigError, ValueError, OSError) as exc:
        print("okl: config error: %s" % exc, file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, GridNotDescending) as exc:
        print("okl: config error: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print("okl: error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
