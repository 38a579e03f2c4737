"""
    Config-driven experiments: read a JSON (or YAML) config, run one command,
    write CSV/JSON/SVG results next to a meta.json.

    Exit codes: 0 success, 2 invalid config, 3 tolerance not met (results are
    still written), 4 I/O error.
"""
import argparse
import copy
import json
import numpy as np
import os
import pathlib
import sys
import yaml

from bbmag.bv import bv_dual
from bbmag.constants import SphereRule, q_constant
from bbmag.core import ComplexField, Domain, MagneticPotential, load_mask_csv
from bbmag.functionals import QuadratureSpec, fractional_magnetic_energy, local_magnetic_energy
from bbmag.harness import bbm_sweep, extrapolate_limit
from bbmag.kernels import bbm_kernel, validate_kernel_sequence
from bbmag.perimeter import ShapeSet, indicator_bv, perimeter_sweep
from bbmag.utils import (
    BbmagError,
    ConfigValidationError,
    TensorGridError,
    __version__,
    code_version,
    load_config,
    log,
    parse_seed,
    time_stamp,
)


config = load_config()['bbmag']

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE, EXIT_IO = 0, 2, 3, 4

commands = [
    ("seminorm", "Fractional magnetic energy [u]^p of a field"),
    ("local-energy", "Local magnetic energy int |grad u - iAu|_p^p"),
    ("bv", "Magnetic total variation |Du|_A by the dual formulation"),
    ("perimeter", "Classical and magnetic fractional perimeters of a set over s"),
    ("bbm-sweep", "Normalised energies over s and the extrapolated limit"),
    ("q-constant", "The sphere constant Q_{p,N}"),
    ("kernel-check", "Moment conditions of a family of BBM kernels"),
    ("help", "Print this message"),
]

field_presets = ('constant', 'plane_wave', 'gaussian', 'linear', 'bump', 'wave_bump', 'indicator')
potential_presets = ('zero', 'constant', 'landau', 'radial')
set_kinds = ('interval', 'disk', 'square', 'mask')


def defaults():
    """Every key an experiment config may set, with its default"""
    return {
        'command': None,
        'domain': {'bbox': [[0.0, 1.0]], 'resolution': [64]},
        'field': {'preset': 'constant', 'c': 1.0},
        'potential': {'preset': 'zero'},
        'set': None,
        'p': 2.0,
        's': 0.5,
        's_list': list(config['sweep']['s_list']),
        'form': 'fractional',
        'extrapolation': config['sweep']['extrapolation'],
        'quadrature': QuadratureSpec().to_dict(),
        'bv': {'max_iter': config['bv']['max_iter'], 'tol': config['bv']['tol']},
        'dim': 1,
        'kernels': {'s_list': [0.5, 0.7, 0.9, 0.99], 'r_omega': 1.0},
        'threads': config['threads'],
        'seed': hex(parse_seed(config['sphere']['mc_seed'])),
        'out': 'results',
    }


def read_config(path):
    """JSON, or YAML by extension"""
    with open(path) as f:
        if str(path).endswith(('.yaml', '.yml')):
            return yaml.load(f, Loader=yaml.FullLoader)
        return json.load(f)


def resolve(experiment):
    """Experiment config merged over the defaults (one level deep for sections)"""
    resolved = defaults()
    for key, value in (experiment or {}).items():
        if isinstance(value, dict) and isinstance(resolved.get(key), dict) and key not in ('field', 'potential'):
            resolved[key] = {**resolved[key], **value}
        else:
            resolved[key] = copy.deepcopy(value)
    return resolved


def _number(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return None


def validate(experiment):
    """
        All problems of an experiment config

    :param experiment: dict or path to a config file
    :return: list of diagnostic strings, empty when valid; I/O problems start with 'I/O:'
    """
    if isinstance(experiment, (str, pathlib.Path)):
        try:
            experiment = read_config(experiment)
        except (OSError, ValueError, yaml.YAMLError) as e:
            return [f"I/O: cannot read config {experiment}: {e}"]
    if not isinstance(experiment, dict):
        return ["config: expected a mapping"]
    c = resolve(experiment)
    diagnostics = []

    names = [cmd for cmd, _ in commands if cmd != 'help']
    if c['command'] not in names:
        diagnostics.append(f"command: must be one of {', '.join(names)}, got {c['command']!r}")

    p = _number(c['p'])
    if p is None or not np.isfinite(p) or p < 1:
        diagnostics.append(f"p: p must be ≥ 1, got {c['p']}")
    s = _number(c['s'])
    if s is None or not 0 < s < 1:
        diagnostics.append(f"s: s must be in (0, 1), got {c['s']}")
    s_list = c['s_list'] if isinstance(c['s_list'], list) else []
    if not s_list:
        diagnostics.append("s_list: expected a nonempty list")
    for value in s_list:
        v = _number(value)
        if v is None or not 0 < v < 1:
            diagnostics.append(f"s_list: s must be in (0, 1), got {value}")
    if any(_number(b) is not None and _number(a) is not None and _number(b) <= _number(a)
           for a, b in zip(s_list, s_list[1:])):
        diagnostics.append("s_list: values must be strictly ascending")
    if c['form'] not in ('fractional', 'kernel'):
        diagnostics.append(f"form: must be 'fractional' or 'kernel', got {c['form']!r}")
    if c['extrapolation'] not in ('affine', 'quadratic', 'richardson'):
        diagnostics.append(f"extrapolation: unknown model {c['extrapolation']!r}")
    if not isinstance(c['threads'], int) or c['threads'] < 1:
        diagnostics.append(f"threads: must be a positive integer, got {c['threads']}")
    try:
        parse_seed(c['seed'])
    except (TypeError, ValueError):
        diagnostics.append(f"seed: expected an integer or hex string, got {c['seed']!r}")
    try:
        QuadratureSpec(**c['quadrature'])
    except TypeError as e:
        diagnostics.append(f"quadrature: {e}")
    except BbmagError as e:
        diagnostics.append(f"quadrature: {e.message}")

    diagnostics.extend(_validate_domain(c['domain']))
    diagnostics.extend(_validate_field(c['field']))
    diagnostics.extend(_validate_potential(c['potential']))
    if c['set'] is not None:
        diagnostics.extend(_validate_set(c['set'], 'set'))
    if c['command'] == 'perimeter' and c['set'] is None and c['field'].get('preset') != 'indicator':
        diagnostics.append("set: the perimeter command needs a set")
    if c['command'] == 'q-constant' and (not isinstance(c['dim'], int) or c['dim'] < 1):
        diagnostics.append(f"dim: must be a positive integer, got {c['dim']}")
    return diagnostics


def check(experiment):
    """Raise ConfigValidationError with every diagnostic of an invalid config"""
    diagnostics = validate(experiment)
    if diagnostics:
        raise ConfigValidationError(diagnostics)


def _validate_domain(spec):
    if not isinstance(spec, dict):
        return ["domain: expected a mapping"]
    if 'mask_csv' in spec:
        return _check_csv(spec['mask_csv'], 'domain.mask_csv', load_mask_csv)
    resolution = spec.get('resolution', [])
    try:
        bbox = np.asarray(spec['bbox'], dtype=np.float64).reshape(-1, 2)
    except (KeyError, TypeError, ValueError):
        return [f"domain.bbox: expected [[lo, hi], ...], got {spec.get('bbox')}"]
    diagnostics = []
    if np.any(bbox[:, 1] <= bbox[:, 0]):
        diagnostics.append("domain.bbox: every axis needs lo < hi")
    resolution = list(np.atleast_1d(resolution))
    if len(resolution) != len(bbox) or any(not float(n).is_integer() or n < 1 for n in resolution):
        diagnostics.append(f"domain.resolution: expected {len(bbox)} positive integers, got {spec.get('resolution')}")
    return diagnostics


def _check_csv(path, name, loader):
    try:
        loader(path)
    except TensorGridError as e:
        return [f"{name}: {e.message}"]
    except OSError as e:
        return [f"I/O: {name}: cannot read {path}: {e}"]
    except BbmagError as e:
        return [f"{name}: {e.message}"]
    return []


def _validate_field(spec):
    if not isinstance(spec, dict):
        return ["field: expected a mapping"]
    if 'csv' in spec:
        return _check_csv(spec['csv'], 'field.csv', ComplexField.from_csv)
    if spec.get('preset') not in field_presets:
        return [f"field.preset: unknown preset {spec.get('preset')!r}"]
    if spec['preset'] == 'indicator':
        return _validate_set(spec.get('set'), 'field.set')
    return []


def _validate_potential(spec):
    if not isinstance(spec, dict):
        return ["potential: expected a mapping"]
    if 'csv' in spec:
        return _check_csv(spec['csv'], 'potential.csv', MagneticPotential.from_csv)
    if spec.get('preset') not in potential_presets:
        return [f"potential.preset: unknown preset {spec.get('preset')!r}"]
    return []


def _validate_set(spec, name):
    if not isinstance(spec, dict) or spec.get('kind') not in set_kinds:
        return [f"{name}: expected a set with kind in {', '.join(set_kinds)}"]
    if spec['kind'] == 'mask':
        return _check_csv(spec.get('csv'), f"{name}.csv", load_mask_csv)
    if spec['kind'] == 'disk' and not (_number(spec.get('radius')) or 0) > 0:
        return [f"{name}.radius: must be positive, got {spec.get('radius')}"]
    return []


def _complex(value):
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def build_domain(spec):
    if 'mask_csv' in spec:
        return load_mask_csv(spec['mask_csv'])
    return Domain(spec['bbox'], spec['resolution'])


def build_set(spec, domain):
    kind = spec['kind']
    if kind == 'interval':
        return ShapeSet.interval(spec['lower'], spec['upper'])
    if kind == 'square':
        return ShapeSet.square(spec['lower'], spec['upper'])
    if kind == 'disk':
        return ShapeSet.disk(spec['center'], spec['radius'])
    grid = load_mask_csv(spec['csv'])
    return ShapeSet.from_mask(grid, grid.mask)


def build_field(spec, domain):
    if 'csv' in spec:
        return ComplexField.from_csv(spec['csv'])
    preset = spec['preset']
    if preset == 'constant':
        return ComplexField.constant(domain, _complex(spec.get('c', 1.0)))
    if preset == 'plane_wave':
        return ComplexField.plane_wave(domain, spec['a'], _complex(spec.get('c', 1.0)))
    if preset == 'gaussian':
        return ComplexField.gaussian(domain, spec.get('center'), spec.get('width', 1.0),
                                     _complex(spec.get('amplitude', 1.0)))
    if preset == 'linear':
        return ComplexField.linear(domain, [_complex(v) for v in np.atleast_1d(spec['slope'])],
                                   _complex(spec.get('offset', 0.0)))
    if preset == 'bump':
        return ComplexField.bump(domain, spec.get('center'), spec.get('radius', 1.0),
                                 _complex(spec.get('amplitude', 1.0)))
    if preset == 'wave_bump':
        return ComplexField.wave_bump(domain, spec['a'], spec.get('center'), spec.get('radius', 1.0))
    return ComplexField.indicator(domain, build_set(spec['set'], domain))


def build_potential(spec, dim):
    if 'csv' in spec:
        return MagneticPotential.from_csv(spec['csv'])
    preset = spec['preset']
    if preset == 'zero':
        return MagneticPotential.zero(dim)
    if preset == 'constant':
        return MagneticPotential.constant(spec['a'])
    if preset == 'landau':
        return MagneticPotential.landau(spec.get('B', 1.0), dim)
    return MagneticPotential.radial(spec.get('c', 1.0), dim)


class Experiment(object):
    """
        Resolved config plus the objects it describes
    """
    def __init__(self, resolved, field_domain=False):
        self.config = resolved
        self.out = pathlib.Path(resolved['out'])
        self.threads = resolved['threads']
        self.seed = parse_seed(resolved['seed'])
        self.outputs = []
        self.tolerance_met = True
        self.domain = None
        self.field = None
        self.potential = None
        if resolved['command'] not in ('q-constant', 'kernel-check'):
            self.domain = build_domain(resolved['domain'])
            self.field = build_field(resolved['field'], self.domain)
            if field_domain:
                self.domain = self.field.domain
            self.potential = build_potential(resolved['potential'], self.domain.dim)
        self.q = QuadratureSpec(**resolved['quadrature'])

    def path(self, name):
        self.outputs.append(name)
        return self.out / name

    def write_json(self, name, payload):
        with open(self.path(name), 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True)

    def write_meta(self):
        meta = {
            'config': self.config,
            'version': __version__,
            'code_version': code_version(),
            'seed': hex(self.seed),
            'time_stamp': time_stamp(),
            'outputs': list(self.outputs),
        }
        with open(self.out / 'meta.json', 'w') as f:
            json.dump(meta, f, indent=2, sort_keys=True, default=str)


def _energy_summary(name, result):
    return f"{name}: value={result.value:.12g} est_error={result.est_error:.3g}" \
        + ("" if result.tolerance_met else f" WARNING {result.warning}")


def seminorm(experiment):
    c = experiment.config
    result = fractional_magnetic_energy(experiment.field, experiment.potential, experiment.domain,
                                        c['s'], c['p'], experiment.q, threads=experiment.threads)
    payload = result.to_dict()
    payload['seminorm'] = result.value ** (1.0 / c['p'])
    experiment.write_json('seminorm.json', payload)
    experiment.tolerance_met = result.tolerance_met
    print(_energy_summary('seminorm', result))


def local_energy(experiment):
    c = experiment.config
    result = local_magnetic_energy(experiment.field, experiment.potential, experiment.domain, c['p'],
                                   q=experiment.q)
    experiment.write_json('local_energy.json', result.to_dict())
    experiment.tolerance_met = result.tolerance_met
    print(_energy_summary('local-energy', result))


def bv(experiment):
    c = experiment.config
    result = bv_dual(experiment.field, experiment.potential, experiment.domain,
                     max_iter=c['bv'].get('max_iter'), tol=c['bv'].get('tol'))
    experiment.write_json('bv.json', result.to_dict())
    print(f"bv: c1={result.c1:.12g} c2={result.c2:.12g} total={result.total:.12g} iterations={result.iterations}")


def perimeter(experiment):
    c = experiment.config
    spec = c['set'] if c['set'] is not None else c['field']['set']
    E = build_set(spec, experiment.domain)
    table = perimeter_sweep(E, experiment.potential, experiment.domain, c['s_list'], experiment.q,
                            threads=experiment.threads)
    table.to_csv(experiment.path('perimeter.csv'), index=False, float_format=config['output']['float_format'])
    value = indicator_bv(E, experiment.potential, experiment.domain)
    experiment.write_json('indicator_bv.json', {'indicator_bv': value})
    experiment.tolerance_met = table.attrs['tolerance_met']
    for warning in table.attrs['warnings']:
        log(f"perimeter: {warning}")
    print(f"perimeter: {len(table)} values of s, |D1_E|_A = {value:.12g}, "
          f"target = {table['target'].iloc[0]:.12g}")


def bbm_sweep_command(experiment):
    c = experiment.config
    table = bbm_sweep(experiment.field, experiment.potential, experiment.domain, c['p'], c['s_list'],
                      experiment.q, form=c['form'], threads=experiment.threads)
    table.to_csv(experiment.path('sweep.csv'))
    limit = extrapolate_limit(table, c['extrapolation']) if len(table) >= 3 else None
    if config['output']['svg']:
        table.to_svg(experiment.path('sweep.svg'), limit)
    if limit is not None:
        experiment.write_json('limit.json', {**limit.to_dict(), 'target': table.target})
    experiment.tolerance_met = table.tolerance_met
    for warning in table.warnings:
        log(f"bbm-sweep: {warning}")
    shown = f"limit={limit.extrapolated_value:.10g} ({limit.fit_model})" if limit is not None else "no limit"
    print(f"bbm-sweep: {len(table)} values of s, {shown}, target={table.target:.10g}")


def q_constant_command(experiment):
    c = experiment.config
    dim = int(c['dim'])
    rule = SphereRule.build(dim, seed=experiment.seed)
    value = q_constant(c['p'], dim, rule)
    experiment.write_json('q_constant.json', {'p': c['p'], 'N': dim, 'value': value, 'rule': rule.kind})
    print(repr(value))


def kernel_check(experiment):
    c = experiment.config
    k = c['kernels']
    dim = int(k.get('dim', c['dim']))
    kernels = [bbm_kernel(s, c['p'], k['r_omega'], dim) for s in k['s_list']]
    report = validate_kernel_sequence(kernels, dim)
    report.to_csv(experiment.path('kernels.csv'))
    print(f"kernel-check: {len(kernels)} kernels, convergent={report.convergent}")


handlers = {
    'seminorm': seminorm,
    'local-energy': local_energy,
    'bv': bv,
    'perimeter': perimeter,
    'bbm-sweep': bbm_sweep_command,
    'q-constant': q_constant_command,
    'kernel-check': kernel_check,
}


def run(experiment):
    """
        Validate, run and write results

    :param experiment: dict or path to a config file
    :return: exit code
    """
    if isinstance(experiment, (str, pathlib.Path)):
        try:
            experiment = read_config(experiment)
        except (OSError, ValueError, yaml.YAMLError) as e:
            print(f"I/O: cannot read config: {e}", file=sys.stderr)
            return EXIT_IO
    try:
        check(experiment)
    except ConfigValidationError as e:
        for diagnostic in e.diagnostics:
            print(diagnostic, file=sys.stderr)
        return EXIT_IO if any(d.startswith('I/O:') for d in e.diagnostics) else EXIT_INVALID

    resolved = resolve(experiment)
    try:
        state = Experiment(resolved, field_domain='csv' in experiment.get('field', {}) and 'domain' not in experiment)
        os.makedirs(state.out, exist_ok=True)
        handlers[resolved['command']](state)
        state.write_meta()
    except OSError as e:
        print(f"I/O: {e}", file=sys.stderr)
        return EXIT_IO
    except BbmagError as e:
        print(f"{resolved['command']}: {e.message}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if state.tolerance_met else EXIT_TOLERANCE


def main(argv=None):
    parser = argparse.ArgumentParser(prog='bbmag')
    subparsers = parser.add_subparsers(title="commands", dest="command")

    parent_parser = argparse.ArgumentParser(add_help=False)
    parent_parser.add_argument("--config", type=str, help="Experiment config (JSON, or YAML by extension)")
    parent_parser.add_argument("--out", type=str, help="Output directory")
    parent_parser.add_argument("--threads", type=int, help="Worker threads")
    parent_parser.add_argument("--seed", type=str, help="Monte Carlo seed, e.g. 0x5EED")
    parent_parser.add_argument("--p", type=float, help="Exponent p >= 1")
    parent_parser.add_argument("--s", type=float, help="Fractional order s in (0, 1)")
    parent_parser.add_argument("--s-list", type=float, nargs='+', dest='s_list', help="Ascending values of s")

    parsers = {}
    for (cmd, desc) in commands:
        parsers[cmd] = subparsers.add_parser(cmd, help=desc, parents=[parent_parser])

    parsers["q-constant"].add_argument("--dim", type=int, help="Dimension N")
    parsers["kernel-check"].add_argument("--dim", type=int, help="Dimension N")
    parsers["bbm-sweep"].add_argument("--form", choices=('fractional', 'kernel'), help="Energy normalisation")
    parsers["bbm-sweep"].add_argument("--extrapolation", choices=('affine', 'quadratic', 'richardson'),
                                      help="Limit model")

    args = parser.parse_args(argv)
    if args.command is None or args.command == "help":
        parser.print_help()
        return EXIT_OK

    experiment = {}
    if args.config:
        try:
            experiment = read_config(args.config)
        except (OSError, ValueError, yaml.YAMLError) as e:
            print(f"I/O: cannot read config {args.config}: {e}", file=sys.stderr)
            return EXIT_IO
    experiment['command'] = args.command
    for key in ('out', 'threads', 'seed', 'p', 's', 's_list', 'dim', 'form', 'extrapolation'):
        value = getattr(args, key, None)
        if value is not None:
            experiment[key] = value
    return run(experiment)
