"""
Batch experiment runner for PDMP Lab
Parses experiment configs, runs the simulate / invariant / fm-distance /
rate / diagnose / correspond pipelines and writes their artifacts
"""

import argparse
import logging
import math
import platform
import re
import sys
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils import write_json
from .config import (
    AWS_ACCESS_KEY_ID, AWS_REGION, AWS_SECRET_ACCESS_KEY, CORRESPONDENCE_FACTOR, DEFAULT_BURN_IN,
    DEFAULT_C, DEFAULT_FIT_N_MAX, DEFAULT_FIT_N_REP, DEFAULT_N_BOOT, DEFAULT_N_KEEP, DEFAULT_N_STEPS,
    DEFAULT_N_TRAJ, DEFAULT_THIN, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE, HISTOGRAM_BINS, LOG_FORMAT,
    LOG_LEVEL, MANIFEST_NAME, OUTPUT_FORMATS, S3_BUCKET_NAME, THETA_GRID_POINTS
)
from .diagnostics import (
    CheckResult, DiagnosticsError, DiagnosticsReport, HypothesisConstants, RankProbe,
    certify_absolute_continuity, check_hypotheses, check_positivity, check_rank,
    classify_continuity, estimate_small_set, probe_accessibility, suggest_anchors
)
from .metrics import MetricConfig, MetricError, fit_rate, fm_distance_report
from .model import MODEL_DEFAULTS, MODEL_REGISTRY, PARAM_ALIASES, ModelError, State, builtin_model
from .operators import PathSpec, check_correspondence
from .processor import ResultsProcessor, RunArtifacts
from .rng import RngStream
from .simulate import SimulationError, sample_invariant, simulate_trajectories

logger = logging.getLogger(__name__)

PROG = 'pdmp-lab'
SUBCOMMANDS = ('simulate', 'invariant', 'fm-distance', 'rate', 'diagnose', 'correspond')
CHECKS = ('rank', 'positivity', 'accessibility', 'hypotheses', 'small-set', 'anchors', 'certify')


class ConfigError(ValueError):
    """Config problems, each tied to a line number (0 when not tied to a line)"""

    def __init__(self, errors: List[Tuple[int, str]]):
        self.errors = list(errors)
        super().__init__('\n'.join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

ROOT_KEYS: Dict[str, Tuple[str, Any]] = {
    'model': ('str', None),
    'seed': ('int', None),
    'workers': ('int', 1),
    'out': ('str', 'results'),
    'format': ('str', 'csv'),
}

SECTIONS: Dict[str, Dict[str, Tuple[str, Any]]] = {
    'simulation': {
        'n_traj': ('int', DEFAULT_N_TRAJ),
        'n_steps': ('int', DEFAULT_N_STEPS),
        'burn_in': ('int', DEFAULT_BURN_IN),
        'n_keep': ('int', DEFAULT_N_KEEP),
        'thin': ('int', DEFAULT_THIN),
        'init_y': ('floats', []),
        'init_mode': ('int', 1),
    },
    'metric': {
        'c': ('float', DEFAULT_C),
    },
    'rate': {
        'n_max': ('int', DEFAULT_FIT_N_MAX),
        'n_rep': ('int', DEFAULT_FIT_N_REP),
    },
    'correspond': {
        'n_boot': ('int', DEFAULT_N_BOOT),
        'factor': ('float', CORRESPONDENCE_FACTOR),
    },
    'diagnostics': {
        'checks': ('strs', []),
        'y_hat': ('floats', []),
        'mode': ('int', 1),
        'modes': ('ints', []),
        'times': ('floats', []),
        'thetas': ('floats', []),
        'radius': ('float', 1e-3),
        'starts': ('floats', []),
        'theta_points': ('int', THETA_GRID_POINTS),
    },
    'hypotheses': {
        'n_pairs': ('int', 2000),
        'radius': ('float', 10.0),
    },
    'small_set': {
        'n': ('int', 1),
        'n_mc': ('int', 10000),
    },
    'continuity': {
        'atom_eps': ('float', 0.0),
        'bins': ('int', HISTOGRAM_BINS),
    },
}

POSITIVE_KEYS = {
    ('', 'workers'), ('simulation', 'n_traj'), ('simulation', 'n_keep'), ('simulation', 'thin'),
    ('metric', 'c'), ('rate', 'n_rep'), ('correspond', 'n_boot'), ('correspond', 'factor'),
    ('diagnostics', 'radius'), ('hypotheses', 'n_pairs'), ('hypotheses', 'radius'),
    ('small_set', 'n'), ('small_set', 'n_mc'), ('continuity', 'bins'), ('diagnostics', 'theta_points'),
}
NONNEGATIVE_KEYS = {('simulation', 'n_steps'), ('simulation', 'burn_in'), ('continuity', 'atom_eps')}


@dataclass
class ExperimentConfig:
    """Validated experiment: model, seed, runtime options and per-section settings"""
    model: str
    seed: int
    params: Dict[str, Any] = field(default_factory=dict)
    workers: int = 1
    out: str = 'results'
    format: str = 'csv'
    sections: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        for name, schema in SECTIONS.items():
            values = self.sections.setdefault(name, {})
            for key, (_, default) in schema.items():
                values.setdefault(key, list(default) if isinstance(default, list) else default)

    def section(self, name: str) -> Dict[str, Any]:
        return self.sections[name]

    def to_dict(self) -> Dict[str, Any]:
        return {'model': self.model, 'seed': self.seed, 'params': dict(self.params),
                'workers': self.workers, 'out': self.out, 'format': self.format,
                'sections': {k: dict(v) for k, v in self.sections.items()}}


# ---------------------------------------------------------------------------
# Parsing and rendering
# ---------------------------------------------------------------------------

_INT = re.compile(r'^[+-]?\d+$')
_KEY = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')


def _strip_comment(line: str) -> str:
    in_string = False
    for k, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == '#' and not in_string:
            return line[:k]
    return line


def _parse_scalar(text: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    if text == 'true':
        return True
    if text == 'false':
        return False
    if _INT.match(text):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"cannot parse value '{text}'")
    if math.isnan(value):
        raise ValueError("nan is not a valid value")
    return value


def _parse_value(text: str):
    text = text.strip()
    if text.startswith('['):
        if not text.endswith(']'):
            raise ValueError(f"unterminated list '{text}'")
        body = text[1:-1].strip()
        if not body:
            return []
        return [_parse_scalar(item) for item in body.split(',')]
    return _parse_scalar(text)


def _coerce(kind: str, value):
    """Check a parsed value against a schema type; ints widen to floats"""
    def is_int(v):
        return isinstance(v, int) and not isinstance(v, bool)

    def as_float(v):
        if is_int(v) or isinstance(v, float):
            return float(v)
        raise TypeError

    if kind == 'str' and isinstance(value, str):
        return value
    if kind == 'bool' and isinstance(value, bool):
        return value
    if kind == 'int' and is_int(value):
        return value
    if kind == 'float':
        try:
            return as_float(value)
        except TypeError:
            pass
    if kind in ('floats', 'ints', 'strs') and isinstance(value, list):
        try:
            if kind == 'floats':
                return [as_float(v) for v in value]
            if kind == 'ints' and all(is_int(v) for v in value):
                return list(value)
            if kind == 'strs' and all(isinstance(v, str) for v in value):
                return list(value)
        except TypeError:
            pass
    raise TypeError(f"expected {kind}, got {type(value).__name__} {value!r}")


def parse_config(text: str) -> ExperimentConfig:
    """
    Parse the line-oriented experiment config

    Grammar: `key = value` lines, `[section]` headers, `#` comments. Values
    are integers, floats (inf allowed), "strings", true/false and [lists].

    Raises:
        ConfigError: every problem found, each with its line number
    """
    errors: List[Tuple[int, str]] = []
    seen: Dict[Tuple[str, str], int] = {}
    root: Dict[str, Any] = {}
    params: Dict[str, Any] = {}
    param_lines: Dict[str, int] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    section = ''

    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith('['):
            name = line[1:-1].strip() if line.endswith(']') else ''
            if name != 'params' and name not in SECTIONS:
                errors.append((number, f"unknown section '{line}'"))
                section = None
            else:
                section = name
            continue
        if '=' not in line:
            errors.append((number, f"expected 'key = value', got '{line}'"))
            continue
        key, _, value_text = line.partition('=')
        key = key.strip()
        if not _KEY.match(key) and key not in PARAM_ALIASES:
            errors.append((number, f"invalid key '{key}'"))
            continue
        if section is None:
            continue
        if section == 'params':
            key = PARAM_ALIASES.get(key, key)
        slot = (section, key)
        if slot in seen:
            where = f"[{section}] " if section else ''
            errors.append((number, f"duplicate key {where}'{key}' (lines {seen[slot]} and {number})"))
            continue
        seen[slot] = number
        try:
            value = _parse_value(value_text)
        except ValueError as e:
            errors.append((number, str(e)))
            continue

        if section == 'params':
            params[key] = value
            param_lines[key] = number
            continue
        schema = ROOT_KEYS if section == '' else SECTIONS[section]
        if key not in schema:
            where = f"section [{section}]" if section else 'top level'
            errors.append((number, f"unknown key '{key}' at {where}; accepted: {', '.join(schema)}"))
            continue
        try:
            value = _coerce(schema[key][0], value)
        except TypeError as e:
            errors.append((number, f"'{key}': {e}"))
            continue
        if (section, key) in POSITIVE_KEYS and not value > 0:
            errors.append((number, f"{key} must be > 0"))
            continue
        if (section, key) in NONNEGATIVE_KEYS and value < 0:
            errors.append((number, f"{key} must be >= 0"))
            continue
        if section == '':
            root[key] = value
        else:
            sections.setdefault(section, {})[key] = value

    for key in ('model', 'seed'):
        if key not in root and not any(s == ('', key) for s in seen):
            errors.append((0, f"missing required key '{key}'"))

    model = root.get('model')
    if model is not None and model not in MODEL_REGISTRY:
        errors.append((seen[('', 'model')], f"unknown model '{model}'; available: {', '.join(sorted(MODEL_REGISTRY))}"))
    elif model is not None:
        defaults = MODEL_DEFAULTS[model]
        for key, value in params.items():
            line = param_lines[key]
            if key not in defaults:
                errors.append((line, f"unknown parameter '{key}' for model '{model}'; accepted: {', '.join(sorted(defaults))}"))
            elif isinstance(defaults[key], float) and not (isinstance(value, (int, float)) and not isinstance(value, bool)):
                errors.append((line, f"'{key}': expected float, got {type(value).__name__} {value!r}"))
            elif isinstance(defaults[key], str) and not isinstance(value, str):
                errors.append((line, f"'{key}': expected str, got {type(value).__name__} {value!r}"))
            elif key == 'lambda' and not value > 0:
                errors.append((line, "lambda must be > 0"))
    sim = sections.get('simulation', {})
    n_keep = sim.get('n_keep', SECTIONS['simulation']['n_keep'][1])
    thin = sim.get('thin', SECTIONS['simulation']['thin'][1])
    if isinstance(n_keep, int) and isinstance(thin, int) and 0 < n_keep < thin:
        line = seen.get(('simulation', 'n_keep'), seen.get(('simulation', 'thin'), 0))
        errors.append((line, f"n_keep ({n_keep}) must be >= thin ({thin})"))
    fmt = root.get('format', 'csv')
    if fmt not in OUTPUT_FORMATS:
        errors.append((seen.get(('', 'format'), 0), f"format must be one of {', '.join(OUTPUT_FORMATS)}"))

    if not errors and model is not None:
        try:
            builtin_model(model, params)
        except ModelError as e:
            errors.append((seen[('', 'model')], str(e)))
    if errors:
        raise ConfigError(sorted(errors, key=lambda item: item[0]))

    return ExperimentConfig(
        model=root['model'], seed=root['seed'], params=params,
        workers=root.get('workers', 1), out=root.get('out', 'results'),
        format=fmt, sections=sections,
    )


def _render_scalar(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    if isinstance(value, str):
        return f'"{value}"'
    raise TypeError(f"cannot render {value!r}")


def _render_value(value) -> str:
    if isinstance(value, list):
        return '[' + ', '.join(_render_scalar(v) for v in value) + ']'
    return _render_scalar(value)


def render_config(config: ExperimentConfig) -> str:
    """Render a config in the format parse_config reads (round-trips exactly)"""
    lines = [
        f"model = {_render_value(config.model)}",
        f"seed = {_render_value(config.seed)}",
        f"workers = {_render_value(config.workers)}",
        f"out = {_render_value(config.out)}",
        f"format = {_render_value(config.format)}",
    ]
    if config.params:
        lines += ['', '[params]']
        lines += [f"{k} = {_render_value(v)}" for k, v in config.params.items()]
    for name in SECTIONS:
        lines += ['', f"[{name}]"]
        lines += [f"{k} = {_render_value(v)}" for k, v in config.sections[name].items()]
    return '\n'.join(lines) + '\n'


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

@dataclass
class RunFlags:
    """Command-line options that override or extend the config"""
    out: Optional[str] = None
    format: Optional[str] = None
    workers: Optional[int] = None
    checks: List[str] = field(default_factory=list)
    measures: List[str] = field(default_factory=list)
    upload: bool = False


class UsageError(ValueError):
    """Invalid combination of subcommand, flags and config"""


def _init_state(model, sim: Dict[str, Any]) -> State:
    y = sim['init_y'] or [0.0] * model.dim
    return model.make_state(y, sim['init_mode'])


def _invariant_sample(model, config: ExperimentConfig, init: State, rng: RngStream, workers: int):
    sim = config.section('simulation')
    return sample_invariant(model, init, sim['n_traj'], burn_in=sim['burn_in'], n_keep=sim['n_keep'],
                            thin=sim['thin'], rng=rng, workers=workers)


def _run_simulate(model, config, init, rng, workers, flags, artifacts) -> int:
    sim = config.section('simulation')
    trajectories = simulate_trajectories(model, init, sim['n_traj'], sim['n_steps'], rng.child(0), workers)
    artifacts.save_table('trajectories', ResultsProcessor.trajectories_frame(trajectories))
    return EXIT_OK


def _run_invariant(model, config, init, rng, workers, flags, artifacts) -> int:
    mu = _invariant_sample(model, config, init, rng.child(1), workers)
    artifacts.save_table('measure', ResultsProcessor.measure_frame(mu))
    cont = config.section('continuity')
    result = classify_continuity(mu, atom_eps=cont['atom_eps'] or None, bins=cont['bins'])
    artifacts.save_table('histogram', ResultsProcessor.histogram_frame(result.evidence['histogram']))
    summary = {k: v for k, v in result.evidence.items() if k != 'histogram'}
    artifacts.save_document('continuity', {'evidence': summary, 'params': result.params})
    logger.info(f"Invariant measure of {model.name}: {summary['classification']}")
    return EXIT_OK


def _run_fm_distance(model, config, init, rng, workers, flags, artifacts) -> int:
    if len(flags.measures) != 2:
        raise UsageError("fm-distance needs exactly two measure files")
    mu = ResultsProcessor.read_measure(flags.measures[0])
    nu = ResultsProcessor.read_measure(flags.measures[1])
    cfg = MetricConfig(c=config.section('metric')['c'])
    result = fm_distance_report(cfg, mu, nu)
    if not result.exact:
        logger.warning(f"fm-distance is approximate: within {result.error_bound:.3g} of {result.value!r}")
    artifacts.save_document('distance', {**result.to_dict(), 'c': cfg.c, 'measures': list(flags.measures)})
    print(repr(result.value))
    return EXIT_OK


def _run_rate(model, config, init, rng, workers, flags, artifacts) -> int:
    mu_star = _invariant_sample(model, config, init, rng.child(1), workers)
    rate = config.section('rate')
    cfg = MetricConfig(c=config.section('metric')['c'])
    fit = fit_rate(cfg, model, init, mu_star, n_max=rate['n_max'], n_rep=rate['n_rep'],
                   rng=rng.child(2), workers=workers)
    artifacts.save_table('rate', ResultsProcessor.rate_frame(fit))
    artifacts.save_document('rate_fit', fit.to_dict())
    return EXIT_OK


def _run_correspond(model, config, init, rng, workers, flags, artifacts) -> int:
    mu_hat = _invariant_sample(model, config, init, rng.child(1), workers)
    corr = config.section('correspond')
    result = check_correspondence(model, mu_hat, rng.child(3), c=config.section('metric')['c'],
                                  n_boot=corr['n_boot'], workers=workers)
    passed = result['d_WG'] < 1e-12 or result['d_WG'] <= corr['factor'] * result['d_null']
    result.update({'factor': corr['factor'], 'verdict': 'pass' if passed else 'fail'})
    artifacts.save_document('correspondence', result)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _probe_from_config(model, diag: Dict[str, Any]) -> RankProbe:
    y_hat, mode = diag['y_hat'], diag['mode']
    modes, times, thetas = diag['modes'], diag['times'], diag['thetas']
    if not y_hat:
        anchors = suggest_anchors(model)
        if not anchors:
            raise DiagnosticsError("no y_hat configured and no anchor candidate found")
        y_hat, mode = list(anchors[0].y_hat), anchors[0].mode
        logger.info(f"Using anchor {y_hat} (mode {mode}, {anchors[0].provenance})")
    n = len(modes) or model.dim
    modes = modes or [mode] * n
    times = times or [0.1] * n
    if not thetas:
        interior = [th for th in model.theta.grid() if model.theta.is_interior(th)]
        thetas = [interior[-1]] * n
    return RankProbe(np.array(y_hat), mode, PathSpec(tuple(modes), tuple(times), tuple(thetas)))


def _starts_from_config(model, diag: Dict[str, Any], rng: RngStream) -> List[State]:
    flat = diag['starts']
    if flat:
        if len(flat) % model.dim:
            raise DiagnosticsError(f"starts must hold a multiple of d={model.dim} coordinates")
        points = np.array(flat).reshape(-1, model.dim)
    else:
        points = model.sample_points(rng.gen, 3, radius=5.0)
    return [model.make_state(p, j) for p in points for j in model.modes]


def _run_diagnose(model, config, init, rng, workers, flags, artifacts) -> int:
    diag = config.section('diagnostics')
    checks = flags.checks or diag['checks'] or ['rank', 'positivity', 'accessibility', 'hypotheses']
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s) {', '.join(unknown)}; available: {', '.join(CHECKS)}")
    report = DiagnosticsReport(model=model.name)
    probe = None
    if any(c in ('rank', 'positivity', 'accessibility', 'small-set') for c in checks):
        probe = _probe_from_config(model, diag)
        probe.validate(model)
    for idx, name in enumerate(checks):
        stream = rng.child(10 + idx)
        if name == 'rank':
            report.add(check_rank(model, probe))
        elif name == 'positivity':
            report.add(check_positivity(model, probe))
        elif name == 'accessibility':
            starts = _starts_from_config(model, diag, stream.child(0))
            report.add(probe_accessibility(model, probe.y_hat, probe.mode, diag['radius'], starts,
                                           rng=stream.child(1), workers=workers))
        elif name == 'small-set':
            small = config.section('small_set')
            report.add(estimate_small_set(model, probe.y_hat, probe.mode, small['n'], small['n_mc'],
                                          stream, workers=workers))
        elif name == 'hypotheses':
            hyp = config.section('hypotheses')
            constants = HypothesisConstants.from_model(model)
            sub = check_hypotheses(model, constants, hyp['n_pairs'], stream, radius=hyp['radius'])
            for check in sub.checks:
                report.add(check)
        elif name == 'anchors':
            anchors = suggest_anchors(model)
            report.add(CheckResult(name='anchors', verdict='pass' if anchors else 'inconclusive',
                                   evidence={'count': len(anchors), 'anchors': [a.to_dict() for a in anchors]}))
        elif name == 'certify':
            starts = _starts_from_config(model, diag, stream.child(0))
            sub = certify_absolute_continuity(model, stream.child(1), starts=starts,
                                              radius=diag['radius'], workers=workers)
            for check in sub.checks:
                report.add(check)
    artifacts.save_document('diagnostics', report.to_dict())
    for check in report.checks:
        logger.info(f"Check {check.name}: {check.verdict}")
    return EXIT_CHECK_FAILED if report.failed else EXIT_OK


PIPELINES = {
    'simulate': _run_simulate,
    'invariant': _run_invariant,
    'fm-distance': _run_fm_distance,
    'rate': _run_rate,
    'diagnose': _run_diagnose,
    'correspond': _run_correspond,
}


def _versions() -> Dict[str, str]:
    from . import __version__
    import ot
    import pandas
    import scipy
    return {'pdmp_lab': __version__, 'python': platform.python_version(), 'numpy': np.__version__,
            'scipy': scipy.__version__, 'pot': ot.__version__, 'pandas': pandas.__version__}


def _upload(out_dir: Path, model: str, seed: int, subcommand: str):
    """Mirror the run directory to S3; failures never change the exit code"""
    if not S3_BUCKET_NAME:
        logger.warning("--upload given but PDMP_LAB_S3_BUCKET is not set; skipping upload")
        return
    from botocore.exceptions import BotoCoreError, ClientError
    from .s3_uploader import ArtifactS3Uploader
    try:
        uploader = ArtifactS3Uploader(
            bucket_name=S3_BUCKET_NAME,
            aws_access_key=AWS_ACCESS_KEY_ID,
            aws_secret_key=AWS_SECRET_ACCESS_KEY,
            region=AWS_REGION
        )
        if not uploader.upload_directory(out_dir, model, seed, subcommand, date.today()):
            logger.warning("Some artifacts failed to upload")
    except (ClientError, BotoCoreError) as e:
        logger.error(f"Upload failed: {e}")


def run(subcommand: str, config: ExperimentConfig, flags: Optional[RunFlags] = None) -> int:
    """
    Execute one pipeline and write its artifacts plus a manifest

    Returns:
        0 on success, 1 when a check fails or a computation fails, 2 on usage errors
    """
    flags = flags or RunFlags()
    out_dir = Path(flags.out or config.out) / subcommand
    fmt = flags.format or config.format
    workers = flags.workers if flags.workers is not None else config.workers
    manifest: Dict[str, Any] = {'subcommand': subcommand, 'seed': config.seed, 'model': config.model,
                                'config': render_config(config), 'workers': workers, 'format': fmt}
    code = EXIT_CHECK_FAILED
    artifacts = None
    try:
        if subcommand not in PIPELINES:
            raise UsageError(f"unknown subcommand '{subcommand}'")
        artifacts = RunArtifacts(out_dir, fmt)
        model = builtin_model(config.model, config.params)
        init = _init_state(model, config.section('simulation'))
        rng = RngStream(config.seed)
        logger.info(f"Running {subcommand} on {model.name} (seed {config.seed}, {workers} workers)")
        code = PIPELINES[subcommand](model, config, init, rng, workers, flags, artifacts)
    except (UsageError, ModelError) as e:
        logger.error(f"{e} (check the config file and command-line flags)")
        manifest['error'] = str(e)
        code = EXIT_USAGE
    except (SimulationError, MetricError, DiagnosticsError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        manifest['error'] = f"{type(e).__name__}: {e}"
        code = EXIT_CHECK_FAILED
    finally:
        manifest['exit_code'] = code
        manifest['files'] = [p.name for p in artifacts.files] if artifacts else []
        manifest['versions'] = _versions()
        write_json(manifest, out_dir / MANIFEST_NAME)
    if flags.upload:
        _upload(out_dir, config.model, config.seed, subcommand)
    return code


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, help='experiment config file')
    common.add_argument('--seed', type=int, help='override the config seed')
    common.add_argument('--out', help='output directory (default: config out)')
    common.add_argument('--format', choices=OUTPUT_FORMATS, help='table format')
    common.add_argument('--workers', type=int, help='worker threads')
    common.add_argument('--check', action='append', default=[], dest='checks', choices=CHECKS,
                        help='diagnostics check to run (repeatable)')
    common.add_argument('--upload', action='store_true', help='mirror artifacts to S3')
    common.add_argument('--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(prog=PROG, description='PDMP simulation and diagnostics')
    sub = parser.add_subparsers(dest='subcommand', required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == 'fm-distance':
            p.add_argument('measures', nargs=2, metavar='MEASURE', help='measure CSV/JSON files')
    models = sub.add_parser('models', help='list built-in models and their defaults')
    models.add_argument('--verbose', action='store_true')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    logging.basicConfig(level=logging.DEBUG if args.verbose else LOG_LEVEL, format=LOG_FORMAT)

    if args.subcommand == 'models':
        for name in sorted(MODEL_REGISTRY):
            defaults = ', '.join(f"{k}={v}" for k, v in MODEL_DEFAULTS[name].items())
            print(f"{name}: {defaults}")
        return EXIT_OK

    flags = RunFlags(out=args.out, format=args.format, workers=args.workers, checks=args.checks,
                     measures=getattr(args, 'measures', []), upload=args.upload)
    try:
        text = Path(args.config).read_text(encoding='utf-8')
        config = parse_config(text)
    except (OSError, ConfigError) as e:
        logger.error(f"Invalid config {args.config}:\n{e}")
        out_dir = Path(args.out or 'results') / args.subcommand
        write_json({'subcommand': args.subcommand, 'config_file': args.config, 'error': str(e),
                    'exit_code': EXIT_USAGE, 'files': [], 'versions': _versions()},
                   out_dir / MANIFEST_NAME)
        return EXIT_USAGE
    if args.seed is not None:
        config.seed = args.seed
    return run(args.subcommand, config, flags)


if __name__ == '__main__':
    sys.exit(main())
