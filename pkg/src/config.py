"""Configuration management: environment settings and experiment config files"""

import configparser
import hashlib
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigError
from .ep_model import EP_PRESETS, HIDDEN_SIZES
from .hyperopt import GENOME_BOUNDS, GENOME_FIELDS
from .models import EPHyperParams, ExperimentPlan, GaConfig, LabeledSet, SleepParams, Strategy
from .continual import task_orders
from .data import FEATURE_DATASETS, IDX_DATASETS, label_groups, load_dataset, subsample
from .numerics import make_rng


class Config:
    """Application settings loaded from .env and environment variables"""

    def __init__(self):
        # Load .env file from project root
        env_path = Path(__file__).parent.parent / '.env'
        load_dotenv(env_path)

        self.output_root = self._optional_path(os.getenv('SOMNUS_OUTPUT_ROOT'))
        self.data_root = self._optional_path(os.getenv('SOMNUS_DATA_ROOT'))
        self.workers = self._parse_int('SOMNUS_WORKERS', os.getenv('SOMNUS_WORKERS', '1'))
        self.log_level = os.getenv('SOMNUS_LOG_LEVEL', 'INFO').upper()

    def _optional_path(self, value: Optional[str]) -> Optional[Path]:
        return Path(value).expanduser() if value else None

    def _parse_int(self, name: str, value: str) -> int:
        try:
            parsed = int(value)
        except ValueError:
            raise ValueError(f"Invalid {name}: {value}. Expected an integer")
        return max(1, parsed)

    def resolve_output(self, path: Path) -> Path:
        """Relative output paths land under SOMNUS_OUTPUT_ROOT when it is set"""
        if path.is_absolute() or self.output_root is None:
            return path
        return self.output_root / path

    def resolve_data(self, path: Path, base: Path) -> Path:
        """Relative dataset paths resolve against SOMNUS_DATA_ROOT, else the config file's folder"""
        if path.is_absolute():
            return path
        return (self.data_root or base) / path


# Global config instance
config = Config()


# Allowed keys per section; anything else in a file is rejected
SCHEMA: Dict[str, Tuple[str, ...]] = {
    'data': ('dataset', 'images', 'labels', 'features', 'labels_per_task', 'test_fraction', 'fraction'),
    'model': ('hidden_size',),
    'ep': ('alpha1', 'alpha2', 'beta', 'dt', 'gamma', 'free_steps', 'clamped_steps',
           'batch_size', 'epochs_per_task', 'rule'),
    'sleep': GENOME_FIELDS + ('feedback_on', 'include'),
    'experiment': ('strategy', 'rehearsal_fraction', 'seed', 'num_orders', 'orders',
                   'output_dir', 'workers', 'sweep_fractions'),
    'ga': ('population', 'crossover_prob', 'mutation_prob', 'elite_fraction', 'parent_fraction',
           'tournament_size', 'max_stall_generations', 'max_generations', 'workers')
          + tuple(f"bounds_{name}" for name in GENOME_FIELDS),
    'analysis': ('phases', 'bins', 'pairs', 'classes'),
}
DEFAULT_NUM_ORDERS = 6
FAST_HIDDEN_SIZE = 256
FAST_DATA_FRACTION = 0.2
SUBSAMPLE_KEY = 4


@dataclass
class AnalysisSettings:
    phases: Optional[Tuple[str, str]] = None  # weight histogram before/after
    bins: int = 50
    pairs: List[Tuple[str, str]] = field(default_factory=list)
    classes: Optional[List[int]] = None


@dataclass
class ExperimentConfig:
    """A parsed and validated experiment config file"""
    path: Path
    config_hash: str
    dataset: str
    images: Optional[Path]
    labels: Optional[Path]
    features: Optional[Path]
    labels_per_task: int
    test_fraction: float
    data_fraction: float
    hidden_size: int
    ep: EPHyperParams
    sleep: Optional[SleepParams]
    strategy: Strategy
    rehearsal_fraction: float
    seed: int
    num_orders: int
    orders: Optional[List[Tuple[int, ...]]]
    output_dir: Path
    workers: int
    sweep_fractions: List[float]
    ga: GaConfig
    analysis: AnalysisSettings

    def fast(self) -> 'ExperimentConfig':
        """CI-tier variant: hidden size 256 and 20% of the data"""
        return replace(self, hidden_size=min(self.hidden_size, FAST_HIDDEN_SIZE),
                       data_fraction=min(self.data_fraction, FAST_DATA_FRACTION))

    def build_plan(self, data: LabeledSet) -> ExperimentPlan:
        num_tasks = len(label_groups(data.num_classes, self.labels_per_task))
        orders = self.orders or task_orders(num_tasks, self.num_orders, self.seed)
        for order in orders:
            if sorted(order) != list(range(num_tasks)):
                raise ConfigError(f"task order {order} is not a permutation of {num_tasks} tasks")
        return ExperimentPlan(
            dataset=self.dataset,
            data=data,
            strategy=self.strategy,
            task_orders=orders,
            ep=self.ep,
            hidden_size=self.hidden_size,
            sleep=self.sleep,
            rehearsal_fraction=self.rehearsal_fraction,
            seed=self.seed,
            labels_per_task=self.labels_per_task,
            test_fraction=self.test_fraction,
            workers=self.workers,
        )


def config_hash(*chunks: bytes) -> str:
    """First 12 hex digits of the SHA-256 over the config bytes"""
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return digest.hexdigest()[:12]


def _read(path: Path) -> Tuple[configparser.ConfigParser, bytes]:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#',))
    try:
        parser.read_string(raw.decode('utf-8'), source=str(path))
    except (configparser.Error, UnicodeDecodeError) as e:
        raise ConfigError(f"{path}: {e}")

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        allowed = {key.lower() for key in SCHEMA[section]}
        unknown = [key for key in parser[section] if key.lower() not in allowed]
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(unknown)}")
    return parser, raw


class _Section:
    """Typed access to one section with errors that name the file and key"""

    def __init__(self, parser: configparser.ConfigParser, name: str, source: Path):
        self.values = {k.lower(): v for k, v in parser[name].items()} if parser.has_section(name) else {}
        self.name = name
        self.source = source

    def __contains__(self, key: str) -> bool:
        return key.lower() in self.values

    def _convert(self, key, default, convert, kind):
        key = key.lower()
        if key not in self.values:
            return default
        try:
            return convert(self.values[key])
        except ValueError:
            raise ConfigError(f"{self.source}: [{self.name}] {key} = {self.values[key]!r} is not {kind}")

    def get_str(self, key, default=None):
        return self.values.get(key.lower(), default)

    def get_int(self, key, default=None):
        return self._convert(key, default, int, 'an integer')

    def get_float(self, key, default=None):
        return self._convert(key, default, float, 'a number')

    def get_bool(self, key, default=None):
        def parse(value):
            lowered = value.strip().lower()
            if lowered in ('true', '1', 'yes', 'on'):
                return True
            if lowered in ('false', '0', 'no', 'off'):
                return False
            raise ValueError(value)
        return self._convert(key, default, parse, 'a boolean')

    def get_floats(self, key, default=None):
        return self._convert(key, default, lambda v: [float(x) for x in v.split(',') if x.strip()],
                             'a comma-separated list of numbers')

    def get_ints(self, key, default=None):
        return self._convert(key, default, lambda v: [int(x) for x in v.split(',') if x.strip()],
                             'a comma-separated list of integers')


def parse_pairs(text: str) -> List[Tuple[str, str]]:
    """'T1:T2,T1:S2' -> [('T1', 'T2'), ('T1', 'S2')]"""
    pairs = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        parts = item.split(':')
        if len(parts) != 2 or not all(parts):
            raise ValueError(f"phase pair must look like A:B, got {item!r}")
        pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


def _parse_orders(text: str) -> List[Tuple[int, ...]]:
    """Orders separated by ';', tasks inside an order by ','"""
    return [tuple(int(t) for t in chunk.split(',')) for chunk in text.split(';') if chunk.strip()]


def _load_ep(section: _Section, dataset: str) -> EPHyperParams:
    preset = EP_PRESETS.get(dataset, EPHyperParams())
    values = preset.to_dict()
    for key in ('alpha1', 'alpha2', 'beta', 'dt', 'gamma'):
        values[key] = section.get_float(key, values[key])
    for key in ('free_steps', 'clamped_steps', 'batch_size', 'epochs_per_task'):
        values[key] = section.get_int(key, values[key])
    values['rule'] = section.get_str('rule', values['rule'])
    if values['beta'] <= 0:
        raise ValueError(f"[ep] beta must be positive for training, got {values['beta']}")
    return EPHyperParams(**values)


def _load_sleep(parser: configparser.ConfigParser, path: Path, base: Path) -> Tuple[Optional[SleepParams], bytes]:
    section = _Section(parser, 'sleep', path)
    included = b''
    values = {}
    if 'include' in section:
        include_path = Path(section.get_str('include'))
        if not include_path.is_absolute():
            include_path = base / include_path
        include_parser, included = _read(include_path)
        include_section = _Section(include_parser, 'sleep', include_path)
        values.update({k: include_section.get_float(k) for k in GENOME_FIELDS if k in include_section})
        if 'feedback_on' in include_section:
            values['feedback_on'] = include_section.get_bool('feedback_on')

    values.update({k: section.get_float(k) for k in GENOME_FIELDS if k in section})
    if 'feedback_on' in section:
        values['feedback_on'] = section.get_bool('feedback_on')

    if not values:
        return None, included
    missing = [k for k in GENOME_FIELDS if k not in values]
    if missing:
        raise ConfigError(f"{path}: [sleep] is missing {', '.join(missing)}")
    return SleepParams(**values), included


def _load_ga(section: _Section, default_workers: int) -> GaConfig:
    bounds = []
    for name, default in zip(GENOME_FIELDS, GENOME_BOUNDS):
        lo_hi = section.get_floats(f"bounds_{name}", list(default))
        if len(lo_hi) != 2:
            raise ConfigError(f"[ga] bounds_{name} needs exactly two values (lo, hi)")
        bounds.append((lo_hi[0], lo_hi[1]))
    return GaConfig(
        bounds=bounds,
        population=section.get_int('population', 100),
        crossover_prob=section.get_float('crossover_prob', 0.75),
        mutation_prob=section.get_float('mutation_prob', 0.1),
        elite_fraction=section.get_float('elite_fraction', 0.01),
        parent_fraction=section.get_float('parent_fraction', 0.20),
        tournament_size=section.get_int('tournament_size', 3),
        max_stall_generations=section.get_int('max_stall_generations', 15),
        max_generations=section.get_int('max_generations', None),
        workers=section.get_int('workers', default_workers),
    )


def _load_analysis(section: _Section) -> AnalysisSettings:
    phases = None
    if 'phases' in section:
        labels = [p.strip() for p in section.get_str('phases').split(',') if p.strip()]
        if len(labels) != 2:
            raise ConfigError("[analysis] phases needs exactly two phase labels")
        phases = (labels[0], labels[1])
    try:
        pairs = parse_pairs(section.get_str('pairs', ''))
    except ValueError as e:
        raise ConfigError(f"[analysis] {e}")
    return AnalysisSettings(phases, section.get_int('bins', 50), pairs, section.get_ints('classes', None))


def load_experiment_config(path, base=None) -> ExperimentConfig:
    """
    Parse and validate an experiment config

    Every check that can fail (unknown keys, bad values, missing dataset
    files) happens here, before anything is written to disk. Relative
    dataset paths resolve against `base` (default: the config's folder)
    unless SOMNUS_DATA_ROOT is set; a relative sleep include always
    resolves against `base`.
    """
    path = Path(path)
    parser, raw = _read(path)
    base = Path(base) if base is not None else path.parent

    data = _Section(parser, 'data', path)
    dataset = (data.get_str('dataset') or '').strip().lower()
    if dataset not in IDX_DATASETS + FEATURE_DATASETS:
        raise ConfigError(f"{path}: [data] dataset must be one of {', '.join(IDX_DATASETS + FEATURE_DATASETS)}")

    def data_path(key):
        value = data.get_str(key)
        return config.resolve_data(Path(value), base) if value else None

    images, labels, features = data_path('images'), data_path('labels'), data_path('features')
    required = ('images', 'labels') if dataset in IDX_DATASETS else ('features',)
    for key, value in zip(('images', 'labels', 'features'), (images, labels, features)):
        if key not in required:
            continue
        if value is None:
            raise ConfigError(f"{path}: [data] {key} is required for {dataset}")
        if not value.exists():
            raise ConfigError(f"{path}: dataset file not found: {value}")

    try:
        sleep, included = _load_sleep(parser, path, base)
        ep = _load_ep(_Section(parser, 'ep', path), dataset)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")

    experiment = _Section(parser, 'experiment', path)
    try:
        strategy = Strategy(experiment.get_str('strategy', 'sequential').strip().lower())
    except ValueError:
        raise ConfigError(f"{path}: unknown strategy {experiment.get_str('strategy')!r}")
    if strategy.uses_sleep and sleep is None:
        raise ConfigError(f"{path}: strategy '{strategy.value}' needs a [sleep] section")

    orders = None
    if 'orders' in experiment:
        try:
            orders = _parse_orders(experiment.get_str('orders'))
        except ValueError:
            raise ConfigError(f"{path}: [experiment] orders must look like '0,1,2,3,4; 4,3,2,1,0'")

    rehearsal_fraction = experiment.get_float('rehearsal_fraction', 0.0)
    fraction = data.get_float('fraction', 1.0)
    test_fraction = data.get_float('test_fraction', 0.1)
    for name, value in (('rehearsal_fraction', rehearsal_fraction), ('fraction', fraction),
                        ('test_fraction', test_fraction)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{path}: {name} must lie in [0, 1], got {value}")

    workers = experiment.get_int('workers', config.workers)
    try:
        ga = _load_ga(_Section(parser, 'ga', path), workers)
    except ValueError as e:
        raise ConfigError(f"{path}: [ga] {e}")

    return ExperimentConfig(
        path=path,
        config_hash=config_hash(raw, included),
        dataset=dataset,
        images=images,
        labels=labels,
        features=features,
        labels_per_task=data.get_int('labels_per_task', 2),
        test_fraction=test_fraction,
        data_fraction=fraction,
        hidden_size=_Section(parser, 'model', path).get_int('hidden_size', HIDDEN_SIZES[dataset]),
        ep=ep,
        sleep=sleep,
        strategy=strategy,
        rehearsal_fraction=rehearsal_fraction,
        seed=experiment.get_int('seed', 0),
        num_orders=experiment.get_int('num_orders', DEFAULT_NUM_ORDERS),
        orders=orders,
        output_dir=config.resolve_output(Path(experiment.get_str('output_dir', f"runs/{path.stem}"))),
        workers=max(1, workers),
        sweep_fractions=experiment.get_floats('sweep_fractions', []),
        ga=ga,
        analysis=_load_analysis(_Section(parser, 'analysis', path)),
    )


def load_experiment_data(cfg: ExperimentConfig) -> LabeledSet:
    """Load the dataset a config names, subsampled when `fraction` < 1"""
    data = load_dataset(cfg.dataset, cfg.images, cfg.labels, cfg.features)
    if cfg.data_fraction < 1.0:
        data = subsample(data, cfg.data_fraction, make_rng(cfg.seed, SUBSAMPLE_KEY))
    return data
