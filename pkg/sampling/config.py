"""Runtime configuration for the harness.

Defaults come from ``settings.FAIR_ANN`` (themselves read from the
environment with python-decouple); command flags and ``--const NAME=VALUE``
pairs are layered on top.
"""

# Django imports
from django.conf import settings
from django.core.exceptions import ValidationError

# Local imports
from .core import Metric, MetricKind
from .lsh import FamilyKind

# Standard library imports
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Tuple
import logging

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
CONSTANT_NAMES = {
    'C_L': 'c_l',
    'C_LAMBDA': 'c_lambda',
    'C_SIGMA': 'c_sigma',
    'C_DELTA': 'c_delta',
    'C_T': 'c_t',
    'C_F': 'c_f',
    'EPS': 'eps',
    'DELTA': 'delta',
    'EPS_FILTER': 'eps_filter',
    'FILTER_DELTA': 'filter_delta',
    'SIGNIFICANCE': 'significance',
    'TVD_TOLERANCE': 'tvd_tolerance',
    'WIDTH': 'width',
    'REPETITIONS': 'repetitions',
}


class SamplerKind(str, Enum):
    NNS = "nns"
    NNS_NAIVE = "nns_naive"
    NNS_RANK_SWAP = "nns_rank_swap"
    NNIS = "nnis"
    FILTER = "filter"
    FILTER_NNIS = "filter_nnis"
    ORACLE = "oracle"

    @property
    def needs_unit_vectors(self) -> bool:
        return self in (SamplerKind.FILTER, SamplerKind.FILTER_NNIS)

    @property
    def rebuilds_per_trial(self) -> bool:
        """Static samplers answer a fixed query deterministically, so fairness needs fresh builds."""
        return self in (SamplerKind.NNS, SamplerKind.FILTER)


@dataclass(frozen=True)
class Constants:
    """Hidden constants of the structures; ``None`` for delta means 1/n^3."""

    c_l: float = 3.0
    c_lambda: float = 4.0
    c_sigma: float = 4.0
    c_delta: float = 8.0
    c_t: float = 4.0
    c_f: float = 3.0
    eps: float = 0.5
    delta: Optional[float] = None
    eps_filter: float = 0.1
    filter_delta: float = 0.05
    significance: float = 0.001
    tvd_tolerance: float = 0.05
    width: Optional[float] = None
    repetitions: Optional[int] = None

    def __post_init__(self):
        for item in fields(self):
            value = getattr(self, item.name)
            if value is not None and value <= 0:
                raise ValidationError(f"Constant {item.name.upper()} must be positive, got {value}.")
        if self.c_l < 1:
            raise ValidationError("Constant C_L must be at least 1.")
        for name in ('eps', 'eps_filter', 'significance'):
            if getattr(self, name) > 1:
                raise ValidationError(f"Constant {name.upper()} must not exceed 1.")
        for name in ('delta', 'filter_delta'):
            value = getattr(self, name)
            if value is not None and value >= 1:
                raise ValidationError(f"Constant {name.upper()} must be below 1.")
        if self.repetitions is not None:
            object.__setattr__(self, 'repetitions', int(self.repetitions))

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "Constants":
        known = {
            attr: values[key] for key, attr in CONSTANT_NAMES.items()
            if key in values and values[key] is not None
        }
        return cls(**known)

    def with_pairs(self, pairs: Iterable[str]) -> "Constants":
        updates = dict(parse_const(pair) for pair in pairs)
        return replace(self, **{CONSTANT_NAMES[key]: value for key, value in updates.items()})


def parse_const(pair: str) -> Tuple[str, float]:
    """Parse ``NAME=VALUE`` into an upper-case constant name and a float.

    Raises:
        ValidationError: If the pair is malformed or names an unknown constant.
    """
    name, sep, raw = pair.partition('=')
    name = name.strip().upper()
    if not sep or not name:
        raise ValidationError(f"Expected NAME=VALUE, got '{pair}'.")
    if name not in CONSTANT_NAMES:
        raise ValidationError(f"Unknown constant '{name}'. Known: {', '.join(sorted(CONSTANT_NAMES))}.")
    try:
        return name, float(raw)
    except ValueError:
        raise ValidationError(f"Constant {name} needs a numeric value, got '{raw}'.")


def build_metric(kind: str, r: Optional[float] = None, c: Optional[float] = None,
                 alpha: Optional[float] = None, beta: Optional[float] = None) -> Metric:
    try:
        kind = MetricKind(kind)
    except ValueError:
        raise ValidationError(f"Unknown metric '{kind}'.")
    if kind is MetricKind.INNER_PRODUCT:
        return Metric(kind, alpha=alpha, beta=beta)
    return Metric(kind, r=r, c=c)


@dataclass(frozen=True)
class Config:
    """Everything a build, query, fairness or benchmark run needs."""

    sampler: SamplerKind
    metric: Metric
    family: Optional[FamilyKind] = None
    constants: Constants = field(default_factory=Constants)
    seed: int = 0
    trials: int = 1000
    queries: int = 1
    workers: int = 1

    def __post_init__(self):
        try:
            object.__setattr__(self, 'sampler', SamplerKind(self.sampler))
            if self.family is not None:
                object.__setattr__(self, 'family', FamilyKind(self.family))
        except ValueError as exc:
            raise ValidationError(str(exc))
        if self.sampler.needs_unit_vectors and not self.metric.is_similarity:
            raise ValidationError(f"The {self.sampler.value} sampler needs the inner_product metric.")
        if self.seed < 0:
            raise ValidationError("Seeds must not be negative.")
        if self.trials < 0 or self.queries < 0:
            raise ValidationError("Trial and query counts must not be negative.")
        if self.workers < 1:
            raise ValidationError("At least one worker is required.")

    @classmethod
    def from_settings(cls, sampler: str, metric: Metric, const_pairs: Iterable[str] = (),
                      **overrides) -> "Config":
        """Config from ``settings.FAIR_ANN`` with explicit overrides (None values ignored)."""
        defaults = settings.FAIR_ANN
        constants = Constants.from_mapping(defaults)
        eps_filter = overrides.pop('eps_filter', None)
        if eps_filter is not None:
            constants = replace(constants, eps_filter=eps_filter)
        constants = constants.with_pairs(const_pairs)
        values = {
            'seed': defaults.get('SEED', 0),
            'trials': defaults.get('TRIALS', 1000),
            'queries': defaults.get('QUERIES', 1),
            'workers': defaults.get('WORKERS', 1),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(sampler=sampler, metric=metric, constants=constants, **values)
