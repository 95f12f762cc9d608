"""
.. module:: config
   :platform: Unix, Windows
   :synopsis: run configuration, presets and the flat key = value format

A configuration file holds one ``key = value`` pair per line; ``#`` starts a
comment and blank lines are ignored. Values are read with the type of the
:class:`RunConfig` field they set. Settings are layered: defaults, then a
preset, then the file, then command line flags.
"""

import dataclasses
from dataclasses import dataclass

from .exception import InvalidConfig, InvalidGeometry
from .lowrank import ABSOLUTE, DEFAULT_RANK_CUTOFF, DEFAULT_TRUNCATION, RELATIVE
from .mesh import GeometrySpec


@dataclass
class RunConfig:
    geometry: str = "checkerboard(2)"
    refine: int = 4
    grading: float = 1.0
    theta: float = 0.5
    f: float = 1.0
    J: int = 11
    k_max: int = 10
    eps: float = DEFAULT_TRUNCATION
    mode: str = ABSOLUTE
    rank_cutoff: float = DEFAULT_RANK_CUTOFF
    sample_count: int = 20
    seed: int = 0
    n_trials: int = 20
    span_k_max: int = 6
    oned_d: int = 4
    oned_samples: int = 50
    oned_cells: int = 8
    workers: int = 0
    stop_tol: float = None
    out: str = "out"
    preset: str = None

    def geometry_spec(self):
        try:
            return GeometrySpec.parse(self.geometry, self.refine, self.grading)
        except InvalidGeometry as err:
            raise InvalidConfig(err.message)

    def validate(self):
        """
        :raises InvalidConfig: on the first out of range value.
        """
        spec = self.geometry_spec()
        try:
            spec.validate()
        except InvalidGeometry as err:
            raise InvalidConfig(err.message)
        checks = (
            (0.0 < self.theta < 1.0, f"theta must lie in ]0, 1[, got {self.theta}."),
            (self.J >= 1, f"J must be at least 1, got {self.J}."),
            (self.k_max >= 0, f"k_max must be nonnegative, got {self.k_max}."),
            (self.eps >= 0, f"eps must be nonnegative, got {self.eps}."),
            (self.mode in (ABSOLUTE, RELATIVE), f"mode must be {ABSOLUTE!r} or {RELATIVE!r}, got {self.mode!r}."),
            (0 < self.rank_cutoff < 1, f"rank_cutoff must lie in ]0, 1[, got {self.rank_cutoff}."),
            (self.sample_count >= 1, f"sample_count must be positive, got {self.sample_count}."),
            (self.n_trials >= 1, f"n_trials must be positive, got {self.n_trials}."),
            (self.span_k_max >= 0, f"span_k_max must be nonnegative, got {self.span_k_max}."),
            (self.oned_d >= 1, f"oned_d must be positive, got {self.oned_d}."),
            (self.oned_samples >= 2 * self.oned_d,
             f"oned_samples must be at least 2 * oned_d = {2 * self.oned_d}, got {self.oned_samples}."),
            (self.oned_cells >= 1, f"oned_cells must be positive, got {self.oned_cells}."),
            (self.workers >= 0, f"workers must be nonnegative, got {self.workers}."),
            (self.stop_tol is None or self.stop_tol > 0, f"stop_tol must be positive, got {self.stop_tol}."),
            (bool(self.out), "out must name a directory."),
        )
        for ok, reason in checks:
            if not ok:
                raise InvalidConfig(reason)
        return self

    def as_dict(self):
        return dataclasses.asdict(self)


PRESETS = {
    # 2x2 checkerboard, rank growth and singular value decay
    'fig-4-2a': dict(geometry="checkerboard(2)", refine=5, grading=1.0, theta=0.5, J=11, k_max=10),
    # same parameters on four distorted quadrilaterals
    'fig-4-2b': dict(geometry="distorted", refine=5, grading=1.0, theta=0.5, J=11, k_max=10),
    # 16 parameters, singular values against sorted Legendre norms
    'fig-1-1': dict(geometry="checkerboard(4)", refine=2, grading=1.0, theta=0.5, J=5, k_max=12),
    # 16 parameters, ranks of the partial sums
    'fig-6': dict(geometry="checkerboard(4)", refine=1, grading=1.0, theta=0.5, J=5, k_max=10),
}

# Full scale settings of the presets; too slow for routine runs.
FULL_SCALE = {
    'fig-4-2a': dict(refine=7, J=15, k_max=10),
    'fig-4-2b': dict(refine=7, J=15, k_max=10),
    'fig-1-1': dict(refine=4, J=5, k_max=20),
    'fig-6': dict(refine=4, J=5, k_max=20),
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_TYPES = {
    'geometry': str, 'refine': int, 'grading': float, 'theta': float, 'f': float, 'J': int, 'k_max': int,
    'eps': float, 'mode': str, 'rank_cutoff': float, 'sample_count': int, 'seed': int, 'n_trials': int,
    'span_k_max': int, 'oned_d': int, 'oned_samples': int, 'oned_cells': int, 'workers': int,
    'stop_tol': float, 'out': str, 'preset': str,
}


def _convert(key, text):
    if key not in _FIELDS:
        raise InvalidConfig(f"unknown key {key!r}.")
    if key == 'stop_tol' and text.lower() in ("", "none"):
        return None
    kind = _TYPES[key]
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise InvalidConfig(f"{key} = {text!r} is not a valid {kind.__name__}.")
    return text


def parse_config_text(text):
    """
    Parse ``key = value`` lines into a dict of typed values.

    >>> parse_config_text("theta = 0.25  # smaller\\nJ = 6")
    {'theta': 0.25, 'J': 6}
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {number}: expected 'key = value', got {raw.strip()!r}.")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = _convert(key, value)
    return values


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return parse_config_text(handle.read())
    except OSError as err:
        raise InvalidConfig(f"cannot read {path}: {err.strerror}.")


def preset(name):
    if name not in PRESETS:
        raise InvalidConfig(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}.")
    return dict(PRESETS[name], preset=name)


def build_config(preset_name=None, path=None, overrides=None):
    """
    Layer defaults, preset, file and ``overrides`` (``None`` values skipped).

    :raises InvalidConfig: when neither a preset nor a file with settings is
                           given, or for any invalid value.
    """
    values = {}
    if preset_name:
        values.update(preset(preset_name))
    if path:
        from_file = read_config_file(path)
        if not from_file and not preset_name:
            raise InvalidConfig(f"{path} holds no settings.")
        if 'preset' in from_file and not preset_name:
            values.update(preset(from_file['preset']))
        values.update(from_file)
    if not values:
        raise InvalidConfig("give a preset or a configuration file.")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values).validate()


def format_config(config):
    """Inverse of :func:`parse_config_text` for the fields that are set."""
    lines = []
    for key, value in config.as_dict().items():
        if value is None:
            continue
        lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    return "\n".join(lines) + "\n"
