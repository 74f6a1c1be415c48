"""Scenario configuration: defaults, validation and the ``key = value`` loader.

Config files are flat text::

    # comments start with '#'
    n_gen = 5
    lambda = 0.5
    selection = BV_T
    env.1.generations = 1
    env.1.target_fraction = 0.5
    env.1.taxa_scope = ALL
    env.1.effect_sd = 5

Environmental effects are numbered groups ``env.<k>.<field>``; see
:class:`EnvEffectSpec` for the fields. ``taxa_scope`` accepts ``ALL``,
``clusters:<id>,<id>``, ``taxa:<name>,<name>`` or ``random_clusters:<n>``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SELECTION_CRITERIA = (
    "RANDOM",
    "MICROBIOTA_EFFECT",
    "BV_M",
    "BV_D",
    "BV_T",
    "DIVERSITY",
    "MIXED_INDEX",
)


@dataclass(frozen=True)
class EnvEffectSpec:
    """One environmental fixed effect (one column of the design matrix).

    ``taxa_scope`` is ``"ALL"``, ``("clusters", ids)``, ``("taxa", names)`` or
    ``("random_clusters", n)``. With ``persistent_assignment`` the offspring of
    exposed dams stay exposed instead of being re-drawn every generation.
    """

    generations: tuple[int, ...]
    target_fraction: float = 0.5
    taxa_scope: object = "ALL"
    effect_sd: float = 1.0
    persistent_assignment: bool = False

    def __post_init__(self):
        if not self.generations:
            raise ConfigError("environmental effect needs at least one generation")
        if min(self.generations) < 1:
            raise ConfigError("environmental effects apply from generation 1 onwards")
        if not 0 < self.target_fraction <= 1:
            raise ConfigError(f"target_fraction must lie in (0, 1], got {self.target_fraction}")
        if not self.effect_sd > 0:
            raise ConfigError(f"effect_sd must be positive, got {self.effect_sd}")

    def active(self, t):
        return t in self.generations


@dataclass(frozen=True)
class ScenarioConfig:
    n_gen: int = 5
    n_ind: int | None = None  # None: same as the base population size
    sex_ratio: float = 0.5
    lam: float = 0.5
    h2_d: float = 0.25
    b2: float = 0.25
    sigma_beta: float = 0.1
    # sigma_beta * sqrt(QTL_o); overrides sigma_beta when set
    effect_size: float | None = None
    sigma_m: float = 0.1
    qtl_y: int = 100
    qtl_o: int | None = None  # None: round(qtl_o_fraction * n_g / v)
    qtl_o_fraction: float = 0.2
    otu_g: float = 0.05
    eta: float = 25.0
    pi: float = 0.75
    n_clusters: int = 100
    cluster_size_min: int = 10
    cluster_size_max: int = 25
    depth: tuple[int, ...] = (10000,)
    size_selection_F: float = 0.30
    size_selection_M: float = 0.30
    selection: str = "RANDOM"
    w_div: float = 0.0
    standardize_index: bool = True
    select_from_g0: bool = False
    env_effects: tuple[EnvEffectSpec, ...] = ()
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        def frac(name, lo_open=False):
            v = getattr(self, name)
            ok = (0 < v <= 1) if lo_open else (0 <= v <= 1)
            if not ok:
                raise ConfigError(f"{name} must lie in {'(0' if lo_open else '[0'}, 1], got {v}")

        if self.n_gen < 1:
            raise ConfigError(f"n_gen must be >= 1, got {self.n_gen}")
        if self.n_ind is not None and self.n_ind < 2:
            raise ConfigError(f"n_ind must be >= 2, got {self.n_ind}")
        for name in ("sex_ratio", "lam", "w_div", "qtl_o_fraction"):
            frac(name)
        for name in ("otu_g", "pi", "size_selection_F", "size_selection_M"):
            frac(name, lo_open=True)
        if not (0 <= self.h2_d < 1 and 0 <= self.b2 < 1):
            raise ConfigError("h2_d and b2 must lie in [0, 1)")
        if self.h2_d + self.b2 >= 1:
            raise ConfigError(
                f"h2_d + b2 must be < 1 (residual variance is fixed at 1), got "
                f"{self.h2_d} + {self.b2} = {self.h2_d + self.b2}"
            )
        if self.sigma_beta < 0 or self.sigma_m < 0:
            raise ConfigError("sigma_beta and sigma_m must be non-negative")
        if self.effect_size is not None and self.effect_size < 0:
            raise ConfigError("effect_size must be non-negative")
        if self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if self.qtl_y < 0:
            raise ConfigError("qtl_y must be non-negative")
        if self.qtl_o is not None and self.qtl_o < 1:
            raise ConfigError("qtl_o must be >= 1")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if not 1 <= self.cluster_size_min <= self.cluster_size_max:
            raise ConfigError("need 1 <= cluster_size_min <= cluster_size_max")
        if not self.depth or min(self.depth) < 1:
            raise ConfigError("depth values must be >= 1")
        if self.selection not in SELECTION_CRITERIA:
            raise ConfigError(
                f"unknown selection criterion {self.selection!r}; "
                f"expected one of {', '.join(SELECTION_CRITERIA)}"
            )
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["env_effects"] = [dataclasses.asdict(e) for e in self.env_effects]
        d["depth"] = list(self.depth)
        return d


# config-file key -> dataclass field
_ALIASES = {"lambda": "lam", "qtn_y": "qtl_y", "noise.microbiome": "sigma_m"}
_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_ENV_FIELDS = {f.name for f in dataclasses.fields(EnvEffectSpec)}
_ENV_KEY = re.compile(r"^env\.(\w+)\.(\w+)$")


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s):
    out = []
    for part in re.split(r"[,\s]+", s.strip()):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _parse_scope(s):
    s = s.strip()
    if s.upper() == "ALL":
        return "ALL"
    kind, _, rest = s.partition(":")
    kind = kind.strip().lower()
    items = [x.strip() for x in rest.split(",") if x.strip()]
    if kind == "clusters":
        return ("clusters", tuple(int(x) for x in items))
    if kind == "taxa":
        return ("taxa", tuple(items))
    if kind == "random_clusters" and len(items) == 1:
        return ("random_clusters", int(items[0]))
    raise ValueError(f"cannot parse taxa_scope {s!r}")


def _convert(name, raw):
    raw = raw.strip()
    if name == "depth":
        return tuple(int(float(x)) for x in re.split(r"[,\s]+", raw) if x)
    if name == "selection":
        return raw.upper()
    if name in ("n_ind", "qtl_o", "effect_size") and raw.lower() in ("", "none", "null"):
        return None
    if name in ("n_gen", "n_ind", "qtl_y", "qtl_o", "n_clusters", "cluster_size_min",
                "cluster_size_max", "seed", "replicates"):
        return int(raw)
    if name in ("standardize_index", "select_from_g0"):
        return _parse_bool(raw)
    return float(raw)


def _convert_env(name, raw):
    if name == "generations":
        return _parse_int_list(raw)
    if name == "taxa_scope":
        return _parse_scope(raw)
    if name == "persistent_assignment":
        return _parse_bool(raw)
    return float(raw)


def parse_pairs(lines, source="<config>"):
    """Parse ``key = value`` lines into an ordered dict of raw strings."""
    pairs = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        pairs[key.strip()] = value.strip()
    return pairs


def config_from_pairs(pairs):
    """Build a validated :class:`ScenarioConfig` from raw string pairs."""
    values = {}
    env = {}
    for key, raw in pairs.items():
        m = _ENV_KEY.match(key)
        if m:
            idx, fname = m.groups()
            if fname not in _ENV_FIELDS:
                raise ConfigError(f"unknown environmental-effect field {key!r}")
            try:
                env.setdefault(idx, {})[fname] = _convert_env(fname, raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
            continue
        name = _ALIASES.get(key, key)
        if name not in _FIELDS or name == "env_effects":
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[name] = _convert(name, raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    specs = []
    for idx in sorted(env, key=lambda k: (not k.isdigit(), int(k) if k.isdigit() else 0, k)):
        if "generations" not in env[idx]:
            raise ConfigError(f"env.{idx} is missing 'generations'")
        specs.append(EnvEffectSpec(**env[idx]))
    values["env_effects"] = tuple(specs)
    return ScenarioConfig(**values)


def load_config(path=None, overrides=()):
    """Resolve a config file plus ``KEY=VALUE`` overrides into a config.

    Absent keys take their defaults; overrides win over the file.
    """
    pairs = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        pairs.update(parse_pairs(text.splitlines(), source=str(path)))
    pairs.update(parse_pairs(overrides, source="<overrides>"))
    return config_from_pairs(pairs)
