"""Line-oriented model files.

    # Brownian orientations, gamma weights
    [orientation_law]
    family = geometric
    p = 0.5

    [weight_law]
    mode = iid
    family = gamma
    shape = 2

Pattern rows take the form `<parent>/<children> = value`, e.g. `+/+-++ = 0.25`
under [orientation_law] or `+/+-++ = 0.3 0.2 0.2 0.3` under [weight_law].
Keys prefixed with `down.` override the parameters for Down parents.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from methods.spectral import build_model
from models.errors import ConfigError, EbpError
from models.laws import (
    ConstantExcursions,
    Deterministic,
    Empirical,
    Gamma,
    GeometricExcursions,
    LogNormal,
    OrientationLaw,
    PatternLaw,
    PatternTable,
    WeightFamily,
    WeightKey,
    WeightLaw,
    WeightMode,
)
from models.model import ModelSpec
from models.pattern import DOWN, UP, OffspringPattern, Orientation

logger = logging.getLogger(__name__)

SECTIONS = ("orientation_law", "weight_law", "model")
ORIENTATION_KEYS = {"family", "p", "count", "excursion_up"}
WEIGHT_KEYS = {"mode", "family", "value", "shape", "scale", "mu", "sigma", "normalize", "values"}
MODEL_KEYS = {"first_crossing"}


@dataclass
class Section:
    name: str
    line: int
    values: dict[str, tuple[str, int]] = field(default_factory=dict)
    rows: list[tuple[Orientation, OffspringPattern, str, int]] = field(default_factory=list)

    def has(self, key: str) -> bool:
        return key in self.values

    def text(self, key: str, default: Optional[str] = None) -> str:
        if key in self.values:
            return self.values[key][0]
        if default is None:
            raise ConfigError(f"[{self.name}] needs `{key}`", self.line)
        return default

    def number(self, key: str, default: Optional[float] = None) -> float:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"[{self.name}] needs `{key}`", self.line)
            return default
        value, line = self.values[key]
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"`{key}` must be a number, got {value!r}", line) from None

    def for_down(self, key: str) -> str:
        """The key to read for a Down parent: `down.<key>` when given."""
        return f"down.{key}" if f"down.{key}" in self.values else key

    def flag(self, key: str, default: bool) -> bool:
        if key not in self.values:
            return default
        value, line = self.values[key]
        if value.lower() in ("true", "yes", "1"):
            return True
        if value.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"`{key}` must be true or false, got {value!r}", line)


def _check_keys(section: Section, allowed: set[str]) -> None:
    for key, (_, line) in section.values.items():
        base = key.removeprefix("down.")
        if base not in allowed:
            raise ConfigError(f"unknown key `{key}` in [{section.name}]", line)


def read_sections(lines: list[str]) -> dict[str, Section]:
    sections: dict[str, Section] = {}
    current: Optional[Section] = None
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", number)
            if name in sections:
                raise ConfigError(f"section [{name}] appears twice", number)
            current = sections[name] = Section(name, number)
            continue
        if current is None:
            raise ConfigError("entry outside of any section", number)
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected `key = value`, got {line!r}", number)
        if "/" in key:
            parent_text, _, children = key.partition("/")
            try:
                parent = Orientation.from_symbol(parent_text.strip())
                pattern = OffspringPattern.parse(children)
            except ValueError as e:
                raise ConfigError(f"bad pattern {key!r}: {e}", number) from None
            current.rows.append((parent, pattern, value, number))
            continue
        if key in current.values:
            raise ConfigError(f"`{key}` given twice", number)
        current.values[key] = (value, number)
    return sections


def _pattern_law(section: Section, parent: Orientation) -> PatternLaw:
    def key(name: str) -> str:
        return section.for_down(name) if parent is DOWN else name

    family = section.text("family")
    if family == "geometric":
        return GeometricExcursions(parent, section.number(key("p")), section.number(key("excursion_up"), 0.5))
    if family == "constant":
        count = section.number(key("count"))
        if count != int(count):
            raise ConfigError("`count` must be an integer", section.values[key("count")][1])
        return ConstantExcursions(parent, int(count), section.number(key("excursion_up"), 0.5))
    if family == "table":
        entries = []
        for row_parent, pattern, value, line in section.rows:
            if row_parent is not parent:
                continue
            try:
                entries.append((pattern, float(value)))
            except ValueError:
                raise ConfigError(f"probability must be a number, got {value!r}", line) from None
        return PatternTable(parent, tuple(entries))
    raise ConfigError(f"unknown orientation family {family!r}", section.values["family"][1])


def orientation_law(section: Section) -> OrientationLaw:
    _check_keys(section, ORIENTATION_KEYS)
    if section.rows and section.text("family") != "table":
        raise ConfigError("pattern rows need `family = table`", section.rows[0][3])
    try:
        return OrientationLaw(_pattern_law(section, UP), _pattern_law(section, DOWN))
    except ConfigError:
        raise
    except (ValueError, EbpError) as e:
        raise ConfigError(f"[orientation_law]: {e}", section.line) from e


def _weight_family(section: Section, parent: Orientation) -> WeightFamily:
    def key(name: str) -> str:
        return section.for_down(name) if parent is DOWN else name

    if section.text("mode") == "empirical":
        value, line = section.values.get(key("values"), ("", section.line))
        try:
            values = tuple(float(x) for x in value.split())
        except ValueError:
            raise ConfigError("`values` must be numbers", line) from None
        if not values:
            raise ConfigError("empirical weights need `values`", line)
        return Empirical(values)

    family = section.text(key("family"))
    if family == "deterministic":
        return Deterministic(section.number(key("value")))
    if family == "gamma":
        return Gamma(section.number(key("shape")), section.number(key("scale"), 1.0))
    if family == "lognormal":
        return LogNormal(section.number(key("mu"), 0.0), section.number(key("sigma")))
    raise ConfigError(f"unknown weight family {family!r}", section.values[key("family")][1])


def _weight_table(section: Section) -> dict[WeightKey, tuple[float, ...]]:
    table: dict[WeightKey, tuple[float, ...]] = {}
    for parent, pattern, value, line in section.rows:
        try:
            weights = tuple(float(x) for x in value.split())
        except ValueError:
            raise ConfigError(f"weights must be numbers, got {value!r}", line) from None
        if (parent, pattern) in table:
            raise ConfigError(f"weights for {parent.symbol}/{pattern} given twice", line)
        table[(parent, pattern)] = weights
    return table


def weight_law(section: Optional[Section]) -> WeightLaw:
    if section is None:
        return WeightLaw(WeightMode.CONSTANT)
    _check_keys(section, WEIGHT_KEYS)
    mode = section.text("mode", "constant")
    normalize = section.flag("normalize", True)
    try:
        if mode == "constant":
            return WeightLaw(WeightMode.CONSTANT)
        if mode == "table":
            return WeightLaw(WeightMode.TABLE, table=_weight_table(section), normalize=normalize)
        if mode not in ("iid", "empirical"):
            raise ConfigError(f"unknown weight mode {mode!r}", section.values["mode"][1])
        up = _weight_family(section, UP)
        down = _weight_family(section, DOWN)
        return WeightLaw(WeightMode.IID, up=up, down=down if down != up else None, normalize=normalize)
    except ConfigError:
        raise
    except (ValueError, EbpError) as e:
        raise ConfigError(f"[weight_law]: {e}", section.line) from e


def parse_model(lines: list[str], name: str = "custom") -> ModelSpec:
    sections = read_sections(lines)
    if "orientation_law" not in sections:
        raise ConfigError("missing [orientation_law] section")
    law = orientation_law(sections["orientation_law"])
    weights = weight_law(sections.get("weight_law"))

    override = None
    if "model" in sections:
        _check_keys(sections["model"], MODEL_KEYS)
        if sections["model"].has("first_crossing"):
            override = sections["model"].number("first_crossing")

    try:
        return build_model(law, weights, first_crossing_override=override, name=name)
    except ConfigError:
        raise
    except (ValueError, EbpError) as e:
        raise ConfigError(str(e)) from e


def load_model(path: Path) -> ModelSpec:
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    logger.info("loading model from %s", path)
    return parse_model(lines, name=path.stem)
