from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence


class Orientation(Enum):
    UP = 1
    DOWN = -1

    def __neg__(self) -> "Orientation":
        return Orientation.DOWN if self is Orientation.UP else Orientation.UP

    @property
    def symbol(self) -> str:
        return "+" if self is Orientation.UP else "-"

    @classmethod
    def from_symbol(cls, symbol: str) -> "Orientation":
        if symbol == "+":
            return cls.UP
        if symbol == "-":
            return cls.DOWN
        raise ValueError(f"not an orientation symbol: {symbol!r}")


UP = Orientation.UP
DOWN = Orientation.DOWN


class PairKind(Enum):
    UP_DOWN = (UP, DOWN)
    DOWN_UP = (DOWN, UP)
    UP_UP = (UP, UP)
    DOWN_DOWN = (DOWN, DOWN)

    @property
    def orientations(self) -> tuple[Orientation, Orientation]:
        return self.value

    @property
    def is_excursion(self) -> bool:
        return self in (PairKind.UP_DOWN, PairKind.DOWN_UP)

    @classmethod
    def from_orientations(cls, first: Orientation, second: Orientation) -> "PairKind":
        return cls((first, second))

    @classmethod
    def direct(cls, parent: Orientation) -> "PairKind":
        return cls.UP_UP if parent is UP else cls.DOWN_DOWN


@dataclass(frozen=True)
class OffspringPattern:
    """Subcrossing orientations of one crossing: excursion pairs, then a direct pair."""

    excursions: tuple[PairKind, ...]
    direct: PairKind
    # +1/-1 per subcrossing, the form the engine and the estimators index into
    signs: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        signs: list[int] = []
        for pair in (*self.excursions, self.direct):
            signs.extend(o.value for o in pair.orientations)
        object.__setattr__(self, "signs", tuple(signs))

    @property
    def z(self) -> int:
        return 2 * len(self.excursions) + 2

    def __len__(self) -> int:
        return self.z

    @property
    def orientations(self) -> tuple[Orientation, ...]:
        return tuple(Orientation(s) for s in self.signs)

    def orientation(self, position: int) -> Orientation:
        """Orientation of subcrossing `position` (1-based)."""
        return Orientation(self.signs[position - 1])

    def count(self, orientation: Orientation) -> int:
        return sum(1 for s in self.signs if s == orientation.value)

    def __str__(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)

    @classmethod
    def from_orientations(cls, orientations: Sequence[Orientation]) -> "OffspringPattern":
        """Pair up a raw orientation sequence; raises ValueError if it is not made of pairs."""
        if len(orientations) < 2 or len(orientations) % 2:
            raise ValueError(f"subcrossing count must be even and >= 2, got {len(orientations)}")
        pairs = [PairKind.from_orientations(orientations[i], orientations[i + 1]) for i in range(0, len(orientations), 2)]
        *excursions, direct = pairs
        if any(not pair.is_excursion for pair in excursions):
            raise ValueError("only the final pair may be a direct crossing")
        if direct.is_excursion:
            raise ValueError("the final pair must be a direct crossing")
        return cls(tuple(excursions), direct)

    @classmethod
    def parse(cls, text: str) -> "OffspringPattern":
        return cls.from_orientations([Orientation.from_symbol(c) for c in text.strip()])

    @classmethod
    def build(cls, parent: Orientation, excursions: Iterable[PairKind] = ()) -> "OffspringPattern":
        return cls(tuple(excursions), PairKind.direct(parent))


def validate_pattern(a: OffspringPattern, parent: Orientation) -> bool:
    if any(not pair.is_excursion for pair in a.excursions):
        return False
    if a.direct is not PairKind.direct(parent):
        return False
    ups = a.count(UP)
    downs = a.z - ups
    if parent is UP:
        return ups == a.z // 2 + 1 and downs == a.z // 2 - 1
    return downs == a.z // 2 + 1 and ups == a.z // 2 - 1
