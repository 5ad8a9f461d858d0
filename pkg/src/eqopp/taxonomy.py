"""The four equal-opportunity doctrines and their place in the taxonomy grid."""
import enum


class Doctrine(enum.Enum):
    FORMAL = "formal"
    FORMAL_PLUS = "formal-plus"
    LUCK_EGALITARIAN = "luck-egalitarian"
    RAWLSIAN = "rawlsian"

    @property
    def title(self):
        return _DOCTRINE_ROWS[self][0]

    @property
    def facing(self):
        """``backward`` or ``forward``."""
        return _DOCTRINE_ROWS[self][1]

    @property
    def concern(self):
        """``fair contests`` or ``fair life chances``."""
        return _DOCTRINE_ROWS[self][2]


_DOCTRINE_ROWS = {
    Doctrine.FORMAL: ("Formal", "backward", "fair contests"),
    Doctrine.FORMAL_PLUS: ("Formal-plus", "forward", "fair contests"),
    Doctrine.LUCK_EGALITARIAN: ("Substantive: luck-egalitarian", "backward", "fair life chances"),
    Doctrine.RAWLSIAN: ("Substantive: Rawlsian", "forward", "fair life chances"),
}
