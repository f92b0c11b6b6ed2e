"""Energy carriers shared across cell areas, network models and planning."""

from enum import Enum


class Carrier(str, Enum):
    """Closed set of energy carriers a node, demand or storage can belong to."""

    ELECTRICITY = "electricity"
    GAS = "gas"
    HYDROGEN = "hydrogen"
    HEAT = "heat"

    def __str__(self) -> str:
        return self.value


#: Fixed carrier iteration order used wherever per-carrier results are reported.
CARRIER_ORDER = (Carrier.ELECTRICITY, Carrier.GAS, Carrier.HYDROGEN, Carrier.HEAT)
