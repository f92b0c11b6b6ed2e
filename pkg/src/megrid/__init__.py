"""megrid: multi-energy grid planning toolkit.

Turns building, street and weather data into daily heat-demand series,
cell-area key factors, a synthesized multi-carrier network, coupled
steady-state flows, technology-adoption forecasts and flexibility-aware
coupling-point placements.
"""

from .carriers import Carrier
from .errors import PlanningError

__version__ = "0.1.0"

__all__ = ["Carrier", "PlanningError", "__version__"]
