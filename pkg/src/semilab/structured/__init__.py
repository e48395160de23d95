from .cellcycle import (
    CellCycleModel,
    benchmark_cellcycle,
    cellcycle_evolve,
    cellcycle_frame,
    check_assumptions,
    renewal_rate,
    size_age_pushforward,
    stable_age_profile,
    uniform_birth_sizes,
)
from .growth import StructuredRun, aeg_residual, characteristic_root, malthus_estimate, window_rates
from .mckendrick import McKendrickModel, lotka_rate, mckendrick_evolve
from .size_division import SizeDivisionModel, size_division_evolve
