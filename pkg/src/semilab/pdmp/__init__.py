from .gene import (
    GENE_VARIANTS,
    active_duration_cdf,
    gene_1d_model,
    gene_2d_model,
    gene_3stage_model,
    simulate_gene,
    simulate_threshold_gene,
)
from .kangaroo import (
    SemiMarkovKangaroo,
    additive_boost,
    catastrophe_simulate,
    decay_flow,
    immune_status_simulate,
    jump_flow_simulate,
    kangaroo_simulate,
    semi_markov_simulate,
)
from .switching import SwitchingModel, constant_rate, next_jump_time, simulate_switching
from .trajectory import HybridState, Trajectory, Window, occupancy_profile, run_ensemble
from .velocity import kac_pde_solve, telegraph_ensemble, telegraph_simulate, vesicle_preset
