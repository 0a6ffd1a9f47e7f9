from src.simulation.noise import CHUNK_SIZE, step_increments
from src.simulation.particles import (
    CoupledPathBundle,
    FrozenFlow,
    PathBundle,
    SimConfig,
    initial_points,
    simulate_coupled,
    simulate_decoupled,
    simulate_mckean_vlasov,
)
from src.simulation.diagnostics import (
    DiagnosticsTable,
    increment_statistics,
    moment_diagnostics,
    moment_growth_constant,
)
from src.simulation.storage import read_increments, write_bundle, write_increments, write_snapshots
