import logging
import math

from src.simulation import simulate_mckean_vlasov

logger = logging.getLogger(__name__)


def simulate_batches(model, mu, t, cfg, n_paths=None):
    """Interacting clouds up to time t, one per noise stream, covering ``n_paths`` particles."""
    run_cfg = cfg.with_(t_end=t, store_increments=True, snapshot_times=())
    batches = max(1, math.ceil(n_paths / cfg.n_particles)) if n_paths else 1
    if batches > 1:
        logger.info("%d path batches of %d particles", batches, cfg.n_particles)
    return [simulate_mckean_vlasov(model, mu, run_cfg.with_(stream=cfg.stream + b)) for b in range(batches)]
