from src.runner.config import COMMANDS, ExperimentConfig, config_hash, load_config
from src.runner.scenarios import SCENARIOS, BaseScenario
from src.runner.report import evaluate_assertions, report
from src.runner.cli import EXIT_ASSERTION, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, execute, main, run_scenario
