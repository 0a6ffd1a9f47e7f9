from src.girsanov.weights import (
    GirsanovWeights,
    SecondMoment,
    bridge_eta,
    eta_between_flows,
    exponential_bound_check,
    martingale_check,
    second_moment_log,
    weight_path,
)
