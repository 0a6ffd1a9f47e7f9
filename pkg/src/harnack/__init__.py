from src.harnack.test_functions import (
    POSITIVE_FAMILY,
    PositiveTestFunction,
    build_test_function,
    default_family,
    gauss_hermite,
)
from src.harnack.trend import TrendTest, trend_as_t_decreases
from src.harnack.checks import (
    BLOWUP_SLOPE,
    OT_POINTS,
    HarnackTable,
    distance_decay_profile,
    entropy_cost_check,
    harnack_table,
    log_harnack_check,
    log_log_slope,
)
