from src.moduli.dini import (
    DEFAULT_R_MAX,
    MODULUS_FAMILIES,
    AlphaK,
    CheckResult,
    DiniModulus,
    InvariantCheck,
    ValidationReport,
    alpha_k,
    ass_integral,
    c1_integral,
    concave_holder_check,
    dini_square_partial_sums,
    hoelder_modulus,
    log_power_modulus,
    modulus_from_config,
    power_modulus,
    tabulated_modulus,
    tilde_alpha,
    validate_modulus,
)
