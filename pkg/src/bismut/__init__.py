from src.bismut.functionals import (
    DIRECTION_PRESETS,
    FUNCTIONAL_PRESETS,
    PerturbationDirection,
    as_direction,
    build_direction,
    build_functional,
)
from src.bismut.jacobian import (
    JacobianFlow,
    MeanFieldDerivativeFlow,
    derivative_flow_audit,
    jacobian_flow,
    jacobian_moment_audit,
    mean_field_derivative_flow,
)
from src.bismut.picard import PicardResult, picard_v_system
from src.bismut.estimators import (
    BttFit,
    IntrinsicDerivativeEstimate,
    fit_btt_constant,
    frozen_flow_bismut,
    intrinsic_derivative,
)
from src.bismut.finite_difference import FiniteDifferenceEstimate, finite_difference_intrinsic, richardson
