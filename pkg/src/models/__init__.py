from src.models.coefficients import CoefficientModel, GeneralB1, ModelConstants, StructuredB
from src.models.gallery import (
    MODEL_PRESETS,
    bounded_b1_tanh,
    build_model,
    kuramoto_like,
    mean_field_ou,
    mean_field_ou_lions,
    pure_bm,
    singular_b0_power,
)
from src.models.audit import AuditCheck, AuditReport, audit_assumption_A
from src.models.integrability import LocalizedNorm, localized_Lpq_norm, scr_K_check, unit_ball_volume
