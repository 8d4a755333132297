"""Ergodicity certificates: curvatures, criteria, bracket rank and Lyapunov fits."""

from switchcert.certify.criteria import (
    Certificate,
    CriterionError,
    certify_all,
    check_average_criterion,
    check_birth_death,
    check_onoff,
    small_set_witness,
)
from switchcert.certify.curvature import CurvatureReport, LogNorm, curvatures, log_norm, operator_norm, transient_bound
from switchcert.certify.hormander import bracket, hormander_rank
from switchcert.certify.lyapunov import LyapunovFit, lyapunov_fit

__all__ = [
    "Certificate",
    "CriterionError",
    "CurvatureReport",
    "LogNorm",
    "LyapunovFit",
    "bracket",
    "certify_all",
    "check_average_criterion",
    "check_birth_death",
    "check_onoff",
    "curvatures",
    "hormander_rank",
    "log_norm",
    "lyapunov_fit",
    "operator_norm",
    "small_set_witness",
    "transient_bound",
]
