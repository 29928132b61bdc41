"""Parameter vectors and the from-scratch model zoo."""

from .gradcheck import check_gradient, numerical_gradient, relative_error, run_gradcheck
from .models import (
    KINDS,
    Batch,
    ModelSpec,
    backward,
    default_spec,
    forward,
    init_params,
    param_count,
    param_layout,
    predict_proba,
    unpack,
    value_and_grad,
)
from .vectors import (
    ParameterVector,
    as_vector,
    sgd_step,
    vec_axpy,
    vec_mean,
    vec_scale,
    vec_sub,
    vec_sum,
    vec_weighted_mean,
)
