"""Explicit ReLU network constructions with verified complexity and error rates."""

from .activations import Activation, get_activation
from .algebra import (
    ShiftCertificate,
    affine_network,
    compose,
    compose_merge,
    concat,
    concat_all,
    connected_to_standard,
    identity_network,
    lift_with_channels,
    special_add,
    special_network,
    special_sum,
    special_to_standard,
)
from .constructions import (
    MultiplierSpec,
    SobolevApproximation,
    SquarerSpec,
    approximate_sobolev,
    hat_network,
    monomial_selector,
    multiplier_network,
    pou_network,
    product_network,
    sawtooth_network,
    sobolev_network,
    squarer_network,
)
from .errors import *  # noqa: F401,F403
from .network import (
    ChannelMeta,
    ComplexityReport,
    Kind,
    LinearLayer,
    Network,
    complexity,
    evaluate,
    evaluate_batch,
    evaluate_scalar,
    from_json,
    load_network,
    random_network,
    relu_network,
    save_network,
    to_json,
    validate,
)
from .selfsimilar import (
    RateFit,
    TakagiSpec,
    compose_power,
    rate_fit,
    takagi_network,
    takagi_reference,
    weighted_composition_sum,
    weighted_g_composition_sum,
)
from .sobolev import (
    DerivativeOracle,
    PoUIndex,
    global_approx,
    local_polynomials,
    lp_error,
    phi,
    sobolev_norm,
)
from .splines import (
    FreeKnotSpline,
    decompose_basis,
    embed_S0,
    embed_spline,
    eval_spline,
    network_to_spline,
    spline_to_shallow,
    theorem1,
)
from .training import (
    Dataset,
    TrainConfig,
    TrainState,
    backprop,
    forward_cached,
    grad_check,
    init_state,
    loss,
    sgd_train,
)

__version__ = "0.1.0"
