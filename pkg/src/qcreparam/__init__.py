"""Quasiconformal reparametrization of sampled disc maps."""

from . import errors
from .seminorm import (
    Ellipse2,
    SemiNorm2,
    beltrami_of,
    energy_plus,
    isotropy_defect,
    jacobian_hausdorff,
    jacobian_intrinsic,
    john_ellipse,
    regularize,
)
from .field import (
    DerivativeField,
    DiscGrid,
    SampledMap,
    TargetSpace,
    area_hausdorff,
    area_intrinsic,
    composed_energy,
    energy,
    estimate_derivative,
    estimate_field,
)
from .beltrami import (
    ComplexField,
    QCMap,
    beltrami_coefficient,
    compose_coefficient,
    distortion,
    distortion_from_mu,
    invert,
    mat_to_wirtinger,
    mollify,
    solve_beltrami,
    wirtinger,
    wirtinger_to_mat,
)
from .reparam import (
    OmegaRegion,
    ReparamReport,
    audit_cases,
    build_coefficient,
    choose_delta,
    choose_threshold,
    epsilon_conformal,
    epsilon_internal,
    smooth_coefficient,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
