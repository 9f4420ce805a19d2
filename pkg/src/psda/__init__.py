"""Probabilistic semantic data association for collaborative search."""

from .gaussmix import (
    Gaussian,
    GaussianMixture,
    gm_map,
    gm_moments,
    gm_pdf,
    gm_sample,
    runnalls_compress,
)
from .softmax import (
    Frame,
    Pose,
    SemanticObservation,
    SoftmaxModel,
    SpatialGeometry,
    build_spatial_model,
    detector_likelihood,
    resolve_candidates,
    softmax_eval,
)
from .fusion import (
    FusionConfig,
    FusionResult,
    VariationalState,
    bouchard_bound,
    fuse_gm,
    lwis,
    vb_update,
    vbis,
)
from .association import (
    AssociationConfig,
    AssociationResult,
    gamma_multi,
    greedy_psda,
    naive_da,
    no_da,
    psda_multi,
    psda_single,
)

__all__ = [name for name in dir() if not name.startswith("_")]
