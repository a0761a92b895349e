"""orbitclose: turn near-recurrences of smooth vector fields into honest
periodic orbits, synthesize compactly supported perturbations inside the
tubular flow box, and measure every constant in the resulting estimates.

Library layout (one module per subsystem):

- field:         vector-field DSL, exact jets, Lie derivatives, Lipschitz
- geometry:      euclidean / flat-torus / sphere charts, geodesics, transport
- flow:          integration, variational flow, return detection, return jets
- closing:       Hermite closing, arc length, curvature, flow box, projection
- perturbation:  bump profiles, the perturbed field Y, C^r distance reports
- hyperbolicity: section monodromy, margins, eigenvalue surgery, Gronwall
- catalog:       built-in systems
- cli:           the `orbitclose` scenario runner
"""

from .catalog import catalog, catalog_field
from .closing import (OUTSIDE, ClosedOrbit, FlowBox, Projection, arclength,
                      build_flowbox, curvature_radius, hermite_close,
                      interpolation_residual, project)
from .field import (Box, FieldJet, FieldSpec, LipschitzEstimate, eval_jet,
                    estimate_lipschitz, lie_derivative, parse_field)
from .flow import (ReturnEvent, ReturnJetReport, Trajectory, check_return_jets,
                   find_returns, integrate, refine_periodic_orbit,
                   return_time_map, synthesize_event, variational_flow)
from .geometry import (ChartedManifold, Euclidean, FlatTorus, GeodesicSegment,
                       Sphere2, christoffel, distance, exp_map, geodesic,
                       make_manifold, parallel_transport)
from .hyperbolicity import (CrossSection, MonodromyReport,
                            check_hyperbolic_margin, eigenvalue_adjuster,
                            gronwall_check, make_cross_section,
                            section_monodromy, splitting_continuity)
from .perturbation import (BranchWeights, BumpProfile, CrDistanceReport,
                           PerturbedField, cr_distance, make_bump,
                           perturb_autonomous, perturb_homoclinic,
                           perturb_nonautonomous, verify_closure)

__all__ = [
    "Box", "BranchWeights", "BumpProfile", "ChartedManifold", "ClosedOrbit",
    "CrDistanceReport", "CrossSection", "Euclidean", "FieldJet", "FieldSpec",
    "FlatTorus", "FlowBox", "GeodesicSegment", "LipschitzEstimate",
    "MonodromyReport", "OUTSIDE", "PerturbedField", "Projection",
    "ReturnEvent", "ReturnJetReport", "Sphere2", "Trajectory", "arclength",
    "build_flowbox", "catalog", "catalog_field", "check_hyperbolic_margin",
    "check_return_jets", "christoffel", "cr_distance", "curvature_radius",
    "distance", "eigenvalue_adjuster", "estimate_lipschitz", "eval_jet",
    "exp_map", "find_returns", "geodesic", "gronwall_check", "hermite_close",
    "integrate", "interpolation_residual", "lie_derivative",
    "make_cross_section", "make_bump", "make_manifold", "parallel_transport",
    "parse_field", "perturb_autonomous", "perturb_homoclinic",
    "perturb_nonautonomous", "project", "refine_periodic_orbit",
    "return_time_map", "section_monodromy", "splitting_continuity",
    "synthesize_event", "variational_flow", "verify_closure",
]

__version__ = "0.1.0"
