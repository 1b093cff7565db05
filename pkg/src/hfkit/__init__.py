"""hfkit: multivalued minimal graphs, epsilon-sheets, blow-up pairs, Laurent
asymptotics, Gauss-map decomposition and bi-Lipschitz helicoid comparison."""
from ._accel import backend, set_backend
from .geometry import MeshPatch, MultiGraph, PolarGrid, PolarRect
from .surfaces import HelicoidModel, Region, make_surface
from .mse import SolveConfig, SolveReport, solve_dirichlet
from .sheets import SheetCertificate, certify_sheet, detect_blowup_pairs
from .asymptotics import LaurentFit, laurent_fit, broken_circle_osc, spiral_threshold
from .gauss import check_gauss_identity, decompose, trace_level_set
from .fit import DistortionReport, bilipschitz_estimate, fit_helicoid

__version__ = "0.1.0"

__all__ = [
    "backend", "set_backend", "MeshPatch", "MultiGraph", "PolarGrid", "PolarRect",
    "HelicoidModel", "Region", "make_surface", "SolveConfig", "SolveReport",
    "solve_dirichlet", "SheetCertificate", "certify_sheet", "detect_blowup_pairs",
    "LaurentFit", "laurent_fit", "broken_circle_osc", "spiral_threshold",
    "check_gauss_identity", "decompose", "trace_level_set", "DistortionReport",
    "bilipschitz_estimate", "fit_helicoid",
]
