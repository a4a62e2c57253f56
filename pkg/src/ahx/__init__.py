"""Hermite spectral approximation in adaptive coordinates."""
from .hermite import gauss_hermite_modified, hermite_eval, project, reconstruct, truncation_error, uniform_trapezoid
from .operators import AdaptiveBasis, adaptive_project_on, adaptive_project_riesz, dual_form_project
from .transforms import IdentityTransform, LinearTransform, PowerLawTransform, build_transport

__version__ = "0.1.0"
