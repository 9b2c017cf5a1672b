"""Geodesic flows on nonpositively curved surfaces: linearized dynamics,
stable/unstable leaves, orbit-segment collections and pressure estimates."""
from .surface import SurfaceModel, ModelError, UnsupportedQuery, builtin_models

__all__ = ["SurfaceModel", "ModelError", "UnsupportedQuery", "builtin_models"]
