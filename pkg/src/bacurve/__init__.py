"""Baker-Akhiezer sections on reducible nodal spectral curves and the
orthogonal curvilinear coordinate systems they generate."""

__version__ = "0.1.0"
