"""Enriched immersed finite elements for 2D elliptic interface problems.

The package builds degree-p immersed FE discretizations on uniform
triangular meshes that are not fitted to the interface.  Piecewise
polynomial shape functions on cut elements are obtained by extending a
polynomial from one side of the interface to the other through a local
least-squares solve on an enlarged (fictitious) element, and
nonhomogeneous jump data is absorbed into data-dependent enrichment
functions that add no degrees of freedom.
"""

__version__ = "0.1.0"
