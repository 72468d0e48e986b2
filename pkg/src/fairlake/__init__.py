"""fairlake: data-centric ML asset management.

An entity-relationship metadata catalog with an evolvable domain schema,
a versioned object store, reproducible dataset packaging with persistent
identifiers, execution provenance, and FAIR-practice assessment, all
behind one HTTP API.
"""

__version__ = "0.1.0"
