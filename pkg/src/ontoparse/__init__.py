"""Ontology-driven semantic parsing workbench.

From a declarative domain ontology this package generates validated meaning
representations and template sequences, synthesizes training corpora, and
trains and evaluates a transition-based neural semantic parser that predicts
derivation trees.
"""

__version__ = "0.1.0"
