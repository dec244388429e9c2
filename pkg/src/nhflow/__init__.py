"""Off-diagonal solution generator, verifier and flow thermodynamics."""

__version__ = "0.1.0"
