"""Random non-Hermitian Hamiltonian model of spontaneous symmetry breaking."""
__version__ = "0.1.0"
