"""slyap: Lyapunov-exponent analysis of singularly perturbed linear switching systems."""

__version__ = "1.0.0"
