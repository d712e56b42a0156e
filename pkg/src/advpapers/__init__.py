"""Paper-reviewer assignment simulator and adversarial attack engine."""

__version__ = "0.1.0"
