"""Function-level TARA engine: system models in, attack trees and risk levels out."""

__version__ = "0.1.0"
