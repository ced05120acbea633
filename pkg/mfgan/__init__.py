"""MFGAN - Multi-factor adversarial sequential recommendation toolkit"""

__version__ = "0.1.0"
