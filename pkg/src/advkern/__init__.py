# src/advkern/__init__.py

__version__ = "0.1.0"
__description__ = "Adversarial training of kernel regression models"
