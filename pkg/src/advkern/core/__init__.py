# src/advkern/core/__init__.py
