"""
advkern Utilities Package.

This package contains utility modules shared across advkern.
"""
