"""
lookalike - similar-address precomputation and substitution detection for defense research
"""

__version__ = "1.0.0"
__description__ = "Slot-indexed look-alike address stores, coverage planning and a substitution detector"

from .core.config import Config
from .core.errors import LookalikeError

__all__ = ["Config", "LookalikeError"]
