"""Cross-ISA assembly transpilation harness."""

from .core import (
    GenerationParams,
    Isa,
    IsaName,
    ToolchainConfig,
    get_isa,
    isa_registry,
    load_config,
)

__version__ = "0.1.0"

__all__ = [
    "GenerationParams",
    "Isa",
    "IsaName",
    "ToolchainConfig",
    "get_isa",
    "isa_registry",
    "load_config",
    "__version__",
]
