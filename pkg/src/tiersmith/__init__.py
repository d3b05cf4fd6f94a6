"""Definition-driven three-tier application framework.

One set of XML API definitions drives the bean runtime, the wire protocol
between tiers, the stored-procedure gateway, generated stubs and the HTML
renderer.
"""
from .apidef import ApiDefinition, load_files, parse_definitions
from .beans import BeanValue, new_bean
from .commontypes import BUILTINS, TypeRegistry, TypeSpec, default_registry
from .errors import (
    CcApplicationError,
    CcCommunicationError,
    CcException,
    CcSystemError,
    CcUnavailable,
    DefinitionError,
    ViolationError,
)

__all__ = [
    "ApiDefinition", "BeanValue", "BUILTINS", "CcApplicationError", "CcCommunicationError",
    "CcException", "CcSystemError", "CcUnavailable", "DefinitionError", "TypeRegistry",
    "TypeSpec", "ViolationError", "default_registry", "load_files", "new_bean", "parse_definitions",
]
