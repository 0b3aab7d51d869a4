from .client import (
    CompletionRequest,
    HttpBackend,
    ModelProfile,
    Provider,
    ScriptedBackend,
    strip_code_fence,
    validate_shape,
)
from .templates import TEMPLATES, PromptTemplate, render_template
from .transcript import Transcript, embedding_fingerprint, request_fingerprint

__all__ = [
    "TEMPLATES",
    "CompletionRequest",
    "HttpBackend",
    "ModelProfile",
    "PromptTemplate",
    "Provider",
    "ScriptedBackend",
    "Transcript",
    "embedding_fingerprint",
    "render_template",
    "request_fingerprint",
    "strip_code_fence",
    "validate_shape",
]
