from .ingest import chunk_document, ingest_collection, load_manifest, normalize_whitespace
from .metadata import MetadataClient, PaperMetadata
from .models import Chunk, Collection, Paper

__all__ = [
    "Chunk",
    "Collection",
    "MetadataClient",
    "Paper",
    "PaperMetadata",
    "chunk_document",
    "ingest_collection",
    "load_manifest",
    "normalize_whitespace",
]
