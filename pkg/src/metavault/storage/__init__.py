"""Pluggable physical backends for a vault schema."""

from .base import (
    BACKEND_KINDS,
    DOCUMENT,
    RELATIONAL,
    Backend,
    EntityFilter,
    EntityUsage,
    Snapshot,
    StorageReport,
)
from .document import DocumentBackend, decode_documents, import_documents
from .relational import PAGE_SIZE, RELATION_HEADER_BYTES, RelationalBackend


def make_backend(kind: str) -> Backend:
    if kind == RELATIONAL:
        return RelationalBackend()
    if kind == DOCUMENT:
        return DocumentBackend()
    raise ValueError(f"unknown backend kind {kind!r}")


def load_backend(kind: str, directory, schema) -> Backend:
    if kind == RELATIONAL:
        return RelationalBackend.load(directory, schema)
    if kind == DOCUMENT:
        return DocumentBackend.load(directory, schema)
    raise ValueError(f"unknown backend kind {kind!r}")


def export_documents(backend: Backend, entity: str) -> str:
    if not isinstance(backend, DocumentBackend):
        raise TypeError("export is only defined for the document backend")
    return backend.export_documents(entity)


__all__ = [
    "BACKEND_KINDS", "DOCUMENT", "RELATIONAL", "Backend", "DocumentBackend", "EntityFilter",
    "EntityUsage", "PAGE_SIZE", "RELATION_HEADER_BYTES", "RelationalBackend", "Snapshot",
    "StorageReport", "decode_documents", "export_documents", "import_documents",
    "load_backend", "make_backend",
]
