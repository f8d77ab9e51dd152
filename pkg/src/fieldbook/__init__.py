"""Offline-first field data collection.

Schema-flexible data tables, scoped contextual notes that live with the
data, and a store-and-forward sync engine that pushes captures to
private and public sinks whenever connectivity allows.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Annotation,
    AnnotationKind,
    ColumnSpec,
    Entry,
    FeedFilter,
    GeoSource,
    GeoTag,
    Receipt,
    Scope,
    ScopeLevel,
    TableDocument,
    TableSchema,
    ValueType,
    Visibility,
    resolve_scope,
)
from .store import FieldStore  # noqa: F401
from .sync import SyncEngine  # noqa: F401
