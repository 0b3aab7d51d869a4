from .app import create_app
from .engine import Engine
from .events import ProgressBus, ProgressEvent
from .store import WorkspaceStore

__all__ = ["Engine", "ProgressBus", "ProgressEvent", "WorkspaceStore", "create_app"]
