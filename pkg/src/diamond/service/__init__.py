"""FastAPI service wrapping the restoration engine.

The CLI is a thin client of this app; by default it mounts the app
in-process over an ASGI transport, and with --server it targets a
remote instance started via ``diamond serve``.
"""

from .app import create_app

app = create_app()

__all__ = ["app", "create_app"]
