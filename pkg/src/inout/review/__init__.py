"""Human-in-the-loop review of generated defect images over HTTP."""

from .service import build_app
from .store import ReviewConflict, ReviewNotFound, ReviewStore

__all__ = ["ReviewConflict", "ReviewNotFound", "ReviewStore", "build_app"]
