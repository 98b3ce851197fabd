from .app import create_app
from .jobs import Job, Session, SessionStore

__all__ = ["create_app", "Job", "Session", "SessionStore"]
