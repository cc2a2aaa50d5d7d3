from .app import Session, create_app, default_app, load_session

__all__ = ["Session", "create_app", "default_app", "load_session"]
