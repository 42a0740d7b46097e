"""
Database configuration and session management for the pump run ledger
"""
from contextlib import contextmanager
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from config import Config

# DATABASE_URL in the environment overrides the local SQLite ledger
DATABASE_URL = Config.database_url

Base = declarative_base()


def make_engine(url: str = DATABASE_URL):
    return create_engine(
        url,
        echo=False,
        connect_args={"check_same_thread": False} if "sqlite" in url else {},
    )


engine = make_engine()
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(url: Optional[str] = None):
    """Create the ledger tables; a url other than DATABASE_URL rebinds the sessions"""
    global engine
    import models  # noqa: F401  registers the tables on Base

    if url is not None and url != str(engine.url):
        engine = make_engine(url)
        SessionLocal.configure(bind=engine)
    Base.metadata.create_all(bind=engine)


@contextmanager
def get_db():
    """Context manager for database sessions with proper cleanup"""
    db = SessionLocal()
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
