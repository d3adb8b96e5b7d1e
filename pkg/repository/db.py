import os
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

from sqlalchemy import create_engine, Column, String, JSON, DateTime
from sqlalchemy.orm import declarative_base
from sqlalchemy.orm import sessionmaker

# 声明基类
Base = declarative_base()

_sessions: Dict[str, sessionmaker] = {}


# 运行记录
class Run(Base):
    __tablename__ = "runs"

    id = Column(String, primary_key=True, index=True)
    command = Column(String)
    status = Column(String, default="pending")
    config_hash = Column(String, index=True)
    tool_version = Column(String)
    input_digests = Column(JSON)
    outputs = Column(JSON)
    error = Column(String)
    created_at = Column(DateTime, default=datetime.utcnow)
    updated_at = Column(DateTime, default=datetime.utcnow, onupdate=datetime.utcnow)


def database_url(out_dir: Optional[Path] = None) -> str:
    """SLF_DB_URL, else a SQLite file runs.db inside the output directory."""
    env_url = os.getenv("SLF_DB_URL")
    if env_url:
        return env_url
    directory = Path(out_dir) if out_dir is not None else Path("output")
    directory.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{(directory / 'runs.db').as_posix()}"


def session_factory(url: str) -> sessionmaker:
    if url not in _sessions:
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        engine = create_engine(url, connect_args=connect_args)
        # 创建数据库表
        Base.metadata.create_all(bind=engine)
        _sessions[url] = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return _sessions[url]


# 获取数据库会话
def get_db(url: Optional[str] = None):
    db = session_factory(url or database_url())()
    try:
        yield db
    finally:
        db.close()
