from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence

from sqlalchemy import event
from sqlmodel import Field, Session, SQLModel, create_engine, select

from experiments import BenchRow


class BenchRun(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    corpus: str = Field(index=True)
    settings_json: Optional[str] = None
    created_at: str = Field(default_factory=lambda: datetime.now().isoformat())


class BenchRecord(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="benchrun.id", index=True)
    instance: str = Field(index=True)
    method: str = Field(index=True)  # 'exact-dp', 'approx', 'approx2'
    penalty: int
    opt: Optional[int] = None
    lp_value: Optional[float] = None
    ratio: Optional[float] = None  # NaN and inf are stored as NULL
    ratio_basis: str
    feas_rate: Optional[float] = None


def get_engine(db_path: str | Path):
    url = f"sqlite:///{Path(db_path)}"
    engine = create_engine(url, connect_args={"check_same_thread": False})

    @event.listens_for(engine, "connect")
    def _set_sqlite_pragma(dbapi_connection, connection_record):  # type: ignore[no-redef]
        cursor = dbapi_connection.cursor()
        try:
            cursor.execute("PRAGMA foreign_keys=ON")
        finally:
            cursor.close()

    return engine


def init_db(engine) -> None:
    SQLModel.metadata.create_all(engine)


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or value != value or value in (float("inf"), float("-inf")):
        return None
    return value


def store_bench_rows(session: Session, corpus: str, rows: Sequence[BenchRow],
                     settings_json: Optional[str] = None) -> BenchRun:
    run = BenchRun(corpus=corpus, settings_json=settings_json)
    session.add(run)
    session.flush()
    for row in rows:
        session.add(BenchRecord(
            run_id=run.id,
            instance=row.instance,
            method=row.method,
            penalty=row.penalty,
            opt=row.opt,
            lp_value=_finite(row.lp_value),
            ratio=_finite(row.ratio),
            ratio_basis=row.ratio_basis,
            feas_rate=_finite(row.feas_rate),
        ))
    session.commit()
    session.refresh(run)
    return run


def get_bench_records(session: Session, run_id: int) -> List[BenchRecord]:
    statement = select(BenchRecord).where(BenchRecord.run_id == run_id).order_by(BenchRecord.id)
    return list(session.exec(statement).all())


def get_bench_runs(session: Session) -> List[BenchRun]:
    return list(session.exec(select(BenchRun).order_by(BenchRun.id)).all())
