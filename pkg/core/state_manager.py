"""
State Manager Module
Suivi des exécutions: runs de la CLI et exécutions d'étapes, persistés en
SQLite (SQLAlchemy) ou dans un fichier JSON
"""
import json
from contextlib import contextmanager
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel, Field
from sqlalchemy import JSON, Column, DateTime, Integer, String, Text, create_engine, select
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from core.config import Config, StateBackend
from core.tensor_io import atomic_write_text


Base = declarative_base()


def utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


class RunStatus(str, Enum):
    """Statuts possibles d'un run"""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class StageStatus(str, Enum):
    """Statuts possibles d'une étape"""
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


class RunState(BaseModel):
    """État d'un run (une commande de la CLI)"""
    run_id: str
    command: str
    seed: Optional[int] = None
    status: RunStatus = RunStatus.PENDING
    created_at: datetime = Field(default_factory=utcnow)
    updated_at: datetime = Field(default_factory=utcnow)
    config: Dict[str, Any] = Field(default_factory=dict)
    outputs: Dict[str, Any] = Field(default_factory=dict)
    errors: List[str] = Field(default_factory=list)


class StageExecution(BaseModel):
    """Exécution d'une étape du pipeline"""
    execution_id: str
    run_id: str
    stage_name: str
    status: StageStatus
    started_at: datetime = Field(default_factory=utcnow)
    completed_at: Optional[datetime] = None
    input_data: Dict[str, Any] = Field(default_factory=dict)
    output_data: Dict[str, Any] = Field(default_factory=dict)
    error_message: Optional[str] = None
    logs: List[str] = Field(default_factory=list)


class _RowMixin:
    """Conversion ligne <-> modèle pydantic, colonne par colonne"""

    @classmethod
    def from_model(cls, item: BaseModel):
        values = item.model_dump()
        values["status"] = item.status.value
        return cls(**values)

    def to_model(self):
        return self.model.model_validate(
            {column.name: getattr(self, column.name) for column in self.__table__.columns}
        )


class RunStateDB(_RowMixin, Base):
    """Table des runs"""
    __tablename__ = "runs"
    model = RunState

    run_id = Column(String(100), primary_key=True)
    command = Column(String(50), nullable=False)
    seed = Column(Integer)
    status = Column(String(50), nullable=False)
    created_at = Column(DateTime, nullable=False)
    updated_at = Column(DateTime, nullable=False)
    config = Column(JSON, nullable=False)
    outputs = Column(JSON, nullable=False)
    errors = Column(JSON, nullable=False)


class StageExecutionDB(_RowMixin, Base):
    """Table des exécutions d'étapes"""
    __tablename__ = "stage_executions"
    model = StageExecution

    execution_id = Column(String(100), primary_key=True)
    run_id = Column(String(100), nullable=False, index=True)
    stage_name = Column(String(100), nullable=False)
    status = Column(String(50), nullable=False)
    started_at = Column(DateTime, nullable=False)
    completed_at = Column(DateTime)
    input_data = Column(JSON, nullable=False)
    output_data = Column(JSON, nullable=False)
    error_message = Column(Text)
    logs = Column(JSON, nullable=False)


class StateManager:
    """
    Gestionnaire d'état centralisé des runs

    Une écriture remplace l'enregistrement de même clé: création et mise à
    jour passent par le même chemin pour les deux backends.
    """

    def __init__(self, config: Config):
        self.config = config
        self.backend = config.state_backend

        if self.backend == StateBackend.FILE:
            self.file_path = Path(config.data_dir) / "runs.json"
            self.file_path.parent.mkdir(parents=True, exist_ok=True)
            if not self.file_path.exists():
                self._write_file({"runs": {}, "executions": {}})
            return

        db_path = Path(config.state_db_path)
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.engine = create_engine(f"sqlite:///{db_path}")
        Base.metadata.create_all(self.engine)
        self._sessions = sessionmaker(bind=self.engine, expire_on_commit=False)

    @contextmanager
    def _session(self) -> Iterator[Session]:
        session = self._sessions()
        try:
            yield session
            session.commit()
        except Exception:
            session.rollback()
            raise
        finally:
            session.close()

    def _read_file(self) -> Dict[str, Any]:
        return json.loads(self.file_path.read_text(encoding="utf-8"))

    def _write_file(self, data: Dict[str, Any]) -> None:
        atomic_write_text(self.file_path, json.dumps(data, indent=2, default=str))

    def _save(self, section: str, key: str, item: BaseModel, table) -> None:
        if self.backend == StateBackend.FILE:
            data = self._read_file()
            data[section][key] = item.model_dump(mode="json")
            self._write_file(data)
            return
        with self._session() as session:
            session.merge(table.from_model(item))

    # -------------------------------------------------------------------- runs

    def create_run(self, run: RunState) -> RunState:
        """Enregistre un nouveau run"""
        self._save("runs", run.run_id, run, RunStateDB)
        return run

    def update_run(self, run: RunState) -> RunState:
        """Met à jour un run existant (horodatage rafraîchi)"""
        run.updated_at = utcnow()
        self._save("runs", run.run_id, run, RunStateDB)
        return run

    def get_run(self, run_id: str) -> Optional[RunState]:
        if self.backend == StateBackend.FILE:
            found = self._read_file()["runs"].get(run_id)
            return RunState.model_validate(found) if found else None
        with self._session() as session:
            row = session.get(RunStateDB, run_id)
            return row.to_model() if row else None

    def list_runs(self, limit: int = 20) -> List[RunState]:
        """Derniers runs, du plus récent au plus ancien"""
        if self.backend == StateBackend.FILE:
            runs = [RunState.model_validate(item) for item in self._read_file()["runs"].values()]
            return sorted(runs, key=lambda run: run.created_at, reverse=True)[:limit]
        with self._session() as session:
            query = select(RunStateDB).order_by(RunStateDB.created_at.desc()).limit(limit)
            return [row.to_model() for row in session.scalars(query)]

    # -------------------------------------------------------------- executions

    def create_execution(self, execution: StageExecution) -> StageExecution:
        self._save("executions", execution.execution_id, execution, StageExecutionDB)
        return execution

    def update_execution(self, execution: StageExecution) -> StageExecution:
        self._save("executions", execution.execution_id, execution, StageExecutionDB)
        return execution

    def get_run_executions(self, run_id: str) -> List[StageExecution]:
        """Exécutions d'étapes d'un run, dans l'ordre de démarrage"""
        if self.backend == StateBackend.FILE:
            items = [
                StageExecution.model_validate(item)
                for item in self._read_file()["executions"].values()
                if item["run_id"] == run_id
            ]
            return sorted(items, key=lambda item: item.started_at)
        with self._session() as session:
            query = (
                select(StageExecutionDB)
                .where(StageExecutionDB.run_id == run_id)
                .order_by(StageExecutionDB.started_at)
            )
            return [row.to_model() for row in session.scalars(query)]


class NullStateManager:
    """Suivi désactivé: mêmes méthodes, aucune persistance"""

    def create_run(self, run: RunState) -> RunState:
        return run

    def update_run(self, run: RunState) -> RunState:
        return run

    def get_run(self, run_id: str) -> Optional[RunState]:
        return None

    def list_runs(self, limit: int = 20) -> List[RunState]:
        return []

    def create_execution(self, execution: StageExecution) -> StageExecution:
        return execution

    def update_execution(self, execution: StageExecution) -> StageExecution:
        return execution

    def get_run_executions(self, run_id: str) -> List[StageExecution]:
        return []


def make_state_manager(config: Config):
    """StateManager réel, ou factice si track_runs est désactivé"""
    return StateManager(config) if config.track_runs else NullStateManager()
