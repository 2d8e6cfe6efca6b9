import hashlib
import json
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

from pydantic import BaseModel, Field

import settings
from spde import __version__


class ArtifactRecord(BaseModel):
    name: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    command: str
    config_hash: str
    tool_version: str = __version__
    seed: Optional[int] = None
    wall_time: float = 0.0
    stage_timings: dict[str, float] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    overrides: List[str] = Field(default_factory=list)
    files: List[ArtifactRecord] = Field(default_factory=list)
    status: str = Field("OK", description="OK, PASS, FAIL or PARTIAL.")
    note: Optional[str] = None


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactStore:
    """An output directory whose files are checksummed into a RunManifest."""

    MANIFEST = "manifest.json"

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._records: dict[str, ArtifactRecord] = {}
        self._timings: dict[str, float] = {}
        self._started = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.root / name

    def child(self, name: str) -> "ArtifactStore":
        return ArtifactStore(self.root / name)

    def register(self, path: str | Path) -> ArtifactRecord:
        path = Path(path)
        record = ArtifactRecord(name=path.relative_to(self.root).as_posix(),
                                sha256=sha256_of(path), bytes=path.stat().st_size)
        self._records[record.name] = record
        return record

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text)
        self.register(path)
        return path

    def write_json(self, name: str, model: BaseModel) -> Path:
        return self.write_text(name, model.model_dump_json(indent=2) + "\n")

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self._timings[name] = self._timings.get(name, 0.0) + time.perf_counter() - start

    def finish(self, manifest: RunManifest) -> RunManifest:
        """Fill timings and the file list, then write manifest.json (not listed in itself)."""
        manifest.wall_time = time.perf_counter() - self._started
        manifest.stage_timings = dict(self._timings)
        manifest.files = [self._records[k] for k in sorted(self._records)]
        self.path(self.MANIFEST).write_text(manifest.model_dump_json(indent=2) + "\n")
        return manifest

    def load_manifest(self) -> RunManifest:
        return RunManifest.model_validate(json.loads(self.path(self.MANIFEST).read_text()))

    def verify(self, manifest: Optional[RunManifest] = None) -> List[str]:
        """Names of listed files that are missing or whose checksum changed."""
        manifest = manifest or self.load_manifest()
        bad = []
        for record in manifest.files:
            path = self.path(record.name)
            if not path.exists() or sha256_of(path) != record.sha256:
                bad.append(record.name)
        return bad


def get_artifact_store():
    """FastAPI dependency: the store rooted at RSPDE_OUTPUT_ROOT."""
    yield ArtifactStore(settings.OUTPUT_ROOT)
