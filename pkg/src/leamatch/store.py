"""Persistent scan store: one LEASCAN1 file per land plus a digest index.

Mutations are serialized by a lock; scans are immutable after load, so
readers can share them freely. The index digest is re-checked when a
scan is read back, which catches on-disk corruption.
"""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path

from .errors import DuplicateScanError, StoreCorruptionError, UnknownIdError
from .digest import fnv1a64_hex
from .scan import Bullet, SurfaceScan, load_scan, save_scan

INDEX_NAME = "index.json"


class ScanStore:
    def __init__(self, root):
        self.root = Path(root)
        self.scans_dir = self.root / "scans"
        self.scans_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index = self._read_index()

    def _index_path(self) -> Path:
        return self.root / INDEX_NAME

    def _read_index(self) -> dict:
        path = self._index_path()
        if not path.exists():
            return {}
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def _write_index(self) -> None:
        tmp = self._index_path().with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._index, fh, sort_keys=True, indent=1)
        tmp.replace(self._index_path())

    @staticmethod
    def _key(bullet_id: str, land_id: str) -> str:
        return f"{bullet_id}\x1f{land_id}"

    def put(self, scan: SurfaceScan, allow_replace: bool = False) -> str:
        """Store a scan; returns its content digest."""
        key = self._key(scan.bullet_id, scan.land_id)
        with self._lock:
            if key in self._index and not allow_replace:
                raise DuplicateScanError(f"({scan.bullet_id}, {scan.land_id}) already stored")
            rel = f"scans/{scan.bullet_id}__{scan.land_id}.leascan"
            path = self.root / rel
            with open(path, "wb") as fh:
                digest = save_scan(scan, fh)
            self._index[key] = {
                "bullet_id": scan.bullet_id,
                "land_id": scan.land_id,
                "barrel_id": scan.barrel_id,
                "path": rel,
                "digest": digest,
                "rows": scan.rows,
                "cols": scan.cols,
                "mask_fraction": scan.mask_fraction,
            }
            self._write_index()
        return digest

    def get(self, bullet_id: str, land_id: str) -> SurfaceScan:
        key = self._key(bullet_id, land_id)
        record = self._index.get(key)
        if record is None:
            raise UnknownIdError(f"no scan for ({bullet_id}, {land_id})")
        path = self.root / record["path"]
        blob = path.read_bytes()
        actual = fnv1a64_hex(blob[12:])  # digest covers header + payload bytes
        if actual != record["digest"]:
            raise StoreCorruptionError(
                f"digest mismatch for ({bullet_id}, {land_id}): "
                f"index {record['digest']}, file {actual}")
        return load_scan(io.BytesIO(blob))

    def contains(self, bullet_id: str, land_id: str) -> bool:
        return self._key(bullet_id, land_id) in self._index

    def digest_for(self, bullet_id: str, land_id: str) -> str:
        record = self._index.get(self._key(bullet_id, land_id))
        if record is None:
            raise UnknownIdError(f"no scan for ({bullet_id}, {land_id})")
        return record["digest"]

    def bullet_ids(self) -> list:
        return sorted({rec["bullet_id"] for rec in self._index.values()})

    def land_ids(self, bullet_id: str) -> list:
        lands = [rec["land_id"] for rec in self._index.values()
                 if rec["bullet_id"] == bullet_id]
        if not lands:
            raise UnknownIdError(f"no scans for bullet {bullet_id}")
        return sorted(lands)

    def get_bullet(self, bullet_id: str) -> Bullet:
        lands = [self.get(bullet_id, land_id) for land_id in self.land_ids(bullet_id)]
        return Bullet(bullet_id=bullet_id, lands=lands, n_lands=len(lands))

    def put_bullet(self, bullet: Bullet, allow_replace: bool = False) -> list:
        return [self.put(scan, allow_replace=allow_replace) for scan in bullet.lands]

    def ingest_directory(self, directory) -> list:
        """Load every *.leascan file under ``directory`` into the store."""
        loaded = []
        for path in sorted(Path(directory).glob("**/*.leascan")):
            with open(path, "rb") as fh:
                scan = load_scan(fh)
            self.put(scan, allow_replace=True)
            loaded.append((scan.bullet_id, scan.land_id))
        return loaded
