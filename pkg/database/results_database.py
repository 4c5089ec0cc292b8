"""Results store for per-seed metric fragments"""
import json
import logging

import aiosqlite

from domain.constants import SCHEMA_VERSION

logger = logging.getLogger(__name__)

# Database path
DB_PATH = "results.db"


class ResultsDatabase:
    """Manages the SQLite database holding ablation cells and their metrics"""

    def __init__(self, db_path: str = DB_PATH) -> None:
        self.db_path = db_path
        self.conn: aiosqlite.Connection | None = None

    async def init(self) -> None:
        """Initialize database and create tables"""
        self.conn = await aiosqlite.connect(self.db_path)
        assert self.conn is not None

        await self.conn.execute("""
            CREATE TABLE IF NOT EXISTS fragments (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                axis TEXT NOT NULL,
                value TEXT NOT NULL,
                seed INTEGER NOT NULL,
                status TEXT NOT NULL,
                metrics TEXT,
                error TEXT DEFAULT '',
                schema_version INTEGER NOT NULL,
                created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
            )
        """)

        await self.conn.execute("""
            CREATE INDEX IF NOT EXISTS idx_fragments_cell
            ON fragments(axis, value, seed)
        """)

        await self.conn.commit()
        logger.info("results database ready at %s", self.db_path)

    async def close(self) -> None:
        """Close database connection"""
        if self.conn:
            await self.conn.close()

    async def save_fragment(self, axis: str, value, seed: int, metrics: dict) -> None:
        assert self.conn is not None
        await self.conn.execute(
            "INSERT INTO fragments (axis, value, seed, status, metrics, schema_version) VALUES (?, ?, ?, 'ok', ?, ?)",
            (axis, json.dumps(value), seed, json.dumps(metrics, sort_keys=True), SCHEMA_VERSION),
        )
        await self.conn.commit()

    async def save_failure(self, axis: str, value, seed: int, error: str) -> None:
        assert self.conn is not None
        await self.conn.execute(
            "INSERT INTO fragments (axis, value, seed, status, error, schema_version) VALUES (?, ?, ?, 'failed', ?, ?)",
            (axis, json.dumps(value), seed, error, SCHEMA_VERSION),
        )
        await self.conn.commit()

    async def get_fragments(self, axis: str | None = None, status: str | None = None) -> list[dict]:
        """Stored cells ordered by (axis, value, seed)"""
        assert self.conn is not None
        query = "SELECT axis, value, seed, status, metrics, error FROM fragments"
        clauses, params = [], []
        if axis is not None:
            clauses.append("axis = ?")
            params.append(axis)
        if status is not None:
            clauses.append("status = ?")
            params.append(status)
        if clauses:
            query += " WHERE " + " AND ".join(clauses)
        query += " ORDER BY axis, value, seed, id"
        cursor = await self.conn.execute(query, params)
        rows = await cursor.fetchall()
        return [
            {
                "axis": row[0],
                "value": json.loads(row[1]),
                "seed": row[2],
                "status": row[3],
                "metrics": json.loads(row[4]) if row[4] else None,
                "error": row[5] or "",
            }
            for row in rows
        ]
