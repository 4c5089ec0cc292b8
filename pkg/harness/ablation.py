"""Ablation sweeps: one full pipeline run per (value, seed), run concurrently

Finished cells travel as events over an asyncio queue; the consumer keeps them
for the table and, when a results database is attached, persists them.
"""
import asyncio
import contextlib
import logging
from dataclasses import replace

from database.results_database import ResultsDatabase
from domain.constants import ABLATION_DEFAULTS, EVENT_TYPE_CELL_COMPLETED, EVENT_TYPE_CELL_FAILED
from domain.errors import ConfigError, LookAroundError
from domain.models import CellEvent
from events.consumer import EventConsumer
from events.publisher import EventPublisher

from .config import RunConfig
from .pipeline import run_pipeline
from .report import aggregate

logger = logging.getLogger(__name__)

TRIPLET_VALUES = ("off", "on")


def parse_axis_values(axis: str, raw: list[str]) -> list:
    """Command-line strings to typed axis values"""
    if axis == "alpha":
        try:
            return [float(v) for v in raw]
        except ValueError as e:
            raise ConfigError(f"alpha values must be numbers: {e}") from e
    return list(raw)


def cell_config(config: RunConfig, axis: str, value) -> RunConfig:
    if axis == "score_kind":
        return replace(config, score=value)
    if axis == "alpha":
        return replace(config, finetune=replace(config.finetune, alpha=float(value)))
    if axis == "policy":
        return replace(config, policy=value)
    if axis == "perception":
        return replace(config, perception=value)
    if axis == "triplet":
        if value not in TRIPLET_VALUES:
            raise ConfigError(f"triplet value must be one of {TRIPLET_VALUES}, got {value!r}")
        return replace(config, finetune=replace(config.finetune, use_triplet=value == "on"))
    raise ConfigError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_DEFAULTS)}")


async def run_cell(config: RunConfig, axis: str, value, seed: int, publisher: EventPublisher) -> None:
    try:
        cell = cell_config(config, axis, value)
        metrics = await asyncio.to_thread(run_pipeline, cell, seed)
    except Exception as e:
        if isinstance(e, LookAroundError):
            logger.warning("cell %s=%r seed=%d failed: %s", axis, value, seed, e)
        else:
            logger.exception("cell %s=%r seed=%d crashed", axis, value, seed)
        await publisher.publish(
            CellEvent(type=EVENT_TYPE_CELL_FAILED, axis=axis, value=value, seed=seed, error=f"{type(e).__name__}: {e}")
        )
        return
    logger.info("cell %s=%r seed=%d finished", axis, value, seed)
    await publisher.publish(CellEvent(type=EVENT_TYPE_CELL_COMPLETED, axis=axis, value=value, seed=seed, metrics=metrics))


def _matching(events: list[dict], value) -> dict[int, dict]:
    """Events of one value keyed by seed; repeated values share their cells"""
    return {e["seed"]: e for e in events if e["value"] == value}


def ablation_table(axis: str, values: list, completed: list[dict], failed: list[dict]) -> list[dict]:
    """One row per requested value, in request order; seeds sorted inside each row"""
    rows = []
    for value in values:
        done = _matching(completed, value)
        lost = _matching(failed, value)
        fragments = [done[s]["metrics"] for s in sorted(done)]
        rows.append({
            "axis": axis,
            "value": value,
            "n_seeds": len(fragments),
            "n_failed": len(lost),
            "failures": [{"seed": s, "error": lost[s]["error"]} for s in sorted(lost)],
            "metrics": aggregate(fragments),
        })
    return rows


async def ablate_async(config: RunConfig, axis: str, values: list, db: ResultsDatabase | None = None) -> list[dict]:
    if axis not in ABLATION_DEFAULTS:
        raise ConfigError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_DEFAULTS)}")
    if not values:
        raise ConfigError("ablation needs at least one value")

    queue: asyncio.Queue[dict] = asyncio.Queue()
    publisher = EventPublisher(queue)
    consumer = EventConsumer(queue, db)
    consumer_task = asyncio.create_task(consumer.consume())
    try:
        await asyncio.gather(*(run_cell(config, axis, v, s, publisher) for v in values for s in config.seeds))
        await queue.join()
    finally:
        consumer_task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await consumer_task

    rows = ablation_table(axis, list(values), consumer.completed, consumer.failed)
    logger.info("ablation over %s: %d rows, %d failed cells", axis, len(rows), len(consumer.failed))
    return rows


def ablate(config: RunConfig, axis: str, values: list | None = None, db_path: str | None = None) -> list[dict]:
    """Synchronous entry point; values default to the axis' standard sweep"""
    if axis not in ABLATION_DEFAULTS:
        raise ConfigError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_DEFAULTS)}")
    values = list(values) if values else list(ABLATION_DEFAULTS[axis])

    async def main() -> list[dict]:
        db = None
        if db_path:
            db = ResultsDatabase(db_path)
            await db.init()
        try:
            return await ablate_async(config, axis, values, db)
        finally:
            if db is not None:
                await db.close()

    return asyncio.run(main())
