"""Event consuming: persist finished ablation cells"""
import asyncio
import logging

from database.results_database import ResultsDatabase
from domain.constants import EVENT_TYPE_CELL_COMPLETED, EVENT_TYPE_CELL_FAILED

logger = logging.getLogger(__name__)


class EventConsumer:
    """Consumes cell events from the queue, stores them and keeps them for the caller"""

    def __init__(self, queue: asyncio.Queue[dict], db: ResultsDatabase | None = None) -> None:
        self.queue = queue
        self.db = db
        self.completed: list[dict] = []
        self.failed: list[dict] = []

    async def consume(self) -> None:
        """Continuously consume and process events"""
        while True:
            event = await self.queue.get()
            try:
                await self.handle_event(event)
            except Exception:
                logger.exception("failed to handle %s event", event.get("type"))
            finally:
                self.queue.task_done()

    async def handle_event(self, event: dict) -> None:
        """Route event to the appropriate handler"""
        event_type: str = event.get("type", "")

        if event_type == EVENT_TYPE_CELL_COMPLETED:
            await self.handle_completed(event)
        elif event_type == EVENT_TYPE_CELL_FAILED:
            await self.handle_failed(event)
        else:
            logger.warning("ignoring event of unknown type %r", event_type)

    async def handle_completed(self, event: dict) -> None:
        self.completed.append(event)
        if self.db is not None:
            await self.db.save_fragment(event["axis"], event["value"], event["seed"], event["metrics"])

    async def handle_failed(self, event: dict) -> None:
        logger.warning("cell %s=%r seed=%s failed: %s", event.get("axis"), event.get("value"), event.get("seed"), event.get("error"))
        self.failed.append(event)
        if self.db is not None:
            await self.db.save_failure(event["axis"], event["value"], event["seed"], event.get("error", ""))
