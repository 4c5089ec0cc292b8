"""Event publishing for ablation runs"""
import asyncio
import logging

from domain.models import CellEvent

logger = logging.getLogger(__name__)


class EventPublisher:
    """Publishes finished-cell events to the event queue"""

    def __init__(self, queue: asyncio.Queue[dict]) -> None:
        self.queue = queue

    async def publish(self, event: CellEvent | dict) -> None:
        """Publish an event to the queue (accepts dataclass or dict)"""
        if isinstance(event, CellEvent):
            event_dict = {
                "type": event.type,
                "axis": event.axis,
                "value": event.value,
                "seed": event.seed,
                "metrics": event.metrics.to_dict() if event.metrics is not None else None,
                "error": event.error,
            }
        else:
            event_dict = event
        logger.debug("publishing %s for %s=%r seed=%s", event_dict.get("type"), event_dict.get("axis"), event_dict.get("value"), event_dict.get("seed"))
        await self.queue.put(event_dict)
