"""Unit tests for EventConsumer"""
import asyncio
import contextlib
from unittest.mock import AsyncMock

import pytest

from domain.constants import EVENT_TYPE_CELL_COMPLETED, EVENT_TYPE_CELL_FAILED
from events.consumer import EventConsumer


def completed(seed: int = 0) -> dict:
    return {
        "type": EVENT_TYPE_CELL_COMPLETED,
        "axis": "policy",
        "value": "greedy",
        "seed": seed,
        "metrics": {"seed": seed, "map50_raw": 0.5},
        "error": "",
    }


def failed(seed: int = 1) -> dict:
    return {
        "type": EVENT_TYPE_CELL_FAILED,
        "axis": "policy",
        "value": "greedy",
        "seed": seed,
        "metrics": None,
        "error": "NoPathError: boxed in",
    }


@pytest.mark.unit
class TestEventConsumerInitialization:
    """Test EventConsumer initialization"""

    def test_consumer_initialization(self):
        """Test creating EventConsumer instance"""
        queue = asyncio.Queue()
        consumer = EventConsumer(queue)

        assert consumer.queue is queue
        assert consumer.db is None
        assert consumer.completed == []
        assert consumer.failed == []


@pytest.mark.unit
@pytest.mark.asyncio
class TestEventConsumerHandleEvent:
    """Test EventConsumer event handling routing"""

    async def test_completed_event_routed(self):
        """Test that completed cells go to handle_completed"""
        consumer = EventConsumer(asyncio.Queue())
        consumer.handle_completed = AsyncMock()
        consumer.handle_failed = AsyncMock()

        event = completed()
        await consumer.handle_event(event)

        consumer.handle_completed.assert_called_once_with(event)
        consumer.handle_failed.assert_not_called()

    async def test_failed_event_routed(self):
        """Test that failed cells go to handle_failed"""
        consumer = EventConsumer(asyncio.Queue())
        consumer.handle_completed = AsyncMock()
        consumer.handle_failed = AsyncMock()

        event = failed()
        await consumer.handle_event(event)

        consumer.handle_failed.assert_called_once_with(event)
        consumer.handle_completed.assert_not_called()

    async def test_unknown_event_ignored(self):
        """Test that unknown event types are dropped"""
        consumer = EventConsumer(asyncio.Queue())

        await consumer.handle_event({"type": "cell_paused"})

        assert consumer.completed == []
        assert consumer.failed == []

    async def test_without_database(self):
        """Test that events are kept even when nothing persists them"""
        consumer = EventConsumer(asyncio.Queue())

        await consumer.handle_event(completed())
        await consumer.handle_event(failed())

        assert len(consumer.completed) == 1
        assert len(consumer.failed) == 1


@pytest.mark.unit
@pytest.mark.asyncio
class TestEventConsumerPersistence:
    """Test that handled events reach the results database"""

    async def test_completed_saved(self):
        """Test that a completed cell is saved as a fragment"""
        db = AsyncMock()
        consumer = EventConsumer(asyncio.Queue(), db)

        await consumer.handle_completed(completed(3))

        db.save_fragment.assert_awaited_once_with("policy", "greedy", 3, {"seed": 3, "map50_raw": 0.5})

    async def test_failed_saved(self):
        """Test that a failed cell is saved with its error"""
        db = AsyncMock()
        consumer = EventConsumer(asyncio.Queue(), db)

        await consumer.handle_failed(failed(5))

        db.save_failure.assert_awaited_once_with("policy", "greedy", 5, "NoPathError: boxed in")

    async def test_consume_loop(self, event_queue, event_consumer, in_memory_db):
        """Test that the running consumer drains the queue into the database"""
        task = asyncio.create_task(event_consumer.consume())
        await event_queue.put(completed(0))
        await event_queue.put(failed(1))
        await event_queue.join()
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

        rows = await in_memory_db.get_fragments()
        assert [(r["seed"], r["status"]) for r in rows] == [(0, "ok"), (1, "failed")]


    async def test_consume_survives_handler_error(self, event_queue):
        """Test that a failing save is logged and the loop keeps draining the queue"""
        db = AsyncMock()
        db.save_fragment.side_effect = OSError("disk full")
        consumer = EventConsumer(event_queue, db)
        task = asyncio.create_task(consumer.consume())
        await event_queue.put(completed(0))
        await event_queue.put(failed(1))
        await asyncio.wait_for(event_queue.join(), timeout=5)
        assert not task.done()
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

        assert [e["seed"] for e in consumer.completed] == [0]
        db.save_failure.assert_awaited_once()
