"""Full-duplex byte channel between a native application and the platform.

A :class:`DuplexChannel` is one shared pair of bounded ring buffers with
exactly two handles, one per side.  Each direction has a single producer
and a single consumer; reads and writes never block and may be partial.
Closing a handle leaves already-buffered bytes readable by the peer
(drain semantics), after which the peer sees end-of-stream.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

from .errors import ClosedHandleError, InvalidCapacityError, PeerDisconnectedError

DEFAULT_CAPACITY = 4096


class RingBuffer:
    """Bounded FIFO of bytes with monotonic read/write counters.

    Capacity must be a power of two so positions wrap with a mask and a
    full buffer is always distinguishable from an empty one.
    """

    __slots__ = ("capacity", "_mask", "_storage", "read_pos", "write_pos", "_lock")

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 2 or capacity & (capacity - 1):
            raise InvalidCapacityError(
                f"capacity must be a power of two >= 2, got {capacity}"
            )
        self.capacity = capacity
        self._mask = capacity - 1
        self._storage = bytearray(capacity)
        self.read_pos = 0
        self.write_pos = 0
        self._lock = threading.Lock()

    def write(self, data: bytes) -> int:
        """Enqueue up to the free space, returning the byte count accepted."""
        with self._lock:
            free = self.capacity - (self.write_pos - self.read_pos)
            n = min(len(data), free)
            if n == 0:
                return 0
            start = self.write_pos & self._mask
            first = min(n, self.capacity - start)
            self._storage[start:start + first] = data[:first]
            if first < n:
                self._storage[0:n - first] = data[first:n]
            self.write_pos += n
            return n

    def read(self, max_bytes: int) -> bytes:
        """Dequeue up to ``max_bytes`` in FIFO order (empty when drained)."""
        with self._lock:
            used = self.write_pos - self.read_pos
            n = min(max_bytes, used)
            if n <= 0:
                return b""
            start = self.read_pos & self._mask
            first = min(n, self.capacity - start)
            out = bytes(self._storage[start:start + first])
            if first < n:
                out += bytes(self._storage[0:n - first])
            self.read_pos += n
            return out

    @property
    def readable(self) -> int:
        with self._lock:
            return self.write_pos - self.read_pos

    @property
    def writable(self) -> int:
        with self._lock:
            return self.capacity - (self.write_pos - self.read_pos)


class Side(enum.Enum):
    APPLICATION = "application"
    PLATFORM = "platform"

    @property
    def peer(self) -> "Side":
        return Side.PLATFORM if self is Side.APPLICATION else Side.APPLICATION


@dataclass(frozen=True)
class PollStatus:
    """Instantaneous snapshot of a handle's readable/writable byte counts."""

    readable: int
    writable: int
    peer_open: bool


class DuplexChannel:
    """Two ring buffers (one per direction) plus the open/closed state of
    the application-side and platform-side handles."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.app_to_platform = RingBuffer(capacity)
        self.platform_to_app = RingBuffer(capacity)
        self._open = {Side.APPLICATION: True, Side.PLATFORM: True}
        self._lock = threading.Lock()

    def is_open(self, side: Side) -> bool:
        with self._lock:
            return self._open[side]

    def _close(self, side: Side) -> None:
        with self._lock:
            self._open[side] = False

    def _outbound(self, side: Side) -> RingBuffer:
        return self.app_to_platform if side is Side.APPLICATION else self.platform_to_app

    def _inbound(self, side: Side) -> RingBuffer:
        return self.platform_to_app if side is Side.APPLICATION else self.app_to_platform


class ChannelHandle:
    """One side of a duplex channel.

    The read and write directions are fixed by ``side``: the application
    handle writes into the app-to-platform buffer and reads the reverse
    one, the platform handle the opposite.  A handle must be used from a
    single thread of control; the two handles may be used concurrently.
    """

    def __init__(self, channel: DuplexChannel, side: Side):
        self.channel = channel
        self.side = side

    def write(self, data: bytes) -> int:
        """Enqueue up to ``len(data)`` bytes, returning the accepted count.

        Never blocks; 0 means the outbound buffer is full.
        """
        if not self.channel.is_open(self.side):
            raise ClosedHandleError(f"{self.side.value} handle is closed")
        if not self.channel.is_open(self.side.peer):
            raise PeerDisconnectedError(f"{self.side.peer.value} handle has disconnected")
        return self.channel._outbound(self.side).write(data)

    def read(self, max_bytes: int) -> bytes | None:
        """Dequeue up to ``max_bytes`` from the inbound buffer.

        Returns ``b""`` when no data is currently available and ``None``
        once the peer has closed and all buffered bytes are drained.
        """
        if not self.channel.is_open(self.side):
            raise ClosedHandleError(f"{self.side.value} handle is closed")
        data = self.channel._inbound(self.side).read(max_bytes)
        if not data and not self.channel.is_open(self.side.peer):
            return None
        return data

    def close(self) -> None:
        """Close this side.  Idempotent."""
        self.channel._close(self.side)

    def poll(self) -> PollStatus:
        return PollStatus(
            readable=self.channel._inbound(self.side).readable,
            writable=self.channel._outbound(self.side).writable,
            peer_open=self.channel.is_open(self.side.peer),
        )

    @property
    def is_open(self) -> bool:
        return self.channel.is_open(self.side)


def create_duplex(capacity: int = DEFAULT_CAPACITY) -> tuple[ChannelHandle, ChannelHandle]:
    """Create a channel and return its (application, platform) handles.

    Both handles are open from the start, so neither side depends on the
    other having connected first.
    """
    channel = DuplexChannel(capacity)
    return (
        ChannelHandle(channel, Side.APPLICATION),
        ChannelHandle(channel, Side.PLATFORM),
    )
