"""OS-visible character-device endpoints backed by pseudo-terminals.

Each active deployment publishes one PTY whose slave node any stock
terminal program can open like serial hardware.  A stable symlink under
the runtime directory gives the node a predictable name.  The endpoint
owns a pump thread that shuttles bytes between the PTY master and the
application handle of the deployment's duplex channel, with backpressure
in both directions and no reordering.
"""

from __future__ import annotations

import errno
import logging
import os
import pty
import select
import threading
import time
import tty
from pathlib import Path
from typing import Callable

from .channel import ChannelHandle
from .errors import NameInUseError, OsResourceError

logger = logging.getLogger(__name__)

CHUNK = 4096
IDLE_WAIT = 0.05


class PtyEndpoint:
    """One published endpoint: PTY node, link, and its pump.

    The slave is left in raw mode so the byte stream is 8-bit clean;
    echo and CR/LF framing belong to whatever module sits behind the
    channel.  ``on_activity`` (if given) is invoked from the pump thread
    whenever bytes moved toward the platform, so the owning loop can
    react promptly instead of waiting for its next tick.
    """

    def __init__(self, deployment_id: str, app_handle: ChannelHandle, name: str,
                 link_dir: Path, on_activity: Callable[[], None] | None = None):
        self.deployment_id = deployment_id
        self.name = name
        self._handle = app_handle
        self._on_activity = on_activity

        link_dir = Path(link_dir)
        link_path = link_dir / name
        if link_path.is_symlink() or link_path.exists():
            if link_path.is_symlink() and not link_path.exists():
                link_path.unlink()  # stale leftover from a dead instance
            else:
                raise NameInUseError(f"endpoint name already published: {name}")
        try:
            link_dir.mkdir(parents=True, exist_ok=True)
            master, slave = pty.openpty()
        except OSError as exc:
            raise OsResourceError(f"cannot allocate pseudo-terminal: {exc}") from exc
        try:
            tty.setraw(slave)
            self.os_path = os.ttyname(slave)
        finally:
            os.close(slave)
        os.set_blocking(master, False)
        self._master = master
        try:
            os.symlink(self.os_path, link_path)
        except OSError as exc:
            os.close(master)
            raise OsResourceError(f"cannot create endpoint link: {exc}") from exc
        self.link_path = link_path

        self._wake_r, self._wake_w = os.pipe()
        os.set_blocking(self._wake_r, False)
        os.set_blocking(self._wake_w, False)

        self.open_count = 0
        self.sessions = 0
        self.bytes_from_app = 0
        self.bytes_to_app = 0
        self._in_pending = b""   # read from PTY, not yet accepted by channel
        self._out_pending = b""  # read from channel, not yet written to PTY
        self._final_drain_bytes = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(
            target=self._pump_loop, name=f"endpoint-{name}", daemon=True)

    def start(self) -> None:
        self._thread.start()

    def notify(self) -> None:
        """Wake the pump; safe from any thread, coalesces."""
        try:
            os.write(self._wake_w, b"\0")
        except OSError:
            pass

    # -- pump ----------------------------------------------------------------

    def _client_state(self) -> tuple[bool, bool]:
        """(client attached, master readable) from one non-blocking poll."""
        poller = select.poll()
        poller.register(self._master, select.POLLIN)
        events = poller.poll(0)
        if not events:
            return True, False
        flags = events[0][1]
        return not (flags & select.POLLHUP), bool(flags & select.POLLIN)

    def pump_once(self) -> tuple[int, int]:
        """One bounded pass both directions; returns (in, out) byte counts.

        "in" is PTY toward platform, "out" is platform toward PTY.
        Partial acceptance on either side leaves a pending remainder and
        stops further intake, so nothing is ever dropped.
        """
        attached, readable = self._client_state()
        if attached and not self.open_count:
            self.open_count = 1
            self.sessions += 1
            logger.debug("endpoint %s: client attached", self.name)
        elif not attached and self.open_count:
            self.open_count = 0
            logger.debug("endpoint %s: client detached", self.name)

        moved_in = self._pump_inbound(readable)
        moved_out = self._pump_outbound()
        if moved_in and self._on_activity is not None:
            self._on_activity()
        return moved_in, moved_out

    def _pump_inbound(self, readable: bool) -> int:
        moved = 0
        if not self._in_pending and readable:
            try:
                self._in_pending = os.read(self._master, CHUNK)
            except BlockingIOError:
                pass
            except OSError as exc:
                if exc.errno != errno.EIO:  # EIO: client side fully closed
                    raise
        if self._in_pending:
            try:
                accepted = self._handle.write(self._in_pending)
            except Exception:
                # platform side gone; drop what cannot be delivered
                self._in_pending = b""
                return 0
            moved = accepted
            self.bytes_from_app += accepted
            self._in_pending = self._in_pending[accepted:]
        return moved

    def _pump_outbound(self) -> int:
        moved = 0
        if not self._out_pending:
            try:
                data = self._handle.read(CHUNK)
            except Exception:
                data = None
            if data:
                self._out_pending = data
        if self._out_pending:
            try:
                n = os.write(self._master, self._out_pending)
            except BlockingIOError:
                n = 0
            except OSError:
                n = len(self._out_pending)  # master defunct; nothing to deliver to
            moved = n
            self.bytes_to_app += n
            self._out_pending = self._out_pending[n:]
        return moved

    def _pump_loop(self) -> None:
        while not self._stop.is_set():
            moved_in, moved_out = self.pump_once()
            if moved_in or moved_out:
                continue
            attached, _ = self._client_state()
            # only select on the master while a client keeps it HUP-free,
            # and only while we can actually take more input
            rlist = [self._wake_r]
            if attached and not self._in_pending and self._handle.poll().writable:
                rlist.append(self._master)
            try:
                ready, _, _ = select.select(rlist, [], [], IDLE_WAIT)
            except OSError:
                ready = []
            if self._wake_r in ready:
                try:
                    while os.read(self._wake_r, 64):
                        pass
                except OSError:
                    pass
        # drain what the platform already queued so a connected client
        # sees the tail of the stream before hangup
        for _ in range(20):
            moved = self._pump_outbound()
            if not moved:
                break
            self._final_drain_bytes += moved

    # -- lifecycle -----------------------------------------------------------

    def withdraw(self) -> None:
        """Remove the node and link; a connected client observes hangup."""
        self._stop.set()
        self.notify()
        if self._thread.is_alive():
            self._thread.join(timeout=2.0)
        if self._final_drain_bytes:
            # closing the master discards whatever the client has not read
            # yet, so give an attached reader a bounded moment to catch up
            deadline = time.monotonic() + 0.25
            while time.monotonic() < deadline:
                attached, _ = self._client_state()
                if not attached:
                    break
                time.sleep(0.01)
        try:
            self._handle.close()
        except Exception:
            pass
        for fd in (self._master, self._wake_r, self._wake_w):
            try:
                os.close(fd)
            except OSError:
                pass
        try:
            self.link_path.unlink()
        except OSError:
            pass
        self.open_count = 0

    def snapshot(self) -> dict:
        return {
            "name": self.name,
            "path": self.os_path,
            "link": str(self.link_path),
            "open_count": self.open_count,
            "sessions": self.sessions,
            "bytes_from_app": self.bytes_from_app,
            "bytes_to_app": self.bytes_to_app,
        }
