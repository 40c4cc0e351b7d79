"""Minimal line-JSON socket client for exercising the stream server."""

from __future__ import annotations

import json
import socket
import time


class ScriptedClient:
    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        self._buffer = b""
        self.messages: list[dict] = []

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

    def send(self, message: dict):
        self.sock.sendall(json.dumps(message).encode("utf-8") + b"\n")

    def send_raw(self, payload: bytes):
        self.sock.sendall(payload)

    def next_message(self, timeout: float = 5.0) -> dict:
        deadline = time.monotonic() + timeout
        while True:
            if b"\n" in self._buffer:
                line, self._buffer = self._buffer.split(b"\n", 1)
                message = json.loads(line.decode("utf-8"))
                self.messages.append(message)
                return message
            if time.monotonic() > deadline:
                raise TimeoutError("no message within timeout")
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed the connection")
            self._buffer += chunk

    def wait_for(self, predicate, timeout: float = 10.0) -> dict:
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            message = self.next_message(timeout=max(0.1, deadline - time.monotonic()))
            if predicate(message):
                return message
        raise TimeoutError("predicate not satisfied in time")

    def drain_for(self, seconds: float) -> list[dict]:
        end = time.monotonic() + seconds
        collected = []
        while time.monotonic() < end:
            try:
                collected.append(self.next_message(timeout=max(0.05, end - time.monotonic())))
            except TimeoutError:
                break
        return collected
