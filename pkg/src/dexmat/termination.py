"""Token-ring detection of global quiescence.

Servers sit on a ring 1, 2, ..., n, 1. Server 1 probes by sending a
white token around; a server holds the token until it has nothing left
to do, then passes it on. Colour alone is not enough: over FIFO pairs a
token can overtake a still-undelivered message through third parties and
come home white. So each server also keeps a running balance of work
messages sent minus received, the token accumulates these balances as it
travels, and server 1 only declares termination when the returned token
is white, server 1 itself is white, and the accumulated balance plus its
own is exactly zero, meaning nothing is in flight anywhere. A failed
check just starts the next probe.

Colour rules: receiving any work message blackens a server, as does
sending work backwards (to a lower id). Forwarding the token whitens the
forwarder and blackens the token if the forwarder was black.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .messages import BLACK, WHITE, TokenMessage

TERMINATE = "terminate"
SEND_TOKEN = "send_token"


@dataclass
class RingAction:
    what: str
    to: int = 0
    token: Optional[TokenMessage] = None


@dataclass
class RingState:
    server_id: int
    n_servers: int
    colour: str = WHITE
    counter: int = 0
    held: Optional[TokenMessage] = None
    probes: int = 0
    terminated: bool = False

    def __post_init__(self) -> None:
        # server 1 starts with the token; probe 0 marks "never circulated"
        if self.server_id == 1 and self.n_servers > 1:
            self.held = TokenMessage(colour=WHITE, debit=0, probe=0)

    @property
    def next_on_ring(self) -> int:
        return self.server_id % self.n_servers + 1

    def note_work_sent(self, dst: int) -> None:
        self.counter += 1
        if dst < self.server_id:
            self.colour = BLACK

    def note_work_received(self) -> None:
        self.counter -= 1
        self.colour = BLACK

    def note_token(self, token: TokenMessage) -> None:
        assert self.held is None, "two tokens on the ring"
        self.held = token

    def wants_to_act(self) -> bool:
        return self.held is not None and not self.terminated

    def act_when_idle(self) -> Optional[RingAction]:
        """Called only when the server has no other work at all."""
        if self.held is None or self.terminated:
            return None
        token = self.held
        if self.server_id == 1:
            if token.probe > 0 and self._conclusive(token):
                self.held = None
                self.terminated = True
                return RingAction(TERMINATE)
            return self._new_probe(token)
        return self._forward(token)

    def _conclusive(self, token: TokenMessage) -> bool:
        return (
            token.colour == WHITE
            and self.colour == WHITE
            and token.debit + self.counter == 0
        )

    def _new_probe(self, token: TokenMessage) -> RingAction:
        self.held = None
        self.probes += 1
        self.colour = WHITE
        fresh = TokenMessage(colour=WHITE, debit=0, probe=token.probe + 1)
        return RingAction(SEND_TOKEN, to=self.next_on_ring, token=fresh)

    def _forward(self, token: TokenMessage) -> RingAction:
        self.held = None
        colour = BLACK if self.colour == BLACK else token.colour
        passed = TokenMessage(
            colour=colour, debit=token.debit + self.counter, probe=token.probe
        )
        self.colour = WHITE
        return RingAction(SEND_TOKEN, to=self.next_on_ring, token=passed)


def single_server_done(ring: RingState, idle: bool) -> bool:
    """With one server there is no ring; idleness is termination."""
    return ring.n_servers == 1 and idle
