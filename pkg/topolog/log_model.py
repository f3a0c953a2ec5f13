"""
Host event log schema, JSONL run parsing, and experiment constructions.
Provides the event/run types every other module consumes.
"""

import json
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from pydantic import BaseModel, ValidationError, field_validator

from topolog.errors import (
    EmptyAfterFilter,
    EmptyRun,
    MalformedLine,
    MissingAttribute,
    NegativeTimestamp,
    UnsortedEvents,
)

logger = logging.getLogger(__name__)


class EventType(str, Enum):
    """The four Sysmon-analog event types."""
    PROCESS_CREATE = "ProcessCreate"
    PROCESS_TERMINATE = "ProcessTerminate"
    FILE_CREATE = "FileCreate"
    NETWORK_CONNECT = "NetworkConnect"


class Label(str, Enum):
    BENIGN = "benign"
    ANOMALOUS = "anomalous"


class NodeKind(str, Enum):
    PROCESS = "Process"
    FILE = "File"
    IP = "Ip"
    PORT = "Port"


# Canonical event-type order used for counts columns and documentation
EVENT_TYPE_ORDER = (
    EventType.PROCESS_CREATE,
    EventType.PROCESS_TERMINATE,
    EventType.FILE_CREATE,
    EventType.NETWORK_CONNECT,
)

REQUIRED_ATTRIBUTES = {
    EventType.PROCESS_CREATE: ("process_id", "parent_process_id", "image"),
    EventType.PROCESS_TERMINATE: ("process_id",),
    EventType.FILE_CREATE: ("process_id", "target_file"),
    EventType.NETWORK_CONNECT: ("process_id", "src_ip", "src_port", "dst_ip", "dst_port"),
}

# Sysmon event ids, carried as the optional 'sysmon_id' attribute
SYSMON_IDS = {
    EventType.PROCESS_CREATE: "1",
    EventType.PROCESS_TERMINATE: "5",
    EventType.FILE_CREATE: "11",
    EventType.NETWORK_CONNECT: "3",
}

# (kind, attribute) pairs naming the identifiers an event mentions, in order
_NODE_ATTRIBUTES = {
    EventType.PROCESS_CREATE: (
        (NodeKind.PROCESS, "parent_process_id"),
        (NodeKind.PROCESS, "process_id"),
        (NodeKind.FILE, "image"),
    ),
    EventType.PROCESS_TERMINATE: (
        (NodeKind.PROCESS, "process_id"),
    ),
    EventType.FILE_CREATE: (
        (NodeKind.PROCESS, "process_id"),
        (NodeKind.FILE, "target_file"),
    ),
    EventType.NETWORK_CONNECT: (
        (NodeKind.PROCESS, "process_id"),
        (NodeKind.IP, "src_ip"),
        (NodeKind.PORT, "src_port"),
        (NodeKind.IP, "dst_ip"),
        (NodeKind.PORT, "dst_port"),
    ),
}


@dataclass(frozen=True, order=True)
class NodeKey:
    """Typed identity of a complex vertex: port '80' and file '80' never collide."""
    kind: NodeKind
    value: str

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.value}"


@dataclass(frozen=True)
class LogEvent:
    """A single timestamped host event."""
    timestamp: float
    event_type: EventType
    attributes: dict = field(default_factory=dict)

    def attribute_keys(self) -> list[NodeKey]:
        """NodeKeys in per-type attribute order, duplicates included."""
        return [NodeKey(kind, self.attributes[name]) for kind, name in _NODE_ATTRIBUTES[self.event_type]]

    def node_keys(self) -> list[NodeKey]:
        """
        Identifiers mentioned by this event, in a fixed per-type order.

        Returns:
            List of distinct NodeKeys, first occurrence kept
        """
        keys: list[NodeKey] = []
        for key in self.attribute_keys():
            if key not in keys:
                keys.append(key)
        return keys


@dataclass(frozen=True)
class Run:
    """An ordered sequence of events with a benign/anomalous label."""
    run_id: str
    label: Label
    events: tuple[LogEvent, ...]

    def __post_init__(self):
        if not self.events:
            raise EmptyRun(f"run '{self.run_id}' has no events")
        previous = self.events[0].timestamp
        for event in self.events[1:]:
            if event.timestamp < previous:
                raise UnsortedEvents(f"run '{self.run_id}' events are not sorted by timestamp")
            previous = event.timestamp


@dataclass(frozen=True)
class Construction:
    """A named subset of event types used to build one experiment."""
    name: str
    included_event_types: frozenset

    def ordered_types(self) -> list[EventType]:
        return [t for t in EVENT_TYPE_ORDER if t in self.included_event_types]


CONSTRUCTION_1 = Construction(
    "1", frozenset({EventType.PROCESS_CREATE, EventType.NETWORK_CONNECT})
)
CONSTRUCTION_2 = Construction("2", frozenset(EVENT_TYPE_ORDER))

CONSTRUCTIONS = {"1": CONSTRUCTION_1, "2": CONSTRUCTION_2}


def get_construction(name) -> Construction:
    """
    Look up a construction by its number.

    Args:
        name: 1, 2, "1" or "2"

    Returns:
        The matching Construction

    Raises:
        ValueError: If the construction is unknown
    """
    try:
        return CONSTRUCTIONS[str(name)]
    except KeyError:
        raise ValueError(f"Unknown construction '{name}' (expected 1 or 2)") from None


# ============================================================================
# JSONL wire format
# ============================================================================

class EventRecord(BaseModel):
    """One line of a JSONL run file."""
    run_id: str
    label: Label
    timestamp: float
    event_type: EventType
    attributes: dict[str, str]

    @field_validator("attributes", mode="before")
    @classmethod
    def _stringify_values(cls, value):
        # Ports and ids are often written as JSON numbers
        if isinstance(value, dict):
            return {str(k): v if isinstance(v, str) else json.dumps(v) for k, v in value.items()}
        return value


def _check_event(record: EventRecord, line_no: int) -> LogEvent:
    if not math.isfinite(record.timestamp):
        raise MalformedLine(line_no, f"non-finite timestamp {record.timestamp}")
    if record.timestamp < 0:
        raise NegativeTimestamp(line_no, record.timestamp)
    for name in REQUIRED_ATTRIBUTES[record.event_type]:
        if name not in record.attributes:
            raise MissingAttribute(record.event_type.value, name, line_no)
    return LogEvent(record.timestamp, record.event_type, dict(record.attributes))


def parse_run(text: str) -> Run:
    """
    Parse a JSONL document into a Run.

    Args:
        text: JSONL document, one event object per line

    Returns:
        Run with events stably sorted by timestamp

    Raises:
        MalformedLine: If a line is not valid JSON, does not match the event
            schema, has a NaN or infinite timestamp, or disagrees with the
            run_id/label of the first line
        MissingAttribute: If an event lacks an attribute its type requires
        NegativeTimestamp: If an event timestamp is negative
        EmptyRun: If the document contains no events

    Example:
        >>> run = parse_run(Path('run-0000.jsonl').read_text())
        >>> run.events[0].event_type
        <EventType.PROCESS_CREATE: 'ProcessCreate'>
    """
    run_id: Optional[str] = None
    label: Optional[Label] = None
    events: list[LogEvent] = []

    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedLine(line_no, f"invalid JSON ({e.msg})") from e
        if not isinstance(payload, dict):
            raise MalformedLine(line_no, "expected a JSON object")

        try:
            record = EventRecord.model_validate(payload)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            raise MalformedLine(line_no, f"{location}: {first['msg']}") from e

        if run_id is None:
            run_id, label = record.run_id, record.label
        elif record.run_id != run_id or record.label != label:
            raise MalformedLine(line_no, f"run_id/label differ from first line ('{run_id}', {label.value})")

        events.append(_check_event(record, line_no))

    if not events:
        raise EmptyRun("document contains no events")

    # sorted() is stable, so equal timestamps keep file order
    events = sorted(events, key=lambda e: e.timestamp)
    return Run(run_id, label, tuple(events))


def serialize_run(run: Run) -> str:
    """
    Serialize a Run to its JSONL form.

    Args:
        run: Run to write

    Returns:
        JSONL text, one '\\n'-terminated line per event
    """
    lines = []
    for event in run.events:
        record = EventRecord(
            run_id=run.run_id,
            label=run.label,
            timestamp=event.timestamp,
            event_type=event.event_type,
            attributes=event.attributes,
        )
        lines.append(record.model_dump_json())
    return "\n".join(lines) + "\n"


def filter_events(run: Run, construction: Construction) -> Run:
    """
    Keep only the events whose type belongs to a construction.

    Args:
        run: Source run
        construction: Event-type subset to keep

    Returns:
        New Run with the matching events, order preserved

    Raises:
        EmptyAfterFilter: If no events remain
    """
    kept = tuple(e for e in run.events if e.event_type in construction.included_event_types)
    if not kept:
        raise EmptyAfterFilter(
            f"run '{run.run_id}' has no events in construction {construction.name}"
        )
    return Run(run.run_id, run.label, kept)


def filter_runs(runs: Iterable[Run], construction: Construction) -> list[Run]:
    """Filter a corpus, skipping (and logging) runs left empty by the construction."""
    kept = []
    for run in runs:
        try:
            kept.append(filter_events(run, construction))
        except EmptyAfterFilter as e:
            logger.warning("Skipping run: %s", e)
    return kept
