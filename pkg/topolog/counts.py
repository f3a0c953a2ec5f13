"""
Baseline count vectorization of a run: events per type, then unique
identifier values per type.
"""

from dataclasses import dataclass

from topolog.log_model import EventType, Construction, Run, filter_events

# Attributes whose distinct values are counted, per event type and in column order
UNIQUE_ATTRIBUTES = {
    EventType.PROCESS_CREATE: ("process_id", "parent_process_id", "image"),
    EventType.PROCESS_TERMINATE: ("process_id",),
    EventType.FILE_CREATE: ("target_file",),
    EventType.NETWORK_CONNECT: ("dst_ip", "dst_port", "src_port"),
}

_SNAKE = {
    EventType.PROCESS_CREATE: "process_create",
    EventType.PROCESS_TERMINATE: "process_terminate",
    EventType.FILE_CREATE: "file_create",
    EventType.NETWORK_CONNECT: "network_connect",
}


@dataclass(frozen=True)
class CountsVector:
    values: tuple[int, ...]
    schema: tuple[str, ...]


def count_schema(construction: Construction) -> tuple[str, ...]:
    """
    Column names of the counts vector for a construction.

    Event-count columns come first for every included type, then the
    unique-value columns, both in canonical event-type order.
    """
    types = construction.ordered_types()
    names = [f"{_SNAKE[t]}_events" for t in types]
    for t in types:
        names.extend(f"{_SNAKE[t]}_unique_{attr}" for attr in UNIQUE_ATTRIBUTES[t])
    return tuple(names)


def count_vector(run: Run, construction: Construction) -> CountsVector:
    """
    Count events and distinct identifiers of a run.

    Args:
        run: Run (filtered here by the construction)
        construction: Event types to count

    Returns:
        CountsVector following count_schema(construction)

    Raises:
        EmptyAfterFilter: If the construction leaves no events
    """
    filtered = filter_events(run, construction)
    types = construction.ordered_types()

    events_per_type = {t: 0 for t in types}
    distinct = {(t, attr): set() for t in types for attr in UNIQUE_ATTRIBUTES[t]}
    for event in filtered.events:
        events_per_type[event.event_type] += 1
        for attr in UNIQUE_ATTRIBUTES[event.event_type]:
            distinct[(event.event_type, attr)].add(event.attributes[attr])

    values = [events_per_type[t] for t in types]
    for t in types:
        values.extend(len(distinct[(t, attr)]) for attr in UNIQUE_ATTRIBUTES[t])
    return CountsVector(tuple(values), count_schema(construction))
