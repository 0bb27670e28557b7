"""Task/query schemas that drive zero-shot feature extraction.

A schema is an ordered program: clusters of tasks, each task an ordered set
of mutually exclusive natural-language queries. Unconditional clusters apply
to every image; a routed cluster applies only when its trigger query wins
the argmax of a gating task (for the built-in schema, the "content" task
gates the person/people clusters). The feature-vector layout is the
depth-first (cluster, task, query) order of the document, so column meaning
is stable across runs.

Query ids are stable keys used in files and reports; query texts are the
only strings ever sent to an embedding model and may be edited freely
without breaking downstream column references.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterator

__all__ = [
    "SchemaError",
    "QuerySpec",
    "TaskSpec",
    "RoutingRule",
    "ClusterSpec",
    "TaskSchema",
    "TaskSlot",
    "ResolvedRoute",
    "parse_schema",
    "serialize_schema",
    "load_schema",
    "default_schema",
]


class SchemaError(ValueError):
    """Raised for malformed or internally inconsistent schema documents."""


@dataclass(frozen=True)
class QuerySpec:
    """One natural-language query within a task."""

    id: str
    text: str
    report_primary: bool = False


@dataclass(frozen=True)
class TaskSpec:
    """An ordered set of complementing queries scored jointly per image."""

    name: str
    queries: tuple[QuerySpec, ...]

    @property
    def n_queries(self) -> int:
        return len(self.queries)


@dataclass(frozen=True)
class RoutingRule:
    """Condition for applying a cluster: a query of a gating task must win."""

    source_task: str
    trigger_query: str


@dataclass(frozen=True)
class ClusterSpec:
    name: str
    tasks: tuple[TaskSpec, ...]
    route: RoutingRule | None = None

    @property
    def is_routed(self) -> bool:
        return self.route is not None


@dataclass(frozen=True)
class TaskSlot:
    """Navigation record: one task and its feature-column span."""

    cluster_index: int
    cluster_name: str
    routed: bool
    task: TaskSpec
    start: int
    stop: int


@dataclass(frozen=True)
class ResolvedRoute:
    """A routed cluster's trigger resolved to concrete column positions."""

    cluster_index: int
    cluster_name: str
    trigger_column: int
    source_start: int
    source_stop: int


@dataclass(frozen=True)
class TaskSchema:
    """A validated schema with precomputed column layout.

    Instances are immutable after construction and safe to share across
    threads. Equality and hashing consider only the declared content
    (version and clusters), so ``parse_schema(serialize_schema(s)) == s``.
    """

    version: int
    clusters: tuple[ClusterSpec, ...]
    query_ids: tuple[str, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        slots, routes, column_index = _validate(self.version, self.clusters)
        object.__setattr__(self, "query_ids", tuple(column_index))
        object.__setattr__(self, "_slots", slots)
        object.__setattr__(self, "_routes", routes)
        object.__setattr__(self, "_column_index", column_index)

    @property
    def dimension(self) -> int:
        """Total query count across all clusters (feature-vector length)."""
        return len(self.query_ids)

    @property
    def routes(self) -> tuple[ResolvedRoute, ...]:
        return self._routes  # type: ignore[attr-defined]

    def slots(self) -> Iterator[TaskSlot]:
        """All tasks in depth-first order, with their column spans."""
        return iter(self._slots)  # type: ignore[attr-defined]

    def column_of(self, query_id: str) -> int:
        try:
            return self._column_index[query_id]  # type: ignore[attr-defined]
        except KeyError:
            raise SchemaError(f"unknown query id {query_id!r}") from None

    def slot_of(self, query_id: str) -> TaskSlot:
        """The task slot that owns ``query_id``."""
        col = self.column_of(query_id)
        for slot in self._slots:  # type: ignore[attr-defined]
            if slot.start <= col < slot.stop:
                return slot
        raise AssertionError("column outside every task span")  # unreachable

    def cluster_span(self, cluster_index: int) -> tuple[int, int]:
        cols = [
            (s.start, s.stop)
            for s in self._slots  # type: ignore[attr-defined]
            if s.cluster_index == cluster_index
        ]
        return cols[0][0], cols[-1][1]


def _validate(
    version: Any, clusters: tuple[ClusterSpec, ...]
) -> tuple[tuple[TaskSlot, ...], tuple[ResolvedRoute, ...], dict[str, int]]:
    if not isinstance(version, int) or isinstance(version, bool):
        raise SchemaError(f"version must be an integer, got {version!r}")
    if not clusters:
        raise SchemaError("schema has no clusters")

    errors: list[str] = []
    column_index: dict[str, int] = {}
    slots: list[TaskSlot] = []
    task_locations: dict[str, tuple[int, bool]] = {}  # name -> (cluster idx, routed)
    col = 0

    for ci, cluster in enumerate(clusters):
        where = f"clusters[{ci}] ({cluster.name!r})"
        if not cluster.name:
            errors.append(f"clusters[{ci}]: empty cluster name")
        if not cluster.tasks:
            errors.append(f"{where}: cluster has no tasks")
        for ti, task in enumerate(cluster.tasks):
            twhere = f"{where}.tasks[{ti}] ({task.name!r})"
            if not task.name:
                errors.append(f"{where}.tasks[{ti}]: empty task name")
            if task.name in task_locations:
                errors.append(f"{twhere}: duplicate task name")
            task_locations[task.name] = (ci, cluster.is_routed)
            if task.n_queries < 2:
                errors.append(
                    f"{twhere}: task needs at least 2 queries, has {task.n_queries}"
                )
            seen_in_task: set[str] = set()
            for qi, query in enumerate(task.queries):
                qwhere = f"{twhere}.queries[{qi}]"
                if not query.id:
                    errors.append(f"{qwhere}: empty query id")
                if not query.text:
                    errors.append(f"{qwhere} ({query.id!r}): empty query text")
                if query.id in seen_in_task:
                    errors.append(f"{qwhere}: duplicate query id {query.id!r} in task")
                seen_in_task.add(query.id)
                if query.id in column_index:
                    errors.append(f"{qwhere}: query id {query.id!r} already used")
                else:
                    column_index[query.id] = col
                col += 1
            if task.n_queries == 2:
                n_primary = sum(q.report_primary for q in task.queries)
                if n_primary != 1:
                    errors.append(
                        f"{twhere}: 2-query task must mark exactly one query "
                        f"report_primary, found {n_primary}"
                    )
            slots.append(
                TaskSlot(ci, cluster.name, cluster.is_routed, task,
                         col - task.n_queries, col)
            )

    if not any(not c.is_routed for c in clusters):
        errors.append("schema has no unconditional cluster")

    routes: list[ResolvedRoute] = []
    seen_triggers: set[str] = set()
    for ci, cluster in enumerate(clusters):
        if cluster.route is None:
            continue
        where = f"clusters[{ci}] ({cluster.name!r}).route"
        rule = cluster.route
        loc = task_locations.get(rule.source_task)
        if loc is None:
            errors.append(f"{where}: unknown source task {rule.source_task!r}")
            continue
        src_ci, src_routed = loc
        if src_routed:
            errors.append(
                f"{where}: source task {rule.source_task!r} belongs to a routed "
                "cluster; gating tasks must live in an unconditional cluster"
            )
            continue
        src_slot = next(
            s for s in slots if s.cluster_index == src_ci and s.task.name == rule.source_task
        )
        if rule.trigger_query not in (q.id for q in src_slot.task.queries):
            errors.append(
                f"{where}: trigger query {rule.trigger_query!r} is not a query "
                f"of task {rule.source_task!r}"
            )
            continue
        if rule.trigger_query in seen_triggers:
            errors.append(
                f"{where}: trigger query {rule.trigger_query!r} already used by "
                "another routed cluster"
            )
        seen_triggers.add(rule.trigger_query)
        routes.append(
            ResolvedRoute(
                cluster_index=ci,
                cluster_name=cluster.name,
                trigger_column=column_index[rule.trigger_query],
                source_start=src_slot.start,
                source_stop=src_slot.stop,
            )
        )

    if errors:
        raise SchemaError(
            "invalid schema:\n  " + "\n  ".join(errors)
        )
    return tuple(slots), tuple(routes), column_index


# ---------------------------------------------------------------------------
# Document parsing / serialization
#
# The on-disk format is JSON with top-level fields `version` and `clusters`;
# each cluster is {name, route?: {task, query}, tasks: [{name, queries:
# [{id, text, report_primary?}]}]}. Unknown keys are rejected so that typos
# fail loudly instead of silently dropping configuration.
# ---------------------------------------------------------------------------


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")


def _parse_query(obj: Any, where: str) -> QuerySpec:
    _require_keys(obj, {"id", "text", "report_primary"}, {"id", "text"}, where)
    rp = obj.get("report_primary", False)
    if not isinstance(rp, bool):
        raise SchemaError(f"{where}.report_primary: expected a boolean, got {rp!r}")
    if not isinstance(obj["id"], str) or not isinstance(obj["text"], str):
        raise SchemaError(f"{where}: id and text must be strings")
    return QuerySpec(id=obj["id"], text=obj["text"], report_primary=rp)


def _parse_task(obj: Any, where: str) -> TaskSpec:
    _require_keys(obj, {"name", "queries"}, {"name", "queries"}, where)
    queries = obj["queries"]
    if not isinstance(queries, list):
        raise SchemaError(f"{where}.queries: expected a list")
    return TaskSpec(
        name=obj["name"],
        queries=tuple(
            _parse_query(q, f"{where}.queries[{i}]") for i, q in enumerate(queries)
        ),
    )


def _parse_cluster(obj: Any, where: str) -> ClusterSpec:
    _require_keys(obj, {"name", "route", "tasks"}, {"name", "tasks"}, where)
    route = None
    if "route" in obj and obj["route"] is not None:
        robj = obj["route"]
        _require_keys(robj, {"task", "query"}, {"task", "query"}, f"{where}.route")
        route = RoutingRule(source_task=robj["task"], trigger_query=robj["query"])
    tasks = obj["tasks"]
    if not isinstance(tasks, list):
        raise SchemaError(f"{where}.tasks: expected a list")
    return ClusterSpec(
        name=obj["name"],
        tasks=tuple(_parse_task(t, f"{where}.tasks[{i}]") for i, t in enumerate(tasks)),
        route=route,
    )


def parse_schema(source: str) -> TaskSchema:
    """Parse and validate a schema document (JSON text).

    Raises :class:`SchemaError` with the offending location for malformed
    documents, duplicate ids, dangling or cyclic routing references, and
    tasks with fewer than two queries.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed schema document: {exc}") from exc
    _require_keys(doc, {"version", "clusters"}, {"version", "clusters"}, "document")
    if not isinstance(doc["clusters"], list):
        raise SchemaError("document.clusters: expected a list")
    clusters = tuple(
        _parse_cluster(c, f"clusters[{i}]") for i, c in enumerate(doc["clusters"])
    )
    return TaskSchema(version=doc["version"], clusters=clusters)


def serialize_schema(schema: TaskSchema) -> str:
    """Canonical JSON serialization; ``parse_schema`` round-trips it."""
    doc: dict[str, Any] = {"version": schema.version, "clusters": []}
    for cluster in schema.clusters:
        cobj: dict[str, Any] = {"name": cluster.name}
        if cluster.route is not None:
            cobj["route"] = {
                "task": cluster.route.source_task,
                "query": cluster.route.trigger_query,
            }
        cobj["tasks"] = [
            {
                "name": task.name,
                "queries": [
                    {"id": q.id, "text": q.text}
                    | ({"report_primary": True} if q.report_primary else {})
                    for q in task.queries
                ],
            }
            for task in cluster.tasks
        ]
        doc["clusters"].append(cobj)
    return json.dumps(doc, indent=2) + "\n"


def load_schema(path) -> TaskSchema:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schema(fh.read())


def _q(qid: str, text: str, primary: bool = False) -> QuerySpec:
    return QuerySpec(id=qid, text=text, report_primary=primary)


_BUILTIN = TaskSchema(
    version=1,
    clusters=(
        ClusterSpec(
            name="general visual features",
            tasks=(
                TaskSpec(
                    name="content",
                    queries=(
                        _q("content.person", "An image of one person"),
                        _q("content.people", "An image of people"),
                        _q("content.animal", "An image of an animal"),
                        _q("content.object", "An image of an object"),
                        _q("content.text", "An image of text"),
                    ),
                ),
                TaskSpec(
                    name="brightness",
                    queries=(
                        _q("brightness.dark", "A dark photo", primary=True),
                        _q("brightness.bright", "A bright photo"),
                    ),
                ),
                TaskSpec(
                    name="sentiment",
                    queries=(
                        _q("sentiment.negative", "An image of negative feeling", primary=True),
                        _q("sentiment.positive", "An image of positive feeling"),
                    ),
                ),
            ),
        ),
        ClusterSpec(
            name="person characterization",
            route=RoutingRule(source_task="content", trigger_query="content.person"),
            tasks=(
                TaskSpec(
                    name="photographer_person",
                    queries=(
                        _q("photographer_person.selfie", "The photo is a selfie", primary=True),
                        _q("photographer_person.other", "The photo was taken by someone else"),
                    ),
                ),
                TaskSpec(
                    name="emotion_person",
                    queries=(
                        _q("emotion_person.sad", "A photo of a sad person", primary=True),
                        _q("emotion_person.happy", "A photo of a happy person"),
                    ),
                ),
                TaskSpec(
                    name="development",
                    queries=(
                        _q("development.child", "A photo of a child"),
                        _q("development.adult", "A photo of an adult"),
                        _q("development.elderly", "A photo of an old person"),
                    ),
                ),
            ),
        ),
        ClusterSpec(
            name="people characterization",
            route=RoutingRule(source_task="content", trigger_query="content.people"),
            tasks=(
                TaskSpec(
                    name="photographer_people",
                    queries=(
                        _q("photographer_people.selfie", "The photo is a selfie", primary=True),
                        _q("photographer_people.other", "The photo was taken by someone else"),
                    ),
                ),
                TaskSpec(
                    name="emotion_people",
                    queries=(
                        _q("emotion_people.happy", "A photo of happy people"),
                        _q("emotion_people.sad", "A photo of sad people", primary=True),
                    ),
                ),
                TaskSpec(
                    name="relationship",
                    queries=(
                        _q("relationship.family", "A photo of a family"),
                        _q("relationship.friends", "A photo of friends"),
                        _q("relationship.colleagues", "A photo of colleagues"),
                        _q("relationship.couple", "A photo of couple"),
                    ),
                ),
            ),
        ),
    ),
)


def default_schema() -> TaskSchema:
    """The built-in 24-query schema (3 clusters, 9 tasks).

    Cluster layout is 5+2+2 | 2+2+3 | 2+2+4 queries; the person and people
    clusters are routed on the "content" task. The canonical serialized form
    ships with the package as ``data/builtin_schema.json``.
    """
    return _BUILTIN


def builtin_schema_json() -> str:
    """The canonical serialized form of the built-in schema."""
    return resources.files("visrisk").joinpath("data/builtin_schema.json").read_text(
        encoding="utf-8"
    )
