"""Reader for the pipeline's schema file format.

The exporter needs only the query ids and their texts, in document order.
The format is the pipeline's published JSON schema document: top-level
``version`` and ``clusters``, each cluster holding ``tasks`` with
``queries`` of ``{id, text, report_primary?}``. Routing information is
irrelevant here and ignored.
"""

from __future__ import annotations

import json


class SchemaFileError(ValueError):
    pass


def read_queries(path) -> list[tuple[str, str]]:
    """(query id, query text) pairs in depth-first document order."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaFileError(f"{path}: not valid JSON ({exc})") from exc
    try:
        clusters = doc["clusters"]
    except (KeyError, TypeError):
        raise SchemaFileError(f"{path}: missing top-level 'clusters'") from None

    queries: list[tuple[str, str]] = []
    seen: set[str] = set()
    for ci, cluster in enumerate(clusters):
        for ti, task in enumerate(cluster.get("tasks", [])):
            for qi, query in enumerate(task.get("queries", [])):
                where = f"{path}: clusters[{ci}].tasks[{ti}].queries[{qi}]"
                qid, text = query.get("id"), query.get("text")
                if not qid or not text:
                    raise SchemaFileError(f"{where}: needs non-empty id and text")
                if qid in seen:
                    raise SchemaFileError(f"{where}: duplicate query id {qid!r}")
                seen.add(qid)
                queries.append((qid, text))
    if not queries:
        raise SchemaFileError(f"{path}: no queries found")
    return queries
