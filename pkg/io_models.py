"""
JSON documents for instances, schedules and spiders.

Pydantic models validate the wire shape (unknown keys rejected, integers only);
domain invariants are checked by the model classes they convert into.
"""

from typing import Dict, List

from pydantic import BaseModel, ConfigDict, Field, StrictInt, ValidationError, field_validator

from model import (
    DocumentError,
    Instance,
    Job,
    Schedule,
    Spider,
)


class JobDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: StrictInt
    p: StrictInt
    w: StrictInt
    d: StrictInt


class InstanceDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    jobs: List[JobDocument]
    chains: List[List[StrictInt]]


class ScheduleDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    order: List[StrictInt]
    penalty: StrictInt
    late: List[StrictInt]
    completions: Dict[str, StrictInt]

    @field_validator("completions")
    @classmethod
    def validate_completion_keys(cls, v):
        for key in v:
            try:
                int(key)
            except ValueError:
                raise ValueError(f"completion key {key!r} is not a job id")
        return v


class SpiderDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center: StrictInt
    legs: List[List[StrictInt]] = Field(..., description="Vertex paths, leaf first")
    theta: Dict[str, StrictInt]


def _load(model_cls, data):
    try:
        return model_cls.model_validate_json(data)
    except ValidationError as e:
        raise DocumentError(f"invalid {model_cls.__name__}: {e}") from e


def parse_instance(data: bytes) -> Instance:
    doc = _load(InstanceDocument, data)
    jobs = tuple(Job(j.id, j.p, j.w, j.d) for j in doc.jobs)
    return Instance(jobs=jobs, chains=tuple(tuple(c) for c in doc.chains))


def instance_document(instance: Instance) -> InstanceDocument:
    return InstanceDocument(
        jobs=[JobDocument(id=j.id, p=j.p, w=j.w, d=j.d) for j in instance.jobs],
        chains=[list(c) for c in instance.chains],
    )


def serialize_instance(instance: Instance) -> bytes:
    return instance_document(instance).model_dump_json().encode("utf-8")


def schedule_document(schedule: Schedule) -> ScheduleDocument:
    return ScheduleDocument(
        order=list(schedule.order),
        penalty=schedule.penalty,
        late=sorted(schedule.late),
        completions={str(j): schedule.completions[j] for j in schedule.order},
    )


def serialize_schedule(schedule: Schedule) -> bytes:
    return schedule_document(schedule).model_dump_json().encode("utf-8")


def parse_schedule(data: bytes) -> ScheduleDocument:
    """Parse a schedule document; the claimed values are checked by the verifier"""
    return _load(ScheduleDocument, data)


def parse_spider(data: bytes) -> Spider:
    doc = _load(SpiderDocument, data)
    try:
        thresholds = {int(v): t for v, t in doc.theta.items()}
    except ValueError as e:
        raise DocumentError(f"invalid SpiderDocument: {e}") from e
    return Spider(center=doc.center, legs=tuple(tuple(l) for l in doc.legs), thresholds=thresholds)


def serialize_spider(spider: Spider) -> bytes:
    doc = SpiderDocument(
        center=spider.center,
        legs=[list(l) for l in spider.legs],
        theta={str(v): spider.thresholds[v] for v in spider.vertices()},
    )
    return doc.model_dump_json().encode("utf-8")
