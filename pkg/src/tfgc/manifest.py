"""Generation-scenario taxonomy, manifest records, and split reporting.

A manifest is JSON Lines with exactly one record per line and exactly the
fields ``clip_id``, ``scenario_id``, ``source_video_id``,
``source_audio_id``, ``split``.  Scenario 0 means a pristine real clip;
ids 1 through 11 are the generated-video scenarios.

Each generation scenario fixes which reference inputs the generator saw
and whether each came from the same source video as the identity image
(``same_source``), a different one (``cross_source``), or was absent
(``empty``), plus whether the driving audio is genuine.  Slot states for
the nine referenced scenarios follow this toolkit's canonical reading of
the taxonomy, which upstream defines only diagrammatically; the golden
fixture under tests/ pins that reading.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import DataError, SchemaError

SLOT_NAMES = ("image", "audio", "pose", "eye", "expression", "upper_face")
SLOT_STATES = ("same_source", "cross_source", "empty")
SPLITS = ("train", "test")

_SAME = "same_source"
_CROSS = "cross_source"
_EMPTY = "empty"


@dataclass(frozen=True)
class ScenarioDescriptor:
    """One generation scenario: reference-slot states plus audio authenticity."""

    scenario_id: int
    generator_family: str  # lip_only | pose_referenced | expression_referenced
    slots: dict
    audio_authentic: bool


def _slots(**states: str) -> dict:
    table = {name: _EMPTY for name in SLOT_NAMES}
    table.update(states)
    for name, state in table.items():
        assert name in SLOT_NAMES and state in SLOT_STATES
    return table


def enumerate_scenarios() -> list[ScenarioDescriptor]:
    """Return the 11 generation scenarios in id order.

    Ids 1-2 are the two fundamental audio-driven scenarios (identity image
    plus driving audio only), differing only in audio authenticity.  Ids
    3-7 add pose and eye references, ids 8-11 add expression and
    upper-face references, each family sweeping same-source references,
    cross-source audio, forged audio, and fully cross-source inputs.
    """
    pose = dict(pose=_SAME, eye=_SAME)
    pose_x = dict(pose=_CROSS, eye=_CROSS)
    expr = dict(expression=_SAME, upper_face=_SAME)
    expr_x = dict(expression=_CROSS, upper_face=_CROSS)
    return [
        ScenarioDescriptor(1, "lip_only", _slots(image=_SAME, audio=_CROSS), True),
        ScenarioDescriptor(2, "lip_only", _slots(image=_SAME, audio=_CROSS), False),
        ScenarioDescriptor(3, "pose_referenced", _slots(image=_SAME, audio=_SAME, **pose), True),
        ScenarioDescriptor(4, "pose_referenced", _slots(image=_SAME, audio=_CROSS, **pose), True),
        ScenarioDescriptor(5, "pose_referenced", _slots(image=_SAME, audio=_CROSS, **pose), False),
        ScenarioDescriptor(6, "pose_referenced", _slots(image=_SAME, audio=_CROSS, **pose_x), True),
        ScenarioDescriptor(7, "pose_referenced", _slots(image=_SAME, audio=_CROSS, **pose_x), False),
        ScenarioDescriptor(8, "expression_referenced", _slots(image=_SAME, audio=_SAME, **expr), True),
        ScenarioDescriptor(9, "expression_referenced", _slots(image=_SAME, audio=_CROSS, **expr), True),
        ScenarioDescriptor(10, "expression_referenced", _slots(image=_SAME, audio=_CROSS, **expr), False),
        ScenarioDescriptor(11, "expression_referenced", _slots(image=_SAME, audio=_CROSS, **expr_x), True),
    ]


_DESCRIPTOR_INDEX = {d.scenario_id: d for d in enumerate_scenarios()}


@dataclass
class ScenarioRecord:
    """One manifest entry binding a clip to its sources and scenario."""

    clip_id: str
    scenario_id: int
    source_video_id: str
    source_audio_id: str
    split: str


def validate_record(record: ScenarioRecord) -> None:
    """Raise :class:`SchemaError` unless the record is well-formed."""
    if not isinstance(record.scenario_id, int) or not 0 <= record.scenario_id <= 11:
        raise SchemaError(
            f"{record.clip_id}: scenario_id must be 0..11, got {record.scenario_id!r}"
        )
    if record.split not in SPLITS:
        raise SchemaError(f"{record.clip_id}: split must be train or test, got {record.split!r}")
    for name in ("clip_id", "source_video_id", "source_audio_id"):
        if not getattr(record, name):
            raise SchemaError(f"{record.clip_id or '<record>'}: missing field {name}")
    if record.scenario_id == 0 and record.source_audio_id != record.source_video_id:
        raise SchemaError(
            f"{record.clip_id}: pristine records must carry the source video's own audio"
        )


def derive_labels(record: ScenarioRecord) -> tuple[str, str]:
    """Return (video_label, audio_label) for a validated record."""
    validate_record(record)
    if record.scenario_id == 0:
        return ("real", "real")
    descriptor = _DESCRIPTOR_INDEX.get(record.scenario_id)
    if descriptor is None:
        raise SchemaError(f"unknown scenario_id {record.scenario_id}")
    return ("fake", "real" if descriptor.audio_authentic else "fake")


@dataclass
class DistributionReport:
    """Counts over a manifest: per scenario, per split, and by authenticity."""

    total: int
    per_scenario: dict = field(default_factory=dict)  # id -> {train, test}
    per_split: dict = field(default_factory=dict)     # split -> count
    totals: dict = field(default_factory=dict)        # {"real": n, "fake": n}

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_scenario": {str(k): v for k, v in sorted(self.per_scenario.items())},
            "per_split": dict(self.per_split),
            "totals": dict(self.totals),
        }


def split_report(records: list[ScenarioRecord]) -> DistributionReport:
    """Tally a manifest by scenario, split, and video authenticity."""
    if not records:
        raise DataError("cannot report on an empty manifest")
    per_scenario: dict = {}
    per_split = {s: 0 for s in SPLITS}
    totals = {"real": 0, "fake": 0}
    for record in records:
        video_label, _ = derive_labels(record)
        row = per_scenario.setdefault(record.scenario_id, {s: 0 for s in SPLITS})
        row[record.split] += 1
        per_split[record.split] += 1
        totals[video_label] += 1
    return DistributionReport(
        total=len(records),
        per_scenario=per_scenario,
        per_split=per_split,
        totals=totals,
    )


# ---------------------------------------------------------------------------
# JSONL round trip

_FIELDS = ("clip_id", "scenario_id", "source_video_id", "source_audio_id", "split")


def read_manifest(path: str | Path) -> list[ScenarioRecord]:
    """Parse a JSONL manifest, validating every record."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [f for f in _FIELDS if f not in raw]
            if missing:
                raise SchemaError(f"{path}:{lineno}: missing fields {missing}")
            record = ScenarioRecord(**{f: raw[f] for f in _FIELDS})
            validate_record(record)
            records.append(record)
    return records


def write_manifest(records: list[ScenarioRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps({f: getattr(record, f) for f in _FIELDS}) + "\n")


def descriptors_as_json() -> list[dict]:
    """Serializable form of the scenario table, used by the golden test."""
    return [asdict(d) for d in enumerate_scenarios()]
