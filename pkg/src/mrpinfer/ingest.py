"""Survey CSV parsing, filtering/recoding rules, and the train/holdout split.

Filtering (applied in this order, one count per rule): non-citizens, people
living abroad, underage respondents, uncorrectable legacy age bands, rows
joined after the cutoff timestamp, rows missing any covariate.  Correctable
legacy values are recoded ("18-25" -> "18-30", "more than 70" -> "60+");
settlement types map onto the rural/urban area factor.

The merge mirrors the production recipe: the messenger sample is split
50/50 uniformly at random into a training half and a holdout; the street
sample is upsampled uniformly with replacement to half the messenger size
and merged into the training set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, IngestError
from .rng import substream
from .schema import CategoricalSchema

CANDIDATE_EVENTS = (
    "lukashenka",
    "tsikhanouskaya",
    "dmitriyeu",
    "cherachen",
    "kanapatskaya",
    "against_all",
)
EVENTS = CANDIDATE_EVENTS + ("early_voting",)

SOURCES = ("viber", "street")
FIELDS = (
    "citizen",
    "age",
    "settlement",
    "region",
    "candidate",
    "gender",
    "education",
    "income",
    "vote_when",
    "joined_at",
)
REQUIRED_FIELDS = ("age", "settlement", "region", "candidate", "gender", "education")

REJECT_RULES = (
    "non_citizen",
    "abroad",
    "underage",
    "legacy_age",
    "post_cutoff",
    "missing_covariate",
)

DEFAULT_CUTOFF = datetime(2020, 8, 6, 19, 12, tzinfo=timezone.utc)

_ABROAD = "i live outside the republic of belarus"

# Questionnaire answer text -> canonical level/token (lowercased comparison).
AGE_MAP = {
    "18-30": "18-30",
    "31-40": "31-40",
    "41-50": "41-50",
    "51-60": "51-60",
    "60+": "60+",
    "more than 60": "60+",
    "18-25": "18-30",  # legacy band, correctable
    "more than 70": "60+",  # legacy band, correctable
}
AGE_UNDERAGE = ("under 18",)
AGE_LEGACY_DROP = ("26-40", "41-55", "55-70")

SETTLEMENT_MAP = {
    "regional center / minsk": "urban",
    "city or urban village": "urban",
    "agro-town / village": "rural",
    "urban": "urban",
    "rural": "rural",
}

REGION_MAP = {
    "brest": "brest",
    "brest region": "brest",
    "vitsebsk": "vitsebsk",
    "vitsebsk region": "vitsebsk",
    "homel": "homel",
    "homel region": "homel",
    "hrodna": "hrodna",
    "hrodna region": "hrodna",
    "minsk region": "minsk_region",
    "minsk_region": "minsk_region",
    "minsk city": "minsk_city",
    "minsk_city": "minsk_city",
    "minsk": "minsk_city",  # question wording: city dwellers answer "Minsk"
    "mahiliou": "mahiliou",
    "mahiliou region": "mahiliou",
}

CANDIDATE_MAP = {
    "dmitriyeu": "dmitriyeu",
    "kanapatskaya": "kanapatskaya",
    "lukashenka": "lukashenka",
    "tsikhanouskaya": "tsikhanouskaya",
    "cherachen": "cherachen",
    "against all": "against_all",
    "against_all": "against_all",
    "difficult to answer": "undecided",
    "undecided": "undecided",
    "i will not go to vote": "wont_vote",
    "wont_vote": "wont_vote",
}

GENDER_MAP = {"male": "male", "female": "female"}

EDUCATION_MAP = {
    "primary or secondary school": "primary_or_secondary",
    "primary_or_secondary": "primary_or_secondary",
    "professional technical institution": "professional_technical",
    "professional_technical": "professional_technical",
    "professional college": "professional_college",
    "professional_college": "professional_college",
    "higher education": "higher",
    "higher": "higher",
    "other (elementary school or uneducated)": "none_or_elementary",
    "elementary school or uneducated": "none_or_elementary",
    "none_or_elementary": "none_or_elementary",
}

VOTE_WHEN_MAP = {
    "early (from 4 to 8 of august)": "early",
    "early": "early",
    "on the main voting day (august 9)": "main_day",
    "on the main voting day": "main_day",
    "main_day": "main_day",
    "i will not go to vote": "wont_vote",
    "wont_vote": "wont_vote",
}


@dataclass(frozen=True)
class SurveyRecord:
    """One cleaned respondent row."""

    levels: Mapping[str, str]  # factor -> level, all validated against the schema
    candidate: str  # one of CANDIDATE_EVENTS or undecided | wont_vote | missing
    vote_when: str  # early | main_day | wont_vote | missing
    source: str  # viber | street
    extras: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise IngestError(f"unknown source tag {self.source!r}")


@dataclass(frozen=True)
class Dataset:
    records: tuple[SurveyRecord, ...]
    role: str  # train | holdout
    provenance: Mapping[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class RejectionReport:
    total: int = 0
    kept: int = 0
    counts: dict[str, int] = field(default_factory=dict)

    def reject(self, rule: str):
        if rule not in REJECT_RULES:
            raise IngestError(f"unknown rejection rule {rule!r}")
        self.counts[rule] = self.counts.get(rule, 0) + 1

    def to_frame(self) -> pd.DataFrame:
        rows = [{"rule": r, "count": self.counts.get(r, 0)} for r in REJECT_RULES]
        rows.append({"rule": "kept", "count": self.kept})
        return pd.DataFrame(rows)


def parse_column_map(text: str) -> dict[str, str]:
    """Column-mapping config: one `csv column -> field` per line."""
    mapping = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col, sep, fieldname = line.partition("->")
        if not sep:
            raise ConfigError(f"bad column-map line {raw!r}")
        col, fieldname = col.strip(), fieldname.strip()
        if fieldname not in FIELDS:
            raise ConfigError(f"unknown field {fieldname!r} in column map")
        mapping[col] = fieldname
    return mapping


def load_column_map(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_column_map(fh.read())


def _norm(value) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    return " ".join(str(value).strip().lower().split())


def _parse_timestamp(raw: str) -> datetime | None:
    if not raw:
        return None
    try:
        ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError:
        return None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def parse_survey_csv(
    path,
    source: str,
    schema: CategoricalSchema,
    *,
    column_map: Mapping[str, str] | None = None,
    cutoff: datetime | None = DEFAULT_CUTOFF,
) -> tuple[list[SurveyRecord], RejectionReport]:
    """Parse one survey CSV into validated records plus a rejection report.

    ``column_map`` maps CSV column names onto the canonical fields; columns
    already named canonically need no entry.  The cutoff applies to the
    messenger source only and needs a ``joined_at`` column to act on.
    """
    if source not in SOURCES:
        raise IngestError(f"unknown source tag {source!r}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except Exception as exc:
        raise IngestError(f"cannot read survey file {path}: {exc}") from exc
    column_map = dict(column_map or {})
    for col in column_map:
        if col not in df.columns:
            raise IngestError(f"column map names unknown column {col!r}")
    fields_present = {}
    for col in df.columns:
        fieldname = column_map.get(col, col if col in FIELDS else None)
        if fieldname is not None:
            fields_present[fieldname] = col
    missing = [f for f in REQUIRED_FIELDS if f not in fields_present]
    if missing:
        raise IngestError(f"survey file lacks required columns for fields {missing}")

    report = RejectionReport(total=len(df))
    records: list[SurveyRecord] = []
    for tup in df.itertuples(index=False):
        row = dict(zip(df.columns, tup))
        get = lambda f: _norm(row.get(fields_present.get(f, ""), ""))

        if "citizen" in fields_present and get("citizen") == "no":
            report.reject("non_citizen")
            continue
        settlement = get("settlement")
        region = get("region")
        if settlement == _ABROAD or region == _ABROAD:
            report.reject("abroad")
            continue
        age_raw = get("age")
        if age_raw in AGE_UNDERAGE:
            report.reject("underage")
            continue
        if age_raw in AGE_LEGACY_DROP:
            report.reject("legacy_age")
            continue
        if source == "viber" and cutoff is not None and "joined_at" in fields_present:
            ts = _parse_timestamp(get("joined_at"))
            if ts is not None and ts > cutoff:
                report.reject("post_cutoff")
                continue
        levels = {
            "age": AGE_MAP.get(age_raw, ""),
            "area": SETTLEMENT_MAP.get(settlement, ""),
            "region": REGION_MAP.get(region, ""),
            "gender": GENDER_MAP.get(get("gender"), ""),
            "education": EDUCATION_MAP.get(get("education"), ""),
        }
        # Unmapped values on a custom schema may still be literal level names.
        for factor in schema.factor_names:
            if factor not in levels or not levels[factor]:
                raw = get(factor) if factor in fields_present else ""
                levels[factor] = raw
        ok = True
        clean = {}
        for factor in schema.factor_names:
            lvl = levels.get(factor, "")
            if lvl not in schema.factor(factor).levels:
                ok = False
                break
            clean[factor] = lvl
        if not ok:
            report.reject("missing_covariate")
            continue
        extras = {}
        if "income" in fields_present:
            extras["income"] = get("income")
        records.append(
            SurveyRecord(
                levels=clean,
                candidate=CANDIDATE_MAP.get(get("candidate"), "missing"),
                vote_when=VOTE_WHEN_MAP.get(get("vote_when"), "missing"),
                source=source,
                extras=extras,
            )
        )
    report.kept = len(records)
    return records, report


def write_survey_csv(records: Iterable[SurveyRecord], path) -> None:
    """Emit records in the canonical survey CSV format the parser consumes."""
    rows = []
    for rec in records:
        rows.append(
            {
                "citizen": "yes",
                "age": rec.levels["age"],
                "settlement": rec.levels["area"],
                "region": rec.levels["region"],
                "candidate": rec.candidate if rec.candidate != "missing" else "",
                "gender": rec.levels["gender"],
                "education": rec.levels["education"],
                "income": rec.extras.get("income", ""),
                "vote_when": rec.vote_when if rec.vote_when != "missing" else "",
                "joined_at": "",
            }
        )
    pd.DataFrame(rows, columns=list(FIELDS)).to_csv(path, index=False)


def merge_and_split(
    viber: Sequence[SurveyRecord],
    street: Sequence[SurveyRecord],
    seed: int,
) -> tuple[Dataset, Dataset]:
    """Split the messenger sample 50/50 and merge with the upsampled street sample.

    Odd messenger counts put the extra row into the training half.  The
    street sample is resampled uniformly with replacement to exactly
    floor(|viber| / 2) rows.  Deterministic given the seed.
    """
    if not viber or not street:
        raise IngestError("both survey samples must be nonempty")
    rng = substream(seed, "ingest", "split")
    perm = rng.permutation(len(viber))
    n_train = (len(viber) + 1) // 2
    train_v = [viber[i] for i in perm[:n_train]]
    holdout_v = [viber[i] for i in perm[n_train:]]
    target = len(viber) // 2
    picks = rng.integers(0, len(street), size=target)
    street_up = [street[i] for i in picks]
    train = Dataset(
        records=tuple(train_v + street_up),
        role="train",
        provenance={
            "viber_rows": n_train,
            "street_rows": target,
            "street_unique": len(street),
        },
    )
    holdout = Dataset(
        records=tuple(holdout_v),
        role="holdout",
        provenance={"viber_rows": len(holdout_v)},
    )
    return train, holdout


def response_vector(
    dataset: Dataset,
    event: str,
    schema: CategoricalSchema,
    *,
    inclusion: str = "shared",
) -> tuple[np.ndarray, np.ndarray]:
    """Binary response and cell id per retained row for one marginal event.

    ``inclusion="shared"`` retains rows with a decided candidate choice and a
    definite early/main-day answer, so every event shares one row set (and
    one M).  ``inclusion="per_event"`` instead retains, per event, every row
    that answered that event's question.
    """
    if event not in EVENTS:
        raise IngestError(f"unknown event {event!r} (expected one of {EVENTS})")
    if inclusion not in ("shared", "per_event"):
        raise IngestError(f"unknown inclusion rule {inclusion!r}")
    ys = []
    cids = []
    for rec in dataset.records:
        decided = rec.candidate in CANDIDATE_EVENTS
        voting = rec.vote_when in ("early", "main_day")
        if inclusion == "shared":
            keep = decided and voting
        elif event == "early_voting":
            keep = voting
        else:
            keep = decided
        if not keep:
            continue
        if event == "early_voting":
            y = 1 if rec.vote_when == "early" else 0
        else:
            y = 1 if rec.candidate == event else 0
        ys.append(y)
        cids.append(schema.cell_id(rec.levels))
    return np.array(ys, dtype=np.int8), np.array(cids, dtype=np.int64)
