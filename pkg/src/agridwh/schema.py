"""Constellation schema for the agricultural warehouse.

Three fact tables (FieldFact, Order, Sale) share a pool of 19 dimension
tables.  Three of those dimensions (CropState, Inspection, Site) hang off
other dimensions instead of a fact.  The column lists of every dimension are
kept verbatim, spelling included ("SeasontSart", "ConfirmWindSPeed").
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

KINDS = ("int64", "float64", "text", "date", "bool")
NUMERIC_KINDS = ("int64", "float64")


class SchemaError(Exception):
    pass


class UnknownHierarchyError(SchemaError, KeyError):
    def __str__(self):
        return f"unknown hierarchy: {self.args[0]!r}"


@dataclass(frozen=True)
class ColumnDef:
    name: str
    kind: str
    nullable: bool = True


@dataclass(frozen=True)
class DimensionDef:
    name: str
    surrogate_key: str
    natural_key: tuple[str, ...]
    columns: tuple[ColumnDef, ...]
    supports: str | None = None
    # column -> dimension whose surrogate key it holds (snowflake links)
    links: tuple[tuple[str, str], ...] = ()

    def column(self, name: str) -> ColumnDef:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.name}.{name}")

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)


@dataclass(frozen=True)
class FactDef:
    name: str
    dimension_refs: tuple[str, ...]
    measures: tuple[ColumnDef, ...]


@dataclass(frozen=True)
class LevelDef:
    """One hierarchy level.

    ``derive`` turns the raw column value into a member: ``""`` uses the
    value as is, ``"month"``/``"year"`` truncate a date, ``"season"`` prefixes
    the Season text with the year of ``StartDate``.
    """

    name: str
    dimension: str
    column: str
    derive: str = ""


@dataclass(frozen=True)
class HierarchyDef:
    name: str
    levels: tuple[LevelDef, ...]


@dataclass(frozen=True)
class Violation:
    table: str
    column: str | None
    message: str

    def __str__(self):
        return self.message


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)

    def messages(self) -> list[str]:
        return [v.message for v in self.violations]


@dataclass(frozen=True)
class ConstellationSchema:
    facts: tuple[FactDef, ...]
    dimensions: tuple[DimensionDef, ...]
    hierarchies: tuple[HierarchyDef, ...]

    def dimension(self, name: str) -> DimensionDef:
        for d in self.dimensions:
            if d.name == name:
                return d
        raise SchemaError(f"unknown dimension: {name!r}")

    def fact(self, name: str) -> FactDef:
        for f in self.facts:
            if f.name == name:
                return f
        raise SchemaError(f"unknown fact: {name!r}")

    def hierarchy(self, name: str) -> HierarchyDef:
        for h in self.hierarchies:
            if h.name == name:
                return h
        raise UnknownHierarchyError(name)

    @property
    def table_names(self) -> list[str]:
        return [d.name for d in self.dimensions] + [f.name for f in self.facts]

    def fact_columns(self, fact: str) -> tuple[ColumnDef, ...]:
        """Warehouse column layout of a fact: one FK per dimension, then measures."""
        f = self.fact(fact)
        keys = tuple(ColumnDef(self.dimension(d).surrogate_key, "int64", False)
                     for d in f.dimension_refs)
        return keys + f.measures

    def table_columns(self, table: str) -> tuple[ColumnDef, ...]:
        if any(f.name == table for f in self.facts):
            return self.fact_columns(table)
        return self.dimension(table).columns

    def is_fact(self, table: str) -> bool:
        return any(f.name == table for f in self.facts)

    def dimension_order(self) -> list[str]:
        """Dimension names ordered so linked parents come before children."""
        done: list[str] = []
        pending = [d.name for d in self.dimensions]
        while pending:
            progressed = False
            for name in list(pending):
                parents = [p for _, p in self.dimension(name).links]
                if all(p in done for p in parents):
                    done.append(name)
                    pending.remove(name)
                    progressed = True
            if not progressed:
                raise SchemaError(f"cyclic dimension links among {pending}")
        return done

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        def col(c: ColumnDef):
            return {"name": c.name, "kind": c.kind, "nullable": c.nullable}

        return {
            "facts": [
                {"name": f.name, "dimension_refs": list(f.dimension_refs),
                 "measures": [col(m) for m in f.measures]}
                for f in self.facts
            ],
            "dimensions": [
                {"name": d.name, "surrogate_key": d.surrogate_key,
                 "natural_key": list(d.natural_key),
                 "columns": [col(c) for c in d.columns],
                 "supports": d.supports,
                 "links": [list(x) for x in d.links]}
                for d in self.dimensions
            ],
            "hierarchies": [
                {"name": h.name,
                 "levels": [{"name": lv.name, "dimension": lv.dimension,
                             "column": lv.column, "derive": lv.derive}
                            for lv in h.levels]}
                for h in self.hierarchies
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstellationSchema":
        def col(c):
            return ColumnDef(c["name"], c["kind"], c.get("nullable", True))

        return cls(
            facts=tuple(FactDef(f["name"], tuple(f["dimension_refs"]),
                                tuple(col(m) for m in f["measures"]))
                        for f in doc["facts"]),
            dimensions=tuple(DimensionDef(d["name"], d["surrogate_key"],
                                          tuple(d["natural_key"]),
                                          tuple(col(c) for c in d["columns"]),
                                          d.get("supports"),
                                          tuple(tuple(x) for x in d.get("links", ())))
                             for d in doc["dimensions"]),
            hierarchies=tuple(HierarchyDef(h["name"], tuple(LevelDef(**lv) for lv in h["levels"]))
                              for h in doc["hierarchies"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "ConstellationSchema":
        return cls.from_dict(json.loads(text))

    def data_dictionary(self) -> str:
        """Markdown data dictionary, one section per table."""
        out = ["# Data dictionary", ""]
        for f in self.facts:
            out += [f"## {f.name} (fact)", "",
                    "Dimensions: " + ", ".join(f.dimension_refs), "",
                    "| column | kind | nullable |", "|---|---|---|"]
            out += [f"| {c.name} | {c.kind} | {'yes' if c.nullable else 'no'} |"
                    for c in self.fact_columns(f.name)]
            out.append("")
        for d in self.dimensions:
            title = f"## {d.name} (dimension"
            title += f", supports {d.supports})" if d.supports else ")"
            out += [title, "",
                    f"Surrogate key: {d.surrogate_key}; natural key: {', '.join(d.natural_key)}", "",
                    "| column | kind | nullable |", "|---|---|---|"]
            out += [f"| {c.name} | {c.kind} | {'yes' if c.nullable else 'no'} |"
                    for c in d.columns]
            out.append("")
        for h in self.hierarchies:
            out += [f"## Hierarchy {h.name}", ""]
            out += [f"{i + 1}. {lv.name}: {lv.dimension}.{lv.column}"
                    + (f" ({lv.derive})" if lv.derive else "")
                    for i, lv in enumerate(h.levels)]
            out.append("")
        return "\n".join(out)


# ---------------------------------------------------------------------------
# default schema

def _cols(spec: str, keys: Iterable[str] = ()) -> tuple[ColumnDef, ...]:
    keys = set(keys)
    out = []
    for item in spec.split(","):
        name, kind = item.strip().split(":")
        out.append(ColumnDef(name, kind, nullable=name not in keys))
    return tuple(out)


def _dim(name, spec, natural_key, supports=None, links=()):
    sk = f"{name}ID"
    keys = {sk, *natural_key, *(c for c, _ in links)}
    return DimensionDef(name, sk, tuple(natural_key), _cols(spec, keys), supports, tuple(links))


_DIMENSIONS = (
    _dim("Business",
         "BusinessID:int64, Name:text, Address:text, Phone:text, Mobile:text, Email:text",
         ("Name", "Email")),
    _dim("Crop",
         "CropID:int64, CropName:text, VarietyID:int64, VarietyName:text, EstYield:float64, "
         "SeasontSart:date, SeasonEnd:date, BbchScale:int64, ScientificName:text, "
         "HarvestEquipment:text, EquipmentWeight:float64",
         ("CropName", "VarietyName")),
    _dim("CropState",
         "CropStateID:int64, CropID:int64, StageScale:text, Height:float64, MajorStage:int64, "
         "MinStage:int64, MaxStage:int64, Diameter:float64, MinHeight:float64, MaxHeight:float64, "
         "CropCoveragePercent:float64",
         ("CropID", "StageScale"), supports="Crop", links=(("CropID", "Crop"),)),
    _dim("Farmer",
         "FarmerID:int64, FarmerName:text, Address:text, Phone:text, Mobile:text, Email:text",
         ("FarmerName", "Email")),
    _dim("Fertiliser",
         "FertiliserID:int64, Name:text, Unit:text, Status:text, Description:text, GroupName:text",
         ("Name",)),
    _dim("Field",
         "FieldID:int64, FieldName:text, SiteID:int64, Reference:text, Block:text, Area:float64, "
         "AreaUnit:text, WorkingArea:float64, WorkingAreaUnit:text, FieldGPS:text, Notes:text",
         ("FieldName", "SiteID"), links=(("SiteID", "Site"),)),
    _dim("Inspection",
         "InspectionID:int64, CropID:int64, Description:text, ProblemType:text, Severity:int64, "
         "ProblemNotes:text, AreaValue:float64, AreaUnit:text, Order:int64, Date:date, Notes:text, "
         "GrowthStage:int64",
         ("CropID", "Date", "ProblemType"), supports="Crop", links=(("CropID", "Crop"),)),
    _dim("Nutrient",
         "NutrientID:int64, NutrientName:text, Date:date, Quantity:float64",
         ("NutrientName", "Date")),
    _dim("OperationTime",
         "OperationTimeID:int64, StartDate:date, EndDate:date, Season:text",
         ("StartDate", "EndDate")),
    _dim("Pest",
         "PestID:int64, CommonName:text, ScientificName:text, PestType:text, Description:text, "
         "Density:float64, MinStage:int64, MaxStage:int64, Coverage:float64, CoverageUnit:text",
         ("ScientificName",)),
    _dim("Plan",
         "PlanID:int64, PlanName:text, PlanNumber:text, RegistrationNo:text, ProductName:text, "
         "ProductRate:float64, Date:date, WaterVolume:float64",
         ("PlanName", "PlanNumber")),
    _dim("Product",
         "ProductID:int64, ProductName:text, GroupName:text",
         ("ProductName",)),
    _dim("Site",
         "SiteID:int64, FarmerID:int64, SiteName:text, Reference:text, Country:text, "
         "AddressName:text, AddressTown:text, PostalCode:text, GPS:text, Created:date, CreatedBy:text",
         ("SiteName", "FarmerID"), supports="Field", links=(("FarmerID", "Farmer"),)),
    _dim("Spray",
         "SprayID:int64, SprayProductName:text, ProductRate:float64, AppliedArea:float64, "
         "AppliedDate:date, WaterVolume:float64, VolumeUnit:text, ConfirmDuration:float64, "
         "ConfirmWindSPeed:float64, ConfirmDirection:text, ConfirmTemperature:float64, "
         "ConfirmHumidity:float64, ActivityType:text",
         ("SprayProductName", "AppliedDate")),
    _dim("Soil",
         "SoilID:int64, PH:float64, Phosphorus:float64, Potassium:float64, Magnesium:float64, "
         "Calcium:float64, CEC:float64, Silt:float64, Clay:float64, Sand:float64, "
         "TextureLabel:text, TestDate:date",
         ("TextureLabel", "TestDate")),
    _dim("Supplier",
         "SupplierID:int64, SupplierName:text, SupplierContactName:text, Address:text, "
         "ContactPhone:text, ContactMobile:text, ContactEmail:text",
         ("SupplierName",)),
    _dim("Task",
         "TaskID:int64, TaskDesc:text, TaskStatus:text, TaskDate:date, TaskInterval:int64, "
         "CompletedDate:date, AppCode:text",
         ("TaskDesc", "TaskDate")),
    _dim("Treatment",
         "TreatmentID:int64, TreatmentName:text, FormType:text, LotCode:text, Rate:float64, "
         "ApplCode:text, LevlNo:int64, Type:text, Description:text, ApplDesc:text, "
         "TreatmentComment:text",
         ("TreatmentName", "LotCode")),
    _dim("WeatherStation",
         "WeatherStationID:int64, StationName:text, MeasureDate:date, AirTemperature:float64, "
         "SoilTemperature:float64, StationReadingBatch:text",
         ("StationName", "MeasureDate")),
)

_FACTS = (
    FactDef("FieldFact",
            ("Crop", "Field", "Fertiliser", "Nutrient", "OperationTime", "Pest", "Plan",
             "Spray", "Soil", "Task", "Treatment", "WeatherStation"),
            _cols("appliedQuantity:float64, appliedCost:float64, areaTreated:float64, "
                  "yieldEstimate:float64, durationHours:float64, waterVolume:float64")),
    FactDef("Order",
            ("Farmer", "Supplier", "Product", "OperationTime"),
            _cols("quantityOrdered:int64, unitPrice:float64, totalCost:float64, "
                  "discount:float64, deliveryDays:int64, taxAmount:float64")),
    FactDef("Sale",
            ("Farmer", "Business", "Crop", "OperationTime"),
            _cols("quantitySold:int64, unitPrice:float64, revenue:float64, margin:float64, "
                  "discount:float64")),
)

_HIERARCHIES = (
    HierarchyDef("time", (
        LevelDef("day", "OperationTime", "StartDate"),
        LevelDef("month", "OperationTime", "StartDate", "month"),
        LevelDef("season", "OperationTime", "Season", "season"),
        LevelDef("year", "OperationTime", "StartDate", "year"),
    )),
    HierarchyDef("location", (
        LevelDef("field", "Field", "FieldID"),
        LevelDef("site", "Site", "SiteID"),
        LevelDef("farmer", "Farmer", "FarmerID"),
    )),
    HierarchyDef("crop", (
        LevelDef("variety", "Crop", "VarietyName"),
        LevelDef("crop", "Crop", "CropName"),
    )),
)

# per-fact shape fixed by the published counts: (dimension links, measures)
EXPECTED_FACT_SHAPE = {"FieldFact": (12, 6), "Order": (4, 6), "Sale": (4, 5)}
EXPECTED_SUPPORT_TABLES = frozenset({"CropState", "Inspection", "Site"})


def build_default_schema() -> ConstellationSchema:
    return ConstellationSchema(_FACTS, _DIMENSIONS, _HIERARCHIES)


def hierarchy_levels(schema: ConstellationSchema, hierarchy: str) -> list[LevelDef]:
    """Levels of ``hierarchy``, finest first."""
    return list(schema.hierarchy(hierarchy).levels)


def validate_schema(schema: ConstellationSchema) -> ValidationReport:
    report = ValidationReport()

    def bad(table, column, message):
        report.violations.append(Violation(table, column, message))

    if len(schema.facts) != 3:
        bad("*", None, f"fact count {len(schema.facts)} ≠ 3")
    if len(schema.dimensions) != 19:
        bad("*", None, f"dimension count {len(schema.dimensions)} ≠ 19")

    dims = {}
    for d in schema.dimensions:
        if d.name in dims:
            bad(d.name, None, f"duplicate dimension {d.name}")
        dims[d.name] = d

    for d in schema.dimensions:
        seen = set()
        for c in d.columns:
            if c.name in seen:
                bad(d.name, c.name, f"{d.name}.{c.name} duplicated")
            seen.add(c.name)
            if c.kind not in KINDS:
                bad(d.name, c.name, f"{d.name}.{c.name} has unknown kind {c.kind!r}")
        if d.surrogate_key not in seen:
            bad(d.name, d.surrogate_key, f"{d.name} surrogate key {d.surrogate_key} not a column")
        else:
            sk = d.column(d.surrogate_key)
            if sk.kind != "int64" or sk.nullable:
                bad(d.name, sk.name, f"{d.name}.{sk.name} key column must be non-nullable int64")
        if not d.natural_key:
            bad(d.name, None, f"{d.name} natural key is empty")
        if d.surrogate_key in d.natural_key:
            bad(d.name, d.surrogate_key, f"{d.name} natural key contains the surrogate key")
        for c in d.natural_key:
            if c not in seen:
                bad(d.name, c, f"{d.name} natural key column {c} not a column")
        for col, parent in d.links:
            if col not in seen:
                bad(d.name, col, f"{d.name} link column {col} not a column")
            else:
                lc = d.column(col)
                if lc.kind != "int64" or lc.nullable:
                    bad(d.name, col, f"{d.name}.{col} key column must be non-nullable int64")
            if parent not in dims:
                bad(d.name, col, f"{d.name}.{col} links to unknown dimension {parent}")

    referenced: dict[str, set[str]] = {}
    for f in schema.facts:
        shape = EXPECTED_FACT_SHAPE.get(f.name)
        if shape is not None:
            if len(f.dimension_refs) != shape[0]:
                bad(f.name, None, f"{f.name} dimension count {len(f.dimension_refs)} ≠ {shape[0]}")
            if len(f.measures) != shape[1]:
                bad(f.name, None, f"{f.name} measure count {len(f.measures)} ≠ {shape[1]}")
        else:
            bad(f.name, None, f"unexpected fact {f.name}")
        for ref in f.dimension_refs:
            if ref not in dims:
                bad(f.name, None, f"{f.name} references unknown dimension {ref}")
            referenced.setdefault(ref, set()).add(f.name)
        for m in f.measures:
            if m.kind not in NUMERIC_KINDS:
                bad(f.name, m.name, f"{f.name}.{m.name} measure is not numeric ({m.kind})")

    for d in schema.dimensions:
        if d.supports is not None:
            if d.supports not in dims:
                bad(d.name, None, f"{d.name} supports unknown dimension {d.supports}")
            if d.name in referenced:
                bad(d.name, None, f"support table {d.name} is referenced by a fact")

    unlinked = {d.name for d in schema.dimensions} - set(referenced)
    if unlinked != EXPECTED_SUPPORT_TABLES:
        bad("*", None, f"dimensions not linked to a fact {sorted(unlinked)} ≠ "
                       f"{sorted(EXPECTED_SUPPORT_TABLES)}")
    shared = {name for name, fs in referenced.items() if len(fs) >= 2}
    for must in ("Crop", "Farmer"):
        if must not in shared:
            bad(must, None, f"{must} is not shared by two or more facts")

    for h in schema.hierarchies:
        if not h.levels:
            bad(h.name, None, f"hierarchy {h.name} has no levels")
            continue
        for lv in h.levels:
            d = dims.get(lv.dimension)
            if d is None:
                bad(h.name, None, f"hierarchy {h.name} level {lv.name} uses unknown dimension {lv.dimension}")
            elif lv.column not in d.column_names:
                bad(h.name, lv.column,
                    f"hierarchy {h.name} level {lv.name}: {lv.dimension}.{lv.column} not a column")
            if lv.derive not in ("", "month", "year", "season"):
                bad(h.name, None, f"hierarchy {h.name} level {lv.name} has unknown derive {lv.derive!r}")
        if h.levels[0].dimension not in referenced:
            bad(h.name, None, f"hierarchy {h.name} lowest level dimension "
                              f"{h.levels[0].dimension} is not referenced by a fact")
    return report
