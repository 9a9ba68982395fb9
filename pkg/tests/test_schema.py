import dataclasses
import json

import pytest

from agridwh.schema import (ConstellationSchema, UnknownHierarchyError, build_default_schema,
                            hierarchy_levels, validate_schema)

# dimension table attributes, transcribed from the paper's dictionary (typos kept)
TABLE3 = {
    "Business": "BusinessID, Name,Address, Phone, Mobile, Email",
    "Crop": "CropID, CropName, VarietyID, VarietyName, EstYield, SeasontSart, SeasonEnd, BbchScale, "
            "ScientificName, HarvestEquipment, EquipmentWeight",
    "CropState": "CropStateID, CropID, StageScale, Height, MajorStage, MinStage, MaxStage, Diameter, "
                 "MinHeight, MaxHeight, CropCoveragePercent",
    "Farmer": "FarmerID, FarmerName, Address, Phone, Mobile, Email",
    "Fertiliser": "FertiliserID, Name, Unit, Status, Description, GroupName",
    "Field": "FieldID, FieldName, SiteID, Reference, Block, Area, AreaUnit, WorkingArea, WorkingAreaUnit, "
             "FieldGPS, Notes",
    "Inspection": "InspectionID, CropID, Description, ProblemType, Severity, ProblemNotes, AreaValue, "
                  "AreaUnit, Order, Date, Notes, GrowthStage",
    "Nutrient": "NutrientID, NutrientName, Date, Quantity",
    "OperationTime": "OperationTimeID, StartDate, EndDate, Season",
    "Pest": "PestID, CommonName, ScientificName, PestType, Description, Density, MinStage, MaxStage, "
            "Coverage, CoverageUnit",
    "Plan": "PlanID, PlanName, PlanNumber, RegistrationNo, ProductName, ProductRate, Date, WaterVolume",
    "Product": "ProductID, ProductName, GroupName",
    "Site": "SiteID, FarmerID, SiteName, Reference, Country, AddressName, AddressTown, PostalCode, GPS, "
            "Created, CreatedBy",
    "Spray": "SprayID, SprayProductName, ProductRate, AppliedArea, AppliedDate, WaterVolume, VolumeUnit, "
             "ConfirmDuration, ConfirmWindSPeed, ConfirmDirection, ConfirmTemperature, ConfirmHumidity, "
             "ActivityType",
    "Soil": "SoilID, PH, Phosphorus, Potassium, Magnesium, Calcium, CEC, Silt, Clay, Sand, TextureLabel, "
            "TestDate",
    "Supplier": "SupplierID, SupplierName, SupplierContactName, Address, ContactPhone, ContactMobile, "
                "ContactEmail",
    "Task": "TaskID, TaskDesc, TaskStatus, TaskDate, TaskInterval, CompletedDate, AppCode",
    "Treatment": "TreatmentID, TreatmentName, FormType, LotCode, Rate, ApplCode, LevlNo, Type, Description, "
                 "ApplDesc, TreatmentComment",
    "WeatherStation": "WeatherStationID, StationName, MeasureDate, AirTemperature, SoilTemperature, "
                      "StationReadingBatch",
}


def _attrs(text):
    return [a.strip() for a in text.split(",")]


def test_counts(schema):
    assert len(schema.facts) == 3
    assert len(schema.dimensions) == 19
    shape = {f.name: (len(f.dimension_refs), len(f.measures)) for f in schema.facts}
    assert shape == {"FieldFact": (12, 6), "Order": (4, 6), "Sale": (4, 5)}


def test_unlinked_support_tables(schema):
    linked = {d for f in schema.facts for d in f.dimension_refs}
    assert sum(len(f.dimension_refs) for f in schema.facts) == 20
    assert len(linked) == 16
    assert {d.name for d in schema.dimensions} - linked == {"CropState", "Inspection", "Site"}


@pytest.mark.parametrize("dim", sorted(TABLE3))
def test_table3_attributes_verbatim(schema, dim):
    assert list(schema.dimension(dim).column_names) == _attrs(TABLE3[dim])


def test_crop_columns(schema):
    assert schema.dimension("Crop").column_names == (
        "CropID", "CropName", "VarietyID", "VarietyName", "EstYield", "SeasontSart", "SeasonEnd",
        "BbchScale", "ScientificName", "HarvestEquipment", "EquipmentWeight")


def test_site_supports_field_and_holds_farmer(schema):
    site = schema.dimension("Site")
    assert site.supports == "Field"
    assert "FarmerID" in site.column_names


def test_default_schema_valid(schema):
    assert validate_schema(schema).ok
    assert len(validate_schema(schema)) == 0


def test_eleven_refs_violation(schema):
    ff = schema.fact("FieldFact")
    bad = dataclasses.replace(ff, dimension_refs=ff.dimension_refs[:11])
    broken = dataclasses.replace(schema, facts=(bad,) + schema.facts[1:])
    assert "FieldFact dimension count 11 ≠ 12" in validate_schema(broken).messages()


def test_dangling_ref_violation(schema):
    ff = schema.fact("FieldFact")
    bad = dataclasses.replace(ff, dimension_refs=ff.dimension_refs[:-1] + ("Weather",))
    broken = dataclasses.replace(schema, facts=(bad,) + schema.facts[1:])
    assert any("Weather" in m for m in validate_schema(broken).messages())


def test_natural_keys(schema):
    for d in schema.dimensions:
        assert d.natural_key
        assert d.surrogate_key not in d.natural_key
        assert d.surrogate_key == f"{d.name}ID"


def test_hierarchy_levels(schema):
    assert [lv.name for lv in hierarchy_levels(schema, "time")] == ["day", "month", "season", "year"]
    assert [lv.name for lv in hierarchy_levels(schema, "location")] == ["field", "site", "farmer"]
    assert [lv.name for lv in hierarchy_levels(schema, "crop")] == ["variety", "crop"]
    with pytest.raises(UnknownHierarchyError):
        hierarchy_levels(schema, "nosuch")


def test_location_chain_follows_links(schema):
    # Field.SiteID -> Site, Site.FarmerID -> Farmer
    assert ("SiteID", "Site") in schema.dimension("Field").links
    assert ("FarmerID", "Farmer") in schema.dimension("Site").links


def test_lowest_levels_referenced(schema):
    referenced = {d for f in schema.facts for d in f.dimension_refs}
    for h in schema.hierarchies:
        assert h.levels[0].dimension in referenced


def test_json_round_trip(schema):
    text = schema.to_json()
    json.loads(text)
    assert ConstellationSchema.from_json(text) == schema


def test_data_dictionary_lists_every_table(schema):
    md = schema.data_dictionary()
    for name in schema.table_names:
        assert name in md


def test_fresh_builds_equal():
    assert build_default_schema() == build_default_schema()
