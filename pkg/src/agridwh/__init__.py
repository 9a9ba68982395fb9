"""Agricultural data warehouse: constellation schema, tiered storage, SQL subset, OLAP and benchmarks."""
__version__ = "0.1.0"
