"""Report, point-cloud and plot persistence for affdim."""
from affdim.storage.report_store import ReportStore
from affdim.storage.cloud_io import read_cloud, write_cloud, write_box_curve

__all__ = ["ReportStore", "read_cloud", "write_cloud", "write_box_curve"]
