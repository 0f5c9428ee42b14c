"""Repeated fault-injection runs and the metrics computed over them."""
from .metrics import (
    MetricValue,
    TTDSummary,
    compute_bb_sensitivity,
    compute_edr,
    compute_ef,
    compute_input_breadth,
    compute_pc_sensitivity,
    compute_ttd,
)
from .report import (
    CSV_COLUMNS,
    SCHEMA_VERSION,
    CampaignReport,
    OpcodeSites,
    RunRecord,
    VariantReport,
    parse_report,
    serialize_report,
)
from .runner import (
    CampaignConfig,
    CampaignConfigError,
    InputPolicy,
    Variant,
    config_from_json,
    fault_rng,
    load_config,
    opcode_population,
    run_campaign,
    run_input,
)

__all__ = [
    "CSV_COLUMNS",
    "SCHEMA_VERSION",
    "CampaignConfig",
    "CampaignConfigError",
    "CampaignReport",
    "InputPolicy",
    "MetricValue",
    "OpcodeSites",
    "RunRecord",
    "TTDSummary",
    "Variant",
    "VariantReport",
    "compute_bb_sensitivity",
    "compute_edr",
    "compute_ef",
    "compute_input_breadth",
    "compute_pc_sensitivity",
    "compute_ttd",
    "config_from_json",
    "fault_rng",
    "load_config",
    "opcode_population",
    "parse_report",
    "run_campaign",
    "run_input",
    "serialize_report",
]
