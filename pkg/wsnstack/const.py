"""Constants for the wsnstack simulator."""

import json
from importlib import resources
from types import SimpleNamespace

DOMAIN = "wsnstack"

with (
    resources.files(__package__)
    .joinpath("manifest.json")
    .open("r", encoding="utf-8") as _manifest_file
):
    _MANIFEST = json.load(_manifest_file)

VERSION: str = _MANIFEST["version"]
SCHEMA_VERSION: int = _MANIFEST["schema_version"]

# Absolute tolerance for comparing simulation timestamps.
TIME_EPSILON = 1e-12

# Destination id used by frames addressed to every neighbor.
BROADCAST = -1

FRAME_KIND = SimpleNamespace(
    DATA="data",
    BEACON="beacon",
    PROBE="probe",
    RESPONSE="response",
    ACK="ack",
    BACKPRESSURE="backpressure",
)

# Frame kinds whose bytes are reported as routing control overhead.
CONTROL_FRAME_KINDS: tuple[str, ...] = (
    FRAME_KIND.BEACON,
    FRAME_KIND.PROBE,
    FRAME_KIND.RESPONSE,
    FRAME_KIND.BACKPRESSURE,
)

ACTIVITY = SimpleNamespace(
    TX="tx",
    RX="rx",
    IDLE="idle",
    SLEEP="sleep",
    CPU="cpu",
)
ACTIVITIES: tuple[str, ...] = (
    ACTIVITY.TX,
    ACTIVITY.RX,
    ACTIVITY.IDLE,
    ACTIVITY.SLEEP,
    ACTIVITY.CPU,
)

# Closed set of reasons a packet can leave the network without delivery.
DROP_REASON = SimpleNamespace(
    TTL_EXHAUSTED="ttlExhausted",
    EXPIRED="expired",
    POLICED="policed",
    CONGESTION_FEEDBACK="congestionFeedback",
    VOID="void",
    MAC_FAILURE="macFailure",
    QUEUE_OVERFLOW="queueOverflow",
    STALE_BINDING="staleBinding",
)
DROP_REASONS: tuple[str, ...] = tuple(vars(DROP_REASON).values())

MAC_FAILURE = SimpleNamespace(
    RETRIES_EXHAUSTED="retriesExhausted",
    NO_RECEIVER="noReceiver",
    NODE_DOWN="nodeDown",
)

ROUTING_MODE = SimpleNamespace(
    TABLE_DRIVEN="table_driven",
    LAZY_BINDING="lazy_binding",
)

AGGREGATION_MODE = SimpleNamespace(
    NONE="none",
    FIXED_DEGREE="fixed_degree",
    ON_DEMAND="on_demand",
    ADAPTIVE="adaptive",
)

LOCALIZATION_METHOD = SimpleNamespace(
    TRUTH="truth",
    CENTROID="centroid",
    AREA_REFINED="area_refined",
    INJECTED_ERROR="injected_error",
)

FAILURE_KIND = SimpleNamespace(
    CRASH="crash",
    SLEEP_FORCE="sleep_force",
    RECOVER="recover",
    MOVE_TO="move_to",
)

DIRECTORY_MODE = SimpleNamespace(
    REGIONAL="regional",
    ORACLE="oracle",
)

# What a node in the destination region does with an entity-addressed packet.
ARRIVAL = SimpleNamespace(
    DELIVER="deliver",
    REBIND="rebind",
    STALE="stale",
)

# Outcomes of in-order delivery on a transport connection.
DELIVERY = SimpleNamespace(
    DELIVER="deliverToApp",
    DUPLICATE="discardDuplicate",
    HOLD="holdOutOfOrder",
    LATE="discardLate",
    OVERFLOW="dropOverflow",
)

# Output artifact names inside a run directory.
SUMMARY_FILE = "summary.json"
TIMESERIES_FILE = "timeseries.csv"
PACKETS_FILE = "packets.csv"
EVENTS_FILE = "events.csv"
SWEEP_FILE = "sweep.csv"
SWEEP_TREND_FILE = "sweep_trend.json"
REPORT_FILE = "report.csv"

# Significant digits used for every float written to CSV or JSON.
FLOAT_DIGITS = 9

with (
    resources.files(__package__)
    .joinpath("translations/en.json")
    .open("r", encoding="utf-8") as _trans_file
):
    _TRANSLATIONS = json.load(_trans_file)

_EXC = _TRANSLATIONS["exceptions"]
ERROR_CAUSALITY = _EXC["causality"]["message"]
ERROR_CONFIG_INVALID = _EXC["config_invalid"]["message"]
ERROR_UNKNOWN_NODE = _EXC["unknown_node"]["message"]
ERROR_NO_ANCHORS = _EXC["no_anchors"]["message"]
ERROR_MALFORMED_FRAME = _EXC["malformed_frame"]["message"]
ERROR_UNKNOWN_ENTITY = _EXC["unknown_entity"]["message"]
ERROR_UNRESOLVABLE = _EXC["unresolvable"]["message"]
ERROR_SCHEMA_MISMATCH = _EXC["schema_mismatch"]["message"]
ERROR_PARAMETER_PATH = _EXC["parameter_path"]["message"]
ERROR_NO_RUNS = _EXC["no_runs"]["message"]
LABEL_BASELINE = _TRANSLATIONS["report"]["baseline"]
LABEL_DELTA = _TRANSLATIONS["report"]["delta"]
