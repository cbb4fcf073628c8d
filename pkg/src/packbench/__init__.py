"""packbench: compare sequence-batching strategies for LLM fine-tuning.

Implements dynamic padding, padding-free minibatch flattening with position
IDs, offline fixed-length packing, and bin-packing sample selection, plus a
dense reference-attention oracle that verifies position-ID-derived
block-diagonal masking keeps packed examples independent.
"""

from .collators import (
    collate_plan,
    collate_unit,
    derive_cu_seqlens,
    pad_collate,
    packed_collate,
    padding_free_collate,
)
from .core import (
    DEFAULT_PAD_ID,
    IGNORE_LABEL,
    METHODS,
    OFFLINE_METHODS,
    ONLINE_METHODS,
    POSITION_ID_METHODS,
    CollatedBatch,
    Pack,
    RunConfig,
    Segment,
    TokenSequence,
    dataset_by_id,
    dataset_total_tokens,
)
from .ingest import (
    Bimodal,
    DatasetParseError,
    LengthHistogram,
    Lognormal,
    SynthSpec,
    Uniform,
    generate_synthetic,
    histogram_csv,
    length_stats,
    load_dataset,
    preset_spec,
    save_dataset,
)
from .metrics import (
    MethodComparison,
    MetricsReport,
    compare,
    method_matrix,
    simulate,
    throughput_proxy,
)
from .oracle import (
    ContaminationReport,
    causal_attention,
    cross_contamination_report,
    embed,
    independent_attention,
)
from .ordering import group_by_length_order, random_order, sorted_order
from .packing import (
    ExampleBatch,
    PackingPlan,
    assign_plan,
    build_plan,
    ffd_multipack,
    fixed_length_pack,
    greedy_sequential_pack,
    plan_from_json,
    plan_to_json,
    truncate_dataset,
)

__version__ = "0.1.0"
