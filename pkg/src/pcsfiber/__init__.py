"""Short-length probabilistic constellation shaping over a nonlinear WDM link."""

from .shaping import (
    PAPER_DISTRIBUTION,
    AmplitudeSequence,
    Composition,
    DmCodebookInfo,
    TargetDistribution,
    build_sequence,
    ccdm_decode,
    ccdm_encode,
    codebook_info,
    derive_composition,
)
from .framing import ConstellationSpec, SymbolFrame, insert_pilots, interleave, pas_map, remove_pilots
from .channel import AmplifierParams, FiberParams, FieldWaveform, WdmConfig, awgn_channel, modulate_wdm, propagate_ssfm
from .rx import ReceivedSymbols, cd_compensate, extract_center_channel, phase_compensate
from .metrics import LinkMetrics, SymbolTrace, air_n, bmd_rate, effective_snr, run_length_stats
from .harness import ExperimentConfig, ResultRow, load_config, run_single, run_sweep

__version__ = "0.1.0"
