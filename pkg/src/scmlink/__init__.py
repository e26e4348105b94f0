"""Subcarrier-multiplexed direct-detection link simulation.

Modules
-------
sigkit    waveform containers, filters, resampling, PAPR, waveform files
channel   MZM, fiber dispersion, noise, front ends, square-law detection
bandplan  channel estimation and fading-aware band planning
modem     QAM, Maxwell-Boltzmann shaping, CCDM, entropy loading
txdsp     per-band framing, pulse shaping and band combining
rxdsp     down-conversion, synchronisation, LMS FFE, post-filter, MLSE
metrics   BER, LLRs, NGMI, FEC overhead and the link report
harness   configuration, presets, end-to-end runs, sweeps and the CLI
"""
from ._validation import (
    ChannelUnusableError,
    EqualizerDivergedError,
    ParameterError,
    ScmError,
    SyncError,
)

__version__ = "0.1.0"

__all__ = [
    "ScmError",
    "ParameterError",
    "ChannelUnusableError",
    "SyncError",
    "EqualizerDivergedError",
    "__version__",
]
