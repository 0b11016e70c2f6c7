"""
Noise spectroscopy of a driven qubit with Slepian-shaped controls.

Submodules:

``dpss``
    Discrete prolate spheroidal sequences and their Fourier transforms.
``waveforms``
    Control waveforms (shifted and finite-difference DPSS, CPMG, pulsed DPSS).
``filters``
    Filter functions, numeric and closed form.
``noise``
    Reference spectra and seeded time-domain realizations.
``simulator``
    Exact and first-order qubit evolution, three-axis tomography.
``reconstruction``
    Single-taper, Bayesian, CPMG and A-S spectrum estimates.
``experiments``
    Preset pipelines behind the command-line interface.
"""
from . import dpss, filters, noise, reconstruction, simulator, waveforms
from .dpss import DpssParams, DpssSet, compute_dpss, evaluate_dpswf
from .errors import NumericalError, SlepianQNSError, ValidationError
from .filters import FilterFunction, amplitude_ff, dephasing_ff, dephasing_zz_ff, fundamental_ffs
from .noise import Spectrum, builtin_spectra, realize, realize_ensemble
from .reconstruction import ReconstructionResult, multi_axis, posterior_update, single_taper
from .simulator import expected_tomography, signal_projections, tomography
from .waveforms import PulseSequence, Waveform, cpmg, fd_waveform, finite_difference_embedded_dd

__version__ = "0.1.0"

__all__ = [
    "dpss",
    "waveforms",
    "filters",
    "noise",
    "simulator",
    "reconstruction",
    "DpssParams",
    "DpssSet",
    "compute_dpss",
    "evaluate_dpswf",
    "Waveform",
    "PulseSequence",
    "fd_waveform",
    "finite_difference_embedded_dd",
    "cpmg",
    "FilterFunction",
    "fundamental_ffs",
    "amplitude_ff",
    "dephasing_ff",
    "dephasing_zz_ff",
    "Spectrum",
    "builtin_spectra",
    "realize",
    "realize_ensemble",
    "tomography",
    "expected_tomography",
    "signal_projections",
    "ReconstructionResult",
    "single_taper",
    "multi_axis",
    "posterior_update",
    "SlepianQNSError",
    "ValidationError",
    "NumericalError",
    "__version__",
]
