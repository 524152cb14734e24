"""Computational model of a Rydberg six-wave-mixing THz-to-optical photon detector."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    EmptyStreamError,
    InsufficientDataError,
    PhysicsError,
    RydThzError,
)
from .levels import (  # noqa: F401
    DensityMatrix,
    DriveField,
    LevelScheme,
    build_hamiltonian,
    build_liouvillian,
    coherence,
    default_fields,
    rb87_scheme,
    signal_frequency,
    steady_state,
)
from .doppler import DopplerResolvent, VaporSpec, doppler_average, effective_linewidth, velocity_grid  # noqa: F401
from .mixing import (  # noqa: F401
    MixingConfig,
    alpha_bar,
    coupled_mode_propagate,
    coupling_constants,
    eta_qe_analytic,
    phase_mismatch,
)
from .spectra import (  # noqa: F401
    ConverterSetup,
    SpectrumTrace,
    extract_bandwidth,
    linear_response_coefficients,
    nonlinear_response_curve,
    signal_spectrum,
    transmission_spectrum,
)
from .metrics import DetectorSpec, dynamic_range, nep, snr, thz_count_rate, total_efficiency  # noqa: F401
from .photons import (  # noqa: F401
    PhotonStream,
    detect,
    g2_cross,
    g2_single_autocorr,
    gen_coherent,
    gen_thermal,
    hbt_split,
)
