"""Simulator and analysis toolkit for a mixed-species trapped-ion network node.

The package generates synthetic experiment data from physically
parameterized noise models (heating, dephasing, analyzer imperfections)
and reconstructs states and processes from click records: maximum
likelihood tomography, Choi process tomography, entangled-fraction
fidelities and nonparametric bootstrap confidence intervals.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, ResamplingSpec, bootstrap_ci, resample_dataset, resample_two_ion
from .channels import apply_choi, choi_of_unitary, choi_to_superop, superop_to_choi, validate_choi
from .config import ConfigError, NodeConfig, default_config, load_config
from .dataset import ClickDataset, load_matrix_json, save_matrix_csv, save_matrix_json
from .dynamics import (
    CrystalConfig,
    GateConfig,
    StorageNoiseConfig,
    TruncationError,
    axial_mode_frequencies,
    calibrate_gate,
    dd_sequence,
    gate_propagate,
    iswap_circuit,
    midcircuit_detect,
    storage_channel,
    transfer_fidelity,
    transfer_sequence,
    walsh_duration,
)
from .fidelity import PauliDecomposition, entangled_fraction_fidelity, fidelity_oracle, pauli_decompose
from .linalg import expm, herm_eig, kron, partial_trace, svd3, trace_distance, validate_density_matrix
from .optics import (
    IonBasisSetting,
    OpticsConfig,
    PhotonBasisSetting,
    PhotonPOVM,
    build_U_P,
    build_povm,
    ion_projector,
    characterized_config,
    tomography_settings,
    waveplate_unitary,
)
from .protocol import (
    AttemptLoopConfig,
    SequenceResult,
    expected_pair_states,
    rate_ratio,
    run_ramsey_probe,
    run_storage_sequence,
    run_thermometry_probe,
    run_two_photon_sequence,
    synthetic_dataset,
)
from .tomography import (
    MleResult,
    conditional_subspace_fidelity,
    mle_state,
    neg_log_likelihood,
    process_fidelity,
    process_tomography,
    standard_process_inputs,
)
