"""Memory-assisted MDI-QKD: spin-cavity Bell-state node simulator and rates."""

from .bsm import (
    BSMRecord,
    ChannelConfig,
    SequenceConfig,
    classify_bell_state,
    expected_parity,
    ideal_parity,
    run_memory_cycle,
    truth_table_rows,
    y_frame_correction,
)
from .cavity import (
    CavityParams,
    EfficiencyBudget,
    SpinReflectances,
    average_reflectivity,
    cooperativity,
    model_reflectances,
    reflection_coefficient,
    reflectivity,
    total_heralding_efficiency,
)
from .config import (
    ConfigError,
    ScenarioConfig,
    default_config,
    list_presets,
    load_config,
    load_preset,
    parse_config,
    serialize_config,
)
from .qubits import (
    HeraldResult,
    NoiseParams,
    SpinState,
    TimeBinQubit,
    apply_dephasing,
    apply_herald,
    apply_pi_pulse,
    initialize_spin,
    measure_x,
    prepare_superposition,
    reflect_and_herald,
    spin_photon_fidelity,
)
from .rates import (
    QBER_INDIVIDUAL_LIMIT,
    QBER_UNCONDITIONAL_LIMIT,
    BoundsConfig,
    KeyRateReport,
    QberPosterior,
    binary_entropy,
    build_report,
    plob_bound,
    qber_posterior,
    rate_direct_bound,
    secret_fraction,
    sifted_enhancement,
)
from .session import (
    CoincidenceTally,
    EmptyCellError,
    PartyConfig,
    SessionReport,
    TimingOverheads,
    channel_accounting,
    chsh_statistic,
    sift,
    simulate_session,
)

__version__ = "0.1.0"
