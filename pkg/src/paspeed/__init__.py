"""paspeed: passive photoacoustic simulation and joint speed/source inversion.

Forward FDTD wave simulation over piecewise-constant ball-inclusion speed
maps, extraction of low-frequency series coefficients from boundary traces,
harmonic-moment localization of the inclusions, speed and initial-pressure
recovery, and an experiment harness with noise sweeps.
"""

from .errors import (
    CoincidentPoints,
    CollisionUnresolved,
    ConfigError,
    DegenerateB,
    FormatError,
    GeometryViolation,
    GridTooCoarseWarning,
    HorizonTooShort,
    IllConditioned,
    InconsistentMass,
    LayoutMismatch,
    NoConvergence,
    NotConstant,
    NumericBlowup,
    PaspeedError,
    RankAmbiguous,
    SensorOutsideGrid,
    TailWarning,
)
from .medium import (
    AdmissibilityReport,
    BallInclusion,
    Bump,
    Hole,
    SourceSpec,
    SpeedField,
    check_admissible,
    eval_source,
    eval_speed,
    load_scenario,
    parse_scenario,
    save_scenario,
)
from .forward import (
    BoundaryTrace,
    Grid,
    SensorShell,
    WaveState,
    cfl_timestep,
    energy,
    kirchhoff_oracle,
    simulate,
    step,
)
from .spectra import (
    LaplaceSamples,
    SeriesCoefficients,
    coeffs_from_moments,
    cross_validate,
    elliptic_frequency_oracle,
    fit_series,
    laplace_at,
    time_moments,
)
from .elliptic import (
    CauchyData,
    ComplexPower,
    ComplexPowerZ3,
    Constant,
    Coordinate,
    ExpProbe,
    PointMassSet,
    Rotated,
    green_ball,
    green_identity_functional,
    mean_value_check,
    point_source_solution,
)
from .recon import (
    MomentSequence,
    ReconstructionReport,
    contrast_moments,
    lq_speed_error,
    match_point_sets,
    moment_sequence,
    plan_pipeline,
    prony_localize,
    recover_B,
    recover_speeds,
    roundtrip,
    source_error,
    stability_probe,
    time_reversal,
)
from .harness import StabilityCurve, add_noise, main, run_oracle_check, scenario_hash
from .version import __version__
