"""Long-term drift forecasting with a two-scale averaged tide/wind model."""

from .averaged import (
    AveragedState,
    AveragedTrajectory,
    QuadratureConfig,
    Reconstruction,
    WindResponse,
    integrate_averaged,
    reconstruct,
    rhs_order0,
    rhs_order1,
)
from .direct import Trajectory, integrate_direct
from .fields import (
    FieldBundle,
    AnalyticPerturbation,
    AnalyticTide,
    ZeroField,
    eval_perturbation,
    eval_perturbation_derivatives,
    eval_tide,
    eval_tide_derivatives,
    make_bundle,
    tide_theta_antiderivative,
)
from .mc import (
    CoastGeometry,
    EnsembleConfig,
    ErrorTable,
    GroundingReport,
    detect_grounding,
    error_table,
    run_ensemble,
    wind_rose,
)
from .rk import IntegrationError, NonFiniteState, StepSizeUnderflow, dopri5
from .wind import SmallScaleParams, SynopticParams, WindSeries, WindSpanError, required_span, synthesize

__version__ = "0.1.0"
