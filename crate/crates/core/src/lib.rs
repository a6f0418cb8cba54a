pub mod bundle;
pub mod curvature;
pub mod error;
pub mod field;
pub mod grid;
pub mod hym_system;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod mavol;
pub mod samples;
pub mod verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use field::{EndoField, ScalarField, Twist, TwistPair};
pub use grid::{ComplexAxis, DomainDescriptor, Scheme, TorusDomain};
pub use bundle::{BundleDescriptor, BundleModel, BundleSpec, ExtensionTwist, MetricField, ModelKind, TwistDescriptor};
pub use curvature::{BigHermitianField, CurvatureField, PositivityKind, PositivityReport};
pub use hym_system::{
    continuity_resume, continuity_run, continuity_run_from, Checkpoint, ContinuityOutcome, NewtonConfig, OmegaVariant,
    SolverTrace, StepRecord, SystemConfig, TSchedule, TerminalStatus,
};
pub use mavol::{AscentConfig, AscentTrace, MavolReport, ShrinkPoint};
pub use verify::{run_verify, VerifyConfig, VerifyReport};
