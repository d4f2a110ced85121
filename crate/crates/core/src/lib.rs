//! Simulation and verification of spin systems on Z^d driven by a shared
//! graphical construction.
//!
//! The crate is organized bottom-up:
//!
//! * [`lattice`] and [`configurations`]: sites, boxes, and elements of
//!   `{0,1}^{Z^d}` with a periodic background and finitely many deviations.
//! * [`rates`]: flip-rate families, influence coefficients, weights and the
//!   constants `C` and `A`.
//! * [`finite`]: finite spin systems (exterior frozen), a thinning simulator
//!   and an exact uniformization oracle.
//! * [`timeline`] and [`graphical`]: Poisson clocks with uniform marks, and
//!   the coupled processes they drive.
//! * [`invasion`]: invasion processes, their arrow graphs and duality.
//! * [`observables`]: local functions, the pregenerator, semigroup estimates
//!   and the invariance criterion.
//! * [`experiment`] and [`verify`]: configuration files and the standard
//!   verification suite.
//!
//! ```
//! use spinsys_core::{build_timeline, run_coupled, Configuration, LatticeBox, RateModel, WeightFamily};
//!
//! let model = RateModel::contact(1, 1.5)?;
//! let eta: Configuration = "bg=period:10; dev=".parse()?;
//! let timeline = build_timeline(LatticeBox::new(1, 4), 1.0, &model, &WeightFamily::uniform(), 7)?;
//! let bundle = run_coupled(&timeline, &model, &eta, &[1, 2, 3], 1e-9)?;
//! assert!(bundle.violations().is_empty());
//! # Ok::<(), spinsys_core::SpinError>(())
//! ```

pub mod configurations;
pub mod error;
pub mod experiment;
pub mod finite;
pub mod graphical;
pub mod invasion;
pub mod lattice;
pub mod observables;
pub mod rates;
pub mod seeds;
pub mod timeline;
pub mod verify;

pub use configurations::{Background, Configuration, FrameState, Pattern, QWeight, SpinLookup};
pub use error::{Result, SpinError};
pub use finite::{simulate_finite, ExactOracle, FiniteSystem, Trajectory};
pub use graphical::{limit_estimate, run_coupled, run_two_config, CoupledBundle, TwoConfigRun};
pub use invasion::{simulate_invasion, ArrowGraph, InvasionOutcome};
pub use lattice::{complement_in, Frame, LatticeBox, Site};
pub use observables::{LocalFunction, MeasureSpec};
pub use rates::{
    constant_a, constant_c, g_total, gamma, Influence, RateKind, RateModel, RateTable, WeightFamily,
};
pub use timeline::{build_timeline, Timeline};
