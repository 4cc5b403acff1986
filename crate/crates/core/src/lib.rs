//! Position error bounds (PEB) for multipath-assisted indoor positioning.
//!
//! Specular reflections off known walls are modelled as signals from
//! virtual anchors (mirror images of the physical nodes). Their delays carry
//! position information, which is quantified through the Cramér-Rao bound
//! of a sampled signal model with white noise and diffuse multipath.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: floorplans, virtual anchors and path visibility.
//! - [`gradients`]: spatial delay gradients.
//! - [`channel`]: pulse, sampled signals, amplitudes and noise covariance.
//! - [`fim`]: Fisher information, EFIMs per scenario, PEB and ellipses.
//! - [`evaluate`]: grid sweeps, CDFs and ellipse samples.
//! - [`config`] and [`cli`]: scenario files and the `mpc-peb` binary.
//!
//! ```
//! use mpc_peb::channel::{ChannelModel, SignalParams};
//! use mpc_peb::evaluate::{PreparedScenario, Scenario};
//! use mpc_peb::fim::{peb, Model};
//! use mpc_peb::geometry::{Floorplan, Point};
//!
//! let channel = ChannelModel::new(SignalParams::default(), None).unwrap();
//! let scenario = Scenario::toa(
//!     Floorplan::example_room(),
//!     vec![Point::new(10.0, 7.0)],
//!     2,
//!     channel,
//!     Model::NoOverlap,
//! );
//! let prepared = PreparedScenario::new(scenario).unwrap();
//! let info = prepared.evaluate(&Point::new(4.0, 3.0)).unwrap();
//! assert!(peb(&info.fim) < 0.2);
//! ```

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod fim;
pub mod geometry;
pub mod gradients;
pub mod linalg;

pub use error::{Error, Result};
