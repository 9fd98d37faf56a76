//! Exact dynamics of non-classical interval exchanges (linear involutions without
//! flips): the maps themselves, Rauzy induction and its cocycle, Rauzy diagrams,
//! cyclic approximations, mod-p bookkeeping and statistical experiments.

pub mod approx;
pub mod diagram;
pub mod exchange;
pub mod genperm;
pub mod isometry;
pub mod lab;
pub mod lattice;
pub mod matrix;
pub mod modp;
pub mod rational;
pub mod rauzy;

pub use exchange::{Exchange, ExchangeError, Interval, OrbitSegment, Point, WidthVector};
pub use genperm::{EndRef, GeneralizedPermutation, OrientationClass, PermError, Side};
pub use matrix::BigMatrix;
pub use rational::Rational;
pub use rauzy::{expand, split, SplitError, SplitKind, SplitStep, Stage};
