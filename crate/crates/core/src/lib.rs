//! Coverage path planning and row following for row crops.

pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod nav;
pub mod planner;
pub mod rowctl;
pub mod sim;
pub mod waymap;

pub use error::IoError;
pub use geometry::Vec2;
