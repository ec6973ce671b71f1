pub mod datagen;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod features;
pub mod hybrid;
pub mod io;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod selection;
pub mod svg;
pub mod sysid;

pub use error::{Error, Result};
