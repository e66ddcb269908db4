//! System configuration, channel realisations and the ridge-regression task.

mod channel;
mod config;
mod ridge;

pub use channel::{generate_channel, rayleigh_channel, ChannelMatrix};
pub use config::{Epsilon, SystemConfig};
pub use ridge::{generate_ridge_dataset, generate_ridge_dataset_with_noise, RidgeDataset, MEASUREMENT_NOISE_VAR};
