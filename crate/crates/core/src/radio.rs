//! Channel gain, SINR and achievable-rate computations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::scenario::{ChannelSet, SpectrumMode};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("transmitter and receiver coincide at {0:?}")]
    SingularGeometry(Point3),
    #[error("channel {0} does not exist")]
    UnknownChannel(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathLossModel {
    #[default]
    FreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Hz
    pub carrier_frequency: f64,
    /// dBm/Hz
    pub noise_density: f64,
    pub pathloss_model: PathLossModel,
    pub speed_of_light: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_frequency: 2.0e9,
            noise_density: -174.0,
            pathloss_model: PathLossModel::FreeSpace,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.carrier_frequency > 0.0) {
            return Err("carrier_frequency must be > 0".into());
        }
        if !(self.noise_density < 0.0) {
            return Err("noise_density must be < 0 dBm/Hz".into());
        }
        if !(self.speed_of_light > 0.0) {
            return Err("speed_of_light must be > 0".into());
        }
        Ok(())
    }

    /// Thermal noise power in watts over `bandwidth` Hz.
    pub fn noise_power(&self, bandwidth: f64) -> f64 {
        10f64.powf((self.noise_density - 30.0) / 10.0) * bandwidth
    }
}

/// One transmission: UAV to device, or UAV to UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tx_position: Point3,
    pub rx_position: Point3,
    /// Watts
    pub tx_power: f64,
    pub channel: usize,
}

/// Linear power gain between two points.
pub fn channel_gain(tx: &Point3, rx: &Point3, config: &RadioConfig) -> Result<f64, RadioError> {
    let d = tx.distance(rx);
    if !(d > 0.0) {
        return Err(RadioError::SingularGeometry(*tx));
    }
    match config.pathloss_model {
        PathLossModel::FreeSpace => {
            let amplitude =
                config.speed_of_light / (4.0 * std::f64::consts::PI * d * config.carrier_frequency);
            Ok(amplitude * amplitude)
        }
    }
}

/// Path loss in dB (positive number).
pub fn path_loss_db(tx: &Point3, rx: &Point3, config: &RadioConfig) -> Result<f64, RadioError> {
    Ok(-10.0 * channel_gain(tx, rx, config)?.log10())
}

/// Signal-to-interference-plus-noise ratio of `target` given concurrent links.
pub fn sinr(
    target: &Link,
    interferers: &[Link],
    config: &RadioConfig,
    channels: &ChannelSet,
) -> Result<f64, RadioError> {
    let bandwidth = channels
        .channels
        .get(target.channel)
        .ok_or(RadioError::UnknownChannel(target.channel))?
        .width;
    let signal = target.tx_power * channel_gain(&target.tx_position, &target.rx_position, config)?;
    let mut interference = 0.0;
    if channels.mode == SpectrumMode::SharedSpectrum {
        for link in interferers.iter().filter(|l| l.channel == target.channel) {
            interference +=
                link.tx_power * channel_gain(&link.tx_position, &target.rx_position, config)?;
        }
    }
    Ok(signal / (config.noise_power(bandwidth) + interference))
}

/// Shannon rate in bit/s.
pub fn achievable_rate(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// SINR needed to carry `rate` bit/s over `bandwidth` Hz.
pub fn required_sinr(rate: f64, bandwidth: f64) -> f64 {
    (rate / bandwidth).exp2() - 1.0
}
