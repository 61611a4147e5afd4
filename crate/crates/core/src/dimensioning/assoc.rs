use crate::geometry::Point3;
use crate::radio::{channel_gain, RadioConfig};
use crate::scenario::{ChannelSet, DeviceSnapshot, SpectrumMode};

use super::DimensionError;

/// Device-to-UAV association (the binary matrix A in compact row form) plus
/// the channel each device is scheduled on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub uav_of: Vec<usize>,
    pub channel_of: Vec<usize>,
}

impl Association {
    /// Number of devices of `uav` time-sharing `channel`.
    pub fn share_count(&self, uav: usize, channel: usize) -> usize {
        self.uav_of
            .iter()
            .zip(&self.channel_of)
            .filter(|(&u, &c)| u == uav && c == channel)
            .count()
    }

    pub fn devices_of(&self, uav: usize) -> impl Iterator<Item = usize> + '_ {
        self.uav_of
            .iter()
            .enumerate()
            .filter(move |(_, &u)| u == uav)
            .map(|(i, _)| i)
    }

    pub fn load(&self, uav_count: usize) -> Vec<usize> {
        let mut load = vec![0; uav_count];
        for &u in &self.uav_of {
            load[u] += 1;
        }
        load
    }
}

/// Max-gain association (ties to the lowest UAV index) followed by channel
/// assignment.
///
/// Shared spectrum: channels are dealt round-robin over devices ordered by
/// (UAV, device), so reuse across cells only starts once every channel is taken.
/// OFDMA: each cell gets a disjoint block of channels sized by its load.
pub fn associate_devices(
    snapshot: &DeviceSnapshot,
    uav_positions: &[Point3],
    channels: &ChannelSet,
    radio: &RadioConfig,
) -> Result<Association, DimensionError> {
    if snapshot.is_empty() {
        return Ok(Association {
            uav_of: Vec::new(),
            channel_of: Vec::new(),
        });
    }
    if uav_positions.is_empty() {
        return Err(DimensionError::InfeasibleAssociation(
            "no UAV available for a non-empty demand".into(),
        ));
    }
    let mut uav_of = Vec::with_capacity(snapshot.len());
    for d in &snapshot.devices {
        let rx = d.position.with_z(0.0);
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, p) in uav_positions.iter().enumerate() {
            let g = channel_gain(p, &rx, radio)?;
            if g > best.1 {
                best = (j, g);
            }
        }
        uav_of.push(best.0);
    }

    let n_ch = channels.channels.len();
    let mut order: Vec<usize> = (0..uav_of.len()).collect();
    order.sort_by_key(|&i| (uav_of[i], i));
    let mut channel_of = vec![0; uav_of.len()];
    match channels.mode {
        SpectrumMode::SharedSpectrum => {
            for (slot, &i) in order.iter().enumerate() {
                channel_of[i] = slot % n_ch;
            }
        }
        SpectrumMode::Ofdma => {
            let mut load = vec![0usize; uav_positions.len()];
            for &u in &uav_of {
                load[u] += 1;
            }
            let cells: Vec<usize> = (0..load.len()).filter(|&u| load[u] > 0).collect();
            if n_ch < cells.len() {
                return Err(DimensionError::InfeasibleAssociation(format!(
                    "{} OFDMA cells need at least as many channels, have {n_ch}",
                    cells.len()
                )));
            }
            let blocks = proportional_blocks(&cells.iter().map(|&u| load[u]).collect::<Vec<_>>(), n_ch);
            let mut first = 0;
            let mut block_of = vec![(0usize, 0usize); load.len()];
            for (ci, &u) in cells.iter().enumerate() {
                block_of[u] = (first, blocks[ci]);
                first += blocks[ci];
            }
            let mut used = vec![0usize; load.len()];
            for &i in &order {
                let u = uav_of[i];
                let (start, size) = block_of[u];
                channel_of[i] = start + used[u] % size;
                used[u] += 1;
            }
        }
    }
    Ok(Association { uav_of, channel_of })
}

/// Splits `total` channels into blocks proportional to `weights`, each at least
/// one, largest remainders first (ties to the earlier cell).
fn proportional_blocks(weights: &[usize], total: usize) -> Vec<usize> {
    let n = weights.len();
    let mut blocks = vec![1usize; n];
    let spare = total - n;
    let wsum: usize = weights.iter().sum();
    if spare == 0 || wsum == 0 {
        return blocks;
    }
    let quotas: Vec<f64> = weights
        .iter()
        .map(|&w| spare as f64 * w as f64 / wsum as f64)
        .collect();
    let mut given = 0;
    for (b, q) in blocks.iter_mut().zip(&quotas) {
        let whole = q.floor() as usize;
        *b += whole;
        given += whole;
    }
    let mut rest: Vec<usize> = (0..n).collect();
    rest.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in rest.iter().take(spare - given) {
        blocks[i] += 1;
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::scenario::DeviceState;

    fn snap(points: &[[f64; 2]]) -> DeviceSnapshot {
        DeviceSnapshot {
            time: 0.0,
            devices: points
                .iter()
                .enumerate()
                .map(|(i, p)| DeviceState {
                    id: format!("d{i}"),
                    position: Point2::from(*p),
                    min_rate: 1e6,
                    mobile: false,
                })
                .collect(),
        }
    }

    fn chans(n: usize, mode: SpectrumMode) -> ChannelSet {
        ChannelSet::uniform(n, 1e6, 2e9, mode)
    }

    #[test]
    fn single_device_single_uav() {
        let a = associate_devices(
            &snap(&[[0.0, 0.0]]),
            &[Point3::new(10.0, 0.0, 50.0)],
            &chans(1, SpectrumMode::SharedSpectrum),
            &RadioConfig::default(),
        )
        .unwrap();
        assert_eq!(a.uav_of, vec![0]);
        assert_eq!(a.channel_of, vec![0]);
    }

    #[test]
    fn equidistant_tie_goes_to_lower_id() {
        let a = associate_devices(
            &snap(&[[0.0, 0.0]]),
            &[Point3::new(-30.0, 0.0, 50.0), Point3::new(30.0, 0.0, 50.0)],
            &chans(1, SpectrumMode::SharedSpectrum),
            &RadioConfig::default(),
        )
        .unwrap();
        assert_eq!(a.uav_of, vec![0]);
    }

    #[test]
    fn matches_exhaustive_best_gain_assignment() {
        let radio = RadioConfig::default();
        let devices = snap(&[[0.0, 0.0], [90.0, 10.0], [40.0, 60.0], [120.0, 120.0]]);
        let uavs = [Point3::new(20.0, 20.0, 60.0), Point3::new(110.0, 80.0, 100.0)];
        let a = associate_devices(&devices, &uavs, &chans(4, SpectrumMode::SharedSpectrum), &radio)
            .unwrap();
        // all 2^4 assignments; the per-device best-gain choice maximises the gain product
        let gains: Vec<[f64; 2]> = devices
            .devices
            .iter()
            .map(|d| {
                let rx = d.position.with_z(0.0);
                [
                    channel_gain(&uavs[0], &rx, &radio).unwrap(),
                    channel_gain(&uavs[1], &rx, &radio).unwrap(),
                ]
            })
            .collect();
        let mut best = (0u32, f64::NEG_INFINITY);
        for mask in 0u32..16 {
            let score: f64 = (0..4).map(|i| gains[i][((mask >> i) & 1) as usize].ln()).sum();
            if score > best.1 {
                best = (mask, score);
            }
        }
        let expected: Vec<usize> = (0..4).map(|i| ((best.0 >> i) & 1) as usize).collect();
        assert_eq!(a.uav_of, expected);
    }

    #[test]
    fn no_uav_is_infeasible() {
        let err = associate_devices(
            &snap(&[[0.0, 0.0]]),
            &[],
            &chans(1, SpectrumMode::SharedSpectrum),
            &RadioConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, DimensionError::InfeasibleAssociation(_)));
    }

    #[test]
    fn ofdma_blocks_are_disjoint_per_cell() {
        let devices = snap(&[[0.0, 0.0], [5.0, 0.0], [10.0, 0.0], [200.0, 0.0]]);
        let uavs = [Point3::new(5.0, 0.0, 50.0), Point3::new(200.0, 0.0, 50.0)];
        let a = associate_devices(&devices, &uavs, &chans(3, SpectrumMode::Ofdma), &RadioConfig::default())
            .unwrap();
        assert_eq!(a.uav_of, vec![0, 0, 0, 1]);
        let cell0: Vec<usize> = (0..3).map(|i| a.channel_of[i]).collect();
        assert!(!cell0.contains(&a.channel_of[3]));
        // too few channels for two cells
        assert!(associate_devices(&devices, &uavs, &chans(1, SpectrumMode::Ofdma), &RadioConfig::default())
            .is_err());
    }

    #[test]
    fn shared_round_robin_spreads_channels() {
        let devices = snap(&[[0.0, 0.0], [5.0, 0.0], [200.0, 0.0]]);
        let uavs = [Point3::new(0.0, 0.0, 50.0), Point3::new(200.0, 0.0, 50.0)];
        let a = associate_devices(&devices, &uavs, &chans(3, SpectrumMode::SharedSpectrum), &RadioConfig::default())
            .unwrap();
        assert_eq!(a.channel_of, vec![0, 1, 2]);
    }

    #[test]
    fn blocks_sum_to_total() {
        assert_eq!(proportional_blocks(&[3, 1], 4), vec![3, 1]);
        assert_eq!(proportional_blocks(&[1, 1, 1], 3), vec![1, 1, 1]);
        let b = proportional_blocks(&[5, 2, 3], 10);
        assert_eq!(b.iter().sum::<usize>(), 10);
    }
}
