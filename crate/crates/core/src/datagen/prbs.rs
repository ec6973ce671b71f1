//! Maximal-length PRBS setpoint excitation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feedback taps (1-based bit positions) of primitive polynomials.
fn taps(order: u32) -> Option<&'static [u32]> {
    Some(match order {
        2 => &[2, 1],
        3 => &[3, 2],
        4 => &[4, 3],
        5 => &[5, 3],
        6 => &[6, 5],
        7 => &[7, 6],
        8 => &[8, 6, 5, 4],
        9 => &[9, 5],
        10 => &[10, 7],
        11 => &[11, 9],
        12 => &[12, 11, 10, 4],
        13 => &[13, 12, 11, 8],
        14 => &[14, 13, 12, 2],
        15 => &[15, 14],
        16 => &[16, 15, 13, 4],
        _ => return None,
    })
}

/// Fibonacci LFSR emitting one bit per call.
#[derive(Clone, Debug)]
pub struct Lfsr {
    state: u32,
    order: u32,
    taps: &'static [u32],
}

impl Lfsr {
    pub fn new(order: u32) -> Result<Self> {
        let taps = taps(order).ok_or_else(|| Error::InvalidArgument(format!("PRBS order {order} not in 2..=16")))?;
        Ok(Lfsr {
            state: (1 << order) - 1,
            order,
            taps,
        })
    }

    pub fn period(&self) -> usize {
        (1usize << self.order) - 1
    }

    pub fn next_bit(&mut self) -> bool {
        let out = self.state & 1 == 1;
        let fb = self.taps.iter().fold(0, |acc, &t| acc ^ (self.state >> (self.order - t)) & 1);
        self.state = (self.state >> 1) | (fb << (self.order - 1));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrbsSignal {
    pub bits: Vec<bool>,
    /// Setpoint per output step, °C.
    pub setpoints: Vec<f64>,
}

/// PRBS setpoint trajectory sampled every `step_s` seconds.
///
/// Each bit is held for `hold_s`. Whenever the bit changes a new level is
/// drawn uniformly: from the upper half of `levels` for a 1 and from the
/// lower half for a 0, so the binary structure survives the sampling.
pub fn make_prbs_setpoints(order: u32, hold_s: i64, levels: (f64, f64), duration_s: i64, step_s: i64, seed: u64) -> Result<PrbsSignal> {
    if hold_s <= 0 || step_s <= 0 || duration_s <= hold_s {
        return Err(Error::InvalidArgument("PRBS needs 0 < hold < duration and a positive step".into()));
    }
    let (lo, hi) = levels;
    if !(lo < hi) {
        return Err(Error::InvalidArgument("PRBS levels must satisfy low < high".into()));
    }
    let mid = 0.5 * (lo + hi);
    let mut lfsr = Lfsr::new(order)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);

    let n_steps = (duration_s / step_s) as usize;
    let mut bits = Vec::new();
    let mut setpoints = Vec::with_capacity(n_steps);
    let mut level = 0.0;
    let mut prev: Option<bool> = None;
    for k in 0..n_steps {
        let bit_index = (k as i64 * step_s / hold_s) as usize;
        while bits.len() <= bit_index {
            let b = lfsr.next_bit();
            if prev != Some(b) {
                level = if b { rng.random_range(mid..=hi) } else { rng.random_range(lo..=mid) };
                prev = Some(b);
            }
            bits.push(b);
        }
        setpoints.push(level);
    }
    Ok(PrbsSignal { bits, setpoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_four_has_period_fifteen() {
        let mut l = Lfsr::new(4).unwrap();
        let seq: Vec<bool> = (0..60).map(|_| l.next_bit()).collect();
        for p in 1..15 {
            assert_ne!(seq[..15], seq[p..p + 15], "shorter period {p}");
        }
        assert_eq!(seq[..45], seq[15..60]);
        assert_eq!(seq[..15].iter().filter(|&&b| b).count(), 8);
    }

    #[test]
    fn all_orders_are_maximal_length() {
        for order in 2..=16 {
            let mut l = Lfsr::new(order).unwrap();
            let start = l.state;
            let mut n = 0;
            loop {
                l.next_bit();
                n += 1;
                if l.state == start {
                    break;
                }
            }
            assert_eq!(n, l.period(), "order {order}");
        }
        assert!(Lfsr::new(1).is_err());
        assert!(Lfsr::new(17).is_err());
    }

    #[test]
    fn setpoints_in_range_and_deterministic() {
        let a = make_prbs_setpoints(4, 7200, (18.0, 25.0), 2 * 86400, 900, 9).unwrap();
        let b = make_prbs_setpoints(4, 7200, (18.0, 25.0), 2 * 86400, 900, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.setpoints.len(), 192);
        assert!(a.setpoints.iter().all(|&s| (18.0..=25.0).contains(&s)));
        // held for 2 h = 8 steps
        for chunk in a.setpoints.chunks(8) {
            assert!(chunk.iter().all(|&s| s == chunk[0]));
        }
        for (i, chunk) in a.setpoints.chunks(8).enumerate() {
            assert_eq!(chunk[0] >= 21.5, a.bits[i]);
        }
        let c = make_prbs_setpoints(4, 7200, (18.0, 25.0), 2 * 86400, 900, 10).unwrap();
        assert_ne!(a.setpoints, c.setpoints);
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(make_prbs_setpoints(4, 7200, (18.0, 25.0), 3600, 900, 0).is_err());
        assert!(make_prbs_setpoints(4, 7200, (25.0, 18.0), 86400, 900, 0).is_err());
    }
}
