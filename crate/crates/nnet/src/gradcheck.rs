//! Central finite-difference gradient checks.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::NetError;
use crate::net::{loss, loss_and_gradient};
use crate::params::NetParams;
use crate::spec::NetSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub total: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub worst_block: String,
    /// Coordinates where the one-sided differences disagree, i.e. the step
    /// straddles a ReLU/SELU kink or a max-pool switch. Excluded from
    /// `max_rel_err`.
    pub non_smooth: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the analytic gradient of a random batch loss (training mode,
/// fixed dropout masks) against central differences with step `h`. When the
/// net has more than `max_coords` parameters a seeded subset is checked that
/// still includes the first entry of every block.
pub fn gradient_check(spec: &NetSpec, seed: u64, h: f64, max_coords: usize) -> Result<GradCheckReport, NetError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = NetParams::init(spec, rng.random());
    let batch = 2;
    let xs: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..spec.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ys: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..spec.output_len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    let mask_seed: u64 = rng.random();
    let masks = || ChaCha8Rng::seed_from_u64(mask_seed);
    let (base, grad) = loss_and_gradient(spec, &params, &xr, &yr, Some(&mut masks()))?;
    let eval = |p: &NetParams| loss(spec, p, &xr, &yr, Some(&mut masks()));
    let layout = spec.layout();
    let total = params.len();
    let mut coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut c: Vec<usize> = layout.blocks.iter().map(|b| b.offset).collect();
        c.extend(sample(&mut rng, total, max_coords.saturating_sub(c.len())).into_iter());
        c
    };
    coords.sort_unstable();
    coords.dedup();

    let mut report = GradCheckReport {
        checked: coords.len(),
        total,
        max_rel_err: 0.0,
        worst_index: 0,
        worst_block: String::new(),
        non_smooth: 0,
    };
    let mut p = params.clone();
    for &i in &coords {
        let v = p.values[i];
        let mut probe = |step: f64| -> Result<(f64, f64, f64), NetError> {
            p.values[i] = v + step;
            let up = eval(&p)?;
            p.values[i] = v - step;
            let down = eval(&p)?;
            p.values[i] = v;
            Ok(((up - down) / (2.0 * step), (up - base) / step, (base - down) / step))
        };
        let (numeric, fwd, bwd) = probe(h)?;
        let mut err = relative_error(grad[i], numeric, 1e-6);
        if err >= 1e-4 {
            // a kink within the step spoils the difference; retry closer
            let (fine, ..) = probe(h / 10.0)?;
            err = err.min(relative_error(grad[i], fine, 1e-6));
            if err >= 1e-4 && (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-6) {
                report.non_smooth += 1;
                continue;
            }
        }
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = i;
        }
    }
    report.worst_block = layout
        .blocks
        .iter()
        .find(|b| b.range().contains(&report.worst_index))
        .map(|b| b.name.clone())
        .unwrap_or_default();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Activation, Arch};

    #[test]
    fn all_archs_and_activations_pass() {
        for arch in Arch::ALL {
            for act in Activation::ALL {
                let spec = NetSpec::new(arch, 2, 5, act).with_io(2, 10, 3).with_conv(3, 3, 2);
                let r = gradient_check(&spec, 17, 1e-5, usize::MAX).unwrap();
                assert_eq!(r.checked, r.total);
                assert!(r.max_rel_err < 1e-4, "{} {:?}", spec.label(), r);
            }
        }
    }

    #[test]
    fn subset_covers_every_block() {
        let spec = NetSpec::new(Arch::Lstm, 2, 10, Activation::Gelu).with_io(4, 6, 3);
        let r = gradient_check(&spec, 1, 1e-5, 100).unwrap();
        assert!(r.checked <= 100 && r.checked < r.total);
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}
