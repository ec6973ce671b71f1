//! Continuous 2R-2C zone model, exact zero-order-hold discretization,
//! linear simulation and frequency/step diagnostics.
//!
//! Units: capacitances in kWh/K and resistances in K/kW, so the state
//! matrix is expressed per hour. Sampling times cross the API in seconds
//! and are converted to hours internally.
//!
//! Input channels are `w = [T_oa, q_sol_win]`, `u = [u_h, u_c]` (heating and
//! cooling runtime fractions) and the lumped internal gain `q_g` in kW.

use nalgebra::{Complex, DMatrix, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector<const N: usize> = SVector<f64, N>;

/// Number of measured-disturbance channels (outdoor air, window solar).
pub const N_W: usize = 2;
/// Number of control channels (heating, cooling).
pub const N_U: usize = 2;

/// Physical parameters of the zone network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    /// Wall-mass capacitance, kWh/K.
    pub c_w: f64,
    /// Zone-air capacitance, kWh/K.
    pub c_za: f64,
    /// Zone-to-wall resistance, K/kW.
    pub r_zw: f64,
    /// Zone-to-outdoor resistance, K/kW.
    pub r_zo: f64,
    /// Convective fraction of window solar gain delivered to the air node.
    pub f: f64,
    /// Effective window area, m².
    pub a_win: f64,
    /// Rated heating capacity, kW (positive).
    pub q_h: f64,
    /// Rated cooling capacity, kW (negative).
    pub q_c: f64,
}

impl ThetaParams {
    pub const NAMES: [&'static str; 8] = ["C_w", "C_za", "R_zw", "R_zo", "f", "A_win", "Q_h", "Q_c"];

    /// Parameters of the reference building used to generate synthetic data.
    pub const TRUE: ThetaParams = ThetaParams {
        c_w: 4.0,
        c_za: 1.0,
        r_zw: 1.2,
        r_zo: 9.0,
        f: 0.3,
        a_win: 3.0,
        q_h: 6.0,
        q_c: -6.0,
    };

    /// Admissible box for each parameter (identification bounds).
    pub const BOUNDS: [(f64, f64); 8] = [
        (0.1, 40.0),
        (0.1, 40.0),
        (0.1, 40.0),
        (0.1, 40.0),
        (1e-6, 1.0),
        (0.1, 25.0),
        (0.1, 20.0),
        (-20.0, -0.1),
    ];

    pub fn to_array(&self) -> [f64; 8] {
        [self.c_w, self.c_za, self.r_zw, self.r_zo, self.f, self.a_win, self.q_h, self.q_c]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        ThetaParams {
            c_w: v[0],
            c_za: v[1],
            r_zw: v[2],
            r_zo: v[3],
            f: v[4],
            a_win: v[5],
            q_h: v[6],
            q_c: v[7],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, value), (lo, hi)) in Self::NAMES.iter().zip(self.to_array()).zip(Self::BOUNDS) {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "not finite",
                });
            }
            if value < lo || value > hi {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "outside admissible bounds",
                });
            }
        }
        Ok(())
    }
}

/// Zone temperatures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub t_w: f64,
    pub t_za: f64,
}

impl StateVector {
    pub fn new(t_w: f64, t_za: f64) -> Self {
        StateVector { t_w, t_za }
    }

    pub fn uniform(t: f64) -> Self {
        StateVector { t_w: t, t_za: t }
    }

    pub fn to_vector(self) -> Vector<2> {
        Vector::<2>::new(self.t_w, self.t_za)
    }

    pub fn from_vector(v: &Vector<2>) -> Self {
        StateVector { t_w: v[0], t_za: v[1] }
    }
}

/// Input channel selector for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    OutdoorAir,
    Solar,
    Heating,
    Cooling,
    Gain,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::OutdoorAir,
        Channel::Solar,
        Channel::Heating,
        Channel::Cooling,
        Channel::Gain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::OutdoorAir => "Toa",
            Channel::Solar => "qsol_win",
            Channel::Heating => "uh",
            Channel::Cooling => "uc",
            Channel::Gain => "Qg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousModel<const N: usize> {
    /// State matrix, 1/h.
    pub a: SMatrix<f64, N, N>,
    pub b_w: SMatrix<f64, N, N_W>,
    pub b_u: SMatrix<f64, N, N_U>,
    pub b_g: SMatrix<f64, N, 1>,
    pub c: SMatrix<f64, 1, N>,
}

/// The plain two-state zone model.
pub type RcModel = ContinuousModel<2>;

impl<const N: usize> ContinuousModel<N> {
    pub fn input_column(&self, channel: Channel) -> SVector<f64, N> {
        match channel {
            Channel::OutdoorAir => self.b_w.column(0).into_owned(),
            Channel::Solar => self.b_w.column(1).into_owned(),
            Channel::Heating => self.b_u.column(0).into_owned(),
            Channel::Cooling => self.b_u.column(1).into_owned(),
            Channel::Gain => self.b_g.column(0).into_owned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel<const N: usize> {
    pub a_d: SMatrix<f64, N, N>,
    pub b_wd: SMatrix<f64, N, N_W>,
    pub b_ud: SMatrix<f64, N, N_U>,
    pub b_gd: SMatrix<f64, N, 1>,
    pub c_d: SMatrix<f64, 1, N>,
    /// Sampling time in seconds.
    pub ts: f64,
}

impl<const N: usize> DiscreteModel<N> {
    #[inline]
    pub fn step(&self, x: &Vector<N>, w: &[f64; 2], u: &[f64; 2], q_g: f64) -> Vector<N> {
        self.a_d * x
            + self.b_wd.column(0) * w[0]
            + self.b_wd.column(1) * w[1]
            + self.b_ud.column(0) * u[0]
            + self.b_ud.column(1) * u[1]
            + self.b_gd.column(0) * q_g
    }

    #[inline]
    pub fn output(&self, x: &Vector<N>) -> f64 {
        (self.c_d * x)[(0, 0)]
    }

    pub fn spectral_radius(&self) -> f64 {
        let m = DMatrix::from_iterator(N, N, self.a_d.iter().copied());
        m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Builds the state-space matrices of the 2R-2C network.
pub fn build_continuous(theta: &ThetaParams) -> Result<RcModel> {
    theta.validate()?;
    let ThetaParams {
        c_w,
        c_za,
        r_zw,
        r_zo,
        f,
        a_win,
        q_h,
        q_c,
    } = *theta;
    let a = SMatrix::<f64, 2, 2>::new(
        -1.0 / (c_w * r_zw),
        1.0 / (c_w * r_zw),
        1.0 / (c_za * r_zw),
        -1.0 / (c_za * r_zw) - 1.0 / (c_za * r_zo),
    );
    let b_w = SMatrix::<f64, 2, 2>::new(0.0, (1.0 - f) * a_win / c_w, 1.0 / (c_za * r_zo), f * a_win / c_za);
    let b_u = SMatrix::<f64, 2, 2>::new(0.0, 0.0, q_h / c_za, q_c / c_za);
    let b_g = SMatrix::<f64, 2, 1>::new(0.0, 1.0 / c_za);
    let c = SMatrix::<f64, 1, 2>::new(0.0, 1.0);
    Ok(ContinuousModel { a, b_w, b_u, b_g, c })
}

/// Exact zero-order-hold discretization at sampling time `ts` seconds.
///
/// The input matrices come from the exponential of the augmented block
/// `[[A, B], [0, 0]]`, so `A` is never inverted.
pub fn discretize<const N: usize>(model: &ContinuousModel<N>, ts: f64) -> Result<DiscreteModel<N>> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(Error::InvalidArgument(format!("sampling time must be positive, got {ts}")));
    }
    let h = ts / 3600.0;
    let m = N_W + N_U + 1;
    let dim = N + m;
    let mut blk = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..N {
        for j in 0..N {
            blk[(i, j)] = model.a[(i, j)] * h;
        }
        for j in 0..N_W {
            blk[(i, N + j)] = model.b_w[(i, j)] * h;
        }
        for j in 0..N_U {
            blk[(i, N + N_W + j)] = model.b_u[(i, j)] * h;
        }
        blk[(i, N + N_W + N_U)] = model.b_g[(i, 0)] * h;
    }
    let e = expm(&blk);
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential".into()));
    }
    let a_d = SMatrix::<f64, N, N>::from_fn(|i, j| e[(i, j)]);
    let b_wd = SMatrix::<f64, N, N_W>::from_fn(|i, j| e[(i, N + j)]);
    let b_ud = SMatrix::<f64, N, N_U>::from_fn(|i, j| e[(i, N + N_W + j)]);
    let b_gd = SMatrix::<f64, N, 1>::from_fn(|i, _| e[(i, N + N_W + N_U)]);
    Ok(DiscreteModel {
        a_d,
        b_wd,
        b_ud,
        b_gd,
        c_d: model.c,
        ts,
    })
}

/// Matrix exponential by scaling and squaring with a diagonal Padé(8,8)
/// approximant. The scaled matrix has 1-norm at most 1/2, where the
/// approximant error is far below double precision.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    const Q: usize = 8;
    let n = m.nrows();
    let norm = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let x = m / 2f64.powi(squarings as i32);

    // c_j = (2q - j)! q! / ((2q)! j! (q - j)!)
    let mut coef = [0.0; Q + 1];
    coef[0] = 1.0;
    for j in 1..=Q {
        coef[j] = coef[j - 1] * (Q + 1 - j) as f64 / (j as f64 * (2 * Q + 1 - j) as f64);
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let mut num = eye.clone() * coef[0];
    let mut den = eye.clone() * coef[0];
    let mut power = eye;
    for (j, c) in coef.iter().enumerate().skip(1) {
        power = &power * &x;
        num += &power * *c;
        if j % 2 == 0 {
            den += &power * *c;
        } else {
            den -= &power * *c;
        }
    }
    let mut e = den.lu().solve(&num).unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    for _ in 0..squarings {
        e = &e * &e;
    }
    e
}

/// Owned input trajectories sharing one sampling grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputSeries {
    pub w: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
    pub q_g: Vec<f64>,
}

impl InputSeries {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        check_lengths(&self.w, &self.u, &self.q_g)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> InputSeries {
        InputSeries {
            w: self.w[range.clone()].to_vec(),
            u: self.u[range.clone()].to_vec(),
            q_g: self.q_g[range].to_vec(),
        }
    }
}

pub(crate) fn check_lengths(w: &[[f64; 2]], u: &[[f64; 2]], q_g: &[f64]) -> Result<()> {
    if u.len() != w.len() {
        return Err(Error::LengthMismatch {
            what: "u",
            expected: w.len(),
            found: u.len(),
        });
    }
    if q_g.len() != w.len() {
        return Err(Error::LengthMismatch {
            what: "q_g",
            expected: w.len(),
            found: q_g.len(),
        });
    }
    Ok(())
}

/// Open-loop simulation. Returns `y(k) = C x(k)` for `k = 0..N`, where
/// `x(0) = x0` and `x(k+1)` follows from the inputs held over step `k`.
pub fn simulate<const N: usize>(
    model: &DiscreteModel<N>,
    x0: &Vector<N>,
    w: &[[f64; 2]],
    u: &[[f64; 2]],
    q_g: &[f64],
) -> Result<Vec<f64>> {
    Ok(simulate_states(model, x0, w, u, q_g)?
        .iter()
        .take(w.len())
        .map(|x| model.output(x))
        .collect())
}

/// Like [`simulate`] but returns the `N + 1` states including the final one.
pub fn simulate_states<const N: usize>(
    model: &DiscreteModel<N>,
    x0: &Vector<N>,
    w: &[[f64; 2]],
    u: &[[f64; 2]],
    q_g: &[f64],
) -> Result<Vec<Vector<N>>> {
    check_lengths(w, u, q_g)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let mut states = Vec::with_capacity(w.len() + 1);
    let mut x = *x0;
    states.push(x);
    for k in 0..w.len() {
        x = model.step(&x, &w[k], &u[k], q_g[k]);
        states.push(x);
    }
    Ok(states)
}

/// `|C (jωI − A)⁻¹ b|` for each frequency in Hz (0 gives the DC gain).
pub fn bode_magnitude<const N: usize>(model: &ContinuousModel<N>, channel: Channel, frequencies: &[f64]) -> Result<Vec<f64>> {
    let b = model.input_column(channel);
    frequencies
        .iter()
        .map(|&hz| {
            if !hz.is_finite() || hz < 0.0 {
                return Err(Error::InvalidArgument(format!("frequency must be finite and >= 0, got {hz}")));
            }
            // rad/h
            let omega = 2.0 * std::f64::consts::PI * hz * 3600.0;
            let mut m = DMatrix::<Complex<f64>>::zeros(N, N);
            for i in 0..N {
                for j in 0..N {
                    m[(i, j)] = Complex::new(-model.a[(i, j)], 0.0);
                }
                m[(i, i)] += Complex::new(0.0, omega);
            }
            let rhs = DMatrix::<Complex<f64>>::from_fn(N, 1, |i, _| Complex::new(b[i], 0.0));
            let sol = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NonFinite("singular resolvent".into()))?;
            let mut g = Complex::new(0.0, 0.0);
            for i in 0..N {
                g += sol[(i, 0)] * model.c[(0, i)];
            }
            Ok(g.norm())
        })
        .collect()
}

/// Response of the output to a unit step on `channel` from the zero state,
/// sampled every `dt` seconds up to `horizon_h` hours.
///
/// Each sample is evaluated in closed form, `y(t) = C ∫₀ᵗ e^{As} ds b`,
/// independently of the recursive simulator.
pub fn step_response<const N: usize>(
    model: &ContinuousModel<N>,
    channel: Channel,
    horizon_h: f64,
    dt: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(horizon_h > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument("horizon and dt must be positive".into()));
    }
    let b = model.input_column(channel);
    let steps = (horizon_h * 3600.0 / dt).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t_h = k as f64 * dt / 3600.0;
        let mut blk = DMatrix::<f64>::zeros(N + 1, N + 1);
        for i in 0..N {
            for j in 0..N {
                blk[(i, j)] = model.a[(i, j)] * t_h;
            }
            blk[(i, N)] = b[i] * t_h;
        }
        let e = expm(&blk);
        let y: f64 = (0..N).map(|i| model.c[(0, i)] * e[(i, N)]).sum();
        out.push((k as f64 * dt, y));
    }
    Ok(out)
}

/// Steady-state gain from `channel` to the output, `-C A⁻¹ b`.
pub fn dc_gain<const N: usize>(model: &ContinuousModel<N>, channel: Channel) -> Result<f64> {
    Ok(bode_magnitude(model, channel, &[0.0])?[0])
}
