//! Transmit pulse, sampled signal vectors, deterministic MPC amplitudes and
//! the noise model (AWGN plus diffuse multipath).
//!
//! Signals are complex baseband. The carrier only enters through the phase
//! of each MPC amplitude, so delay information comes from the pulse envelope.
//! The diffuse multipath (DM) is a zero-mean Gaussian process whose power
//! delay profile (PDP) is a double exponential starting at the link's LOS
//! delay.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{reflection_path, build_vas, Floorplan, Point, VirtualAnchor};
use crate::gradients::{gradient_agent, gradient_anchor, gradient_mono, Mpc, SPEED_OF_LIGHT};
use crate::linalg::BandedSymmetric;

/// The pulse is truncated to `|t| <= PULSE_SUPPORT * T_p`.
pub const PULSE_SUPPORT: f64 = 8.0;

// Grid points landing on the truncation edge must not flip in or out with
// rounding of `t / T_p`.
const SUPPORT_EDGE: f64 = PULSE_SUPPORT * (1.0 + 1e-12);

/// The observation window extends this many pulse durations past the
/// latest MPC.
pub const WINDOW_TAIL: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SignalParams {
    /// Carrier frequency `f_c` in Hz.
    pub carrier_hz: f64,
    /// RRC symbol period `T_p` in seconds.
    pub pulse_duration: f64,
    /// RRC roll-off factor.
    pub roll_off: f64,
    /// Samples per pulse duration; `T_s = T_p / samples_per_pulse`.
    pub samples_per_pulse: usize,
    /// Two-sided AWGN power spectral density `N_0 / 2`.
    pub noise_psd_half: f64,
    /// Attenuation per reflection in dB.
    pub reflection_loss_db: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        Self {
            carrier_hz: 7e9,
            pulse_duration: 1e-9,
            roll_off: 0.6,
            samples_per_pulse: 8,
            noise_psd_half: 1e-8,
            reflection_loss_db: 3.0,
        }
    }
}

impl SignalParams {
    pub fn with_pulse_duration(mut self, tp: f64) -> Self {
        self.pulse_duration = tp;
        self
    }

    pub fn sample_period(&self) -> f64 {
        self.pulse_duration / self.samples_per_pulse as f64
    }

    /// `N_0`.
    pub fn n0(&self) -> f64 {
        2.0 * self.noise_psd_half
    }

    /// Effective Nyquist period of the block-spectrum approximation; equal to
    /// `T_p` for an RRC pulse.
    pub fn nyquist_period(&self) -> f64 {
        self.pulse_duration
    }

    /// AWGN variance per complex sample, `N_0 / T_s`.
    pub fn noise_variance(&self) -> f64 {
        self.n0() / self.sample_period()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier frequency", self.carrier_hz),
            ("pulse duration", self.pulse_duration),
            ("noise PSD", self.noise_psd_half),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.roll_off) {
            return Err(Error::InvalidParameter(format!(
                "roll-off must lie in [0, 1], got {}",
                self.roll_off
            )));
        }
        if self.samples_per_pulse < 8 {
            return Err(Error::InvalidParameter(format!(
                "need at least 8 samples per pulse (T_s <= T_p/8), got {}",
                self.samples_per_pulse
            )));
        }
        if !(self.reflection_loss_db.is_finite() && self.reflection_loss_db >= 0.0) {
            return Err(Error::InvalidParameter("reflection loss must be >= 0 dB".into()));
        }
        Ok(())
    }
}

/// Double-exponential PDP of the diffuse multipath.
#[derive(Debug, Clone, PartialEq)]
pub struct DmParams {
    /// Total DM power `Ω_1`.
    pub power: f64,
    /// Decay time constant `γ_1` in seconds.
    pub decay: f64,
    /// Rise time constant `γ_rise` in seconds.
    pub rise: f64,
    /// Depth of the soft onset, `χ ∈ [0, 1]`.
    pub chi: f64,
}

impl Default for DmParams {
    fn default() -> Self {
        Self { power: 1.16e-6, decay: 20e-9, rise: 5e-9, chi: 0.98 }
    }
}

impl DmParams {
    /// Constant making the PDP integrate to `power`.
    pub fn normalization(&self) -> f64 {
        let (g1, gr) = (self.decay, self.rise);
        (g1 + gr) / (g1 * (g1 + gr * (1.0 - self.chi)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::InvalidParameter("DM power must be >= 0".into()));
        }
        if !(self.decay > 0.0 && self.rise > 0.0) || !self.decay.is_finite() || !self.rise.is_finite() {
            return Err(Error::InvalidParameter("DM time constants must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.chi) {
            return Err(Error::InvalidParameter("DM chi must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// PDP `S_ν(τ)` of the diffuse multipath with onset at `tau_los`.
pub fn dm_pdp(tau: f64, dm: &DmParams, tau_los: f64) -> f64 {
    if tau < tau_los {
        return 0.0;
    }
    let x = tau - tau_los;
    dm.power * dm.normalization() * (1.0 - dm.chi * (-x / dm.rise).exp()) * (-x / dm.decay).exp()
}

/// Whitening weight `w² = N_0 / (N_0 + T_N S_ν(τ))`.
pub fn whitening_weight(tau: f64, signal: &SignalParams, dm: Option<&DmParams>, tau_los: f64) -> f64 {
    let s = dm.map_or(0.0, |dm| dm_pdp(tau, dm, tau_los));
    signal.n0() / (signal.n0() + signal.nyquist_period() * s)
}

/// Complex amplitude of a path of length `distance` with `order` reflections:
/// Friis free-space magnitude at the carrier, a fixed loss per reflection,
/// and the carrier phase `−2π f_c τ`.
pub fn amplitude(distance: f64, order: usize, signal: &SignalParams) -> Result<Complex64> {
    if !(distance > crate::geometry::GEOMETRY_EPS) {
        return Err(Error::DegenerateGeometry { distance });
    }
    let loss = 10f64.powf(-signal.reflection_loss_db / 20.0).powi(order as i32);
    let mag = SPEED_OF_LIGHT / (4.0 * PI * signal.carrier_hz * distance) * loss;
    let phase = -2.0 * PI * signal.carrier_hz * distance / SPEED_OF_LIGHT;
    Ok(Complex64::from_polar(mag, phase))
}

// Removable singularities of the RRC formula are evaluated by 4-point
// Lagrange interpolation from nodes this far away (in units of T_p).
const SINGULAR_RADIUS: f64 = 1e-3;

fn rrc_parts(x: f64, beta: f64) -> (f64, f64, f64, f64) {
    let a = PI * x * (1.0 - beta);
    let b = PI * x * (1.0 + beta);
    let num = a.sin() + 4.0 * beta * x * b.cos();
    let dnum = PI * (1.0 - beta) * a.cos() + 4.0 * beta * b.cos()
        - 4.0 * beta * x * PI * (1.0 + beta) * b.sin();
    let den = PI * x * (1.0 - 16.0 * beta * beta * x * x);
    let dden = PI * (1.0 - 48.0 * beta * beta * x * x);
    (num, dnum, den, dden)
}

fn rrc_raw(x: f64, beta: f64) -> f64 {
    let (n, _, d, _) = rrc_parts(x, beta);
    n / d
}

fn rrc_raw_derivative(x: f64, beta: f64) -> f64 {
    let (n, dn, d, dd) = rrc_parts(x, beta);
    (dn * d - n * dd) / (d * d)
}

fn singular_points(beta: f64) -> impl Iterator<Item = f64> {
    let side = if beta > 0.0 { Some(1.0 / (4.0 * beta)) } else { None };
    std::iter::once(0.0).chain(side.into_iter().flat_map(|s| [s, -s]))
}

fn lagrange4(x: f64, center: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = SINGULAR_RADIUS;
    let nodes = [center - 2.0 * h, center - h, center + h, center + 2.0 * h];
    let vals = nodes.map(&f);
    let mut acc = 0.0;
    for i in 0..4 {
        let mut li = 1.0;
        for j in 0..4 {
            if i != j {
                li *= (x - nodes[j]) / (nodes[i] - nodes[j]);
            }
        }
        acc += li * vals[i];
    }
    acc
}

/// Unit-energy RRC pulse for `T_p = 1`, untruncated.
fn rrc_unit(x: f64, beta: f64) -> f64 {
    if x == 0.0 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    if beta > 0.0 && (x.abs() - 1.0 / (4.0 * beta)).abs() < 1e-12 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    for s in singular_points(beta) {
        if (x - s).abs() < SINGULAR_RADIUS {
            return lagrange4(x, s, |v| rrc_raw(v, beta));
        }
    }
    rrc_raw(x, beta)
}

fn rrc_unit_derivative(x: f64, beta: f64) -> f64 {
    for s in singular_points(beta) {
        if (x - s).abs() < SINGULAR_RADIUS {
            return lagrange4(x, s, |v| rrc_raw_derivative(v, beta));
        }
    }
    rrc_raw_derivative(x, beta)
}

/// Unit-energy root-raised-cosine pulse `s(t)` with symbol period `T_p`,
/// truncated to `|t| <= 8 T_p`.
pub fn rrc_pulse(t: f64, signal: &SignalParams) -> f64 {
    let tp = signal.pulse_duration;
    let x = t / tp;
    if x.abs() > SUPPORT_EDGE {
        return 0.0;
    }
    rrc_unit(x, signal.roll_off) / tp.sqrt()
}

/// Time derivative `s'(t)` of [`rrc_pulse`] (zero outside the support).
pub fn rrc_pulse_derivative(t: f64, signal: &SignalParams) -> f64 {
    let tp = signal.pulse_duration;
    let x = t / tp;
    if x.abs() > SUPPORT_EDGE {
        return 0.0;
    }
    rrc_unit_derivative(x, signal.roll_off) / (tp * tp.sqrt())
}

/// Mean-square bandwidth `β² = ∫ s'(t)² dt / (4π²)` of the truncated pulse in
/// Hz², by composite Simpson quadrature.
pub fn mean_square_bandwidth(signal: &SignalParams) -> f64 {
    const INTERVALS: usize = 32_000;
    let beta = signal.roll_off;
    let h = 2.0 * PULSE_SUPPORT / INTERVALS as f64;
    let f = |x: f64| rrc_unit_derivative(x, beta).powi(2);
    let mut acc = f(-PULSE_SUPPORT) + f(PULSE_SUPPORT);
    for i in 1..INTERVALS {
        let x = -PULSE_SUPPORT + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0 / (4.0 * PI * PI) / signal.pulse_duration.powi(2)
}

/// Contiguous block of sample indices; sample `i` of the window is taken at
/// time `(first + i) T_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleWindow {
    pub first: i64,
    pub len: usize,
}

impl SampleWindow {
    /// Window starting at the first sample, `[T_s, N T_s]`.
    pub fn from_start(len: usize) -> Self {
        Self { first: 1, len }
    }

    pub fn last(&self) -> i64 {
        self.first + self.len as i64 - 1
    }
}

/// Pulse samples and derivative samples of one delayed pulse over its
/// support inside a window.
#[derive(Debug, Clone)]
pub(crate) struct PulseSupport {
    pub offset: usize,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

/// Signal configuration with derived quantities cached.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    signal: SignalParams,
    dm: Option<DmParams>,
    beta2: f64,
    half_support: usize,
    // s(u T_s) for u = -half_support ..= half_support
    pulse_grid: Vec<f64>,
}

impl ChannelModel {
    pub fn new(signal: SignalParams, dm: Option<DmParams>) -> Result<Self> {
        signal.validate()?;
        if let Some(dm) = &dm {
            dm.validate()?;
        }
        let half_support = (PULSE_SUPPORT as usize) * signal.samples_per_pulse;
        let ts = signal.sample_period();
        let pulse_grid = (-(half_support as i64)..=half_support as i64)
            .map(|u| rrc_pulse(u as f64 * ts, &signal))
            .collect();
        Ok(Self { beta2: mean_square_bandwidth(&signal), signal, dm, half_support, pulse_grid })
    }

    pub fn signal(&self) -> &SignalParams {
        &self.signal
    }

    pub fn dm(&self) -> Option<&DmParams> {
        self.dm.as_ref()
    }

    /// Cached [`mean_square_bandwidth`].
    pub fn mean_square_bandwidth(&self) -> f64 {
        self.beta2
    }

    pub fn pdp(&self, tau: f64, tau_los: f64) -> f64 {
        self.dm.as_ref().map_or(0.0, |dm| dm_pdp(tau, dm, tau_los))
    }

    pub fn whitening_weight(&self, tau: f64, tau_los: f64) -> f64 {
        whitening_weight(tau, &self.signal, self.dm.as_ref(), tau_los)
    }

    pub fn amplitude(&self, distance: f64, order: usize) -> Result<Complex64> {
        amplitude(distance, order, &self.signal)
    }

    /// Window covering a link with LOS delay `tau_los` and latest MPC delay
    /// `max_delay`. Samples before `tau_los − 8 T_p` hold neither signal nor
    /// DM and are left out.
    pub fn observation_window(&self, tau_los: f64, max_delay: f64) -> SampleWindow {
        let ts = self.signal.sample_period();
        let tp = self.signal.pulse_duration;
        let i_on = self.onset_index(tau_los);
        let first = (i_on - self.half_support as i64 - 1).max(1);
        let last = ((max_delay + WINDOW_TAIL * tp) / ts).ceil() as i64;
        SampleWindow { first, len: (last - first + 1).max(1) as usize }
    }

    fn check_in_window(&self, tau: f64, window: &SampleWindow) -> Result<()> {
        let ts = self.signal.sample_period();
        let tp = self.signal.pulse_duration;
        let end = window.last() as f64 * ts;
        let dropped = (window.first - 1) as f64 * ts;
        let starts_late = window.first > 1 && tau - PULSE_SUPPORT * tp <= dropped;
        if !(tau >= 0.0) || tau >= end - tp || starts_late {
            return Err(Error::PulseOutsideWindow { delay: tau });
        }
        Ok(())
    }

    /// Sampled delayed pulse `s_τ[i] = s(t_i − τ)`.
    pub fn sample_signal(&self, tau: f64, window: &SampleWindow) -> Result<Vec<f64>> {
        self.check_in_window(tau, window)?;
        let ts = self.signal.sample_period();
        Ok((0..window.len)
            .map(|i| rrc_pulse((window.first + i as i64) as f64 * ts - tau, &self.signal))
            .collect())
    }

    /// Derivative of the sampled pulse with respect to the delay,
    /// `∂s_τ/∂τ [i] = −s'(t_i − τ)`.
    pub fn pulse_derivative(&self, tau: f64, window: &SampleWindow) -> Result<Vec<f64>> {
        self.check_in_window(tau, window)?;
        let ts = self.signal.sample_period();
        Ok((0..window.len)
            .map(|i| -rrc_pulse_derivative((window.first + i as i64) as f64 * ts - tau, &self.signal))
            .collect())
    }

    pub(crate) fn pulse_support(&self, tau: f64, window: &SampleWindow) -> Result<PulseSupport> {
        self.check_in_window(tau, window)?;
        let ts = self.signal.sample_period();
        let reach = PULSE_SUPPORT * self.signal.pulse_duration;
        let lo = (((tau - reach) / ts).floor() as i64).max(window.first);
        let hi = (((tau + reach) / ts).ceil() as i64).min(window.last());
        let mut values = Vec::with_capacity((hi - lo + 1).max(0) as usize);
        let mut derivatives = Vec::with_capacity(values.capacity());
        for n in lo..=hi {
            let t = n as f64 * ts - tau;
            values.push(rrc_pulse(t, &self.signal));
            derivatives.push(-rrc_pulse_derivative(t, &self.signal));
        }
        Ok(PulseSupport { offset: (lo - window.first) as usize, values, derivatives })
    }

    /// `S_ν(i T_s)` over the window.
    pub fn pdp_samples(&self, tau_los: f64, window: &SampleWindow) -> Vec<f64> {
        let ts = self.signal.sample_period();
        (0..window.len)
            .map(|i| self.pdp((window.first + i as i64) as f64 * ts, tau_los))
            .collect()
    }

    /// Smallest sample index `i` with `i T_s >= tau_los`.
    fn onset_index(&self, tau_los: f64) -> i64 {
        let ts = self.signal.sample_period();
        let mut i = (tau_los / ts).ceil() as i64;
        while (i as f64) * ts < tau_los {
            i += 1;
        }
        while ((i - 1) as f64) * ts >= tau_los {
            i -= 1;
        }
        i
    }

    /// DM covariance by its defining double sum,
    /// `[C_c]_{n,m} = T_s Σ_i S_ν(i T_s) s(n T_s − i T_s) s(m T_s − i T_s)`,
    /// with `i` running over the window. Cubic in the window length.
    pub fn dm_covariance_dense(&self, tau_los: f64, window: &SampleWindow) -> DMatrix<f64> {
        let ts = self.signal.sample_period();
        let n = window.len;
        let pdp = self.pdp_samples(tau_los, window);
        let idx = |k: usize| window.first + k as i64;
        DMatrix::from_fn(n, n, |r, c| {
            let mut acc = 0.0;
            for (i, &s) in pdp.iter().enumerate() {
                if s == 0.0 {
                    continue;
                }
                let a = rrc_pulse((idx(r) - idx(i)) as f64 * ts, &self.signal);
                let b = rrc_pulse((idx(c) - idx(i)) as f64 * ts, &self.signal);
                acc += s * a * b;
            }
            ts * acc
        })
    }

    /// `C_n = σ_n² I + C_c` as a dense matrix.
    pub fn noise_covariance_dense(&self, tau_los: f64, window: &SampleWindow) -> DMatrix<f64> {
        let mut c = self.dm_covariance_dense(tau_los, window);
        for i in 0..window.len {
            c[(i, i)] += self.signal.noise_variance();
        }
        c
    }

    /// `C_n = σ_n² I + C_c` in banded storage.
    ///
    /// The PDP is a sum of two exponentials in the sample index, so each
    /// band entry reduces to exponentially weighted prefix sums of pulse
    /// products, which keeps the construction linear in the window length.
    pub fn noise_covariance(&self, tau_los: f64, window: &SampleWindow) -> BandedSymmetric {
        let n = window.len;
        let sigma2 = self.signal.noise_variance();
        let dm = match &self.dm {
            Some(dm) if dm.power > 0.0 => dm,
            _ => {
                let mut m = BandedSymmetric::zeros(n, 0);
                m.add_diagonal(sigma2);
                return m;
            }
        };
        let w = self.half_support as i64;
        let bw = (2 * self.half_support).min(n.saturating_sub(1));
        let mut cov = BandedSymmetric::zeros(n, bw);

        let ts = self.signal.sample_period();
        let i_on = self.onset_index(tau_los);
        let i_lo = window.first.max(i_on);
        let i_hi = window.last();
        if i_lo <= i_hi {
            let delta = i_on as f64 * ts - tau_los;
            let base = dm.power * dm.normalization();
            let fast = 1.0 / dm.decay + 1.0 / dm.rise;
            let rates = [ts / dm.decay, ts * fast];
            let weights = [base * (-delta / dm.decay).exp(), -dm.chi * base * (-delta * fast).exp()];
            let decay: Vec<[f64; 2]> = (0..n)
                .map(|row| {
                    let m = (window.first + row as i64 - i_on) as f64;
                    [(-rates[0] * m).exp(), (-rates[1] * m).exp()]
                })
                .collect();
            let grid = &self.pulse_grid;
            let p = |u: i64| grid[(u + w) as usize];
            // e^{a_r u} for u in [-w, w]
            let growth: [Vec<f64>; 2] =
                rates.map(|a| (-w..=w).map(|u| (a * u as f64).exp()).collect());
            let mut prefix = [Vec::new(), Vec::new()];
            for d in 0..=bw as i64 {
                // q_d[u] = p[u] p[u - d] for u in [d - w, w]
                let u0 = d - w;
                for (r, pre) in prefix.iter_mut().enumerate() {
                    pre.clear();
                    pre.push(0.0);
                    let mut acc = 0.0;
                    for u in u0..=w {
                        acc += p(u) * p(u - d) * growth[r][(u + w) as usize];
                        pre.push(acc);
                    }
                }
                for row in d as usize..n {
                    let abs = window.first + row as i64;
                    let lo = u0.max(abs - i_hi);
                    let hi = w.min(abs - i_lo);
                    if lo > hi {
                        continue;
                    }
                    let (a, b) = ((lo - u0) as usize, (hi - u0 + 1) as usize);
                    let val = weights[0] * decay[row][0] * (prefix[0][b] - prefix[0][a])
                        + weights[1] * decay[row][1] * (prefix[1][b] - prefix[1][a]);
                    cov.set(row, row - d as usize, ts * val);
                }
            }
        }
        cov.add_diagonal(sigma2);
        cov
    }
}

/// A deterministic MPC together with its complex amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMpc {
    pub mpc: Mpc,
    pub amplitude: Complex64,
}

/// The visible MPCs of one transmitter/receiver pair, sorted by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub transmitter: usize,
    pub receiver: usize,
    pub monostatic: bool,
    /// Geometric LOS delay; the DM onset.
    pub los_delay: f64,
    pub mpcs: Vec<LinkMpc>,
}

impl LinkModel {
    /// Link from transmitter `tx` (whose VAs are `tx_vas`) to the receiving
    /// agent `rx` at `rx_pos`. Only VAs with a valid reflection path are
    /// kept.
    pub fn bistatic(
        tx_vas: &[VirtualAnchor],
        tx: usize,
        rx_pos: &Point,
        rx: usize,
        plan: &Floorplan,
        channel: &ChannelModel,
    ) -> Result<Self> {
        let tx_pos = tx_vas
            .first()
            .map(|v| v.source)
            .ok_or_else(|| Error::InvalidParameter("transmitter has no virtual anchors".into()))?;
        let mut mpcs = Vec::new();
        for va in tx_vas {
            if reflection_path(rx_pos, va, plan)?.is_some() {
                let mpc = Mpc::new(rx_pos, rx, va.clone())?;
                let amplitude = channel.amplitude(mpc.distance(), va.order())?;
                mpcs.push(LinkMpc { mpc, amplitude });
            }
        }
        let los_delay = (rx_pos - tx_pos).norm() / SPEED_OF_LIGHT;
        if los_delay * SPEED_OF_LIGHT < crate::geometry::GEOMETRY_EPS {
            return Err(Error::DegenerateGeometry { distance: los_delay * SPEED_OF_LIGHT });
        }
        Ok(Self::sorted(tx, rx, false, los_delay, mpcs).merged())
    }

    /// Monostatic link of node `node` observing its own reflections up to
    /// order `q_max` (the direct path is excluded).
    pub fn monostatic(
        pos: &Point,
        node: usize,
        plan: &Floorplan,
        q_max: usize,
        channel: &ChannelModel,
    ) -> Result<Self> {
        let mut mpcs = Vec::new();
        for va in build_vas(*pos, node, plan, q_max).into_iter().skip(1) {
            if reflection_path(pos, &va, plan)?.is_some() {
                let order = va.order();
                let mpc = Mpc::new(pos, node, va)?;
                let amplitude = channel.amplitude(mpc.distance(), order)?;
                mpcs.push(LinkMpc { mpc, amplitude });
            }
        }
        Ok(Self::sorted(node, node, true, 0.0, mpcs).merged())
    }

    /// Synthetic link from `(delay, angle, amplitude)` triples, each modelled
    /// as a direct path arriving at `agent_pos` from direction `angle`.
    pub fn from_paths(agent_pos: &Point, paths: &[(f64, f64, Complex64)]) -> Result<Self> {
        let mut mpcs = Vec::with_capacity(paths.len());
        for &(delay, angle, amplitude) in paths {
            let d = delay * SPEED_OF_LIGHT;
            let src = agent_pos - crate::gradients::unit(angle) * d;
            let mut va = VirtualAnchor::physical(src, 1);
            va.source = src;
            let mut mpc = Mpc::new(agent_pos, 0, va)?;
            mpc.delay = delay;
            mpc.angle = angle;
            mpcs.push(LinkMpc { mpc, amplitude });
        }
        let los = mpcs.iter().map(|m| m.mpc.delay).fold(f64::INFINITY, f64::min);
        Ok(Self::sorted(1, 0, false, if los.is_finite() { los } else { 0.0 }, mpcs))
    }

    fn sorted(tx: usize, rx: usize, monostatic: bool, los_delay: f64, mut mpcs: Vec<LinkMpc>) -> Self {
        mpcs.sort_by(|a, b| a.mpc.delay.total_cmp(&b.mpc.delay));
        Self { transmitter: tx, receiver: rx, monostatic, los_delay, mpcs }
    }

    /// Combine MPCs that share their delay and their position gradients
    /// into one MPC with the summed amplitude, since they produce the same
    /// received pulse. A monostatic path and its reverse always coincide;
    /// in rectangular corners two bistatic double reflections do as well.
    fn merged(mut self) -> Self {
        let same = |a: &Mpc, b: &Mpc| -> bool {
            let close = |u: nalgebra::Vector2<f64>, v: nalgebra::Vector2<f64>| (u - v).norm() * SPEED_OF_LIGHT <= 1e-9;
            if (a.delay - b.delay).abs() > 1e-12 * a.delay.abs().max(b.delay.abs()) {
                return false;
            }
            if self.monostatic {
                matches!((gradient_mono(a), gradient_mono(b)), (Ok(u), Ok(v)) if close(u, v))
            } else {
                close(gradient_agent(a), gradient_agent(b)) && close(gradient_anchor(a), gradient_anchor(b))
            }
        };
        let mut out: Vec<LinkMpc> = Vec::with_capacity(self.mpcs.len());
        for m in std::mem::take(&mut self.mpcs) {
            // delays are sorted, so coincident MPCs are adjacent up to ties
            let hit = out.iter_mut().rev().take_while(|o| o.mpc.delay >= m.mpc.delay * (1.0 - 1e-12)).find(|o| same(&o.mpc, &m.mpc));
            match hit {
                Some(o) => o.amplitude += m.amplitude,
                None => out.push(m),
            }
        }
        self.mpcs = out;
        self
    }

    pub fn len(&self) -> usize {
        self.mpcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mpcs.is_empty()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.mpcs.iter().map(|m| m.mpc.delay).collect()
    }

    pub fn observation_window(&self, channel: &ChannelModel) -> SampleWindow {
        let max_delay = self.mpcs.last().map_or(self.los_delay, |m| m.mpc.delay);
        channel.observation_window(self.los_delay, max_delay)
    }

    /// DM PDP sampled over the link's observation window.
    pub fn pdp_samples(&self, channel: &ChannelModel) -> Vec<f64> {
        channel.pdp_samples(self.los_delay, &self.observation_window(channel))
    }
}
