//! Fisher information over the signal parameters of a link, reduction to the
//! delay-domain equivalent FIM (EFIM), position EFIMs for the supported
//! positioning scenarios, the position error bound (PEB) and error ellipses.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::channel::{ChannelModel, LinkModel};
use crate::error::Result;
use crate::gradients::{assemble_jacobian, stack_gradients, GradientMatrix, GradientRole};
use crate::linalg::{schur_complement, symmetrize};

/// Condition number of `Λ_C′` above which a link counts as overlap-degenerate.
pub const OVERLAP_CONDITION_LIMIT: f64 = 1e12;

/// Relative eigenvalue threshold below which a position FIM is singular.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// FIM blocks of one link over `[τ, Re α, Im α]`. With real pulse samples
/// the two amplitude blocks share `Λ_C′` and do not couple to each other.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlocks {
    /// Delay/delay block `Λ_A`.
    pub a: DMatrix<f64>,
    /// Delay/`Re α` block `Λ_B^R` (rows: delays).
    pub b_re: DMatrix<f64>,
    /// Delay/`Im α` block `Λ_B^I` (rows: delays).
    pub b_im: DMatrix<f64>,
    /// Amplitude block `Λ_C′`, shared by the real and imaginary parts.
    pub c: DMatrix<f64>,
}

impl FimBlocks {
    /// Blocks from the whitened Gram matrices `G_dd = ∂Sᵀ C⁻¹ ∂S`,
    /// `G_ds = ∂Sᵀ C⁻¹ S` and `G_ss = Sᵀ C⁻¹ S`.
    pub fn from_grams(
        amplitudes: &[Complex64],
        g_dd: &DMatrix<f64>,
        g_ds: &DMatrix<f64>,
        g_ss: &DMatrix<f64>,
    ) -> Self {
        let k = amplitudes.len();
        let a = DMatrix::from_fn(k, k, |i, j| {
            2.0 * (amplitudes[i] * amplitudes[j].conj()).re * g_dd[(i, j)]
        });
        let b_re = DMatrix::from_fn(k, k, |i, j| 2.0 * amplitudes[i].re * g_ds[(i, j)]);
        let b_im = DMatrix::from_fn(k, k, |i, j| 2.0 * amplitudes[i].im * g_ds[(i, j)]);
        Self { a, b_re, b_im, c: g_ss * 2.0 }
    }

    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full `3K × 3K` matrix over `[τ, Re α, Im α]`.
    pub fn assembled(&self) -> DMatrix<f64> {
        let k = self.len();
        let mut m = DMatrix::zeros(3 * k, 3 * k);
        m.view_mut((0, 0), (k, k)).copy_from(&self.a);
        m.view_mut((0, k), (k, k)).copy_from(&self.b_re);
        m.view_mut((0, 2 * k), (k, k)).copy_from(&self.b_im);
        m.view_mut((k, 0), (k, k)).copy_from(&self.b_re.transpose());
        m.view_mut((2 * k, 0), (k, k)).copy_from(&self.b_im.transpose());
        m.view_mut((k, k), (k, k)).copy_from(&self.c);
        m.view_mut((2 * k, 2 * k), (k, k)).copy_from(&self.c);
        m
    }
}

/// Pulses and pulse derivatives of a link after whitening by `L⁻¹`, where
/// `L` is the banded Cholesky factor of the noise covariance.
struct Whitened {
    s: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    /// First sample of each pulse; forward solves keep the leading zeros.
    starts: Vec<usize>,
    amplitudes: Vec<Complex64>,
}

impl Whitened {
    fn new(link: &LinkModel, channel: &ChannelModel) -> Result<Self> {
        let k = link.len();
        let window = link.observation_window(channel);
        let n = window.len;
        let chol = channel.noise_covariance(link.los_delay, &window).cholesky()?;
        let mut w = Self {
            s: Vec::with_capacity(k),
            d: Vec::with_capacity(k),
            starts: Vec::with_capacity(k),
            amplitudes: link.mpcs.iter().map(|m| m.amplitude).collect(),
        };
        for m in &link.mpcs {
            let support = channel.pulse_support(m.mpc.delay, &window)?;
            let span = support.offset..support.offset + support.values.len();
            let mut s = vec![0.0; n];
            s[span.clone()].copy_from_slice(&support.values);
            let mut d = vec![0.0; n];
            d[span].copy_from_slice(&support.derivatives);
            chol.forward_solve(&mut s);
            chol.forward_solve(&mut d);
            w.s.push(s);
            w.d.push(d);
            w.starts.push(support.offset);
        }
        Ok(w)
    }

    fn gram(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), y.len(), |i, j| {
            let from = self.starts[i].max(self.starts[j]);
            crate::linalg::dot(&x[i][from..], &y[j][from..])
        })
    }

    fn blocks(&self) -> FimBlocks {
        let g_dd = symmetrize(&self.gram(&self.d, &self.d));
        let g_ds = self.gram(&self.d, &self.s);
        let g_ss = symmetrize(&self.gram(&self.s, &self.s));
        FimBlocks::from_grams(&self.amplitudes, &g_dd, &g_ds, &g_ss)
    }

    /// `G_dd − G_ds G_ss⁻¹ G_sd` as the Gram matrix of the derivatives with
    /// their component in the pulse span removed. Orthonormalizing the pulses
    /// (Gram-Schmidt, applied twice) avoids the cancellation of the explicit
    /// Schur complement when pulses nearly coincide.
    fn projected_gram(&self) -> DMatrix<f64> {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.s.len());
        let project_out = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
            for _ in 0..2 {
                for q in basis {
                    let c = crate::linalg::dot(q, v);
                    v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
                }
            }
        };
        for s in &self.s {
            let mut v = s.clone();
            project_out(&mut v, &basis);
            let norm = crate::linalg::dot(&v, &v).sqrt();
            if norm > 1e-10 * crate::linalg::dot(s, s).sqrt() {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        let residuals: Vec<Vec<f64>> = self
            .d
            .iter()
            .map(|d| {
                let mut v = d.clone();
                project_out(&mut v, &basis);
                v
            })
            .collect();
        let k = residuals.len();
        symmetrize(&DMatrix::from_fn(k, k, |i, j| crate::linalg::dot(&residuals[i], &residuals[j])))
    }
}

/// FIM blocks of a link from its sampled signal model. The noise covariance
/// is applied through its banded Cholesky factor `L`: with `Y = L⁻¹ [S, ∂S]`
/// every Gram matrix is a product of columns of `Y`.
pub fn fim_blocks(link: &LinkModel, channel: &ChannelModel) -> Result<FimBlocks> {
    Ok(Whitened::new(link, channel)?.blocks())
}

/// Delay-domain EFIM of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayEfim {
    pub matrix: DMatrix<f64>,
    /// `Λ_C′` was ill-conditioned and had to be regularized.
    pub degenerate: bool,
}

/// Schur complement `Λ_A − Λ_B^R Λ_C′⁻¹ Λ_B^Rᵀ − Λ_B^I Λ_C′⁻¹ Λ_B^Iᵀ`.
///
/// If `Λ_C′` has a condition number above [`OVERLAP_CONDITION_LIMIT`] (fully
/// overlapping pulses), `1e-12 · tr/K` is added to its diagonal and the
/// result is flagged degenerate.
pub fn efim_delays(blocks: &FimBlocks) -> DelayEfim {
    let k = blocks.len();
    if k == 0 {
        return DelayEfim { matrix: DMatrix::zeros(0, 0), degenerate: false };
    }
    let mut c = symmetrize(&blocks.c);
    let degenerate = is_overlap_degenerate(&c);
    if degenerate {
        let bump = 1e-12 * c.trace().max(f64::MIN_POSITIVE) / k as f64;
        for i in 0..k {
            c[(i, i)] += bump;
        }
    }
    let matrix = match c.clone().cholesky() {
        Some(chol) => {
            let xr = chol.solve(&blocks.b_re.transpose());
            let xi = chol.solve(&blocks.b_im.transpose());
            &blocks.a - &blocks.b_re * xr - &blocks.b_im * xi
        }
        None => {
            let pinv = crate::linalg::pinv_symmetric(&c, 1e-15);
            &blocks.a
                - &blocks.b_re * &pinv * blocks.b_re.transpose()
                - &blocks.b_im * &pinv * blocks.b_im.transpose()
        }
    };
    DelayEfim { matrix: symmetrize(&matrix), degenerate }
}

fn is_overlap_degenerate(c: &DMatrix<f64>) -> bool {
    let eig = c.clone().symmetric_eigen().eigenvalues;
    let (lmin, lmax) = (eig.min(), eig.max());
    !(lmin > 0.0 && lmax / lmin <= OVERLAP_CONDITION_LIMIT)
}

/// Delay EFIM of a link under the sampled model. Equal to
/// `efim_delays(&fim_blocks(..))` in exact arithmetic; for non-degenerate
/// links it is evaluated by orthogonal projection, which stays accurate
/// when pulses are close but still resolvable.
pub fn link_efim(link: &LinkModel, channel: &ChannelModel) -> Result<DelayEfim> {
    let w = Whitened::new(link, channel)?;
    let blocks = w.blocks();
    if blocks.is_empty() || is_overlap_degenerate(&symmetrize(&blocks.c)) {
        return Ok(efim_delays(&blocks));
    }
    let r = w.projected_gram();
    let a = &w.amplitudes;
    let matrix = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| 2.0 * (a[i] * a[j].conj()).re * r[(i, j)]);
    Ok(DelayEfim { matrix, degenerate: false })
}

/// Which delay-information model to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Sampled FIM including pulse overlap and the DM covariance.
    Full,
    /// Closed form assuming mutually orthogonal pulses.
    NoOverlap,
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Self::Full),
            "no-overlap" | "no_overlap" | "nooverlap" => Ok(Self::NoOverlap),
            other => Err(format!("unknown model `{other}` (expected `full` or `no-overlap`)")),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::NoOverlap => "no-overlap",
        })
    }
}

/// Per-MPC ranging information for orthogonal pulses,
/// `8π²β² |α_k|² / (N_0 + T_N S_ν(τ_k))` in s⁻².
pub fn ranging_information(link: &LinkModel, channel: &ChannelModel) -> DVector<f64> {
    let sig = channel.signal();
    let beta2 = channel.mean_square_bandwidth();
    DVector::from_iterator(
        link.len(),
        link.mpcs.iter().map(|m| {
            let dm = channel.pdp(m.mpc.delay, link.los_delay);
            8.0 * PI * PI * beta2 * m.amplitude.norm_sqr() / (sig.n0() + sig.nyquist_period() * dm)
        }),
    )
}

pub fn delay_information(link: &LinkModel, channel: &ChannelModel, model: Model) -> Result<DelayEfim> {
    if link.is_empty() {
        return Ok(DelayEfim { matrix: DMatrix::zeros(0, 0), degenerate: false });
    }
    match model {
        Model::Full => link_efim(link, channel),
        Model::NoOverlap => Ok(DelayEfim {
            matrix: DMatrix::from_diagonal(&ranging_information(link, channel)),
            degenerate: false,
        }),
    }
}

/// A link together with its delay-domain EFIM.
#[derive(Debug, Clone)]
pub struct LinkInformation {
    pub link: LinkModel,
    pub delays: DelayEfim,
}

impl LinkInformation {
    pub fn new(link: LinkModel, channel: &ChannelModel, model: Model) -> Result<Self> {
        let delays = delay_information(&link, channel, model)?;
        Ok(Self { link, delays })
    }

    pub fn degenerate(&self) -> bool {
        self.delays.degenerate
    }

    pub fn gradients(&self, role: GradientRole) -> Result<GradientMatrix> {
        let mpcs: Vec<_> = self.link.mpcs.iter().map(|m| m.mpc.clone()).collect();
        stack_gradients(&mpcs, role)
    }

    /// `Gᵀ Λ̃ G` for the gradient rows of `role`.
    pub fn position_fim(&self, role: GradientRole) -> Result<Matrix2<f64>> {
        let g = self.gradients(role)?.rows;
        let m = g.transpose() * &self.delays.matrix * &g;
        Ok(to_matrix2(&symmetrize(&m)))
    }
}

fn to_matrix2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// ToA position EFIM of an agent: anchor links are independent, so their
/// informations add.
pub fn efim_position_toa(links: &[LinkInformation]) -> Result<Matrix2<f64>> {
    let mut total = Matrix2::zeros();
    for l in links {
        total += l.position_fim(GradientRole::Agent)?;
    }
    Ok(total)
}

/// Position EFIM of an agent from its own monostatic links.
pub fn efim_position_monostatic(links: &[LinkInformation]) -> Result<Matrix2<f64>> {
    let mut total = Matrix2::zeros();
    for l in links {
        total += l.position_fim(GradientRole::Monostatic)?;
    }
    Ok(total)
}

/// Closed-form position EFIM for orthogonal pulses. Bistatic links use the
/// agent-side gradient rows, monostatic links the monostatic ones.
pub fn efim_no_overlap(links: &[LinkModel], channel: &ChannelModel) -> Result<Matrix2<f64>> {
    let mut total = Matrix2::zeros();
    for link in links {
        let info = LinkInformation::new(link.clone(), channel, Model::NoOverlap)?;
        let role = if link.monostatic { GradientRole::Monostatic } else { GradientRole::Agent };
        total += info.position_fim(role)?;
    }
    Ok(total)
}

/// TDoA position EFIM. `groups[i]` is the clock group of `links[i]`; every
/// group carries one unknown offset (in seconds) that adds to all delays of
/// its links. Synchronized anchors share a group. The offsets are
/// marginalized out by a Schur complement.
pub fn efim_position_tdoa(links: &[LinkInformation], groups: &[usize]) -> Result<Matrix2<f64>> {
    assert_eq!(links.len(), groups.len(), "one clock group per link");
    let num_groups = groups.iter().max().map_or(0, |g| g + 1);
    let dim = 2 + num_groups;
    let mut j = DMatrix::zeros(dim, dim);
    for (l, &g) in links.iter().zip(groups) {
        let grad = l.gradients(GradientRole::Agent)?.rows;
        let mut h = DMatrix::zeros(grad.nrows(), dim);
        h.columns_mut(0, 2).copy_from(&grad);
        h.column_mut(2 + g).fill(1.0);
        j += h.transpose() * &l.delays.matrix * h;
    }
    Ok(to_matrix2(&schur_complement(&symmetrize(&j), 2)))
}

/// How a link enters the joint cooperative FIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoopLinkKind {
    /// Agent observing its own reflections.
    Monostatic { agent: usize },
    /// Agent `tx` transmits, agent `rx` receives.
    Cooperative { tx: usize, rx: usize },
    /// Fixed anchor transmits to `agent`.
    Anchor { agent: usize },
}

#[derive(Debug, Clone)]
pub struct CoopLink {
    pub info: LinkInformation,
    pub kind: CoopLinkKind,
}

/// Which links to include in the joint FIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoopComponent {
    Monostatic,
    Cooperative,
    Total,
}

/// Joint `2N × 2N` position FIM of `num_agents` agents.
pub fn joint_fim(num_agents: usize, links: &[CoopLink], component: CoopComponent) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(2 * num_agents, 2 * num_agents);
    for l in links {
        let keep = matches!(
            (component, l.kind),
            (CoopComponent::Total, _)
                | (CoopComponent::Monostatic, CoopLinkKind::Monostatic { .. })
                | (CoopComponent::Cooperative, CoopLinkKind::Cooperative { .. })
        );
        if !keep || l.info.link.is_empty() {
            continue;
        }
        let h = match l.kind {
            CoopLinkKind::Monostatic { agent } => {
                assemble_jacobian(&[(agent, &l.info.gradients(GradientRole::Monostatic)?)], num_agents)
            }
            CoopLinkKind::Anchor { agent } => {
                assemble_jacobian(&[(agent, &l.info.gradients(GradientRole::Agent)?)], num_agents)
            }
            CoopLinkKind::Cooperative { tx, rx } => {
                let gt = l.info.gradients(GradientRole::Agent)?;
                let gr = l.info.gradients(GradientRole::Anchor)?;
                assemble_jacobian(&[(rx, &gt), (tx, &gr)], num_agents)
            }
        };
        j += h.transpose() * &l.info.delays.matrix * h;
    }
    Ok(symmetrize(&j))
}

/// Per-agent EFIM from the joint FIM, marginalizing all other agents'
/// positions. `prior` adds `μ I` to the other agents' blocks; with a large
/// `μ` their positions are effectively known.
pub fn efim_position_coop(joint: &DMatrix<f64>, agent: usize, prior: Option<f64>) -> Matrix2<f64> {
    let n = joint.nrows();
    // agent's two coordinates first, the rest in their original order
    let order: Vec<usize> = [2 * agent, 2 * agent + 1]
        .into_iter()
        .chain((0..n).filter(|&i| i / 2 != agent))
        .collect();
    let mut m = DMatrix::from_fn(n, n, |i, j| joint[(order[i], order[j])]);
    if let Some(mu) = prior {
        for i in 2..n {
            m[(i, i)] += mu;
        }
    }
    to_matrix2(&schur_complement(&m, 2))
}

/// `sqrt(tr I⁻¹)` in meters, or `+∞` if `I` is singular.
pub fn peb(info: &Matrix2<f64>) -> f64 {
    match eigen2(info) {
        Some((l1, l2, _)) => (1.0 / l1 + 1.0 / l2).sqrt(),
        None => f64::INFINITY,
    }
}

/// Eigen-decomposition of a symmetric 2×2 matrix: `(λ_min, λ_max, θ)` where
/// `θ` is the direction of the eigenvector of `λ_min`. `None` if singular.
fn eigen2(m: &Matrix2<f64>) -> Option<(f64, f64, f64)> {
    let (a, b, d) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let (lmin, lmax) = (mean - r, mean + r);
    if !(lmax > 0.0) || !(lmin > SINGULAR_RATIO * lmax) || !lmin.is_finite() {
        return None;
    }
    // eigenvector of λ_min: (b, λ_min − a) or (λ_min − d, b)
    let (vx, vy) = if (lmin - a).abs() + b.abs() >= (lmin - d).abs() + b.abs() {
        (b, lmin - a)
    } else {
        (lmin - d, b)
    };
    let theta = if vx == 0.0 && vy == 0.0 { 0.0 } else { vy.atan2(vx) };
    Some((lmin, lmax, wrap_half_turn(theta)))
}

fn wrap_half_turn(theta: f64) -> f64 {
    let mut t = theta;
    while t <= -PI / 2.0 {
        t += PI;
    }
    while t > PI / 2.0 {
        t -= PI;
    }
    t
}

/// Error ellipse of the bound: semi-axes `scale · sqrt(eig(I⁻¹))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    /// Semi-major axis in meters.
    pub major: f64,
    /// Semi-minor axis in meters.
    pub minor: f64,
    /// Orientation of the major axis in `(−π/2, π/2]`.
    pub theta: f64,
}

/// `None` when the FIM is singular.
pub fn error_ellipse(info: &Matrix2<f64>, scale: f64) -> Option<Ellipse> {
    let (lmin, lmax, theta) = eigen2(info)?;
    Some(Ellipse { major: scale / lmin.sqrt(), minor: scale / lmax.sqrt(), theta })
}
