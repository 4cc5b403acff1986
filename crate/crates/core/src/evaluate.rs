//! Grid sweeps: position EFIM and PEB at every grid point of a floorplan,
//! empirical CDFs of the resulting maps, and error ellipses at selected
//! points.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::channel::{ChannelModel, LinkModel};
use crate::error::{Error, Result};
use crate::fim::{
    efim_position_coop, efim_position_monostatic, efim_position_tdoa, efim_position_toa, error_ellipse,
    joint_fim, peb, CoopComponent, CoopLink, CoopLinkKind, Ellipse, LinkInformation, Model,
};
use crate::geometry::{build_vas, Floorplan, Point, VirtualAnchor};

/// Grid points closer than this to a wall are left out of maps.
pub const WALL_CLEARANCE: f64 = 0.01;

/// Regular grid of cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Center of cell `(0, 0)`.
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Cells of size `spacing` tiling the floorplan's bounding box.
    pub fn covering(plan: &Floorplan, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {spacing}")));
        }
        let (lo, hi) = plan.bounding_box();
        let extent = hi - lo;
        // tolerate rounding in extent / spacing
        let count = |len: f64| ((len / spacing) * (1.0 + 1e-12)).floor().max(1.0) as usize;
        let (nx, ny) = (count(extent.x), count(extent.y));
        let used = nalgebra::Vector2::new(nx as f64, ny as f64) * spacing;
        let origin = lo + (extent - used) / 2.0 + nalgebra::Vector2::repeat(spacing / 2.0);
        Ok(Self { origin, spacing, nx, ny })
    }

    pub fn point(&self, ix: usize, iy: usize) -> Point {
        self.origin + nalgebra::Vector2::new(ix as f64, iy as f64) * self.spacing
    }

    /// Cells whose centers lie inside the floorplan and at least
    /// [`WALL_CLEARANCE`] away from every wall and boundary edge, in
    /// row-major order (x fastest).
    pub fn masked_cells(&self, plan: &Floorplan) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let p = self.point(ix, iy);
                if plan.contains(&p)
                    && plan.distance_to_nearest_wall(&p) >= WALL_CLEARANCE
                    && plan.distance_to_boundary(&p) >= WALL_CLEARANCE
                {
                    out.push((ix, iy));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Agent receives from synchronized anchors.
    Toa,
    /// Agent receives from anchors with unknown clock offsets, one per sync
    /// group.
    Tdoa,
    /// Agent observes its own reflections.
    Monostatic,
    /// Agent cooperates with partner agents of unknown position, using
    /// monostatic and agent-to-agent links (plus anchor links, if any).
    Cooperative,
}

/// A partner agent in a cooperative scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Partner {
    pub position: Point,
    pub monostatic: bool,
    pub cooperative: bool,
}

/// Everything needed to evaluate the position EFIM of a roving agent.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plan: Floorplan,
    pub anchors: Vec<Point>,
    pub kind: ScenarioKind,
    /// Clock group of each anchor (TDoA).
    pub sync_groups: Vec<usize>,
    pub partners: Vec<Partner>,
    pub q_max: usize,
    pub channel: ChannelModel,
    pub model: Model,
    pub coop_component: CoopComponent,
}

impl Scenario {
    /// ToA scenario with the given anchors.
    pub fn toa(plan: Floorplan, anchors: Vec<Point>, q_max: usize, channel: ChannelModel, model: Model) -> Self {
        let sync_groups = vec![0; anchors.len()];
        Self {
            plan,
            anchors,
            kind: ScenarioKind::Toa,
            sync_groups,
            partners: Vec::new(),
            q_max,
            channel,
            model,
            coop_component: CoopComponent::Total,
        }
    }
}

/// Evaluation result at one agent position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointInfo {
    pub fim: Matrix2<f64>,
    /// Some link had fully overlapping pulses, or the agent coincides with
    /// another node.
    pub degenerate: bool,
}

/// A scenario with the VAs of all fixed nodes built once.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    anchor_vas: Vec<Vec<VirtualAnchor>>,
    partner_vas: Vec<Vec<VirtualAnchor>>,
    // links that do not involve the roving agent
    fixed_links: Vec<CoopLink>,
}

// Node numbering: the roving agent is 0, partners 1..=P, anchors follow.
impl PreparedScenario {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let base = 1 + scenario.partners.len();
        let anchor_vas = scenario
            .anchors
            .iter()
            .enumerate()
            .map(|(j, a)| build_vas(*a, base + j, &scenario.plan, scenario.q_max))
            .collect();
        let partner_vas: Vec<_> = scenario
            .partners
            .iter()
            .enumerate()
            .map(|(i, p)| build_vas(p.position, i + 1, &scenario.plan, scenario.q_max))
            .collect();
        let mut prepared = Self { scenario, anchor_vas, partner_vas, fixed_links: Vec::new() };
        if prepared.scenario.kind == ScenarioKind::Cooperative {
            prepared.fixed_links = prepared.partner_links()?;
        }
        Ok(prepared)
    }

    fn partner_links(&self) -> Result<Vec<CoopLink>> {
        let s = &self.scenario;
        let mut out = Vec::new();
        for (i, p) in s.partners.iter().enumerate() {
            let agent = i + 1;
            if p.monostatic {
                let link = LinkModel::monostatic(&p.position, agent, &s.plan, s.q_max, &s.channel)?;
                out.push(self.coop_link(link, CoopLinkKind::Monostatic { agent })?);
            }
            for (j, vas) in self.anchor_vas.iter().enumerate() {
                let link = LinkModel::bistatic(vas, self.anchor_node(j), &p.position, agent, &s.plan, &s.channel)?;
                out.push(self.coop_link(link, CoopLinkKind::Anchor { agent })?);
            }
            for (k, q) in s.partners.iter().enumerate().skip(i + 1) {
                if p.cooperative && q.cooperative {
                    let rx = k + 1;
                    let link = LinkModel::bistatic(&self.partner_vas[i], agent, &q.position, rx, &s.plan, &s.channel)?;
                    out.push(self.coop_link(link, CoopLinkKind::Cooperative { tx: agent, rx })?);
                }
            }
        }
        Ok(out)
    }

    fn coop_link(&self, link: LinkModel, kind: CoopLinkKind) -> Result<CoopLink> {
        Ok(CoopLink { info: LinkInformation::new(link, &self.scenario.channel, self.scenario.model)?, kind })
    }

    fn anchor_node(&self, j: usize) -> usize {
        1 + self.scenario.partners.len() + j
    }

    /// Links from every anchor to an agent at `p`, with their delay EFIMs.
    pub fn anchor_links(&self, p: &Point) -> Result<Vec<LinkInformation>> {
        let s = &self.scenario;
        self.anchor_vas
            .iter()
            .enumerate()
            .map(|(j, vas)| {
                let link = LinkModel::bistatic(vas, self.anchor_node(j), p, 0, &s.plan, &s.channel)?;
                LinkInformation::new(link, &s.channel, s.model)
            })
            .collect()
    }

    /// Position EFIM of the roving agent at `p`. An agent on top of another
    /// node yields a zero FIM flagged degenerate.
    pub fn evaluate(&self, p: &Point) -> Result<PointInfo> {
        match self.evaluate_inner(p) {
            Err(Error::DegenerateGeometry { .. }) => Ok(PointInfo { fim: Matrix2::zeros(), degenerate: true }),
            other => other,
        }
    }

    fn evaluate_inner(&self, p: &Point) -> Result<PointInfo> {
        let s = &self.scenario;
        match s.kind {
            ScenarioKind::Toa | ScenarioKind::Tdoa => {
                let links = self.anchor_links(p)?;
                let degenerate = links.iter().any(LinkInformation::degenerate);
                let fim = if s.kind == ScenarioKind::Toa {
                    efim_position_toa(&links)?
                } else {
                    efim_position_tdoa(&links, &s.sync_groups)?
                };
                Ok(PointInfo { fim, degenerate })
            }
            ScenarioKind::Monostatic => {
                let link = LinkModel::monostatic(p, 0, &s.plan, s.q_max, &s.channel)?;
                let info = LinkInformation::new(link, &s.channel, s.model)?;
                let degenerate = info.degenerate();
                Ok(PointInfo { fim: efim_position_monostatic(&[info])?, degenerate })
            }
            ScenarioKind::Cooperative => {
                let mut links = self.fixed_links.clone();
                let own = LinkModel::monostatic(p, 0, &s.plan, s.q_max, &s.channel)?;
                links.push(self.coop_link(own, CoopLinkKind::Monostatic { agent: 0 })?);
                for link in self.anchor_links(p)? {
                    links.push(CoopLink { info: link, kind: CoopLinkKind::Anchor { agent: 0 } });
                }
                let my_vas = build_vas(*p, 0, &s.plan, s.q_max);
                for (i, q) in s.partners.iter().enumerate() {
                    if q.cooperative {
                        // lower index transmits
                        let link = LinkModel::bistatic(&my_vas, 0, &q.position, i + 1, &s.plan, &s.channel)?;
                        links.push(self.coop_link(link, CoopLinkKind::Cooperative { tx: 0, rx: i + 1 })?);
                    }
                }
                let degenerate = links.iter().any(|l| l.info.degenerate());
                let joint = joint_fim(1 + s.partners.len(), &links, s.coop_component)?;
                Ok(PointInfo { fim: efim_position_coop(&joint, 0, None), degenerate })
            }
        }
    }
}

/// PEB over a set of grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PebMap {
    pub grid: GridSpec,
    pub cells: Vec<(usize, usize)>,
    pub peb: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl PebMap {
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.cells.iter().map(|&(ix, iy)| self.grid.point(ix, iy))
    }

    /// Median over all points, with `+∞` entries ordered last.
    pub fn median(&self) -> f64 {
        let mut v = self.peb.clone();
        v.sort_by(f64::total_cmp);
        match v.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        }
    }
}

/// Called with the number of completed points.
pub type Progress<'a> = &'a (dyn Fn(usize) + Sync);

/// Evaluate the PEB at every masked cell of `grid`. Points are processed in
/// parallel on the current rayon pool and gathered in cell order, so the
/// result does not depend on the number of threads.
pub fn peb_map(prepared: &PreparedScenario, grid: &GridSpec, progress: Option<Progress<'_>>) -> Result<PebMap> {
    let cells = grid.masked_cells(&prepared.scenario.plan);
    let done = AtomicUsize::new(0);
    let results: Vec<Result<PointInfo>> = cells
        .par_iter()
        .map(|&(ix, iy)| {
            let r = prepared.evaluate(&grid.point(ix, iy));
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n);
            }
            r
        })
        .collect();
    let mut pebs = Vec::with_capacity(cells.len());
    let mut degenerate = Vec::with_capacity(cells.len());
    for r in results {
        let info = r?;
        pebs.push(peb(&info.fim));
        degenerate.push(info.degenerate);
    }
    Ok(PebMap { grid: grid.clone(), cells, peb: pebs, degenerate })
}

/// Empirical CDF of the finite PEB values. Fractions are relative to all
/// points, so the last fraction is `1 − unresolved`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    /// `(value, fraction of points with PEB <= value)`, one entry per
    /// distinct value.
    pub steps: Vec<(f64, f64)>,
    /// Fraction of points with infinite PEB.
    pub unresolved: f64,
}

pub fn peb_cdf(values: &[f64]) -> Cdf {
    let total = values.len();
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in finite.iter().enumerate() {
        let frac = (i + 1) as f64 / total as f64;
        match steps.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => steps.push((v, frac)),
        }
    }
    let unresolved = if total == 0 { 0.0 } else { (total - finite.len()) as f64 / total as f64 };
    Cdf { steps, unresolved }
}

/// Ellipse at one point; `None` where the FIM is singular.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseSample {
    pub point: Point,
    pub ellipse: Option<Ellipse>,
}

pub fn ellipse_samples(prepared: &PreparedScenario, points: &[Point], scale: f64) -> Result<Vec<EllipseSample>> {
    points
        .par_iter()
        .map(|p| {
            let info = prepared.evaluate(p)?;
            Ok(EllipseSample { point: *p, ellipse: error_ellipse(&info.fim, scale) })
        })
        .collect()
}
