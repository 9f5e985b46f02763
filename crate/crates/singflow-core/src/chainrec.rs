//! Chain-recurrence over-approximation by a box transition graph.
//!
//! The region is tiled by axis-aligned boxes; every box gets sample points
//! (its corners and center), every sample is flowed to each time sample in
//! [1, 2], and box B gets an edge to box B' when the eps-ball around some
//! image, inflated by a per-box Lipschitz spread bound, meets B'. Recurrent
//! boxes are those in a strongly connected component with at least two
//! nodes or a self-loop — the discrete stand-in for the chain recurrent set.
//!
//! Two scale decisions keep desk-scale runs (millions of boxes) tractable:
//! corner samples are shared between adjacent boxes and integrated once, and
//! edges are never materialized — both the edge census and Tarjan's SCC pass
//! enumerate neighbors on demand from the stored sample images.

use nalgebra::{Matrix3, SVector, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Region};
use crate::flow::{augmented_rhs, pack, position_of, REGION_INFLATE_FRAC};
use crate::integrate::{integrate, EndKind, IntegrateOptions, StepControl};

/// Default pseudo-orbit step times.
pub const DEFAULT_TIME_SAMPLES: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];

/// Default per-step tolerance for graph sampling. Image points only need to
/// be accurate well below eps, so this is looser than [`crate::DEFAULT_TOL`]
/// and saves an order of magnitude of work at large box counts.
pub const DEFAULT_GRAPH_TOL: f64 = 1e-6;

const MAX_TIME_SAMPLES: usize = 16;

/// An exact tiling of a region by axis-aligned boxes of (near-)equal edge
/// length. The requested edge length is snapped *down* per axis so the boxes
/// tile each edge exactly; the snap is recorded.
#[derive(Clone, Debug, Serialize)]
pub struct BoxCover {
    pub region: Region,
    /// Requested edge length.
    pub h_requested: f64,
    /// Snapped per-axis edge lengths actually used.
    pub h: [f64; 3],
    /// Boxes per axis.
    pub n: [usize; 3],
}

/// Build a cover with at most `max_boxes` boxes.
pub fn build_box_cover(region: Region, h: f64, max_boxes: usize) -> Result<BoxCover> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument("box edge length must be positive".into()));
    }
    let edges = region.edge_lengths();
    let mut n = [0usize; 3];
    let mut h_axis = [0.0f64; 3];
    for a in 0..3 {
        // Snap down: the count is the smallest integer covering the edge
        // with boxes no longer than h (a hair of tolerance forgives edges
        // that are floating-point-near multiples of h).
        let count = (edges[a] / h - 1e-9).ceil().max(1.0);
        n[a] = count as usize;
        h_axis[a] = edges[a] / count;
    }
    let total = n[0]
        .checked_mul(n[1])
        .and_then(|p| p.checked_mul(n[2]))
        .ok_or_else(|| Error::BudgetExceeded("box count overflows".into()))?;
    if total > max_boxes {
        return Err(Error::BudgetExceeded(format!(
            "cover needs {total} boxes but the budget is {max_boxes}"
        )));
    }
    Ok(BoxCover { region, h_requested: h, h: h_axis, n })
}

impl BoxCover {
    pub fn box_count(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn corner_count(&self) -> usize {
        (self.n[0] + 1) * (self.n[1] + 1) * (self.n[2] + 1)
    }

    pub fn box_id(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        (ix + self.n[0] * (iy + self.n[1] * iz)) as u32
    }

    pub fn box_coords(&self, b: u32) -> [usize; 3] {
        let b = b as usize;
        let ix = b % self.n[0];
        let iy = (b / self.n[0]) % self.n[1];
        let iz = b / (self.n[0] * self.n[1]);
        [ix, iy, iz]
    }

    /// The box containing `p`. Boundary points go to the lower-index box.
    pub fn box_of_point(&self, p: &Vector3<f64>) -> Option<u32> {
        if !self.region.contains(p) {
            return None;
        }
        let lo = self.region.min();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let u = (p[a] - lo[a]) / self.h[a];
            let i = (u.ceil() as i64 - 1).clamp(0, self.n[a] as i64 - 1);
            idx[a] = i as usize;
        }
        Some(self.box_id(idx[0], idx[1], idx[2]))
    }

    pub fn box_low(&self, b: u32) -> Vector3<f64> {
        let [ix, iy, iz] = self.box_coords(b);
        self.region.min()
            + Vector3::new(
                ix as f64 * self.h[0],
                iy as f64 * self.h[1],
                iz as f64 * self.h[2],
            )
    }

    pub fn box_center(&self, b: u32) -> Vector3<f64> {
        self.box_low(b) + 0.5 * Vector3::new(self.h[0], self.h[1], self.h[2])
    }

    pub fn box_diameter(&self) -> f64 {
        Vector3::new(self.h[0], self.h[1], self.h[2]).norm()
    }

    fn corner_id(&self, cx: usize, cy: usize, cz: usize) -> u32 {
        (cx + (self.n[0] + 1) * (cy + (self.n[1] + 1) * cz)) as u32
    }

    fn corner_point(&self, c: u32) -> Vector3<f64> {
        let c = c as usize;
        let cx = c % (self.n[0] + 1);
        let cy = (c / (self.n[0] + 1)) % (self.n[1] + 1);
        let cz = c / ((self.n[0] + 1) * (self.n[1] + 1));
        self.region.min()
            + Vector3::new(
                cx as f64 * self.h[0],
                cy as f64 * self.h[1],
                cz as f64 * self.h[2],
            )
    }

    /// The 8 corner sample ids of box `b`.
    fn box_corner_ids(&self, b: u32) -> [u32; 8] {
        let [ix, iy, iz] = self.box_coords(b);
        let mut out = [0u32; 8];
        for (s, item) in out.iter_mut().enumerate() {
            *item = self.corner_id(ix + (s & 1), iy + ((s >> 1) & 1), iz + (s >> 2));
        }
        out
    }
}

/// Knobs for graph construction beyond the spec-level (eps, time samples).
#[derive(Clone, Debug)]
pub struct GraphOptions {
    /// Integration tolerance for sample orbits.
    pub tol: f64,
    /// Cap on the per-box spread bound; `None` means the largest snapped box
    /// edge. Without a cap, strongly expanding spots would inflate their
    /// balls until the graph loses all locality.
    pub spread_cap: Option<f64>,
    /// Sample the 8 box corners in addition to the center.
    pub corners: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions { tol: DEFAULT_GRAPH_TOL, spread_cap: None, corners: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
enum SampleStatus {
    Ok = 0,
    /// The orbit left the (inflated) region before this time sample.
    Exit = 1,
    /// Integration failed for this time sample; skipped and counted.
    Failed = 2,
}

impl SampleStatus {
    fn from_u8(v: u8) -> SampleStatus {
        match v {
            0 => SampleStatus::Ok,
            1 => SampleStatus::Exit,
            _ => SampleStatus::Failed,
        }
    }
}

/// The box transition graph with SCC labels.
///
/// Edges are defined by the rule "eps-ball around a sample image, inflated
/// by the per-box spread, intersects the target box" and are enumerated on
/// demand from the stored images; [`BoxGraph::edge_list`] materializes them
/// when the census is small enough.
pub struct BoxGraph {
    pub cover: BoxCover,
    pub eps: f64,
    pub time_samples: Vec<f64>,
    opts: GraphOptions,

    /// Flattened corner images: corner-major, then time, then xyz.
    corner_images: Vec<f64>,
    corner_status: Vec<u8>,
    /// Flattened center images: box-major, then time, then xyz.
    center_images: Vec<f64>,
    center_status: Vec<u8>,
    /// Per (box, time) spread bound.
    spreads: Vec<f64>,

    /// SCC label per box: -1 for non-recurrent boxes, otherwise the class
    /// id (classes numbered by ascending smallest box id).
    pub scc: Vec<i64>,
    self_loop: Vec<bool>,

    /// Deduplicated box-to-box edge count.
    pub edge_count: u64,
    /// Deduplicated box-to-EXIT edge count.
    pub exit_edge_count: u64,
    pub scc_count: usize,
    pub recurrent_box_count: usize,
    pub failed_samples: usize,
    pub total_samples: usize,
    /// More than 1% of sample integrations failed.
    pub low_confidence: bool,
}

/// Summary statistics for reports.
#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub box_count: usize,
    pub edge_count: u64,
    pub exit_edge_count: u64,
    pub scc_count: usize,
    pub recurrent_box_count: usize,
    pub failed_samples: usize,
    pub total_samples: usize,
    pub low_confidence: bool,
    pub resolution_too_coarse: bool,
    pub eps: f64,
    pub h_requested: f64,
    pub h: [f64; 3],
    pub n: [usize; 3],
    pub time_samples: Vec<f64>,
}

pub fn build_transition_graph(
    field: &FieldSpec,
    cover: &BoxCover,
    eps: f64,
    time_samples: &[f64],
) -> Result<BoxGraph> {
    build_transition_graph_with(field, cover, eps, time_samples, &GraphOptions::default())
}

pub fn build_transition_graph_with(
    field: &FieldSpec,
    cover: &BoxCover,
    eps: f64,
    time_samples: &[f64],
    opts: &GraphOptions,
) -> Result<BoxGraph> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if time_samples.is_empty() || time_samples.len() > MAX_TIME_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need between 1 and {MAX_TIME_SAMPLES} time samples"
        )));
    }
    let mut times = time_samples.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    if times.first().copied().unwrap_or(0.0) < 1.0 || times.last().copied().unwrap_or(3.0) > 2.0 {
        return Err(Error::InvalidArgument("time samples must lie in [1, 2]".into()));
    }

    let mut graph = BoxGraph {
        cover: cover.clone(),
        eps,
        time_samples: times,
        opts: opts.clone(),
        corner_images: Vec::new(),
        corner_status: Vec::new(),
        center_images: Vec::new(),
        center_status: Vec::new(),
        spreads: Vec::new(),
        scc: Vec::new(),
        self_loop: Vec::new(),
        edge_count: 0,
        exit_edge_count: 0,
        scc_count: 0,
        recurrent_box_count: 0,
        failed_samples: 0,
        total_samples: 0,
        low_confidence: false,
    };
    let t0 = std::time::Instant::now();
    graph.integrate_samples(field)?;
    eprintln!("[phase] integrate: {:.1}s", t0.elapsed().as_secs_f64());
    let t1 = std::time::Instant::now();
    graph.census();
    eprintln!("[phase] census: {:.1}s", t1.elapsed().as_secs_f64());
    let t2 = std::time::Instant::now();
    graph.label_components();
    eprintln!("[phase] scc: {:.1}s", t2.elapsed().as_secs_f64());
    Ok(graph)
}

/// Outcome of flowing one sample point to every time sample.
struct SampleTrack {
    images: Vec<[f64; 3]>,
    status: Vec<u8>,
    /// Largest singular value of the cocycle at each time (centers only).
    sigma: Vec<f64>,
}

fn track_sample<const N: usize>(
    rhs: &impl Fn(&SVector<f64, N>) -> SVector<f64, N>,
    y0: SVector<f64, N>,
    position: impl Fn(&SVector<f64, N>) -> Vector3<f64> + Copy,
    sigma_of: impl Fn(&SVector<f64, N>) -> f64,
    times: &[f64],
    bounds: &Region,
    opts: &IntegrateOptions,
    want_sigma: bool,
) -> SampleTrack {
    let nt = times.len();
    let mut tr = SampleTrack {
        images: vec![[f64::NAN; 3]; nt],
        status: vec![SampleStatus::Failed as u8; nt],
        sigma: vec![0.0; nt],
    };
    if !bounds.contains(&position(&y0)) {
        for s in &mut tr.status {
            *s = SampleStatus::Exit as u8;
        }
        return tr;
    }
    let t_end = *times.last().expect("non-empty times");
    let mut next = 0usize;
    let run = integrate(rhs, y0, t_end, opts, |step| {
        while next < nt && times[next] <= step.t1 + 1e-12 {
            let y = step.eval(times[next].min(step.t1));
            let p = position(&y);
            tr.images[next] = [p.x, p.y, p.z];
            tr.status[next] = SampleStatus::Ok as u8;
            if want_sigma {
                tr.sigma[next] = sigma_of(&y);
            }
            next += 1;
        }
        if !bounds.contains(&position(&step.y1)) {
            return StepControl::Stop;
        }
        StepControl::Continue
    });
    match run.end {
        EndKind::Reached => {}
        EndKind::Stopped => {
            // Left the inflated region: remaining times are exits.
            for s in &mut tr.status[next..] {
                *s = SampleStatus::Exit as u8;
            }
        }
        EndKind::Underflow | EndKind::MaxSteps | EndKind::NonFinite => {
            // Remaining times stay Failed.
        }
    }
    tr
}

const PAR_CHUNK: usize = 2048;

impl BoxGraph {
    fn integrate_samples(&mut self, field: &FieldSpec) -> Result<()> {
        let nt = self.time_samples.len();
        let n_boxes = self.cover.box_count();
        let n_corners = if self.opts.corners { self.cover.corner_count() } else { 0 };
        let bounds = self.cover.region.inflate(REGION_INFLATE_FRAC);
        let int_opts = IntegrateOptions { tol: self.opts.tol, ..Default::default() };
        let halfdiam = 0.5 * self.cover.box_diameter();
        let cap = self
            .opts
            .spread_cap
            .unwrap_or_else(|| self.cover.h.iter().cloned().fold(0.0, f64::max));

        let mut failed = 0usize;

        // Corner samples: plain 3D orbits, integrated once per grid corner.
        if self.opts.corners {
            self.corner_images = vec![f64::NAN; n_corners * nt * 3];
            self.corner_status = vec![SampleStatus::Failed as u8; n_corners * nt];
            let chunks: Vec<usize> = (0..n_corners).step_by(PAR_CHUNK).collect();
            let rhs = |p: &Vector3<f64>| field.evaluate(p);
            let results: Vec<(Vec<f64>, Vec<u8>)> = chunks
                .par_iter()
                .map(|&start| {
                    let end = (start + PAR_CHUNK).min(n_corners);
                    let mut imgs = Vec::with_capacity((end - start) * nt * 3);
                    let mut stats = Vec::with_capacity((end - start) * nt);
                    for c in start..end {
                        let p0 = self.cover.corner_point(c as u32);
                        let tr = track_sample(
                            &rhs,
                            p0,
                            |y: &Vector3<f64>| *y,
                            |_| 0.0,
                            &self.time_samples,
                            &bounds,
                            &int_opts,
                            false,
                        );
                        for k in 0..nt {
                            imgs.extend_from_slice(&tr.images[k]);
                            stats.push(tr.status[k]);
                        }
                    }
                    (imgs, stats)
                })
                .collect();
            let (mut oi, mut os) = (0, 0);
            for (imgs, stats) in results {
                self.corner_images[oi..oi + imgs.len()].copy_from_slice(&imgs);
                self.corner_status[os..os + stats.len()].copy_from_slice(&stats);
                oi += imgs.len();
                os += stats.len();
            }
            failed += self.corner_status.iter().filter(|&&s| s == SampleStatus::Failed as u8).count();
        }

        // Center samples carry the variational state for the spread bound.
        self.center_images = vec![f64::NAN; n_boxes * nt * 3];
        self.center_status = vec![SampleStatus::Failed as u8; n_boxes * nt];
        self.spreads = vec![cap; n_boxes * nt];
        {
            let chunks: Vec<usize> = (0..n_boxes).step_by(PAR_CHUNK).collect();
            let rhs = augmented_rhs(field);
            let results: Vec<(Vec<f64>, Vec<u8>, Vec<f64>)> = chunks
                .par_iter()
                .map(|&start| {
                    let end = (start + PAR_CHUNK).min(n_boxes);
                    let mut imgs = Vec::with_capacity((end - start) * nt * 3);
                    let mut stats = Vec::with_capacity((end - start) * nt);
                    let mut spreads = Vec::with_capacity((end - start) * nt);
                    for b in start..end {
                        let p0 = self.cover.box_center(b as u32);
                        let y0 = pack(&p0, &Matrix3::identity());
                        let tr = track_sample(
                            &rhs,
                            y0,
                            |y: &SVector<f64, 12>| position_of(y),
                            |y: &SVector<f64, 12>| {
                                let (_, m) = crate::flow::unpack(y);
                                m.singular_values().max()
                            },
                            &self.time_samples,
                            &bounds,
                            &int_opts,
                            true,
                        );
                        for k in 0..nt {
                            imgs.extend_from_slice(&tr.images[k]);
                            stats.push(tr.status[k]);
                            let spread = if tr.status[k] == SampleStatus::Ok as u8 {
                                (tr.sigma[k] * halfdiam).min(cap)
                            } else {
                                cap
                            };
                            spreads.push(spread);
                        }
                    }
                    (imgs, stats, spreads)
                })
                .collect();
            let (mut oi, mut os) = (0, 0);
            for (imgs, stats, spreads) in results {
                self.center_images[oi..oi + imgs.len()].copy_from_slice(&imgs);
                self.center_status[os..os + stats.len()].copy_from_slice(&stats);
                self.spreads[os..os + spreads.len()].copy_from_slice(&spreads);
                oi += imgs.len();
                os += stats.len();
            }
            failed += self.center_status.iter().filter(|&&s| s == SampleStatus::Failed as u8).count();
        }

        self.failed_samples = failed;
        self.total_samples = (n_corners + n_boxes) * nt;
        self.low_confidence = failed * 100 > self.total_samples;
        Ok(())
    }

    pub fn box_count(&self) -> usize {
        self.cover.box_count()
    }

    /// Node id of the distinguished EXIT node.
    pub fn exit_node(&self) -> u32 {
        self.box_count() as u32
    }

    fn samples_per_box(&self) -> usize {
        if self.opts.corners {
            9
        } else {
            1
        }
    }

    /// Status and image of sample `s` of box `b` at time index `k`.
    /// Samples 0..8 are corners, the last one is the center.
    fn sample(&self, b: u32, s: usize, k: usize) -> (SampleStatus, Vector3<f64>) {
        let nt = self.time_samples.len();
        let (status, images, row) = if self.opts.corners && s < 8 {
            let c = self.cover.box_corner_ids(b)[s] as usize;
            (&self.corner_status, &self.corner_images, c)
        } else {
            (&self.center_status, &self.center_images, b as usize)
        };
        let st = SampleStatus::from_u8(status[row * nt + k]);
        let off = (row * nt + k) * 3;
        (st, Vector3::new(images[off], images[off + 1], images[off + 2]))
    }

    fn spread(&self, b: u32, k: usize) -> f64 {
        self.spreads[b as usize * self.time_samples.len() + k]
    }

    /// Visit every edge target of box `b`, duplicates included.
    fn for_each_target_raw(&self, b: u32, mut visit: impl FnMut(u32)) {
        let mut cur = NeighborCursor::new();
        while let Some(d) = cur.next(self, b) {
            visit(d);
        }
    }

    /// Deduplicated, ascending out-neighbors of `b` (EXIT node included).
    pub fn out_neighbors(&self, b: u32) -> Vec<u32> {
        let mut v = Vec::new();
        self.for_each_target_raw(b, |d| v.push(d));
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Census pass: exact deduplicated edge counts and self-loop flags via
    /// per-source stamping.
    fn census(&mut self) {
        let n = self.box_count();
        let mut stamp: Vec<u32> = vec![u32::MAX; n + 1];
        let mut self_loop = vec![false; n];
        let mut edge_count = 0u64;
        let mut exit_edge_count = 0u64;
        let exit = self.exit_node();
        for b in 0..n as u32 {
            let mut cur = NeighborCursor::new();
            while let Some(d) = cur.next(self, b) {
                if stamp[d as usize] != b {
                    stamp[d as usize] = b;
                    if d == exit {
                        exit_edge_count += 1;
                    } else {
                        edge_count += 1;
                        if d == b {
                            self_loop[b as usize] = true;
                        }
                    }
                }
            }
        }
        self.edge_count = edge_count;
        self.exit_edge_count = exit_edge_count;
        self.self_loop = self_loop;
    }

    /// Tarjan SCC over boxes + EXIT, then relabel: only non-trivial
    /// components (size >= 2 or self-loop) count as recurrent classes,
    /// numbered by ascending smallest box id; everything else gets -1.
    fn label_components(&mut self) {
        let n = self.box_count();
        let comp = tarjan_components(self);
        let n_comp = comp.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut size = vec![0u32; n_comp];
        for b in 0..n {
            size[comp[b] as usize] += 1;
        }

        // Smallest box id per component, for deterministic class numbering.
        let mut first_box = vec![u32::MAX; n_comp];
        for b in (0..n).rev() {
            first_box[comp[b] as usize] = b as u32;
        }
        let mut recurrent: Vec<(u32, u32)> = Vec::new(); // (first box, comp id)
        for c in 0..n_comp {
            if first_box[c] == u32::MAX {
                continue; // the EXIT node's own (box-free) component
            }
            if size[c] >= 2 || (size[c] == 1 && self.self_loop[first_box[c] as usize]) {
                recurrent.push((first_box[c], c as u32));
            }
        }
        recurrent.sort_unstable();
        let mut class_of_comp = vec![-1i64; n_comp];
        for (class_id, &(_, c)) in recurrent.iter().enumerate() {
            class_of_comp[c as usize] = class_id as i64;
        }
        self.scc = (0..n).map(|b| class_of_comp[comp[b] as usize]).collect();
        self.scc_count = recurrent.len();
        self.recurrent_box_count = self.scc.iter().filter(|&&c| c >= 0).count();
    }

    /// Boxes in non-trivial SCCs, ascending.
    pub fn chain_recurrent_boxes(&self) -> Vec<u32> {
        (0..self.box_count() as u32).filter(|&b| self.scc[b as usize] >= 0).collect()
    }

    /// The SCC (as a box set) of the box containing `x`.
    pub fn chain_class_of(&self, x: &Vector3<f64>) -> Result<Vec<u32>> {
        let b = self.cover.box_of_point(x).ok_or_else(|| {
            Error::InvalidArgument("point lies outside the covered region".into())
        })?;
        let class = self.scc[b as usize];
        if class < 0 {
            return Err(Error::NotRecurrent { box_id: b as usize });
        }
        Ok(self.class_boxes(class))
    }

    /// All boxes with the given class label, ascending.
    pub fn class_boxes(&self, class: i64) -> Vec<u32> {
        (0..self.box_count() as u32).filter(|&b| self.scc[b as usize] == class).collect()
    }

    /// Class labels in use, ascending.
    pub fn class_labels(&self) -> Vec<i64> {
        (0..self.scc_count as i64).collect()
    }

    /// The boxes of one class as a queryable set.
    pub fn class_box_set(&self, class: i64) -> BoxSet {
        BoxSet::new(self.cover.clone(), self.class_boxes(class))
    }

    /// Materialize the deduplicated edge list (EXIT encoded as
    /// [`BoxGraph::exit_node`]), sorted by (src, dst). Refuses when the
    /// census says the list would be enormous.
    pub fn edge_list(&self) -> Result<Vec<(u32, u32)>> {
        const MAX_MATERIALIZED: u64 = 20_000_000;
        let total = self.edge_count + self.exit_edge_count;
        if total > MAX_MATERIALIZED {
            return Err(Error::BudgetExceeded(format!(
                "{total} edges exceed the materialization cap {MAX_MATERIALIZED}"
            )));
        }
        let mut edges = Vec::with_capacity(total as usize);
        for b in 0..self.box_count() as u32 {
            let mut outs = self.out_neighbors(b);
            edges.extend(outs.drain(..).map(|d| (b, d)));
        }
        Ok(edges)
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            box_count: self.box_count(),
            edge_count: self.edge_count,
            exit_edge_count: self.exit_edge_count,
            scc_count: self.scc_count,
            recurrent_box_count: self.recurrent_box_count,
            failed_samples: self.failed_samples,
            total_samples: self.total_samples,
            low_confidence: self.low_confidence,
            resolution_too_coarse: self.cover.n.iter().any(|&c| c == 1),
            eps: self.eps,
            h_requested: self.cover.h_requested,
            h: self.cover.h,
            n: self.cover.n,
            time_samples: self.time_samples.clone(),
        }
    }
}

/// A set of boxes from one cover, with O(1) membership and point queries.
/// Used to hand a chain class to the certificate checkers.
#[derive(Clone, Debug)]
pub struct BoxSet {
    pub cover: BoxCover,
    ids: Vec<u32>,
    bits: Vec<u64>,
}

impl BoxSet {
    pub fn new(cover: BoxCover, mut ids: Vec<u32>) -> BoxSet {
        ids.sort_unstable();
        ids.dedup();
        let mut bits = vec![0u64; cover.box_count().div_ceil(64)];
        for &b in &ids {
            bits[b as usize / 64] |= 1 << (b % 64);
        }
        BoxSet { cover, ids, bits }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains_box(&self, b: u32) -> bool {
        (b as usize) < self.cover.box_count() && self.bits[b as usize / 64] & (1 << (b % 64)) != 0
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        self.cover.box_of_point(p).is_some_and(|b| self.contains_box(b))
    }

    /// Membership of `p`'s box or any box within Chebyshev distance `pad`
    /// (in box units). Points slightly outside the region get virtual
    /// lattice coordinates, so near-boundary queries still see their
    /// neighbors. This is the "inflated by one box" test of the strong
    /// stable heuristic with pad = 1.
    pub fn contains_point_padded(&self, p: &Vector3<f64>, pad: i64) -> bool {
        let lo = self.cover.region.min();
        let mut c = [0i64; 3];
        for a in 0..3 {
            let u = (p[a] - lo[a]) / self.cover.h[a];
            if !u.is_finite() || u.abs() > 1e12 {
                return false;
            }
            c[a] = u.ceil() as i64 - 1;
        }
        let n = self.cover.n;
        for dz in -pad..=pad {
            for dy in -pad..=pad {
                for dx in -pad..=pad {
                    let (ix, iy, iz) = (c[0] + dx, c[1] + dy, c[2] + dz);
                    if ix < 0 || iy < 0 || iz < 0 {
                        continue;
                    }
                    if ix >= n[0] as i64 || iy >= n[1] as i64 || iz >= n[2] as i64 {
                        continue;
                    }
                    if self.contains_box(self.cover.box_id(ix as usize, iy as usize, iz as usize)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Centroid of the member box centers.
    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.ids.is_empty() {
            return None;
        }
        let mut acc = Vector3::zeros();
        for &b in &self.ids {
            acc += self.cover.box_center(b);
        }
        Some(acc / self.ids.len() as f64)
    }
}

/// Resumable out-neighbor enumeration for one source box: walks the
/// (sample, time) slots, and inside each slot the lattice cells its inflated
/// eps-ball can touch. Small enough to sit in a DFS stack frame.
struct NeighborCursor {
    slot: u32,
    active: bool,
    exit_pending: bool,
    ball: [f64; 3],
    r2: f64,
    lo: [u32; 3],
    hi: [u32; 3],
    cur: [u32; 3],
}

impl NeighborCursor {
    fn new() -> Self {
        NeighborCursor {
            slot: 0,
            active: false,
            exit_pending: false,
            ball: [0.0; 3],
            r2: 0.0,
            lo: [0; 3],
            hi: [0; 3],
            cur: [0; 3],
        }
    }

    fn next(&mut self, g: &BoxGraph, b: u32) -> Option<u32> {
        let nt = g.time_samples.len() as u32;
        let slots = g.samples_per_box() as u32 * nt;
        loop {
            if self.exit_pending {
                self.exit_pending = false;
                return Some(g.exit_node());
            }
            if self.active {
                while self.cur[2] <= self.hi[2] {
                    let cell = self.cur;
                    // Advance odometer.
                    if self.cur[0] < self.hi[0] {
                        self.cur[0] += 1;
                    } else {
                        self.cur[0] = self.lo[0];
                        if self.cur[1] < self.hi[1] {
                            self.cur[1] += 1;
                        } else {
                            self.cur[1] = self.lo[1];
                            self.cur[2] += 1;
                        }
                    }
                    if self.cell_in_ball(g, cell) {
                        return Some(g.cover.box_id(
                            cell[0] as usize,
                            cell[1] as usize,
                            cell[2] as usize,
                        ));
                    }
                }
                self.active = false;
                self.slot += 1;
            }
            if self.slot >= slots {
                return None;
            }
            let s = (self.slot / nt) as usize;
            let k = (self.slot % nt) as usize;
            // Map enumeration order so the center is the last sample whether
            // or not corners are on.
            let s = if g.opts.corners { s } else { 8 };
            let (status, p) = g.sample(b, s, k);
            match status {
                SampleStatus::Failed => {
                    self.slot += 1;
                }
                SampleStatus::Exit => {
                    self.slot += 1;
                    return Some(g.exit_node());
                }
                SampleStatus::Ok => {
                    let r = g.eps + g.spread(b, k);
                    if self.setup_ball(g, &p, r) {
                        self.active = true;
                    } else {
                        self.slot += 1;
                    }
                }
            }
        }
    }

    /// Prepare lattice iteration for ball(p, r); returns false if no cells
    /// are in range. Sets `exit_pending` when the ball pokes outside the
    /// region.
    fn setup_ball(&mut self, g: &BoxGraph, p: &Vector3<f64>, r: f64) -> bool {
        let lo_pt = g.cover.region.min();
        let hi_pt = g.cover.region.max();
        let mut empty = false;
        for a in 0..3 {
            if p[a] - r < lo_pt[a] || p[a] + r > hi_pt[a] {
                self.exit_pending = true;
            }
            let lo_i = ((p[a] - r - lo_pt[a]) / g.cover.h[a]).floor() as i64;
            let hi_i = ((p[a] + r - lo_pt[a]) / g.cover.h[a]).floor() as i64;
            let lo_i = lo_i.clamp(0, g.cover.n[a] as i64 - 1);
            let hi_i = hi_i.clamp(-1, g.cover.n[a] as i64 - 1);
            if hi_i < lo_i || (p[a] + r) < lo_pt[a] || (p[a] - r) > hi_pt[a] {
                empty = true;
            }
            self.lo[a] = lo_i.max(0) as u32;
            self.hi[a] = hi_i.max(0) as u32;
        }
        if empty {
            return false;
        }
        self.ball = [p.x, p.y, p.z];
        self.r2 = r * r;
        self.cur = self.lo;
        true
    }

    fn cell_in_ball(&self, g: &BoxGraph, cell: [u32; 3]) -> bool {
        let lo_pt = g.cover.region.min();
        let mut d2 = 0.0;
        for a in 0..3 {
            let b_lo = lo_pt[a] + cell[a] as f64 * g.cover.h[a];
            let b_hi = b_lo + g.cover.h[a];
            let d = if self.ball[a] < b_lo {
                b_lo - self.ball[a]
            } else if self.ball[a] > b_hi {
                self.ball[a] - b_hi
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2 <= self.r2
    }
}

/// Iterative Tarjan over the on-demand neighbor enumeration (boxes plus the
/// EXIT sink). Returns a component id per node.
fn tarjan_components(g: &BoxGraph) -> Vec<u32> {
    let n = g.box_count() + 1; // + EXIT
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut lowlink = vec![UNSET; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut frames: Vec<(u32, NeighborCursor)> = Vec::new();
    let mut next_index: u32 = 0;
    let mut next_comp: u32 = 0;
    let exit = g.exit_node();

    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        index[root as usize] = next_index;
        lowlink[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        frames.push((root, NeighborCursor::new()));

        while let Some((v, cursor)) = frames.last_mut() {
            let v = *v;
            // EXIT has no outgoing edges; its cursor must not dereference
            // sample storage.
            let step = if v == exit { None } else { cursor.next(g, v) };
            match step {
                Some(w) => {
                    let wi = w as usize;
                    if index[wi] == UNSET {
                        index[wi] = next_index;
                        lowlink[wi] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[wi] = true;
                        frames.push((w, NeighborCursor::new()));
                    } else if on_stack[wi] {
                        lowlink[v as usize] = lowlink[v as usize].min(index[wi]);
                    }
                }
                None => {
                    frames.pop();
                    if let Some((parent, _)) = frames.last() {
                        let p = *parent as usize;
                        lowlink[p] = lowlink[p].min(lowlink[v as usize]);
                    }
                    if lowlink[v as usize] == index[v as usize] {
                        loop {
                            let w = stack.pop().expect("tarjan stack underflow");
                            on_stack[w as usize] = false;
                            comp[w as usize] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
    }
    comp
}
