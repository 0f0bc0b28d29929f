//! Conservation diagnostics and transport distances.
//!
//! Energy splits into particle kinetic, external, and interaction parts plus
//! the two wave quadratic forms; the total is conserved by the coupled flow.
//! Distribution distances use the 1-Wasserstein metric: exact CDF integration
//! in one dimension, and a sliced average over 64 fixed directions on phase
//! space. An independent greedy-transport solver (optimal for ordered costs)
//! backs the CDF implementation in tests.

use crate::grid::{PhaseGrid, PhaseSpaceState};
use crate::potential::PotentialField;
use crate::{Error, Result};
use rayon::prelude::*;

/// Number of projection directions used by the sliced distance.
pub const SLICED_DIRECTIONS: usize = 64;

// ---------------------------------------------------------------------------
// Energies
// ---------------------------------------------------------------------------

/// `∫ f·v²/2 dx dv` (cell-sum quadrature).
pub fn kinetic_energy(f: &PhaseSpaceState) -> f64 {
    let area = f.grid.cell_area();
    let mut acc = 0.0;
    for i in 0..f.grid.x.len {
        for j in 0..f.grid.v.len {
            let v = f.grid.v.point(j);
            acc += f.values[[i, j]] * 0.5 * v * v;
        }
    }
    acc * area
}

/// `∫ f·V(x) dx dv` for a pointwise external potential.
pub fn external_energy<V: Fn(f64) -> f64>(f: &PhaseSpaceState, v_ext: V) -> f64 {
    let area = f.grid.cell_area();
    let mut acc = 0.0;
    for i in 0..f.grid.x.len {
        let vx = v_ext(f.grid.x.point(i));
        let mut row = 0.0;
        for j in 0..f.grid.v.len {
            row += f.values[[i, j]];
        }
        acc += vx * row;
    }
    acc * area
}

/// `∫ f·Φ dx dv` — the coupling energy, counted once.
pub fn interaction_energy(f: &PhaseSpaceState, phi: &PotentialField) -> f64 {
    let area = f.grid.cell_area();
    let mut acc = 0.0;
    for i in 0..f.grid.x.len {
        let p = phi.value_at(f.grid.x.point(i));
        let mut row = 0.0;
        for j in 0..f.grid.v.len {
            row += f.values[[i, j]];
        }
        acc += p * row;
    }
    acc * area
}

/// `∫ f·v dx dv`.
pub fn momentum(f: &PhaseSpaceState) -> f64 {
    let area = f.grid.cell_area();
    let mut acc = 0.0;
    for i in 0..f.grid.x.len {
        for j in 0..f.grid.v.len {
            acc += f.values[[i, j]] * f.grid.v.point(j);
        }
    }
    acc * area
}

/// One diagnostics record per output time.
#[derive(Clone, Debug)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub linf: f64,
    pub l2: f64,
    /// second phase-space moment `∫ (x² + v²) f`
    pub m2: f64,
    pub kinetic: f64,
    pub external: f64,
    pub interaction: f64,
    /// raw `∫∫|∂_tΨ|²` (zero when the wave field is not co-integrated)
    pub wave_kinetic: f64,
    /// raw `∫∫|∇_yΨ|²`
    pub wave_elastic: f64,
    /// whether the wave parts are genuine (memory-only runs cannot supply them)
    pub wave_included: bool,
    /// weights (w_k, w_e) so that total = kinetic + external
    /// + interaction_weight·interaction + w_k·wave_kinetic + w_e·wave_elastic
    pub wave_weights: (f64, f64),
    /// 1 for the wave-coupled energy (coupling counted once), ½ for the
    /// quadratic self-interaction of the limit dynamics
    pub interaction_weight: f64,
    pub total: f64,
}

impl DiagnosticsRow {
    pub fn new(
        t: f64,
        f: &PhaseSpaceState,
        v_ext: impl Fn(f64) -> f64,
        phi: &PotentialField,
        interaction_weight: f64,
        wave_parts: Option<(f64, f64)>,
        wave_weights: (f64, f64),
    ) -> Self {
        let kinetic = kinetic_energy(f);
        let external = external_energy(f, v_ext);
        let interaction = interaction_energy(f, phi);
        let (wk, we) = wave_parts.unwrap_or((0.0, 0.0));
        let total = kinetic
            + external
            + interaction_weight * interaction
            + wave_weights.0 * wk
            + wave_weights.1 * we;
        let (mx2, mv2) = f.moment(2);
        DiagnosticsRow {
            t,
            mass: f.mass(),
            momentum: momentum(f),
            linf: f.linf(),
            l2: f.lp_norm(2.0),
            m2: mx2 + mv2,
            kinetic,
            external,
            interaction,
            wave_kinetic: wk,
            wave_elastic: we,
            wave_included: wave_parts.is_some(),
            wave_weights,
            interaction_weight,
            total,
        }
    }

    pub fn csv_header() -> &'static str {
        "t,mass,momentum,linf,l2,m2,kinetic,external,interaction,wave_kinetic,wave_elastic,total"
    }

    /// 17-significant-digit CSV line (round-trips f64 exactly).
    pub fn csv_line(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t,
            self.mass,
            self.momentum,
            self.linf,
            self.l2,
            self.m2,
            self.kinetic,
            self.external,
            self.interaction,
            self.wave_kinetic,
            self.wave_elastic,
            self.total
        )
    }
}

// ---------------------------------------------------------------------------
// 1-Wasserstein distances
// ---------------------------------------------------------------------------

fn check_masses(ma: f64, mb: f64) -> Result<()> {
    if !(ma > 0.0) || !(mb > 0.0) {
        return Err(Error::UndefinedDistance(
            "distance needs strictly positive masses".into(),
        ));
    }
    // Both sides are normalized by their own mass before the CDFs are
    // compared, so sub-tolerance drift (semi-Lagrangian steps conserve mass
    // only approximately, and two runs drift independently) is renormalized
    // away; a larger mismatch signals measures that genuinely differ and has
    // no well-defined W₁.
    if (ma - mb).abs() > 1e-3 * ma.max(mb) {
        return Err(Error::UndefinedDistance(format!(
            "mass mismatch: {ma} vs {mb}"
        )));
    }
    Ok(())
}

/// Exact `W₁` between two nonnegative weighted point sets on the line via the
/// CDF integral `∫|F_a − F_b|`. Both sets must carry (nearly) the same mass;
/// negative weights are clamped to zero.
pub fn w1_weighted_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    let clean = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = pts
            .iter()
            .map(|&(x, w)| (x, w.max(0.0)))
            .filter(|&(x, w)| w > 0.0 && x.is_finite())
            .collect();
        v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        v
    };
    let pa = clean(a);
    let pb = clean(b);
    let ma: f64 = pa.iter().map(|p| p.1).sum();
    let mb: f64 = pb.iter().map(|p| p.1).sum();
    check_masses(ma, mb)?;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut last_x = f64::NAN;
    let mut dist = 0.0;
    while ia < pa.len() || ib < pb.len() {
        let xa = pa.get(ia).map_or(f64::INFINITY, |p| p.0);
        let xb = pb.get(ib).map_or(f64::INFINITY, |p| p.0);
        let x = xa.min(xb);
        if last_x.is_finite() {
            dist += (x - last_x) * (fa - fb).abs();
        }
        if xa <= xb {
            fa += pa[ia].1 / ma;
            ia += 1;
        } else {
            fb += pb[ib].1 / mb;
            ib += 1;
        }
        last_x = x;
    }
    Ok(dist)
}

/// Independent oracle: solves the 1D optimal-transport problem by greedy
/// pairing in sorted order (optimal for the |x−y| cost) and returns the
/// transport cost. Used to cross-check [`w1_weighted_points`].
pub fn w1_transport_greedy(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    let clean = |pts: &[(f64, f64)]| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = pts
            .iter()
            .map(|&(x, w)| (x, w.max(0.0)))
            .filter(|&(x, w)| w > 0.0 && x.is_finite())
            .collect();
        v.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        v
    };
    let pa = clean(a);
    let pb = clean(b);
    let ma: f64 = pa.iter().map(|p| p.1).sum();
    let mb: f64 = pb.iter().map(|p| p.1).sum();
    check_masses(ma, mb)?;
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut rem_a = pa.first().map_or(0.0, |p| p.1 / ma);
    let mut rem_b = pb.first().map_or(0.0, |p| p.1 / mb);
    let mut cost = 0.0;
    while ia < pa.len() && ib < pb.len() {
        let flow = rem_a.min(rem_b);
        cost += flow * (pa[ia].0 - pb[ib].0).abs();
        rem_a -= flow;
        rem_b -= flow;
        if rem_a <= 1e-18 {
            ia += 1;
            rem_a = pa.get(ia).map_or(0.0, |p| p.1 / ma);
        }
        if rem_b <= 1e-18 {
            ib += 1;
            rem_b = pb.get(ib).map_or(0.0, |p| p.1 / mb);
        }
    }
    Ok(cost)
}

/// 1D `W₁` between two macroscopic densities on a shared grid.
pub fn w1_density(a: &crate::grid::MacroDensity, b: &crate::grid::MacroDensity) -> Result<f64> {
    if !a.grid.approx_eq(&b.grid) {
        return Err(Error::GridMismatch("densities on different grids".into()));
    }
    let h = a.grid.step;
    let pa: Vec<(f64, f64)> = (0..a.grid.len)
        .map(|i| (a.grid.point(i), a.values[i] * h))
        .collect();
    let pb: Vec<(f64, f64)> = (0..b.grid.len)
        .map(|i| (b.grid.point(i), b.values[i] * h))
        .collect();
    w1_weighted_points(&pa, &pb)
}

/// Precomputed projection orders for the sliced distance on a fixed phase
/// grid: direction `θ_k = kπ/64`, projection `x·cosθ + v·sinθ`.
pub struct SlicedW1Plan {
    grid: PhaseGrid,
    /// per direction: cell indices (row-major i·nv+j) in ascending projection
    orders: Vec<Vec<u32>>,
    /// per direction: the matching sorted projection values
    projections: Vec<Vec<f64>>,
}

impl SlicedW1Plan {
    pub fn new(grid: &PhaseGrid) -> Self {
        let nx = grid.x.len;
        let nv = grid.v.len;
        let dirs: Vec<(f64, f64)> = (0..SLICED_DIRECTIONS)
            .map(|k| {
                let theta = std::f64::consts::PI * k as f64 / SLICED_DIRECTIONS as f64;
                (theta.cos(), theta.sin())
            })
            .collect();
        let pairs: Vec<(Vec<u32>, Vec<f64>)> = dirs
            .par_iter()
            .map(|&(cx, sv)| {
                let mut proj: Vec<(f64, u32)> = Vec::with_capacity(nx * nv);
                for i in 0..nx {
                    let px = cx * grid.x.point(i);
                    for j in 0..nv {
                        proj.push((px + sv * grid.v.point(j), (i * nv + j) as u32));
                    }
                }
                proj.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let order: Vec<u32> = proj.iter().map(|p| p.1).collect();
                let values: Vec<f64> = proj.iter().map(|p| p.0).collect();
                (order, values)
            })
            .collect();
        let (orders, projections) = pairs.into_iter().unzip();
        SlicedW1Plan {
            grid: *grid,
            orders,
            projections,
        }
    }

    /// Mean over directions of the 1D `W₁` between the projected states.
    pub fn distance(&self, a: &PhaseSpaceState, b: &PhaseSpaceState) -> Result<f64> {
        if a.grid != self.grid || b.grid != self.grid {
            return Err(Error::GridMismatch(
                "sliced distance: state grid differs from plan grid".into(),
            ));
        }
        let wa: Vec<f64> = a.values.iter().map(|&v| v.max(0.0)).collect();
        let wb: Vec<f64> = b.values.iter().map(|&v| v.max(0.0)).collect();
        let ma: f64 = wa.iter().sum();
        let mb: f64 = wb.iter().sum();
        check_masses(ma, mb)?;
        // collected per direction, then summed serially: the float result
        // must not depend on rayon's reduction-tree shape
        let per_direction: Vec<f64> = self
            .orders
            .par_iter()
            .zip(&self.projections)
            .map(|(order, proj)| {
                let mut gap = 0.0f64;
                let mut dist = 0.0;
                let mut last = proj[0];
                for (idx, &cell) in order.iter().enumerate() {
                    let p = proj[idx];
                    dist += (p - last) * gap.abs();
                    gap += wa[cell as usize] / ma - wb[cell as usize] / mb;
                    last = p;
                }
                dist
            })
            .collect();
        Ok(per_direction.iter().sum::<f64>() / SLICED_DIRECTIONS as f64)
    }

    /// Sliced distance between a weighted particle cloud and a grid state.
    pub fn distance_particles(
        &self,
        xs: &[f64],
        vs: &[f64],
        state: &PhaseSpaceState,
    ) -> Result<f64> {
        if xs.len() != vs.len() || xs.is_empty() {
            return Err(Error::InvalidParameter(
                "particle cloud must be nonempty with matching coordinate lengths".into(),
            ));
        }
        let area = self.grid.cell_area();
        // weight the cloud by the clamped positive mass of the grid state —
        // the gridded side drops interpolation undershoot below zero, so the
        // cloud must represent the same (clamped) measure
        let positive_mass: f64 = state.values.iter().map(|&v| v.max(0.0)).sum::<f64>() * area;
        let cloud_mass = positive_mass / xs.len() as f64;
        // per-direction results land in fixed slots; the final sum is serial
        // so the value is independent of scheduling
        let per_direction: Vec<Result<f64>> = (0..SLICED_DIRECTIONS)
            .into_par_iter()
            .map(|k| {
                let theta = std::f64::consts::PI * k as f64 / SLICED_DIRECTIONS as f64;
                let (s, c) = theta.sin_cos();
                let cloud: Vec<(f64, f64)> = xs
                    .iter()
                    .zip(vs)
                    .map(|(&x, &v)| (c * x + s * v, cloud_mass))
                    .collect();
                let nv = self.grid.v.len;
                let gridded: Vec<(f64, f64)> = self.orders[k]
                    .iter()
                    .zip(&self.projections[k])
                    .map(|(&cell, &p)| {
                        (p, state.values[[cell as usize / nv, cell as usize % nv]] * area)
                    })
                    .collect();
                w1_weighted_points(&cloud, &gridded)
            })
            .collect();
        let mut total = 0.0;
        for r in per_direction {
            total += r?;
        }
        Ok(total / SLICED_DIRECTIONS as f64)
    }
}

/// Convenience wrapper building a fresh plan.
pub fn sliced_w1(a: &PhaseSpaceState, b: &PhaseSpaceState) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch(
            "sliced distance: states on different grids".into(),
        ));
    }
    SlicedW1Plan::new(&a.grid).distance(a, b)
}
