//! Earth Mover's Distance between unit-mass histograms on shared bins.
//!
//! Ground distance is the absolute difference of bin centers, so distances
//! come out in the units of the binned values (cosine similarity here).
//! [`emd_1d`] uses the closed form for one-dimensional supports,
//! `sum_i |CDF_a(i) - CDF_b(i)| * width`. [`emd_transport`] solves the same
//! balanced transportation problem by monotone (north-west corner) matching,
//! which is optimal for convex costs on the line, and returns the plan; it is
//! kept as an independent check on the closed form.

use thiserror::Error;

use crate::histogram::{BinEdges, Histogram};

/// Allowed deviation of a histogram's total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmdError {
    #[error("histograms use different bin edges ({a:?} vs {b:?})")]
    EdgesMismatch { a: BinEdges, b: BinEdges },
    #[error("unbalanced problem: masses {a} and {b} are not both 1")]
    Infeasible { a: f64, b: f64 },
}

impl EmdError {
    pub fn code(&self) -> &'static str {
        match self {
            EmdError::EdgesMismatch { .. } => "edges-mismatch",
            EmdError::Infeasible { .. } => "infeasible",
        }
    }
}

fn check_edges(a: &Histogram, b: &Histogram) -> Result<(), EmdError> {
    if a.edges() != b.edges() {
        return Err(EmdError::EdgesMismatch {
            a: *a.edges(),
            b: *b.edges(),
        });
    }
    Ok(())
}

/// EMD in bin-index units (unit ground distance between adjacent bins).
pub fn emd_1d_bins(a: &Histogram, b: &Histogram) -> Result<f64, EmdError> {
    check_edges(a, b)?;
    let n = a.mass().len();
    let mut cdf_a = 0.0;
    let mut cdf_b = 0.0;
    let mut total = 0.0;
    // the final CDF difference is zero for unit masses
    for (ma, mb) in a.mass()[..n - 1].iter().zip(&b.mass()[..n - 1]) {
        cdf_a += ma;
        cdf_b += mb;
        total += (cdf_a - cdf_b).abs();
    }
    Ok(total)
}

/// 1-Wasserstein distance between two histograms sharing edges, in the
/// units of the binned values.
pub fn emd_1d(a: &Histogram, b: &Histogram) -> Result<f64, EmdError> {
    Ok(emd_1d_bins(a, b)? * a.edges().width())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub from: usize,
    pub to: usize,
    pub mass: f64,
}

/// Feasible transport of `a`'s mass onto `b`'s with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub flows: Vec<Flow>,
    pub cost: f64,
}

impl TransportPlan {
    /// Mass leaving each source bin.
    pub fn row_sums(&self, nbins: usize) -> Vec<f64> {
        let mut sums = vec![0.0; nbins];
        for f in &self.flows {
            sums[f.from] += f.mass;
        }
        sums
    }

    /// Mass arriving at each destination bin.
    pub fn column_sums(&self, nbins: usize) -> Vec<f64> {
        let mut sums = vec![0.0; nbins];
        for f in &self.flows {
            sums[f.to] += f.mass;
        }
        sums
    }
}

/// Optimal transport between `a` and `b` by monotone matching of their
/// cumulative masses. Returns the optimal cost and the plan realizing it.
pub fn emd_transport(a: &Histogram, b: &Histogram) -> Result<(f64, TransportPlan), EmdError> {
    check_edges(a, b)?;
    let (ta, tb) = (a.total_mass(), b.total_mass());
    if (ta - 1.0).abs() > MASS_TOLERANCE || (tb - 1.0).abs() > MASS_TOLERANCE {
        return Err(EmdError::Infeasible { a: ta, b: tb });
    }
    let edges = a.edges();
    let n = edges.nbins();
    let (ma, mb) = (a.mass(), b.mass());

    let mut flows = Vec::new();
    let mut cost = 0.0;
    let (mut i, mut j) = (0, 0);
    let (mut left_a, mut left_b) = (ma[0], mb[0]);
    while i < n && j < n {
        let moved = left_a.min(left_b);
        if moved > 0.0 {
            let distance = (edges.center(i) - edges.center(j)).abs();
            cost += moved * distance;
            flows.push(Flow {
                from: i,
                to: j,
                mass: moved,
            });
        }
        left_a -= moved;
        left_b -= moved;
        // advance whichever side ran dry; on an exact tie advance both
        if left_a <= 0.0 {
            i += 1;
            if i < n {
                left_a = ma[i];
            }
        }
        if left_b <= 0.0 {
            j += 1;
            if j < n {
                left_b = mb[j];
            }
        }
    }
    Ok((cost, TransportPlan { flows, cost }))
}
