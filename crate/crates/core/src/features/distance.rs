use super::{FeatureKind, PatchFeature};
use crate::error::{Error, Result};

/// Euclidean distance, accumulated in `f64` in index order.
pub fn l2_distance(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `Σ |u_i − v_i| / (|u_i| + |v_i| + ε)`; each term lies in `[0, 1)`.
pub fn normalized_l1_distance(u: &[f32], v: &[f32], epsilon: f64) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let (a, b) = (a as f64, b as f64);
            (a - b).abs() / (a.abs() + b.abs() + epsilon)
        })
        .sum()
}

fn check_pair(u: &PatchFeature, v: &PatchFeature) -> Result<()> {
    if u.kind != v.kind {
        return Err(Error::invalid(format!(
            "cannot compare {} and {} features",
            u.kind, v.kind
        )));
    }
    if u.values.len() != v.values.len() {
        return Err(Error::invalid(format!(
            "feature lengths differ: {} vs {}",
            u.values.len(),
            v.values.len()
        )));
    }
    Ok(())
}

pub fn dist_l2(u: &PatchFeature, v: &PatchFeature) -> Result<f64> {
    check_pair(u, v)?;
    Ok(l2_distance(&u.values, &v.values))
}

pub fn dist_norm_l1(u: &PatchFeature, v: &PatchFeature, epsilon: f64) -> Result<f64> {
    check_pair(u, v)?;
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    Ok(normalized_l1_distance(&u.values, &v.values, epsilon))
}

/// Distance used to compare features of one kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    L2,
    NormalizedL1 { epsilon: f64 },
}

impl Metric {
    pub fn for_kind(kind: FeatureKind, epsilon: f64) -> Self {
        match kind {
            FeatureKind::FgMask => Metric::L2,
            FeatureKind::Flow => Metric::NormalizedL1 { epsilon },
        }
    }

    pub fn distance(&self, u: &[f32], v: &[f32]) -> f64 {
        match *self {
            Metric::L2 => l2_distance(u, v),
            Metric::NormalizedL1 { epsilon } => normalized_l1_distance(u, v, epsilon),
        }
    }

    /// Position and distance of the nearest candidate, or `None` if there
    /// are no candidates. Ties keep the earliest candidate.
    ///
    /// Partial sums are abandoned once they exceed the best so far; terms are
    /// non-negative and summed in the same order as [`Metric::distance`], so
    /// the result equals a full linear scan bit for bit.
    pub fn nearest<'a, I>(&self, query: &[f32], candidates: I) -> Option<(usize, f64)>
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut best: Option<(usize, f64)> = None;
        // bound on the accumulated quantity (squared distance for L2)
        let mut bound = f64::INFINITY;
        for (i, cand) in candidates.into_iter().enumerate() {
            let mut acc = 0.0f64;
            let mut abandoned = false;
            // check the bound every CHUNK elements to keep the inner loop tight
            const CHUNK: usize = 64;
            for (qc, cc) in query.chunks(CHUNK).zip(cand.chunks(CHUNK)) {
                match *self {
                    Metric::L2 => {
                        for (&a, &b) in qc.iter().zip(cc) {
                            let d = a as f64 - b as f64;
                            acc += d * d;
                        }
                    }
                    Metric::NormalizedL1 { epsilon } => {
                        for (&a, &b) in qc.iter().zip(cc) {
                            let (a, b) = (a as f64, b as f64);
                            acc += (a - b).abs() / (a.abs() + b.abs() + epsilon);
                        }
                    }
                }
                if acc > bound {
                    abandoned = true;
                    break;
                }
            }
            if abandoned || best.is_some() && acc >= bound {
                continue;
            }
            bound = acc;
            let d = match self {
                Metric::L2 => acc.sqrt(),
                Metric::NormalizedL1 { .. } => acc,
            };
            best = Some((i, d));
        }
        best
    }
}
