//! Gradient diversity between a local update and the global update.
//!
//! With `S` the summed squared norms of the local layers and `P` the summed
//! per-layer inner products with the global gradient, the diversity is
//! `S / (S + P)`: below 1 for aligned updates, exactly 1 for orthogonal ones
//! and above 1 when the local update pulls against the global direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size of `S + P` against `S` below which the ratio is rejected.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Per-layer flattened gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayeredGradient {
    pub layers: Vec<Vec<f64>>,
}

impl LayeredGradient {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        let g = LayeredGradient { layers };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidGradient("gradient has no layers".into()));
        }
        if self.layers.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGradient("gradient has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LayeredGradient {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|x| x * factor).collect())
                .collect(),
        }
    }

    /// All layers concatenated.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }
}

fn same_shape(a: &LayeredGradient, b: &LayeredGradient) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Diversity of `local` against `global`.
pub fn gradient_diversity(local: &LayeredGradient, global: &LayeredGradient) -> Result<f64> {
    local.validate()?;
    global.validate()?;
    same_shape(local, global)?;
    let mut sum_sq = 0.0;
    let mut inner = 0.0;
    for (g, h) in local.layers.iter().zip(&global.layers) {
        sum_sq += g.iter().map(|x| x * x).sum::<f64>();
        inner += g.iter().zip(h).map(|(x, y)| x * y).sum::<f64>();
    }
    let denominator = sum_sq + inner;
    if denominator <= DEGENERACY_TOLERANCE * sum_sq {
        return Err(Error::DegenerateDenominator { sum_sq, denominator });
    }
    Ok(sum_sq / denominator)
}

/// Mean of every user's gradient except `skip`.
pub fn leave_one_out_mean(users: &[LayeredGradient], skip: usize) -> LayeredGradient {
    let others = (users.len() - 1) as f64;
    let mut layers: Vec<Vec<f64>> = users[0].layers.iter().map(|l| vec![0.0; l.len()]).collect();
    for (_, u) in users.iter().enumerate().filter(|&(i, _)| i != skip) {
        for (acc, layer) in layers.iter_mut().zip(&u.layers) {
            for (a, x) in acc.iter_mut().zip(layer) {
                *a += x;
            }
        }
    }
    for layer in &mut layers {
        for a in layer {
            *a /= others;
        }
    }
    LayeredGradient { layers }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedUser {
    pub user: usize,
    /// `None` when the denominator was degenerate.
    pub diversity: Option<f64>,
    pub degenerate: bool,
}

/// Users ordered by descending diversity against the mean of everyone else.
/// Ties keep input order; degenerate users are listed last, flagged.
pub fn diversity_rank(users: &[LayeredGradient]) -> Result<Vec<RankedUser>> {
    if users.len() < 2 {
        return Err(Error::TooFewUsers {
            needed: 2,
            got: users.len(),
        });
    }
    for u in users {
        u.validate()?;
        same_shape(&users[0], u)?;
    }
    let mut ranked = Vec::with_capacity(users.len());
    for (i, u) in users.iter().enumerate() {
        let global = leave_one_out_mean(users, i);
        let entry = match gradient_diversity(u, &global) {
            Ok(d) => RankedUser {
                user: i,
                diversity: Some(d),
                degenerate: false,
            },
            Err(Error::DegenerateDenominator { .. }) => RankedUser {
                user: i,
                diversity: None,
                degenerate: true,
            },
            Err(e) => return Err(e),
        };
        ranked.push(entry);
    }
    ranked.sort_by(|a, b| match (a.diversity, b.diversity) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.user.cmp(&b.user)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.user.cmp(&b.user),
    });
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(layers: &[&[f64]]) -> LayeredGradient {
        LayeredGradient::new(layers.iter().map(|l| l.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_unit_vectors() {
        let u = g(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(gradient_diversity(&u, &u).unwrap(), 0.5);
    }

    #[test]
    fn orthogonal_is_one() {
        assert_eq!(gradient_diversity(&g(&[&[1.0, 0.0]]), &g(&[&[0.0, 3.0]])).unwrap(), 1.0);
    }

    #[test]
    fn partially_aligned() {
        assert_eq!(gradient_diversity(&g(&[&[1.0, 0.0]]), &g(&[&[1.0, 1.0]])).unwrap(), 0.5);
    }

    #[test]
    fn negative_correlation_exceeds_one() {
        let d = gradient_diversity(&g(&[&[1.0, 0.0], &[2.0]]), &g(&[&[-0.5, 0.0], &[-1.0]])).unwrap();
        // S = 5, P = -2.5
        assert_eq!(d, 2.0);
    }

    #[test]
    fn degenerate_and_mismatched() {
        let a = g(&[&[1.0, 2.0]]);
        assert!(matches!(
            gradient_diversity(&a, &a.scaled(-1.0)).unwrap_err(),
            Error::DegenerateDenominator { .. }
        ));
        assert!(matches!(
            gradient_diversity(&a, &g(&[&[1.0], &[2.0]])).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
        let zero = g(&[&[0.0, 0.0]]);
        assert!(gradient_diversity(&zero, &a).is_err());
        assert!(LayeredGradient::new(vec![]).is_err());
        assert!(LayeredGradient::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn rank_puts_orthogonal_user_first() {
        let users = vec![g(&[&[1.0, 0.0]]), g(&[&[1.0, 0.0]]), g(&[&[0.0, 1.0]])];
        let ranked = diversity_rank(&users).unwrap();
        assert_eq!(ranked[0].user, 2);
        assert_eq!(ranked[0].diversity, Some(1.0));
        // Leave-one-out mean for user 0 is (0.5, 0.5): S = 1, P = 0.5.
        let others = ranked[1].diversity.unwrap();
        assert!((others - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ranked[1].user, 0);
    }

    #[test]
    fn identical_users_keep_index_order() {
        let users = vec![g(&[&[1.0, 2.0]]); 4];
        let ranked = diversity_rank(&users).unwrap();
        assert!(ranked.iter().all(|r| r.diversity == Some(0.5)));
        assert_eq!(ranked.iter().map(|r| r.user).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn anti_parallel_pair_is_flagged() {
        let a = g(&[&[1.0, -2.0]]);
        let ranked = diversity_rank(&[a.clone(), a.scaled(-1.0)]).unwrap();
        assert!(ranked.iter().all(|r| r.degenerate && r.diversity.is_none()));
        assert!(matches!(diversity_rank(&[a]).unwrap_err(), Error::TooFewUsers { .. }));
    }
}
