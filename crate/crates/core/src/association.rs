//! Probabilistic data association between legacy features and measurements.
//!
//! The association is described redundantly by a feature-oriented vector
//! (`a_k ∈ {0..M}`, which measurement feature `k` generated) and a
//! measurement-oriented vector (`ā_m ∈ {0..K}`, which legacy feature
//! generated measurement `m`). Index 0 means "none" in both; feature `k` and
//! measurement `m` are 1-based inside those index sets.

use crate::{Error, Result};

/// Largest K and M accepted by [`exact_marginals`].
pub const EXACT_LIMIT: usize = 6;

/// Consistency check between the two association vectors.
pub fn psi(a_k: usize, abar_m: usize, k: usize, m: usize) -> u8 {
    let inconsistent = (a_k == m && abar_m != k) || (abar_m == k && a_k != m);
    u8::from(!inconsistent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationWeights {
    /// `beta[k][m]`: weight of legacy feature `k` generating measurement `m`.
    pub beta: Vec<Vec<f64>>,
    /// Missed-detection weight of each legacy feature.
    pub beta0: Vec<f64>,
    /// New-feature weight of each measurement.
    pub xi: Vec<f64>,
    /// Weight of a measurement being clutter. The measurement-side
    /// "unassigned" mass is `base + xi`. Defaults to ones; carrying it
    /// explicitly lets callers rescale a measurement column.
    pub base: Vec<f64>,
}

impl AssociationWeights {
    pub fn new(beta: Vec<Vec<f64>>, beta0: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let base = vec![1.0; xi.len()];
        Self::with_base(beta, beta0, xi, base)
    }

    pub fn with_base(
        beta: Vec<Vec<f64>>,
        beta0: Vec<f64>,
        xi: Vec<f64>,
        base: Vec<f64>,
    ) -> Result<Self> {
        let w = Self {
            beta,
            beta0,
            xi,
            base,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn num_legacy(&self) -> usize {
        self.beta0.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.xi.len()
    }

    fn unassigned(&self, m: usize) -> f64 {
        self.base[m] + self.xi[m]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.beta0.len();
        let m = self.xi.len();
        if self.beta.len() != k {
            return Err(Error::LengthMismatch {
                left: self.beta.len(),
                right: k,
            });
        }
        if self.base.len() != m {
            return Err(Error::LengthMismatch {
                left: self.base.len(),
                right: m,
            });
        }
        for row in &self.beta {
            if row.len() != m {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: m,
                });
            }
        }
        let ok = |v: &f64| v.is_finite() && *v >= 0.0;
        if !self.beta.iter().flatten().all(ok)
            || !self.beta0.iter().all(ok)
            || !self.xi.iter().all(ok)
            || !self.base.iter().all(ok)
        {
            return Err(Error::param(
                "association weights",
                "entries must be finite and >= 0",
            ));
        }
        // A row or column with no mass at all has no valid configuration.
        for (k, row) in self.beta.iter().enumerate() {
            if self.beta0[k] <= 0.0 && row.iter().all(|b| *b <= 0.0) {
                return Err(Error::DegenerateWeights);
            }
        }
        for j in 0..m {
            if self.unassigned(j) <= 0.0 {
                return Err(Error::DegenerateWeights);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    /// Row `k`: PMF of `a_k` over `{0, 1..M}`.
    pub p_legacy: Vec<Vec<f64>>,
    /// Row `m`: PMF of `ā_m` over `{0, 1..K}`.
    pub p_meas: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Converged BP messages, needed by the filter to build beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct BpMessages {
    /// `phi[k][m]`: message from `a_k` to `ā_m`.
    pub phi: Vec<Vec<f64>>,
    /// `nu[k][m]`: message from `ā_m` to `a_k`.
    pub nu: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates the bipartite BP messages until the largest relative change of
/// any measurement-to-feature message is below `tol`.
pub fn bp_messages(w: &AssociationWeights, tol: f64, max_iter: usize) -> Result<BpMessages> {
    w.validate()?;
    let nk = w.num_legacy();
    let nm = w.num_measurements();
    let mut nu = vec![vec![1.0; nm]; nk];
    let mut phi = vec![vec![0.0; nm]; nk];
    let mut converged = nk == 0 || nm == 0;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        for k in 0..nk {
            let total: f64 = w.beta0[k] + (0..nm).map(|m| w.beta[k][m] * nu[k][m]).sum::<f64>();
            for m in 0..nm {
                let denom = total - w.beta[k][m] * nu[k][m];
                phi[k][m] = if w.beta[k][m] == 0.0 {
                    0.0
                } else {
                    w.beta[k][m] / denom.max(f64::MIN_POSITIVE)
                };
            }
        }
        let mut delta: f64 = 0.0;
        for m in 0..nm {
            let total: f64 = w.unassigned(m) + (0..nk).map(|k| phi[k][m]).sum::<f64>();
            for k in 0..nk {
                let next = 1.0 / (total - phi[k][m]).max(f64::MIN_POSITIVE);
                delta = delta.max((next - nu[k][m]).abs() / next);
                nu[k][m] = next;
            }
        }
        converged = delta < tol;
    }
    // Outgoing feature messages consistent with the final ν.
    for k in 0..nk {
        let total: f64 = w.beta0[k] + (0..nm).map(|m| w.beta[k][m] * nu[k][m]).sum::<f64>();
        for m in 0..nm {
            let denom = total - w.beta[k][m] * nu[k][m];
            phi[k][m] = if w.beta[k][m] == 0.0 {
                0.0
            } else {
                w.beta[k][m] / denom.max(f64::MIN_POSITIVE)
            };
        }
    }
    Ok(BpMessages {
        phi,
        nu,
        converged,
        iterations,
    })
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= s);
}

/// Marginal association probabilities from a set of BP messages.
pub fn marginals_from_messages(w: &AssociationWeights, msg: &BpMessages) -> AssociationResult {
    let nk = w.num_legacy();
    let nm = w.num_measurements();
    let p_legacy = (0..nk)
        .map(|k| {
            let mut row = Vec::with_capacity(nm + 1);
            row.push(w.beta0[k]);
            row.extend((0..nm).map(|m| w.beta[k][m] * msg.nu[k][m]));
            normalize(&mut row);
            row
        })
        .collect();
    let p_meas = (0..nm)
        .map(|m| {
            let mut row = Vec::with_capacity(nk + 1);
            row.push(w.unassigned(m));
            row.extend((0..nk).map(|k| msg.phi[k][m]));
            normalize(&mut row);
            row
        })
        .collect();
    AssociationResult {
        p_legacy,
        p_meas,
        converged: msg.converged,
        iterations: msg.iterations,
    }
}

pub fn bp_marginals(
    w: &AssociationWeights,
    tol: f64,
    max_iter: usize,
) -> Result<AssociationResult> {
    let msg = bp_messages(w, tol, max_iter)?;
    Ok(marginals_from_messages(w, &msg))
}

/// Brute-force marginals over every one-to-one association.
pub fn exact_marginals(w: &AssociationWeights) -> Result<AssociationResult> {
    w.validate()?;
    let nk = w.num_legacy();
    let nm = w.num_measurements();
    if nk > EXACT_LIMIT || nm > EXACT_LIMIT {
        return Err(Error::InstanceTooLarge {
            legacy: nk,
            measurements: nm,
        });
    }
    let mut p_legacy = vec![vec![0.0; nm + 1]; nk];
    let mut p_meas = vec![vec![0.0; nk + 1]; nm];
    let mut assign = vec![0usize; nk];
    let mut total = 0.0;

    fn visit(
        k: usize,
        used: u32,
        weight: f64,
        w: &AssociationWeights,
        assign: &mut Vec<usize>,
        out: &mut (f64, &mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>),
    ) {
        let nk = w.num_legacy();
        let nm = w.num_measurements();
        if k == nk {
            let mut weight = weight;
            for m in 0..nm {
                if used & (1 << m) == 0 {
                    weight *= w.unassigned(m);
                }
            }
            if weight == 0.0 {
                return;
            }
            out.0 += weight;
            let mut owner = vec![0usize; nm];
            for (kk, &a) in assign.iter().enumerate() {
                out.1[kk][a] += weight;
                if a > 0 {
                    owner[a - 1] = kk + 1;
                }
            }
            for (m, &o) in owner.iter().enumerate() {
                out.2[m][o] += weight;
            }
            return;
        }
        assign[k] = 0;
        visit(k + 1, used, weight * w.beta0[k], w, assign, out);
        for m in 0..nm {
            if used & (1 << m) == 0 && w.beta[k][m] > 0.0 {
                assign[k] = m + 1;
                visit(
                    k + 1,
                    used | (1 << m),
                    weight * w.beta[k][m],
                    w,
                    assign,
                    out,
                );
            }
        }
    }

    {
        let mut out = (0.0, &mut p_legacy, &mut p_meas);
        visit(0, 0, 1.0, w, &mut assign, &mut out);
        total += out.0;
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    p_legacy.iter_mut().flatten().for_each(|v| *v /= total);
    p_meas.iter_mut().flatten().for_each(|v| *v /= total);
    Ok(AssociationResult {
        p_legacy,
        p_meas,
        converged: true,
        iterations: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn linf(a: &AssociationResult, b: &AssociationResult) -> f64 {
        a.p_legacy
            .iter()
            .flatten()
            .zip(b.p_legacy.iter().flatten())
            .chain(a.p_meas.iter().flatten().zip(b.p_meas.iter().flatten()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn psi_table() {
        assert_eq!(psi(2, 1, 1, 2), 1);
        assert_eq!(psi(2, 0, 1, 2), 0);
        assert_eq!(psi(0, 0, 1, 2), 1);
        assert_eq!(psi(0, 1, 1, 2), 0);
        assert_eq!(psi(3, 2, 1, 2), 1);
    }

    #[test]
    fn single_pair_closed_form() {
        let (b, b0, xi) = (2.5, 0.7, 0.3);
        let w = AssociationWeights::new(vec![vec![b]], vec![b0], vec![xi]).unwrap();
        let expected = b / (b0 * (1.0 + xi) + b);
        let bp = bp_marginals(&w, 1e-6, 50).unwrap();
        let ex = exact_marginals(&w).unwrap();
        assert_abs_diff_eq!(bp.p_legacy[0][1], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(ex.p_legacy[0][1], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(bp.p_meas[0][1], expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_beta_means_all_missed() {
        let w = AssociationWeights::new(vec![vec![0.0; 3]; 2], vec![0.4, 2.0], vec![1.0, 0.1, 5.0])
            .unwrap();
        let bp = bp_marginals(&w, 1e-6, 50).unwrap();
        for row in &bp.p_legacy {
            assert_eq!(row[0], 1.0);
            assert!(row[1..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn no_legacy_features() {
        let w = AssociationWeights::new(vec![], vec![], vec![0.5, 2.0]).unwrap();
        let ex = exact_marginals(&w).unwrap();
        assert_eq!(ex.p_meas, vec![vec![1.0], vec![1.0]]);
        let bp = bp_marginals(&w, 1e-6, 50).unwrap();
        assert_eq!(bp.p_meas, ex.p_meas);
    }

    #[test]
    fn strong_diagonal_is_recovered() {
        let n = 4;
        let beta = (0..n)
            .map(|k| (0..n).map(|m| if k == m { 1e3 } else { 1e-3 }).collect())
            .collect();
        let w = AssociationWeights::new(beta, vec![1.0; n], vec![1.0; n]).unwrap();
        let bp = bp_marginals(&w, 1e-6, 50).unwrap();
        for (k, row) in bp.p_legacy.iter().enumerate() {
            let argmax = (0..=n).max_by(|a, b| row[*a].total_cmp(&row[*b])).unwrap();
            assert_eq!(argmax, k + 1);
        }
    }

    #[test]
    fn oversized_instance_is_rejected() {
        let w = AssociationWeights::new(vec![vec![1.0; 7]], vec![1.0], vec![1.0; 7]).unwrap();
        assert!(matches!(
            exact_marginals(&w),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn malformed_weights_are_rejected() {
        assert!(AssociationWeights::new(vec![vec![1.0]], vec![1.0, 1.0], vec![1.0]).is_err());
        assert!(AssociationWeights::new(vec![vec![-1.0]], vec![1.0], vec![1.0]).is_err());
        assert!(AssociationWeights::new(vec![vec![f64::NAN]], vec![1.0], vec![1.0]).is_err());
    }

    fn weights_strategy() -> impl Strategy<Value = AssociationWeights> {
        (1usize..=3, 1usize..=3).prop_flat_map(|(k, m)| {
            let lw = || -3.0f64..3.0;
            (
                proptest::collection::vec(proptest::collection::vec(lw(), m), k),
                proptest::collection::vec(lw(), k),
                proptest::collection::vec(lw(), m),
            )
                .prop_map(|(b, b0, xi)| {
                    let p = |v: f64| 10f64.powf(v);
                    AssociationWeights::new(
                        b.into_iter()
                            .map(|r| r.into_iter().map(p).collect())
                            .collect(),
                        b0.into_iter().map(p).collect(),
                        xi.into_iter().map(p).collect(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn rows_sum_to_one(w in weights_strategy()) {
            for r in [bp_marginals(&w, 1e-6, 50).unwrap(), exact_marginals(&w).unwrap()] {
                for row in r.p_legacy.iter().chain(r.p_meas.iter()) {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn scale_invariance(w in weights_strategy(), c in 0.01f64..100.0, d in 0.01f64..100.0) {
            // Scale feature row 0 by c and measurement column 0 by d.
            let mut s = w.clone();
            s.beta0[0] *= c;
            for v in s.beta[0].iter_mut() { *v *= c; }
            for row in s.beta.iter_mut() { row[0] *= d; }
            s.base[0] *= d;
            s.xi[0] *= d;
            let a = bp_marginals(&w, 1e-9, 200).unwrap();
            let b = bp_marginals(&s, 1e-9, 200).unwrap();
            prop_assert!(linf(&a, &b) < 1e-6);
            let a = exact_marginals(&w).unwrap();
            let b = exact_marginals(&s).unwrap();
            prop_assert!(linf(&a, &b) < 1e-12);
        }

        #[test]
        fn legacy_and_measurement_views_agree(w in weights_strategy()) {
            // p(a_k = m) and p(ā_m = k) are the same event.
            let ex = exact_marginals(&w).unwrap();
            for k in 0..w.num_legacy() {
                for m in 0..w.num_measurements() {
                    prop_assert!((ex.p_legacy[k][m + 1] - ex.p_meas[m][k + 1]).abs() < 1e-12);
                }
            }
        }
    }
}
