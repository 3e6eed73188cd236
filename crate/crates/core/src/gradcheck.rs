//! Central finite-difference gradient oracle.

use crate::autodiff::{GradientFault, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};

/// Per-parameter outcome of [`check_gradients`].
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub id: ParamId,
    pub name: String,
    pub max_rel_error: f64,
    /// Flat indices whose relative error exceeded the tolerance.
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.flagged.is_empty())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

/// Denominator floor for relative errors. Entries whose analytic and
/// numeric gradients are both tiny are compared absolutely against it.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients of the scalar built by `build` against central
/// differences with step `step`, for every entry of each parameter in `ids`.
///
/// `build` must be a pure function of the parameter values.
pub fn check_gradients<F>(store: &ParamStore, ids: &[ParamId], step: f64, tol: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    check_gradients_with(store, ids, step, tol, None, build)
}

/// As [`check_gradients`], optionally corrupting the analytic pass.
pub fn check_gradients_with<F>(
    store: &ParamStore,
    ids: &[ParamId],
    step: f64,
    tol: f64,
    fault: Option<GradientFault>,
    build: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    if !(step > 0.0 && tol > 0.0) {
        return Err(Error::invalid("step and tol must be positive"));
    }
    let mut tape = match fault {
        Some(f) => Tape::with_fault(f),
        None => Tape::new(),
    };
    let loss = build(&mut tape, store)?;
    let grads = tape.backward(loss)?.params();
    let analytic = |id: ParamId| {
        grads
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| {
                let (r, c) = store.get(id).shape();
                crate::Matrix::zeros(r, c)
            })
    };

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = build(&mut t, s)?;
        Ok(t.value(l).item())
    };

    let mut work = store.clone();
    let mut params = Vec::with_capacity(ids.len());
    for &id in ids {
        let g = analytic(id);
        let mut max_rel = 0.0f64;
        let mut flagged = Vec::new();
        for k in 0..store.get(id).len() {
            let orig = store.get(id).as_slice()[k];
            work.get_mut(id).as_mut_slice()[k] = orig + step;
            let plus = eval(&work)?;
            work.get_mut(id).as_mut_slice()[k] = orig - step;
            let minus = eval(&work)?;
            work.get_mut(id).as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = relative_error(g.as_slice()[k], numeric);
            max_rel = max_rel.max(rel);
            if rel > tol {
                flagged.push(k);
            }
        }
        params.push(ParamCheck {
            id,
            name: store.name(id).to_string(),
            max_rel_error: max_rel,
            flagged,
        });
    }
    Ok(GradCheckReport { params, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Matrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random(r: usize, c: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        crate::params::glorot_uniform(r, c, &mut rng).scale(3.0)
    }

    #[test]
    fn linear_function_matches_exactly() {
        let mut store = ParamStore::new();
        let w = store.push("w", random(3, 2, 1));
        let c = random(3, 2, 2);
        let report = check_gradients(&store, &[w], 1e-5, 1e-9, |t, s| {
            let wv = t.param(s, w);
            let cv = t.constant(c.clone());
            let p = t.mul(wv, cv)?;
            Ok(t.sum(p))
        })
        .unwrap();
        assert!(report.passed());
        assert!(report.max_rel_error() < 1e-9, "{}", report.max_rel_error());
    }

    #[test]
    fn softmax_cross_entropy_toy() {
        let mut store = ParamStore::new();
        let w = store.push("w", random(4, 3, 3));
        let x = random(5, 4, 4);
        let onehot = Matrix::from_fn(5, 3, |r, c| if r % 3 == c { 1.0 } else { 0.0 });
        let report = check_gradients(&store, &[w], 1e-5, 1e-6, |t, s| {
            let xv = t.constant(x.clone());
            let wv = t.param(s, w);
            let logits = t.matmul(xv, wv)?;
            let p = t.row_softmax(logits);
            let logp = t.ln(p);
            let y = t.constant(onehot.clone());
            let picked = t.mul(logp, y)?;
            let total = t.sum(picked);
            Ok(t.scale(total, -1.0))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn matmul_gradient_random_3x4_4x2() {
        let mut store = ParamStore::new();
        let a = store.push("a", random(3, 4, 5));
        let b = store.push("b", random(4, 2, 6));
        let report = check_gradients(&store, &[a, b], 1e-5, 1e-4, |t, s| {
            let av = t.param(s, a);
            let bv = t.param(s, b);
            let p = t.matmul(av, bv)?;
            Ok(t.sum_squares(p))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_rule_is_flagged() {
        let mut store = ParamStore::new();
        let a = store.push("a", random(3, 4, 7));
        let b = store.push("b", random(4, 2, 8));
        let report = check_gradients_with(&store, &[a, b], 1e-5, 1e-4, Some(GradientFault::MatMulLeft), |t, s| {
            let av = t.param(s, a);
            let bv = t.param(s, b);
            let p = t.matmul(av, bv)?;
            Ok(t.sum_squares(p))
        })
        .unwrap();
        assert!(!report.passed());
        assert!(!report.params[0].flagged.is_empty());
        assert!(report.params[1].flagged.is_empty());
    }

    #[test]
    fn relu_mask_is_indicator() {
        let x0 = random(4, 5, 9);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let r = tape.relu(x);
        let loss = tape.sum(r);
        let g = tape.backward(loss).unwrap().get(x);
        for (gv, xv) in g.as_slice().iter().zip(x0.as_slice()) {
            assert_eq!(*gv, if *xv > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn duplicated_use_matches_explicit_copy() {
        // f(W) = sum((W W) * C) with W used twice vs two independent copies.
        let w0 = random(3, 3, 10);
        let c = random(3, 3, 11);
        let mut store = ParamStore::new();
        let w = store.push("w", w0.clone());
        let mut t = Tape::new();
        let a = t.param(&store, w);
        let b = t.param(&store, w);
        let p = t.matmul(a, b).unwrap();
        let cv = t.constant(c.clone());
        let q = t.mul(p, cv).unwrap();
        let l = t.sum(q);
        let shared = t.backward(l).unwrap().get(a);

        let mut t = Tape::new();
        let a = t.leaf(w0.clone());
        let b = t.leaf(w0.clone());
        let p = t.matmul(a, b).unwrap();
        let cv = t.constant(c);
        let q = t.mul(p, cv).unwrap();
        let l = t.sum(q);
        let g = t.backward(l).unwrap();
        let explicit = g.get(a).add(&g.get(b)).unwrap();
        assert!(shared.max_abs_diff(&explicit) < 1e-14);
    }

    /// Runs one primitive on a random point and compares both ways.
    fn check_unary(seed: u64, op: impl Fn(&mut Tape, Var) -> Result<Var>) -> f64 {
        let mut store = ParamStore::new();
        let w = store.push("w", random(3, 4, seed));
        let weights = random(3, 4, seed ^ 0xabc);
        let report = check_gradients(&store, &[w], 1e-5, 1e-4, |t, s| {
            let x = t.param(s, w);
            let y = op(t, x)?;
            let (r, c) = t.shape(y);
            let k = t.constant(Matrix::from_fn(r, c, |i, j| {
                weights.get(i % 3, j % 4) + 0.1 * (i + j) as f64
            }));
            let p = t.mul(y, k)?;
            Ok(t.sum(p))
        })
        .unwrap();
        report.max_rel_error()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn primitive_gradients_match_differences(seed in any::<u64>()) {
            let idx: Arc<[usize]> = Arc::from(vec![2usize, 0, 2]);
            let sub: Arc<[usize]> = Arc::from(vec![0usize, 2]);
            let checks: Vec<(&str, f64)> = vec![
                ("transpose", check_unary(seed, |t, x| Ok(t.transpose(x)))),
                ("row_softmax", check_unary(seed, |t, x| Ok(t.row_softmax(x)))),
                ("col_softmax", check_unary(seed, |t, x| Ok(t.col_softmax(x)))),
                ("exp", check_unary(seed, |t, x| Ok(t.exp(x)))),
                ("ln", check_unary(seed, |t, x| {
                    let e = t.exp(x);
                    Ok(t.ln(e))
                })),
                ("scale", check_unary(seed, |t, x| Ok(t.scale(x, -1.7)))),
                ("mean", check_unary(seed, |t, x| Ok(t.mean(x)))),
                ("sum_squares", check_unary(seed, |t, x| Ok(t.sum_squares(x)))),
                ("row_sum", check_unary(seed, |t, x| Ok(t.row_sum(x)))),
                ("gather", check_unary(seed, |t, x| Ok(t.gather_rows(x, idx.clone())))),
                ("leading", check_unary(seed, |t, x| t.leading_cols(x, 2))),
                ("mul_self", check_unary(seed, |t, x| t.mul(x, x))),
                ("powf", check_unary(seed, |t, x| {
                    let e = t.exp(x);
                    Ok(t.powf(e, -0.5))
                })),
                ("square_ops", check_unary(seed, |t, x| {
                    let xt = t.transpose(x);
                    let sq = t.matmul(x, xt)?;
                    let z = t.zero_diagonal(sq);
                    let i = t.add_identity(z)?;
                    Ok(t.submatrix(i, sub.clone()))
                })),
                ("scale_rows_cols", check_unary(seed, |t, x| {
                    let e = t.exp(x);
                    let rs = t.row_sum(e);
                    let a = t.scale_rows(x, rs)?;
                    let xt = t.transpose(e);
                    let cs = t.row_sum(xt);
                    t.scale_cols(a, cs)
                })),
                ("scatter", check_unary(seed, |t, x| {
                    let top = t.gather_rows(x, Arc::from(vec![0usize, 1]));
                    let bottom = t.gather_rows(x, Arc::from(vec![2usize]));
                    t.scatter_rows(4, 4, vec![
                        (bottom, Arc::from(vec![0usize])),
                        (top, Arc::from(vec![1usize, 3])),
                    ])
                })),
                ("bce", check_unary(seed, |t, x| {
                    let targets = Arc::new(Matrix::from_fn(3, 4, |i, j| ((i + j) % 2) as f64));
                    t.bce_with_logits(x, targets)
                })),
            ];
            for (name, err) in checks {
                prop_assert!(err < 1e-4, "{name}: {err}");
            }
        }

        #[test]
        fn relu_gradient_away_from_kink(seed in any::<u64>()) {
            let err = check_unary(seed, |t, x| Ok(t.relu(x)));
            prop_assert!(err < 1e-4, "{err}");
        }

        #[test]
        fn softmax_rows_sum_to_one(vals in prop::collection::vec(-700.0f64..700.0, 1..40), cols in 1usize..8) {
            let rows = vals.len().div_ceil(cols);
            let m = Matrix::from_fn(rows, cols, |r, c| vals.get(r * cols + c).copied().unwrap_or(0.0));
            let s = crate::autodiff::row_softmax(&m);
            for r in 0..rows {
                let total: f64 = s.row(r).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(s.row(r).iter().all(|v| *v >= 0.0));
            }
        }
    }
}
