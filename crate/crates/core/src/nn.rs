//! Building blocks shared by the encoder and decoder.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Inverted dropout: kept entries are scaled by `1 / (1 - p)`.
pub struct Dropout<'a> {
    p: f64,
    rng: &'a mut ChaCha8Rng,
}

impl<'a> Dropout<'a> {
    pub fn new(p: f64, rng: &'a mut ChaCha8Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {p}")));
        }
        Ok(Self { p, rng })
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        if self.p == 0.0 {
            return Ok(x);
        }
        let (r, c) = tape.shape(x);
        let keep = 1.0 / (1.0 - self.p);
        let p = self.p;
        let mask = Matrix::from_fn(r, c, |_, _| if self.rng.random::<f64>() < p { 0.0 } else { keep });
        let m = tape.constant(mask);
        tape.mul(x, m)
    }
}

/// Applies dropout when training and passes `x` through otherwise.
pub fn maybe_dropout(tape: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Result<Var> {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => Ok(x),
    }
}

/// One propagation step `Â X W` without activation. The cheaper
/// association is picked from the shapes.
pub fn propagate(tape: &mut Tape, a_norm: Var, x: Var, w: Var) -> Result<Var> {
    let (_, d_in) = tape.shape(x);
    let (_, d_out) = tape.shape(w);
    if d_out <= d_in {
        let xw = tape.matmul(x, w)?;
        tape.matmul(a_norm, xw)
    } else {
        let ax = tape.matmul(a_norm, x)?;
        tape.matmul(ax, w)
    }
}

/// Pooling used to turn node features into a graph vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    Mean,
    Max,
}

impl std::str::FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Readout::Mean),
            "max" => Ok(Readout::Max),
            other => Err(Error::Config(format!("unknown readout '{other}'"))),
        }
    }
}

impl std::fmt::Display for Readout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Readout::Mean => "mean",
            Readout::Max => "max",
        })
    }
}

/// Column-wise mean or max over the rows of `x`.
pub fn readout(x: &Matrix, mode: Readout) -> Result<Vec<f64>> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::invalid("readout of an empty matrix"));
    }
    let mut out = x.row(0).to_vec();
    for r in 1..x.rows() {
        for (o, &v) in out.iter_mut().zip(x.row(r)) {
            match mode {
                Readout::Mean => *o += v,
                Readout::Max => *o = o.max(v),
            }
        }
    }
    if mode == Readout::Mean {
        let n = x.rows() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn readout_examples() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(readout(&m, Readout::Mean).unwrap(), vec![2.0, 3.0]);
        assert_eq!(readout(&m, Readout::Max).unwrap(), vec![3.0, 4.0]);
        let one = Matrix::from_rows(&[[-1.5, 7.0]]).unwrap();
        assert_eq!(readout(&one, Readout::Mean).unwrap(), vec![-1.5, 7.0]);
        assert_eq!(readout(&one, Readout::Max).unwrap(), vec![-1.5, 7.0]);
        assert!(readout(&Matrix::zeros(0, 3), Readout::Mean).is_err());
    }

    #[test]
    fn dropout_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dropout::new(0.5, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(100, 100, 1.0));
        let y = d.apply(&mut tape, x).unwrap();
        let v = tape.value(y);
        assert!(v.as_slice().iter().all(|&e| e == 0.0 || e == 2.0));
        let mean = v.sum() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn propagate_orders_agree() {
        let a = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let narrow = Matrix::from_fn(3, 1, |r, _| r as f64 + 1.0);
        let wide = Matrix::from_fn(3, 5, |r, c| (r * c) as f64 - 2.0);
        for w in [narrow, wide] {
            let want = a.matmul(&x).unwrap().matmul(&w).unwrap();
            let mut tape = Tape::new();
            let (av, xv, wv) = (tape.constant(a.clone()), tape.constant(x.clone()), tape.constant(w));
            let got = propagate(&mut tape, av, xv, wv).unwrap();
            assert!(tape.value(got).max_abs_diff(&want) < 1e-12);
        }
    }
}
