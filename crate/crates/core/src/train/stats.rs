use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairedT {
    Finite {
        t: f64,
        df: usize,
    },
    /// Every difference is identical, so the standard error is zero.
    Degenerate {
        df: usize,
    },
}

/// Paired t statistic on `a − b` with an `n − 1` sample deviation.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedT> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::validation(
            "paired t-test needs at least two samples",
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_std(&d);
    let df = n - 1;
    if sd == 0.0 {
        return Ok(PairedT::Degenerate { df });
    }
    Ok(PairedT::Finite {
        t: mean / (sd / (n as f64).sqrt()),
        df,
    })
}

/// Mean and sample standard deviation (`n − 1`); the deviation of fewer
/// than two values is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
