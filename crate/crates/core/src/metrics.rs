//! Fit-quality and parameter-error measures.

use crate::error::{Error, Result};

/// Mean squared error `‖y − ŷ‖² / m`.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    let ss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss / y.len() as f64)
}

/// Parameter relative error `‖x_e − x_c‖² / ‖x_e‖²`. Squared, not rooted.
pub fn pre(exact: &[f64], computed: &[f64]) -> Result<f64> {
    if exact.len() != computed.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            exact.len(),
            computed.len()
        )));
    }
    let denom: f64 = exact.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(Error::invalid("reference value has zero norm"));
    }
    let num: f64 = exact.iter().zip(computed).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

pub fn pre_scalar(exact: f64, computed: f64) -> Result<f64> {
    pre(&[exact], &[computed])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 3.0], &[2.0, 1.0]).unwrap(), 2.5);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pre_examples() {
        assert_eq!(pre(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(pre(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(pre(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn pre_of_scaled_value() {
        let x = [1.5, -2.0, 0.25];
        for t in [0.0, 0.5, 2.0] {
            let xt: Vec<f64> = x.iter().map(|v| v * t).collect();
            let got = pre(&x, &xt).unwrap();
            assert!((got - (1.0 - t) * (1.0 - t)).abs() < 1e-15, "t = {t}: {got}");
        }
    }
}
