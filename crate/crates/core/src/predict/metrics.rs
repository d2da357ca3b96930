use serde::Serialize;

use crate::error::PredictError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegressionQuality {
    pub mse: f64,
    pub r2: f64,
}

/// MSE and coefficient of determination.
///
/// For constant targets R² is 1 on a perfect fit and negative infinity
/// otherwise.
pub fn evaluate_regression(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionQuality, PredictError> {
    if y_true.len() != y_pred.len() {
        return Err(PredictError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(PredictError::EmptyInput);
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p).powi(2)).sum();
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RegressionQuality { mse: ss_res / n, r2 })
}

/// `|measured - estimated| / measured * 100`.
pub fn percentage_error(measured: f64, estimated: f64) -> Result<f64, PredictError> {
    if measured == 0.0 {
        return Err(PredictError::ZeroMeasured);
    }
    Ok((measured - estimated).abs() / measured.abs() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let q = evaluate_regression(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.mse, q.r2), (0.0, 1.0));
    }

    #[test]
    fn mean_predictor_has_zero_r2() {
        let q = evaluate_regression(&[1.0, 2.0, 6.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(q.r2, 0.0);
        let q = evaluate_regression(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((q.mse, q.r2), (1.0, 0.0));
    }

    #[test]
    fn constant_targets() {
        assert_eq!(evaluate_regression(&[2.0, 2.0], &[2.0, 2.0]).unwrap().r2, 1.0);
        assert_eq!(
            evaluate_regression(&[2.0, 2.0], &[2.0, 3.0]).unwrap().r2,
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn regression_errors() {
        assert!(matches!(
            evaluate_regression(&[1.0], &[]),
            Err(PredictError::LengthMismatch { .. })
        ));
        assert_eq!(evaluate_regression(&[], &[]), Err(PredictError::EmptyInput));
    }

    #[test]
    fn percentage() {
        assert_eq!(percentage_error(10.0, 10.0).unwrap(), 0.0);
        assert!((percentage_error(100.0, 87.0).unwrap() - 13.0).abs() < 1e-12);
        assert_eq!(percentage_error(0.0, 5.0), Err(PredictError::ZeroMeasured));
    }
}
