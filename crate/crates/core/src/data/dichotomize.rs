use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dichotomized {
    pub values: Vec<Option<u8>>,
    pub threshold: f64,
}

/// Mean split of a quantitative covariate: 1 if `x >= mean`, else 0.
/// The mean is taken over observed values; missing values stay missing.
pub fn dichotomize(values: &[Option<f64>]) -> Result<Dichotomized> {
    let observed: Vec<f64> = values.iter().flatten().copied().collect();
    let Some(&pivot) = observed.first() else {
        return Err(Error::InsufficientData(
            "cannot dichotomize: every value is missing".into(),
        ));
    };
    // Shifting by the first observation makes the mean of equal values exact.
    let shift: f64 = observed.iter().map(|v| v - pivot).sum::<f64>() / observed.len() as f64;
    let threshold = pivot + shift;
    // Rounding in the mean must not flip a value that equals it on paper.
    let slack = 4.0 * f64::EPSILON * threshold.abs().max(1.0);
    let values = values
        .iter()
        .map(|v| v.map(|x| u8::from(x >= threshold - slack)))
        .collect();
    Ok(Dichotomized { values, threshold })
}
