use crate::error::{invalid, Result};
use crate::num::Real;

/// Raw p-values in `[0, 1]`, optionally labelled with ground truth
/// (`true` = non-null) when they come from a simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct PValues<T> {
    values: Vec<T>,
    labels: Option<Vec<bool>>,
}

impl<T: Real> PValues<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("no p-values"));
        }
        if let Some((i, p)) = values
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= T::zero() && **p <= T::one()))
        {
            return Err(invalid(format!("p-value {i} is not in [0,1]: {p}")));
        }
        Ok(Self { values, labels: None })
    }

    pub fn with_labels(values: Vec<T>, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(invalid(format!(
                "{} labels for {} p-values",
                labels.len(),
                values.len()
            )));
        }
        let mut out = Self::new(values)?;
        out.labels = Some(labels);
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn signal_count(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().filter(|&&s| s).count())
    }
}

/// Indices of `values` sorted by value, ties by index.
pub(crate) fn argsort<T: Real>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("p-values are never NaN")
            .then(a.cmp(&b))
    });
    idx
}
