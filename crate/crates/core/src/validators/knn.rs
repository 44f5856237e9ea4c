use super::{argmax_smallest, Classifier, Matrix};
use crate::error::{Error, Result};

/// Brute-force k-nearest neighbours, Euclidean metric, majority vote.
///
/// Distance ties are resolved by training index, vote ties by smallest class id.
#[derive(Debug, Clone)]
pub struct Knn {
    pub k: usize,
    train: Option<(Matrix, Vec<usize>, usize)>,
}

impl Knn {
    pub fn new(k: usize) -> Self {
        Self { k, train: None }
    }
}

impl Default for Knn {
    fn default() -> Self {
        Self::new(5)
    }
}

impl Classifier for Knn {
    fn name(&self) -> String {
        "knn".into()
    }

    fn fit(&mut self, x: &Matrix, y: &[usize], num_classes: usize) -> Result<()> {
        if x.rows == 0 {
            return Err(Error::Param("knn needs a non-empty training set".into()));
        }
        if self.k == 0 || self.k > x.rows {
            return Err(Error::Param(format!(
                "k = {} must lie in 1..={} (training size)",
                self.k, x.rows
            )));
        }
        self.train = Some((x.clone(), y.to_vec(), num_classes));
        Ok(())
    }

    fn predict(&mut self, x: &Matrix) -> Result<Vec<usize>> {
        let (train, labels, classes) = self
            .train
            .as_ref()
            .ok_or_else(|| Error::State("knn predict called before fit".into()))?;
        let mut out = Vec::with_capacity(x.rows);
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.rows);
        for i in 0..x.rows {
            let q = x.row(i);
            dist.clear();
            for j in 0..train.rows {
                let d: f64 = q
                    .iter()
                    .zip(train.row(j))
                    .map(|(&a, &b)| {
                        let v = a as f64 - b as f64;
                        v * v
                    })
                    .sum();
                dist.push((d, j));
            }
            dist.select_nth_unstable_by(self.k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0.0; *classes];
            for &(_, j) in &dist[..self.k] {
                votes[labels[j]] += 1.0;
            }
            out.push(argmax_smallest(&votes));
        }
        Ok(out)
    }
}
