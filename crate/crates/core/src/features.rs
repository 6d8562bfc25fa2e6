//! Scattering path labels and stacked feature matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of one scattering coefficient. Orientations are stored as indices into
/// the bank's angle list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Path {
    Zeroth,
    First { j1: usize, g1: usize },
    Second { j1: usize, g1: usize, j2: usize, g2: usize },
}

impl Path {
    pub fn layer(&self) -> u8 {
        match self {
            Path::Zeroth => 0,
            Path::First { .. } => 1,
            Path::Second { .. } => 2,
        }
    }

    /// `m{layer}_j{j1}g{g1}[_j{j2}g{g2}]`
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Path::Zeroth => write!(f, "m0"),
            Path::First { j1, g1 } => write!(f, "m1_j{j1}g{g1}"),
            Path::Second { j1, g1, j2, g2 } => write!(f, "m2_j{j1}g{g1}_j{j2}g{g2}"),
        }
    }
}

fn parse_pair(s: &str) -> Option<(usize, usize)> {
    let rest = s.strip_prefix('j')?;
    let (j, g) = rest.split_once('g')?;
    Some((j.parse().ok()?, g.parse().ok()?))
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("malformed path label '{s}'"));
        let mut parts = s.split('_');
        let head = parts.next().ok_or_else(bad)?;
        let tail: Vec<&str> = parts.collect();
        match (head, tail.as_slice()) {
            ("m0", []) => Ok(Path::Zeroth),
            ("m1", [a]) => {
                let (j1, g1) = parse_pair(a).ok_or_else(bad)?;
                Ok(Path::First { j1, g1 })
            }
            ("m2", [a, b]) => {
                let (j1, g1) = parse_pair(a).ok_or_else(bad)?;
                let (j2, g2) = parse_pair(b).ok_or_else(bad)?;
                Ok(Path::Second { j1, g1, j2, g2 })
            }
            _ => Err(bad()),
        }
    }
}

/// `n_images x n_features` coefficients, row-major, with one image id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    paths: Vec<Path>,
    image_ids: Vec<String>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(paths: Vec<Path>, image_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() != paths.len() * image_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} images x {} features",
                values.len(),
                image_ids.len(),
                paths.len()
            )));
        }
        Ok(FeatureMatrix {
            paths,
            image_ids,
            values,
        })
    }

    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_features();
        &self.values[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_features() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_images()).map(|i| self.get(i, j)).collect()
    }

    pub fn with_image_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_images() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} rows",
                ids.len(),
                self.n_images()
            )));
        }
        self.image_ids = ids;
        Ok(self)
    }

    /// Keeps the columns whose path satisfies `keep`, in their original order.
    pub fn select(&self, keep: impl Fn(&Path) -> bool) -> FeatureMatrix {
        let cols: Vec<usize> = (0..self.n_features())
            .filter(|&j| keep(&self.paths[j]))
            .collect();
        let mut values = Vec::with_capacity(cols.len() * self.n_images());
        for i in 0..self.n_images() {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        FeatureMatrix {
            paths: cols.iter().map(|&j| self.paths[j]).collect(),
            image_ids: self.image_ids.clone(),
            values,
        }
    }

    /// Columns with scattering layer at most `depth`.
    pub fn up_to_layer(&self, depth: u8) -> FeatureMatrix {
        self.select(|p| p.layer() <= depth)
    }

    pub fn position_of(&self, image_id: &str) -> Option<usize> {
        self.image_ids.iter().position(|id| id == image_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for p in [
            Path::Zeroth,
            Path::First { j1: 3, g1: 7 },
            Path::Second { j1: 0, g1: 1, j2: 4, g2: 2 },
        ] {
            assert_eq!(p.label().parse::<Path>().unwrap(), p);
        }
        assert_eq!(Path::First { j1: 2, g1: 5 }.label(), "m1_j2g5");
        assert_eq!(
            Path::Second { j1: 0, g1: 1, j2: 4, g2: 2 }.label(),
            "m2_j0g1_j4g2"
        );
        assert!("m1_j2".parse::<Path>().is_err());
        assert!("m3_j0g0".parse::<Path>().is_err());
    }

    #[test]
    fn select_keeps_order() {
        let paths = vec![
            Path::Zeroth,
            Path::First { j1: 0, g1: 0 },
            Path::Second { j1: 0, g1: 0, j2: 1, g2: 0 },
        ];
        let m = FeatureMatrix::new(
            paths,
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )
        .unwrap();
        let s = m.up_to_layer(1);
        assert_eq!(s.n_features(), 2);
        assert_eq!(s.values(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(m.column(2), vec![3.0, 6.0]);
    }
}
