use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How observations are assigned to parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "labels")]
pub enum PartitionScheme {
    /// Shuffle, then split into near-equal consecutive blocks.
    Random,
    /// Near-equal consecutive blocks in the original order.
    Block,
    /// Observation `i` goes to part `labels[i]`.
    ByLabel(Vec<usize>),
}

/// Observations split into parts, with the original row indices of each part.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedData {
    pub parts: Vec<Vec<Vec<f64>>>,
    pub indices: Vec<Vec<usize>>,
}

impl PartitionedData {
    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.len()).collect()
    }

    pub fn manifest(&self, scheme: &PartitionScheme) -> PartitionManifest {
        PartitionManifest {
            scheme: match scheme {
                PartitionScheme::Random => "random",
                PartitionScheme::Block => "block",
                PartitionScheme::ByLabel(_) => "by_label",
            }
            .to_string(),
            num_parts: self.parts.len(),
            parts: self
                .indices
                .iter()
                .enumerate()
                .map(|(part_id, rows)| PartRows {
                    part_id,
                    row_indices: rows.clone(),
                })
                .collect(),
        }
    }
}

/// Serializable record of which observation went to which part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub scheme: String,
    pub num_parts: usize,
    pub parts: Vec<PartRows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRows {
    pub part_id: usize,
    pub row_indices: Vec<usize>,
}

fn equal_blocks(order: Vec<usize>, m: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    let base = n / m;
    let extra = n % m;
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for j in 0..m {
        let len = base + usize::from(j < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

pub fn partition_data<R: Rng + ?Sized>(
    rows: &[Vec<f64>],
    m: usize,
    scheme: &PartitionScheme,
    rng: &mut R,
) -> Result<PartitionedData> {
    let n = rows.len();
    if m == 0 {
        return Err(Error::InvalidArgument("number of parts must be positive".into()));
    }
    let indices = match scheme {
        PartitionScheme::Random | PartitionScheme::Block => {
            if m > n {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {n} observations into {m} non-empty parts"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            if matches!(scheme, PartitionScheme::Random) {
                order.shuffle(rng);
            }
            equal_blocks(order, m)
        }
        PartitionScheme::ByLabel(labels) => {
            if labels.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {n} observations",
                    labels.len()
                )));
            }
            let mut idx = vec![Vec::new(); m];
            for (i, &l) in labels.iter().enumerate() {
                if l >= m {
                    return Err(Error::InvalidArgument(format!("label {l} out of range for {m} parts")));
                }
                idx[l].push(i);
            }
            idx
        }
    };
    let parts = indices
        .iter()
        .map(|ix| ix.iter().map(|&i| rows[i].clone()).collect())
        .collect();
    Ok(PartitionedData { parts, indices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn schemes_cover_every_observation_once() {
        let rows: Vec<Vec<f64>> = (0..23).map(|i| vec![i as f64]).collect();
        let mut rng = Streams::new(1).stream(0, "partition");
        for scheme in [
            PartitionScheme::Random,
            PartitionScheme::Block,
            PartitionScheme::ByLabel((0..23).map(|i| i % 4).collect()),
        ] {
            let p = partition_data(&rows, 4, &scheme, &mut rng).unwrap();
            assert_eq!(p.sizes().iter().sum::<usize>(), 23);
            let mut all: Vec<usize> = p.indices.concat();
            all.sort();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
            let sizes = p.sizes();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert!(partition_data(&rows, 30, &PartitionScheme::Block, &mut rng).is_err());
    }
}
