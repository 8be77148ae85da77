use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};

/// Container magic; the trailing digit is the format version.
pub const MAGIC: &[u8; 4] = b"CBT1";

/// A trained model together with the feature-table columns it consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: Model,
    pub columns: Vec<usize>,
    pub description: String,
}

pub fn model_to_bytes(record: &ModelRecord) -> Result<Vec<u8>> {
    let payload = bincode::serialize(record).map_err(|e| Error::Model(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelRecord> {
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Model(format!("bad magic {:?}", &bytes[..4])));
    }
    let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8-byte slice")) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(Error::Truncated {
            expected: len,
            found: body.len(),
        });
    }
    if body.len() > len {
        return Err(Error::Model(format!("{} trailing bytes", body.len() - len)));
    }
    bincode::deserialize(body).map_err(|e| Error::Model(e.to_string()))
}

pub fn save_model(path: &Path, record: &ModelRecord) -> Result<()> {
    fs::write(path, model_to_bytes(record)?).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_model(path: &Path) -> Result<ModelRecord> {
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    model_from_bytes(&bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{train_boosted, train_forest, BoostParams, ForestParams};

    fn data() -> (Vec<Vec<f64>>, Vec<usize>) {
        let x: Vec<Vec<f64>> = (0..24)
            .map(|i| vec![(i % 7) as f64 * 0.37, (i * 5 % 11) as f64 / 3.0])
            .collect();
        let y = (0..24).map(|i| usize::from(i % 7 > 2)).collect();
        (x, y)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (x, y) = data();
        let forest = train_forest(&x, &y, &ForestParams { n_estimators: 10, ..Default::default() }).unwrap();
        let boosted = train_boosted(&x, &y, &BoostParams { n_estimators: 20, ..Default::default() }).unwrap();
        for model in [Model::Forest(forest), Model::Boosted(boosted)] {
            let rec = ModelRecord {
                model,
                columns: vec![0, 1],
                description: "test".into(),
            };
            let bytes = model_to_bytes(&rec).unwrap();
            assert_eq!(&bytes[..4], b"CBT1");
            let back = model_from_bytes(&bytes).unwrap();
            assert_eq!(back, rec);
            for row in &x {
                assert_eq!(
                    back.model.score(row).unwrap().to_bits(),
                    rec.model.score(row).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn damaged_containers_are_rejected() {
        let (x, y) = data();
        let forest = train_forest(&x, &y, &ForestParams { n_estimators: 2, ..Default::default() }).unwrap();
        let rec = ModelRecord {
            model: Model::Forest(forest),
            columns: vec![0, 1],
            description: String::new(),
        };
        let bytes = model_to_bytes(&rec).unwrap();
        assert!(matches!(model_from_bytes(&bytes[..8]), Err(Error::Truncated { .. })));
        assert!(matches!(
            model_from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[3] = b'2';
        assert!(matches!(model_from_bytes(&bad), Err(Error::Model(_))));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(model_from_bytes(&long), Err(Error::Model(_))));
    }
}
