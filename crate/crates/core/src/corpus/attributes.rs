use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered list of categorical attributes. The order fixes the layout of
/// every attribute vector and is persisted in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeSpec>,
}

/// One value index per attribute plus the concatenated one-hot blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub labels: Vec<usize>,
    pub onehot: Vec<f32>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<(&str, &[&str])>) -> Result<Self> {
        let schema = Self {
            attributes: attributes
                .into_iter()
                .map(|(name, values)| AttributeSpec {
                    name: name.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Sentiment, tense and person number as used on review corpora.
    pub fn reviews() -> Self {
        Self::new(vec![
            ("sentiment", &["positive", "negative"]),
            ("tense", &["present", "past"]),
            ("person", &["singular", "plural", "balanced"]),
        ])
        .expect("static schema")
    }

    /// The synthetic grammar's schema: three binary attributes.
    pub fn toy() -> Self {
        Self::new(vec![
            ("sentiment", &["positive", "negative"]),
            ("tense", &["present", "past"]),
            ("person", &["singular", "plural"]),
        ])
        .expect("static schema")
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::InvalidInput("attribute schema needs at least one attribute".into()));
        }
        for (i, a) in self.attributes.iter().enumerate() {
            if a.values.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "attribute `{}` needs at least two values",
                    a.name
                )));
            }
            if self.attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidInput(format!("duplicate attribute `{}`", a.name)));
            }
            for (j, v) in a.values.iter().enumerate() {
                if a.values[..j].contains(v) {
                    return Err(Error::InvalidInput(format!(
                        "duplicate value `{v}` in attribute `{}`",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.values.len()).collect()
    }

    /// Length of the one-hot encoding.
    pub fn dim(&self) -> usize {
        self.attributes.iter().map(|a| a.values.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn value_index(&self, attribute: usize, value: &str) -> Result<usize> {
        let spec = &self.attributes[attribute];
        spec.values
            .iter()
            .position(|v| v == value)
            .ok_or_else(|| Error::UnknownLabel {
                attribute: spec.name.clone(),
                value: value.to_string(),
            })
    }

    pub fn value_name(&self, attribute: usize, index: usize) -> &str {
        &self.attributes[attribute].values[index]
    }

    /// Encodes one value name per attribute, in schema order.
    pub fn make_attribute_vector<S: AsRef<str>>(&self, labels: &[S]) -> Result<AttributeVector> {
        if labels.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} labels, got {}",
                self.len(),
                labels.len()
            )));
        }
        let indices = labels
            .iter()
            .enumerate()
            .map(|(k, l)| self.value_index(k, l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        self.vector_from_indices(&indices)
    }

    pub fn vector_from_indices(&self, labels: &[usize]) -> Result<AttributeVector> {
        if labels.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} labels, got {}",
                self.len(),
                labels.len()
            )));
        }
        let mut onehot = vec![0.0; self.dim()];
        let mut offset = 0;
        for (spec, &l) in self.attributes.iter().zip(labels) {
            if l >= spec.values.len() {
                return Err(Error::InvalidInput(format!(
                    "value index {l} out of range for attribute `{}`",
                    spec.name
                )));
            }
            onehot[offset + l] = 1.0;
            offset += spec.values.len();
        }
        Ok(AttributeVector {
            labels: labels.to_vec(),
            onehot,
        })
    }

    /// Every combination of values, in lexicographic order of value indices.
    pub fn combinations(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for spec in &self.attributes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..spec.values.len()).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn label_names(&self, labels: &[usize]) -> Vec<&str> {
        labels
            .iter()
            .enumerate()
            .map(|(k, &v)| self.value_name(k, v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_blocks() {
        let s = AttributeSchema::reviews();
        assert_eq!(s.dim(), 7);
        let v = s.make_attribute_vector(&["positive", "past", "plural"]).unwrap();
        assert_eq!(v.onehot, [1., 0., 0., 1., 0., 1., 0.]);
        let v = s.make_attribute_vector(&["negative", "present", "singular"]).unwrap();
        assert_eq!(v.onehot, [0., 1., 1., 0., 1., 0., 0.]);
        assert_eq!(v.labels, [1, 0, 0]);
    }

    #[test]
    fn unknown_label_is_error() {
        let s = AttributeSchema::reviews();
        let err = s.make_attribute_vector(&["neutral", "past", "plural"]).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
        assert!(s.make_attribute_vector(&["positive"]).is_err());
    }

    #[test]
    fn schema_validation() {
        assert!(AttributeSchema::new(vec![]).is_err());
        assert!(AttributeSchema::new(vec![("a", &["x"])]).is_err());
        assert!(AttributeSchema::new(vec![("a", &["x", "x"])]).is_err());
        assert!(AttributeSchema::new(vec![("a", &["x", "y"]), ("a", &["x", "y"])]).is_err());
    }

    #[test]
    fn combinations_cover_product() {
        let s = AttributeSchema::toy();
        let c = s.combinations();
        assert_eq!(c.len(), 8);
        assert_eq!(c[0], [0, 0, 0]);
        assert_eq!(c[7], [1, 1, 1]);
        assert_eq!(AttributeSchema::reviews().combinations().len(), 12);
    }

    proptest! {
        #[test]
        fn every_block_sums_to_one(a in 0usize..2, b in 0usize..2, c in 0usize..3) {
            let s = AttributeSchema::reviews();
            let v = s.vector_from_indices(&[a, b, c]).unwrap();
            let mut offset = 0;
            for card in s.cardinalities() {
                let block = &v.onehot[offset..offset + card];
                prop_assert_eq!(block.iter().sum::<f32>(), 1.0);
                prop_assert!(block.iter().all(|&x| x == 0.0 || x == 1.0));
                offset += card;
            }
            prop_assert_eq!(offset, v.onehot.len());
        }
    }
}
