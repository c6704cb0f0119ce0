use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskError {
    #[error("class mask is empty")]
    Empty,
    #[error("class {class} in mask is out of range for {num_classes} classes")]
    OutOfRange { class: usize, num_classes: usize },
}

/// Allowed subset of the model's label space, stored sorted and deduplicated.
///
/// Softmax, argmax and every score are taken over these columns only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ClassMask(Vec<usize>);

impl ClassMask {
    pub fn new(mut classes: Vec<usize>) -> Result<Self, MaskError> {
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            return Err(MaskError::Empty);
        }
        Ok(Self(classes))
    }

    pub fn classes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, class: usize) -> bool {
        self.0.binary_search(&class).is_ok()
    }

    pub fn check_range(&self, num_classes: usize) -> Result<(), MaskError> {
        match self.0.last() {
            Some(&class) if class >= num_classes => Err(MaskError::OutOfRange { class, num_classes }),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for ClassMask {
    type Error = MaskError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ClassMask> for Vec<usize> {
    fn from(m: ClassMask) -> Self {
        m.0
    }
}

/// Column indices a score or prediction ranges over: the mask if present, else `0..num_classes`.
pub(crate) fn allowed_columns(mask: Option<&ClassMask>, num_classes: usize) -> Result<Vec<usize>, MaskError> {
    match mask {
        Some(m) => {
            m.check_range(num_classes)?;
            Ok(m.classes().to_vec())
        }
        None if num_classes == 0 => Err(MaskError::Empty),
        None => Ok((0..num_classes).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_validates() {
        let m = ClassMask::new(vec![5, 1, 5, 3]).unwrap();
        assert_eq!(m.classes(), &[1, 3, 5]);
        assert!(m.contains(3) && !m.contains(2));
        assert!(m.check_range(6).is_ok());
        assert_eq!(m.check_range(5), Err(MaskError::OutOfRange { class: 5, num_classes: 5 }));
        assert_eq!(ClassMask::new(vec![]), Err(MaskError::Empty));
    }

    #[test]
    fn serde_rejects_empty() {
        assert!(serde_json::from_str::<ClassMask>("[]").is_err());
        let m: ClassMask = serde_json::from_str("[2,0]").unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "[0,2]");
    }
}
