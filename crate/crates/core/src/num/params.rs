use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat trainable parameter buffer carved into named, disjoint segments.
///
/// Segments are appended in registration order, so they always tile the
/// buffer exactly. Learners keep every parameter group (model, encoder,
/// critic) in one vector and address groups by name prefix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    data: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if self.segments.iter().any(|s| s.name == name) {
            return Err(Error::DuplicateSegment(name));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::Shape {
                context: "ParamVector::add",
                expected: n,
                actual: values.len(),
            });
        }
        self.segments.push(Segment {
            name,
            offset: self.data.len(),
            shape,
        });
        self.data.extend(values);
        Ok(())
    }

    /// Appends every segment of `other`, prefixing names with `prefix.`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamVector) -> Result<()> {
        for s in &other.segments {
            self.add(
                format!("{prefix}.{}", s.name),
                s.shape.clone(),
                other.data[s.range()].to_vec(),
            )?;
        }
        Ok(())
    }

    /// Extracts the segments under `prefix.` into a standalone vector with
    /// the prefix stripped.
    pub fn sub(&self, prefix: &str) -> ParamVector {
        let lead = format!("{prefix}.");
        let mut out = ParamVector::new();
        for s in &self.segments {
            if let Some(rest) = s.name.strip_prefix(&lead) {
                out.add(rest, s.shape.clone(), self.data[s.range()].to_vec())
                    .expect("segments are unique");
            }
        }
        out
    }

    /// Writes a standalone vector back under `prefix.`.
    pub fn set_sub(&mut self, prefix: &str, values: &ParamVector) -> Result<()> {
        for s in &values.segments {
            let name = format!("{prefix}.{}", s.name);
            let dst = self.segment(&name)?.range();
            self.data[dst].copy_from_slice(values.get(&s.name)?);
        }
        Ok(())
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::UnknownSegment(name.to_string()))
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        let r = self.segment(name)?.range();
        Ok(&self.data[r])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let r = self.segment(name)?.range();
        Ok(&mut self.data[r])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.segments.iter().any(|s| s.name == name)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector {
            data: vec![0.0; self.data.len()],
            segments: self.segments.clone(),
        }
    }

    /// Same layout, new buffer.
    pub fn with_data(&self, data: Vec<f64>) -> Result<ParamVector> {
        if data.len() != self.data.len() {
            return Err(Error::Shape {
                context: "ParamVector::with_data",
                expected: self.data.len(),
                actual: data.len(),
            });
        }
        Ok(ParamVector {
            data,
            segments: self.segments.clone(),
        })
    }

    /// `self += alpha * other`; layouts must agree.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        debug_assert_eq!(self.segments, other.segments);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// Zeroes every coordinate outside segments whose name starts with `prefix`.
    pub fn mask_prefix(&mut self, prefix: &str) {
        for s in &self.segments {
            if !s.name.starts_with(prefix) {
                self.data[s.range()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Range covering all segments under `prefix`; they must be contiguous.
    pub fn prefix_range(&self, prefix: &str) -> Option<std::ops::Range<usize>> {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for s in self.segments.iter().filter(|s| s.name.starts_with(prefix)) {
            lo = lo.min(s.offset);
            hi = hi.max(s.offset + s.len());
        }
        (lo < hi).then_some(lo..hi)
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
