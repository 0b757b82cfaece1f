//! Dense rank-2 tensors in `[channels, time]` layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A channels-by-time matrix of finite reals, stored row-major so that
/// `data[c * time + t]` is channel `c` at step `t`. Network inputs are
/// `[1, w]`, dense outputs `[h, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "F: Serialize",
    deserialize = "F: serde::de::DeserializeOwned"
))]
pub struct Tensor<F: Scalar> {
    channels: usize,
    time: usize,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(channels: usize, time: usize) -> Self {
        Self {
            channels,
            time,
            data: vec![F::zero(); channels * time],
        }
    }

    /// Builds a tensor from row-major data, validating the element count.
    pub fn from_data(channels: usize, time: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != channels * time {
            return Err(Error::shape(
                "tensor",
                format!(
                    "{} elements for shape [{channels}, {time}]",
                    data.len()
                ),
            ));
        }
        Ok(Self {
            channels,
            time,
            data,
        })
    }

    /// Single-channel tensor over a value sequence: shape `[1, len]`.
    pub fn from_series(values: &[F]) -> Self {
        Self {
            channels: 1,
            time: values.len(),
            data: values.to_vec(),
        }
    }

    /// Column vector `[len, 1]`.
    pub fn column(values: &[F]) -> Self {
        Self {
            channels: values.len(),
            time: 1,
            data: values.to_vec(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, channel: usize, step: usize) -> F {
        debug_assert!(channel < self.channels && step < self.time);
        self.data[channel * self.time + step]
    }

    #[inline]
    pub fn at_mut(&mut self, channel: usize, step: usize) -> &mut F {
        debug_assert!(channel < self.channels && step < self.time);
        &mut self.data[channel * self.time + step]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// One channel's value sequence.
    pub fn channel(&self, c: usize) -> &[F] {
        &self.data[c * self.time..(c + 1) * self.time]
    }

    /// The values of time step `t` across channels.
    pub fn step(&self, t: usize) -> Vec<F> {
        (0..self.channels).map(|c| self.at(c, t)).collect()
    }

    /// Reinterprets the buffer with a new shape of the same element count.
    pub fn reshaped(mut self, channels: usize, time: usize) -> Result<Self> {
        if channels * time != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!(
                    "[{}, {}] -> [{channels}, {time}]",
                    self.channels, self.time
                ),
            ));
        }
        self.channels = channels;
        self.time = time;
        Ok(self)
    }

    /// Errors with the offending primitive's name if any entry is NaN/Inf.
    pub fn ensure_finite(&self, primitive: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                primitive: primitive.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let t = Tensor::from_data(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.channel(0), &[1.0, 2.0, 3.0]);
        assert_eq!(t.channel(1), &[4.0, 5.0, 6.0]);
        assert_eq!(t.at(1, 2), 6.0);
        assert_eq!(t.step(1), vec![2.0, 5.0]);
    }

    #[test]
    fn from_data_validates_length() {
        assert!(Tensor::from_data(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn reshape_preserves_buffer() {
        let t = Tensor::from_data(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let r = t.reshaped(6, 1).unwrap();
        assert_eq!(r.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(r.clone().reshaped(4, 2).is_err());
    }

    #[test]
    fn finiteness_check_names_primitive() {
        let mut t = Tensor::<f64>::zeros(1, 2);
        assert!(t.ensure_finite("dense").is_ok());
        *t.at_mut(0, 1) = f64::NAN;
        match t.ensure_finite("dense").unwrap_err() {
            Error::NonFinite { primitive } => assert_eq!(primitive, "dense"),
            other => panic!("unexpected error: {other}"),
        }
    }
}
