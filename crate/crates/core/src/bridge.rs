//! Lazily refined Brownian-bridge skeletons.
//!
//! A [`LazyBridge`] pins `W_a = x_a` and `W_b = x_b` and materializes `W_t`
//! only when asked. A new value is drawn from the bridge law conditional on the
//! two nearest skeleton neighbours, so the realized skeleton is always a
//! consistent finite-dimensional sample of one path.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::normal;

/// Exact binary time value with a total order. `-0.0` is folded into `0.0`.
#[derive(Clone, Copy, Debug)]
struct TimeKey(f64);

impl TimeKey {
    fn new(t: f64) -> Self {
        TimeKey(t + 0.0)
    }
}

impl PartialEq for TimeKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for TimeKey {}
impl PartialOrd for TimeKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for TimeKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug)]
pub struct LazyBridge {
    a: f64,
    b: f64,
    x_a: f64,
    x_b: f64,
    skeleton: BTreeMap<TimeKey, f64>,
    insertions: Vec<TimeKey>,
}

/// Position in a bridge's insertion history, see [`LazyBridge::mark`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mark(usize);

impl LazyBridge {
    pub fn new(a: f64, x_a: f64, b: f64, x_b: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bridge interval needs finite a < b, got [{a}, {b}]"
            )));
        }
        if !(x_a.is_finite() && x_b.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bridge endpoints must be finite, got ({x_a}, {x_b})"
            )));
        }
        let mut skeleton = BTreeMap::new();
        skeleton.insert(TimeKey::new(a), x_a);
        skeleton.insert(TimeKey::new(b), x_b);
        Ok(LazyBridge {
            a,
            b,
            x_a,
            x_b,
            skeleton,
            insertions: Vec::new(),
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn endpoints(&self) -> (f64, f64) {
        (self.x_a, self.x_b)
    }

    /// Number of skeleton points, endpoints included.
    pub fn len(&self) -> usize {
        self.skeleton.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: f64) -> bool {
        self.skeleton.contains_key(&TimeKey::new(t))
    }

    pub fn skeleton(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.skeleton.iter().map(|(k, &v)| (k.0, v))
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if t >= self.a && t <= self.b {
            Ok(())
        } else {
            Err(Error::OutsideBridge {
                t,
                a: self.a,
                b: self.b,
            })
        }
    }

    /// Conditional mean and variance of `W_t` given the skeleton, or `None`
    /// when `t` is already materialized.
    pub fn conditional(&self, t: f64) -> Result<Option<(f64, f64)>> {
        self.check_range(t)?;
        let key = TimeKey::new(t);
        if self.skeleton.contains_key(&key) {
            return Ok(None);
        }
        let (&TimeKey(s), &w_s) = self
            .skeleton
            .range(..key)
            .next_back()
            .expect("left endpoint bounds every interior time");
        let (&TimeKey(u), &w_u) = self
            .skeleton
            .range(key..)
            .next()
            .expect("right endpoint bounds every interior time");
        let span = u - s;
        let mean = w_s + (t - s) / span * (w_u - w_s);
        let var = ((t - s) * (u - t) / span).max(0.0);
        Ok(Some((mean, var)))
    }

    fn insert(&mut self, t: f64, w: f64) {
        let key = TimeKey::new(t);
        self.skeleton.insert(key, w);
        self.insertions.push(key);
    }

    /// `W_t`, drawing it from the conditional bridge law if it is new. A fresh
    /// draw consumes exactly one uniform from `rng` (inverse-CDF Gaussian).
    pub fn value_at<R: RngCore + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<f64> {
        Ok(self.value_at_counted(t, rng)?.0)
    }

    /// Like [`value_at`](Self::value_at), also reporting whether a new point
    /// was inserted.
    pub fn value_at_counted<R: RngCore + ?Sized>(
        &mut self,
        t: f64,
        rng: &mut R,
    ) -> Result<(f64, bool)> {
        match self.conditional(t)? {
            None => Ok((self.skeleton[&TimeKey::new(t)], false)),
            Some((mean, var)) => {
                let w = mean + var.sqrt() * normal::std_normal(rng);
                self.insert(t, w);
                Ok((w, true))
            }
        }
    }

    /// Inserts `W_t` driven by the given uniform: the normal deviate is
    /// `Φ⁻¹(u01)`. `t` must not already be in the skeleton.
    pub fn value_at_with_uniform(&mut self, t: f64, u01: f64) -> Result<f64> {
        if !(u01 > 0.0 && u01 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "driving uniform must lie in (0, 1), got {u01}"
            )));
        }
        match self.conditional(t)? {
            None => Err(Error::TimeAlreadyPresent(t)),
            Some((mean, var)) => {
                let w = mean + var.sqrt() * normal::inv_cdf(u01);
                self.insert(t, w);
                Ok(w)
            }
        }
    }

    pub fn mark(&self) -> Mark {
        Mark(self.insertions.len())
    }

    /// Removes every point inserted after `mark`.
    pub fn rollback(&mut self, mark: Mark) {
        while self.insertions.len() > mark.0 {
            let key = self.insertions.pop().expect("length checked");
            self.skeleton.remove(&key);
        }
    }

    /// Debug dump: `time,value` rows in time order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,value")?;
        for (t, x) in self.skeleton() {
            writeln!(w, "{t:?},{x:?}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn construction() {
        let b = LazyBridge::new(0.0, 1.0, 2.0, 3.0).unwrap();
        assert_eq!(b.interval(), (0.0, 2.0));
        assert_eq!(b.endpoints(), (1.0, 3.0));
        assert_eq!(b.skeleton().collect::<Vec<_>>(), vec![(0.0, 1.0), (2.0, 3.0)]);
        assert!(LazyBridge::new(1.0, 0.0, 1.0, 0.0).is_err());
        assert!(LazyBridge::new(2.0, 0.0, 1.0, 0.0).is_err());
        assert!(LazyBridge::new(0.0, f64::NAN, 1.0, 0.0).is_err());
    }

    #[test]
    fn endpoints_do_not_touch_rng() {
        let mut b = LazyBridge::new(0.0, 1.0, 2.0, 3.0).unwrap();
        let mut rng = stream(1, 0);
        let reference = rng.clone();
        assert_eq!(b.value_at(0.0, &mut rng).unwrap(), 1.0);
        assert_eq!(b.value_at(2.0, &mut rng).unwrap(), 3.0);
        assert_eq!(b.value_at(-0.0, &mut rng).unwrap(), 1.0);
        assert_eq!(rng, reference);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn memoized_queries() {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let mut rng = stream(2, 0);
        let first = b.value_at(0.37, &mut rng).unwrap();
        let second = b.value_at(0.37, &mut rng).unwrap();
        assert_eq!(first, second);
        b.value_at(0.1, &mut rng).unwrap();
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn out_of_range() {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let mut rng = stream(3, 0);
        assert!(matches!(b.value_at(1.5, &mut rng), Err(Error::OutsideBridge { .. })));
        assert!(b.value_at_with_uniform(-0.1, 0.5).is_err());
    }

    #[test]
    fn uniform_driven_values() {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(b.value_at_with_uniform(0.25, 0.5).unwrap(), 0.5);
        let mut c = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let w = c.value_at_with_uniform(0.5, 0.841_344_7).unwrap();
        assert!((w - 0.5).abs() < 1e-6);
        assert!(matches!(
            c.value_at_with_uniform(0.5, 0.3),
            Err(Error::TimeAlreadyPresent(_))
        ));
        assert!(matches!(
            c.value_at_with_uniform(1.0, 0.3),
            Err(Error::TimeAlreadyPresent(_))
        ));
        let mut d = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        assert!(d.value_at_with_uniform(0.5, 1e-300).unwrap() < -18.0);
        assert!(d.value_at_with_uniform(0.6, 0.0).is_err());
    }

    #[test]
    fn conditional_variance_vanishes_at_neighbours() {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        b.value_at_with_uniform(0.5, 0.7).unwrap();
        let (_, v) = b.conditional(0.25).unwrap().unwrap();
        assert!((v - 0.125).abs() < 1e-15);
        assert!(b.conditional(0.5).unwrap().is_none());
    }

    #[test]
    fn rollback_restores_skeleton() {
        let mut b = LazyBridge::new(0.0, 0.0, 1.0, 0.0).unwrap();
        let mut rng = stream(4, 0);
        b.value_at(0.5, &mut rng).unwrap();
        let mark = b.mark();
        let before: Vec<_> = b.skeleton().collect();
        b.value_at(0.2, &mut rng).unwrap();
        b.value_at_with_uniform(0.9, 0.1).unwrap();
        b.rollback(mark);
        assert_eq!(b.skeleton().collect::<Vec<_>>(), before);
    }
}
