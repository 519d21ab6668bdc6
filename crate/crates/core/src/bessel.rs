//! Bessel functions of the first kind for integer order.
//!
//! All orders `0..=K` at a fixed argument are produced together by Miller's
//! backward recurrence, normalized with `J_0 + 2 Σ J_2k = 1`. Negative
//! orders follow from `J_{-n} = (-1)^n J_n`.

use crate::error::{Error, Result};

pub const MAX_ORDER: i64 = 1000;
pub const MAX_ARG: f64 = 100.0;

const RESCALE_AT: f64 = 1e250;

/// `J_k(x)` for `0 <= k <= max_order` at one argument.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselTable {
    x: f64,
    values: Vec<f64>,
}

impl BesselTable {
    pub fn new(x: f64, max_order: usize) -> Result<Self> {
        if !(0.0..=MAX_ARG).contains(&x) {
            return Err(Error::BesselDomain(x));
        }
        if max_order as i64 > MAX_ORDER {
            return Err(Error::BesselOrder(max_order as i64));
        }
        let mut values = vec![0.0; max_order + 1];
        if x == 0.0 {
            values[0] = 1.0;
            return Ok(Self { x, values });
        }

        // start far enough above max(K, x) that J_start is below 1e-18
        let top = (max_order as f64).max(x.ceil());
        let mut start = (top + 40.0 + 2.0 * x.sqrt().ceil()) as usize;
        start += start % 2;

        let mut next = 0.0; // J_{k+1}
        let mut cur = 1e-300; // J_k, arbitrary seed at k = start
        let mut norm = 0.0;
        for k in (1..=start).rev() {
            if k <= max_order {
                values[k] = cur;
            }
            if k % 2 == 0 {
                norm += 2.0 * cur;
            }
            let prev = (2.0 * k as f64 / x) * cur - next;
            next = cur;
            cur = prev;
            if cur.abs() > RESCALE_AT {
                let s = 1.0 / RESCALE_AT;
                cur *= s;
                next *= s;
                norm *= s;
                for v in &mut values {
                    *v *= s;
                }
            }
        }
        values[0] = cur;
        norm += cur;
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { x, values })
    }

    pub fn arg(&self) -> f64 {
        self.x
    }

    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }

    /// Signed `J_order(x)`. Panics if `|order|` exceeds the table.
    pub fn get(&self, order: i64) -> f64 {
        let k = order.unsigned_abs() as usize;
        let v = self.values[k];
        if order < 0 && k % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

/// `J_order(x)` for `|order| <= 1000`, `0 <= x <= 100`.
pub fn bessel_j(order: i64, x: f64) -> Result<f64> {
    if order.abs() > MAX_ORDER {
        return Err(Error::BesselOrder(order));
    }
    let table = BesselTable::new(x, order.unsigned_abs() as usize)?;
    Ok(table.get(order))
}
