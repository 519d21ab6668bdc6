//! Full-pipeline evaluation over a rectangular `(n_g, A_μ)` grid.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BiasPoint, DeviceParams, EnvironmentSpectrum};
use crate::rates::total_rates;
use crate::readout::response;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub ng_min: f64,
    pub ng_max: f64,
    pub ng_steps: usize,
    pub amp_min: f64,
    pub amp_max: f64,
    pub amp_steps: usize,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ng_steps < 2 || self.amp_steps < 2 {
            return Err(Error::InvalidParam(format!(
                "grid needs at least 2 steps per axis, got {} x {}",
                self.ng_steps, self.amp_steps
            )));
        }
        let finite = [self.ng_min, self.ng_max, self.amp_min, self.amp_max].iter().all(|v| v.is_finite());
        if !finite || !(self.ng_min < self.ng_max) || !(self.amp_min < self.amp_max) {
            return Err(Error::InvalidParam("grid bounds must be finite with min < max".into()));
        }
        if self.amp_min < 0.0 {
            return Err(Error::InvalidParam(format!("amp_min must be >= 0, got {}", self.amp_min)));
        }
        Ok(())
    }

    pub fn ng(&self, i: usize) -> f64 {
        axis(self.ng_min, self.ng_max, self.ng_steps, i)
    }

    pub fn amp(&self, j: usize) -> f64 {
        axis(self.amp_min, self.amp_max, self.amp_steps, j)
    }

    pub fn len(&self) -> usize {
        self.ng_steps * self.amp_steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// closed form so that refining N -> 2N-1 reproduces the old samples
fn axis(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepOptions {
    pub m_max: Option<u32>,
    pub diagnostics: bool,
}

/// Optional per-point layers, row-major like `s11`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub t_eff: Vec<f64>,
    pub s_z0: Vec<f64>,
    pub delta_n: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub amp_index: usize,
    pub ng_index: usize,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMap {
    pub grid: SweepGrid,
    /// Row-major, amplitude is the slow index.
    pub s11: Vec<Complex64>,
    pub diagnostics: Option<Diagnostics>,
    pub defects: Vec<Defect>,
}

impl SimMap {
    pub fn at(&self, amp_index: usize, ng_index: usize) -> Complex64 {
        self.s11[amp_index * self.grid.ng_steps + ng_index]
    }

    pub fn row(&self, amp_index: usize) -> &[Complex64] {
        let n = self.grid.ng_steps;
        &self.s11[amp_index * n..(amp_index + 1) * n]
    }
}

struct PointOut {
    s11: Complex64,
    t_eff: f64,
    s_z0: f64,
    delta_n: f64,
}

fn eval_point(
    n_g: f64,
    amp: f64,
    device: &DeviceParams,
    env: &EnvironmentSpectrum,
    m_max: Option<u32>,
) -> Result<PointOut> {
    let bias = BiasPoint::new(n_g, amp, device)?;
    let rates = total_rates(&bias, env, device, m_max)?;
    let p = response(&bias, &rates, device)?;
    Ok(PointOut {
        s11: p.s11,
        t_eff: rates.t_eff,
        s_z0: rates.s_z0,
        delta_n: bias.delta_n,
    })
}

/// Evaluates model, rates and readout at every grid point. Failing points
/// are recorded as defects and hold NaN.
pub fn run_map(grid: &SweepGrid, device: &DeviceParams, env: &EnvironmentSpectrum, opts: SweepOptions) -> Result<SimMap> {
    grid.validate()?;
    device.validate()?;
    env.validate()?;
    let n = grid.ng_steps;
    let points: Vec<Result<PointOut>> = (0..grid.len())
        .into_par_iter()
        .map(|k| eval_point(grid.ng(k % n), grid.amp(k / n), device, env, opts.m_max))
        .collect();

    let nan = f64::NAN;
    let mut s11 = Vec::with_capacity(points.len());
    let mut diag = Diagnostics {
        t_eff: Vec::new(),
        s_z0: Vec::new(),
        delta_n: Vec::new(),
    };
    let mut defects = Vec::new();
    for (k, p) in points.into_iter().enumerate() {
        let p = p.unwrap_or_else(|error| {
            defects.push(Defect {
                amp_index: k / n,
                ng_index: k % n,
                error,
            });
            PointOut {
                s11: Complex64::new(nan, nan),
                t_eff: nan,
                s_z0: nan,
                delta_n: nan,
            }
        });
        s11.push(p.s11);
        if opts.diagnostics {
            diag.t_eff.push(p.t_eff);
            diag.s_z0.push(p.s_z0);
            diag.delta_n.push(p.delta_n);
        }
    }
    Ok(SimMap {
        grid: *grid,
        s11,
        diagnostics: opts.diagnostics.then_some(diag),
        defects,
    })
}

/// Adds complex Gaussian noise with per-component standard deviation
/// `rel · |s11|` at each point. Draws follow grid order, so a seed fixes
/// the result.
pub fn add_noise(map: &mut SimMap, rel: f64, seed: u64) -> Result<()> {
    if !(rel >= 0.0 && rel.is_finite()) {
        return Err(Error::InvalidParam(format!("noise level must be >= 0, got {rel}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in map.s11.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *s += rel * s.norm() * Complex64::new(re, im);
    }
    Ok(())
}

pub const CSV_HEADER: &str = "# ng,amp,re_s11,im_s11";
pub const CSV_HEADER_DIAG: &str = "# ng,amp,re_s11,im_s11,t_eff,s_z0,delta_n";

/// One row per point, amplitude slow, 17 significant digits.
pub fn write_csv<W: Write>(map: &SimMap, mut w: W) -> Result<()> {
    let g = &map.grid;
    let header = if map.diagnostics.is_some() { CSV_HEADER_DIAG } else { CSV_HEADER };
    writeln!(w, "{header}")?;
    for j in 0..g.amp_steps {
        for i in 0..g.ng_steps {
            let k = j * g.ng_steps + i;
            let s = map.s11[k];
            write!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", g.ng(i), g.amp(j), s.re, s.im)?;
            if let Some(d) = &map.diagnostics {
                write!(w, ",{:.16e},{:.16e},{:.16e}", d.t_eff[k], d.s_z0[k], d.delta_n[k])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(ng: (f64, f64, usize), amp: (f64, f64, usize)) -> SweepGrid {
        SweepGrid {
            ng_min: ng.0,
            ng_max: ng.1,
            ng_steps: ng.2,
            amp_min: amp.0,
            amp_max: amp.1,
            amp_steps: amp.2,
        }
    }

    fn env() -> EnvironmentSpectrum {
        EnvironmentSpectrum::scalar(1e6, 3.3e6, 2e6)
    }

    #[test]
    fn grid_validation() {
        assert!(grid((0.0, 1.0, 1), (0.0, 1.0, 2)).validate().is_err());
        assert!(grid((0.5, 0.5, 3), (0.0, 1.0, 2)).validate().is_err());
        assert!(grid((0.0, 1.0, 3), (-1.0, 1.0, 2)).validate().is_err());
        assert!(grid((0.0, f64::NAN, 3), (0.0, 1.0, 2)).validate().is_err());
        let g = grid((0.1, 0.4, 4), (0.0, 1e-3, 3));
        g.validate().unwrap();
        assert_eq!(g.ng(0), 0.1);
        assert_eq!(g.ng(3), 0.4);
        assert_eq!(g.amp(2), 1e-3);
    }

    #[test]
    fn no_qubit_means_flat_map() {
        let dev = DeviceParams {
            e_j: 1e-3,
            ..DeviceParams::representative()
        };
        // avoid n_g = 0.5, where the angle is undefined at zero coupling
        let g = grid((0.02, 0.47, 31), (0.0, 0.05, 5));
        let map = run_map(&g, &dev, &env(), SweepOptions::default()).unwrap();
        assert!(map.defects.is_empty(), "{:?}", map.defects.first());
        let s0 = map.s11[0];
        for s in &map.s11 {
            assert!((s - s0).norm() < 1e-9, "{s} vs {s0}");
        }
    }

    #[test]
    fn undriven_row_has_only_static_anticrossing() {
        let dev = DeviceParams::representative();
        let g = grid((0.05, 0.95, 181), (0.0, 0.05, 2));
        let map = run_map(&g, &dev, &env(), SweepOptions::default()).unwrap();
        let bg = map.at(0, 0);
        for i in 0..g.ng_steps {
            let ng = g.ng(i);
            let e_ch = dev.e_q * (1.0 - 2.0 * ng);
            let s = map.at(0, i);
            if e_ch.abs() > 0.5 * dev.f_mu {
                // higher resonances are dark without drive
                assert_eq!(s, bg, "ng = {ng}");
            }
        }
        let far = map.at(0, 60);
        let centre = map.at(0, 90);
        assert!((centre - bg).norm() > 10.0 * (far - bg).norm());
        assert!((centre - bg).norm() > 1e-6);
    }

    #[test]
    fn features_follow_the_resonance_contour() {
        let dev = DeviceParams::representative();
        let env = EnvironmentSpectrum::scalar(5e6, 1e7, 5e6);
        let no_qubit = DeviceParams { e_j: 1e-3, ..dev.clone() };
        // the n = 1 resonance sits at E_Ch = f_mu, i.e. n_g ≈ 0.4435
        // amplitudes where Δ_1 < f_rf, so the contour exists
        let g = grid((0.4375, 0.4495, 6001), (0.004, 0.024, 6));
        let map = run_map(&g, &dev, &env, SweepOptions::default()).unwrap();
        let bg = run_map(&g, &no_qubit, &env, SweepOptions::default()).unwrap();
        for j in 0..g.amp_steps {
            let (mut best, mut best_i) = (0.0, 0);
            for i in 0..g.ng_steps {
                // absorption shows up in the magnitude
                let d = (map.at(j, i).norm() - bg.at(j, i).norm()).abs();
                if d > best {
                    best = d;
                    best_i = i;
                }
            }
            let b = BiasPoint::new(g.ng(best_i), g.amp(j), &dev).unwrap();
            assert_eq!(b.n_res, 1);
            let miss = (b.splitting() - dev.f_rf).abs();
            assert!(miss < 0.05 * dev.f_rf, "row {j}: peak at splitting {} Hz", b.splitting());
        }
    }

    #[test]
    fn mirror_symmetric_magnitude() {
        let dev = DeviceParams::representative();
        let g = grid((0.3, 0.7, 41), (0.0, 0.04, 4));
        let map = run_map(&g, &dev, &env(), SweepOptions::default()).unwrap();
        for j in 0..g.amp_steps {
            for i in 0..g.ng_steps {
                let a = map.at(j, i).norm();
                let b = map.at(j, g.ng_steps - 1 - i).norm();
                if a.is_nan() {
                    assert!(b.is_nan());
                    continue;
                }
                assert!((a - b).abs() <= 1e-9 * a.max(1e-12), "({j},{i}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn deterministic_and_refinement_stable() {
        let dev = DeviceParams::representative();
        let g = grid((0.40, 0.48, 21), (0.0, 0.03, 3));
        let opts = SweepOptions {
            m_max: None,
            diagnostics: true,
        };
        let a = run_map(&g, &dev, &env(), opts).unwrap();
        let b = run_map(&g, &dev, &env(), opts).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_csv(&a, &mut ca).unwrap();
        write_csv(&b, &mut cb).unwrap();
        assert_eq!(ca, cb);

        let fine = SweepGrid { ng_steps: 41, ..g };
        let f = run_map(&fine, &dev, &env(), opts).unwrap();
        for j in 0..g.amp_steps {
            for i in 0..g.ng_steps {
                assert_eq!(fine.ng(2 * i), g.ng(i));
                let (x, y) = (a.at(j, i), f.at(j, 2 * i));
                assert!(x == y || (x.is_nan() && y.is_nan()));
            }
        }
    }

    #[test]
    fn csv_layout() {
        let dev = DeviceParams::representative();
        let g = grid((0.2, 0.3, 3), (0.0, 0.01, 2));
        let map = run_map(&g, &dev, &env(), SweepOptions::default()).unwrap();
        let mut out = Vec::new();
        write_csv(&map, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        let second: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(second[0], g.ng(1));
        assert_eq!(second[1], 0.0);
        let last: Vec<f64> = lines[6].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[1], 0.01);
        assert_eq!(last[2], map.s11[5].re);
    }

    #[test]
    fn defects_do_not_abort() {
        let dev = DeviceParams::representative();
        // m_max below n + 5 fails at every point
        let g = grid((0.2, 0.3, 3), (0.0, 0.01, 2));
        let opts = SweepOptions {
            m_max: Some(3),
            diagnostics: false,
        };
        let map = run_map(&g, &dev, &env(), opts).unwrap();
        assert_eq!(map.defects.len(), 6);
        assert!(map.s11.iter().all(|s| s.re.is_nan()));
    }

    #[test]
    fn seeded_noise() {
        let dev = DeviceParams::representative();
        let g = grid((0.40, 0.48, 21), (0.0, 0.03, 3));
        let clean = run_map(&g, &dev, &env(), SweepOptions::default()).unwrap();
        let mut a = clean.clone();
        let mut b = clean.clone();
        add_noise(&mut a, 0.01, 7).unwrap();
        add_noise(&mut b, 0.01, 7).unwrap();
        assert_eq!(a, b);
        let mut c = clean.clone();
        add_noise(&mut c, 0.01, 8).unwrap();
        assert_ne!(a, c);
        let n = clean.s11.len() as f64;
        let rms = (a.s11.iter().zip(&clean.s11).map(|(x, y)| (x - y).norm_sqr() / y.norm_sqr()).sum::<f64>() / n).sqrt();
        assert!((rms / (0.01 * 2f64.sqrt()) - 1.0).abs() < 0.25, "{rms}");
        let mut d = clean.clone();
        add_noise(&mut d, 0.0, 1).unwrap();
        assert_eq!(d, clean);
        assert!(add_noise(&mut d, -1.0, 1).is_err());
    }
}
