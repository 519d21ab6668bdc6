//! Recovery of environment parameters from reflection maps.
//!
//! Per amplitude slice the free parameters are `(s_phi0, s_rel, s_ohmic)`;
//! over the whole map the extra dephasing pair `(s_x0, s_x_mu)`. All
//! parameters are optimized in log space, which keeps them positive.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BiasPoint, DeviceParams, EnvironmentSpectrum, RelModel};
use crate::optim::{nelder_mead, NmOptions};
use crate::rates::RateBasis;
use crate::readout::response;
use crate::sweep::{Diagnostics, SimMap, SweepGrid};

/// Reflection map read from disk (or wrapped from a simulation).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredMap {
    pub source: Option<PathBuf>,
    pub ng: Vec<f64>,
    pub amp: Vec<f64>,
    /// Row-major, amplitude is the slow index.
    pub s11: Vec<Complex64>,
    pub weights: Option<Vec<f64>>,
    pub diagnostics: Option<Diagnostics>,
}

/// One amplitude row of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub amp: f64,
    pub ng: Vec<f64>,
    pub s11: Vec<Complex64>,
    pub weights: Option<Vec<f64>>,
}

impl MeasuredMap {
    pub fn from_sim(map: &SimMap) -> Self {
        let g = &map.grid;
        Self {
            source: None,
            ng: (0..g.ng_steps).map(|i| g.ng(i)).collect(),
            amp: (0..g.amp_steps).map(|j| g.amp(j)).collect(),
            s11: map.s11.clone(),
            weights: None,
            diagnostics: map.diagnostics.clone(),
        }
    }

    /// Grid spanned by the axes; exact when the axes came from a sweep.
    pub fn grid(&self) -> SweepGrid {
        SweepGrid {
            ng_min: self.ng[0],
            ng_max: *self.ng.last().unwrap(),
            ng_steps: self.ng.len(),
            amp_min: self.amp[0],
            amp_max: *self.amp.last().unwrap(),
            amp_steps: self.amp.len(),
        }
    }

    pub fn slice(&self, j: usize) -> Slice {
        let n = self.ng.len();
        let range = j * n..(j + 1) * n;
        Slice {
            amp: self.amp[j],
            ng: self.ng.clone(),
            s11: self.s11[range.clone()].to_vec(),
            weights: self.weights.as_ref().map(|w| w[range].to_vec()),
        }
    }

    pub fn slices(&self) -> Vec<Slice> {
        (0..self.amp.len()).map(|j| self.slice(j)).collect()
    }
}

const REQUIRED: [&str; 4] = ["ng", "amp", "re_s11", "im_s11"];
const DIAG: [&str; 3] = ["t_eff", "s_z0", "delta_n"];

pub fn load_measurement(path: &Path) -> Result<MeasuredMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut map = parse_measurement(&text)?;
    map.source = Some(path.to_path_buf());
    Ok(map)
}

/// Parses the sweep CSV layout. An optional `weight` column is accepted.
pub fn parse_measurement(text: &str) -> Result<MeasuredMap> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header
        .strip_prefix('#')
        .ok_or(Error::Parse {
            line: 1,
            msg: "missing '# ng,amp,re_s11,im_s11' header".into(),
        })?
        .split(',')
        .map(str::trim)
        .collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let mut idx = [0usize; 4];
    for (k, name) in REQUIRED.iter().enumerate() {
        idx[k] = find(name).ok_or(Error::Parse {
            line: 1,
            msg: format!("header lacks column '{name}'"),
        })?;
    }
    let diag_idx: Option<Vec<usize>> = DIAG.iter().map(|n| find(n)).collect();
    let weight_idx = find("weight");

    let (mut ng, mut amp) = (Vec::new(), Vec::new());
    let mut s11 = Vec::new();
    let mut weights = Vec::new();
    let mut diag = Diagnostics {
        t_eff: Vec::new(),
        s_z0: Vec::new(),
        delta_n: Vec::new(),
    };
    let mut row_len = None;
    let mut in_row = 0usize;
    let mut rows = 0usize;
    for (lineno, line) in lines {
        let line_no = lineno + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(fields.len());
        for (c, f) in cols.iter().zip(&fields) {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("column '{c}': cannot parse '{f}'"),
            })?;
            let must_be_finite = REQUIRED.contains(c) || *c == "weight";
            if v.is_nan() || (must_be_finite && !v.is_finite()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("column '{c}': non-finite value '{f}'"),
                });
            }
            vals.push(v);
        }
        let (x, a) = (vals[idx[0]], vals[idx[1]]);
        if rows == 0 || a != *amp.last().unwrap() {
            if rows > 0 {
                match row_len {
                    None => row_len = Some(in_row),
                    Some(n) if n != in_row => {
                        return Err(Error::RaggedGrid(format!("row at amp {} has {in_row} points, expected {n}", amp.last().unwrap())))
                    }
                    _ => {}
                }
            }
            amp.push(a);
            rows += 1;
            in_row = 0;
        }
        if rows == 1 {
            ng.push(x);
        } else if in_row >= ng.len() || ng[in_row] != x {
            return Err(Error::RaggedGrid(format!("line {line_no}: ng = {x} does not match the first row")));
        }
        in_row += 1;
        s11.push(Complex64::new(vals[idx[2]], vals[idx[3]]));
        if let Some(w) = weight_idx {
            weights.push(vals[w]);
        }
        if let Some(d) = &diag_idx {
            diag.t_eff.push(vals[d[0]]);
            diag.s_z0.push(vals[d[1]]);
            diag.delta_n.push(vals[d[2]]);
        }
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    if in_row != ng.len() {
        return Err(Error::RaggedGrid(format!("last row has {in_row} points, expected {}", ng.len())));
    }
    if ng.windows(2).any(|w| !(w[0] < w[1])) || amp.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::RaggedGrid("axes must be strictly increasing".into()));
    }
    Ok(MeasuredMap {
        source: None,
        ng,
        amp,
        s11,
        weights: weight_idx.map(|_| weights),
        diagnostics: diag_idx.map(|_| diag),
    })
}

/// Per-slice relaxation parameters [s⁻¹].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params3 {
    pub s_phi0: f64,
    pub s_rel: f64,
    pub s_ohmic: f64,
}

impl Params3 {
    pub fn to_array(self) -> [f64; 3] {
        [self.s_phi0, self.s_rel, self.s_ohmic]
    }

    fn from_slice(x: &[f64]) -> Self {
        Self {
            s_phi0: x[0],
            s_rel: x[1],
            s_ohmic: x[2],
        }
    }
}

/// Everything the forward model needs besides the fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitContext {
    pub device: DeviceParams,
    /// Supplies `s_x0`, `s_x_mu` and `t_bath`; its relaxation fields are
    /// replaced by the fitted ones.
    pub env: EnvironmentSpectrum,
    pub m_max: Option<u32>,
}

impl FitContext {
    fn env_with(&self, p: Params3, s_x: Option<(f64, f64)>) -> EnvironmentSpectrum {
        let (s_x0, s_x_mu) = s_x.unwrap_or((self.env.s_x0, self.env.s_x_mu));
        EnvironmentSpectrum {
            s_phi0: p.s_phi0,
            rel_model: RelModel::PerSliceScalar { s_rel: p.s_rel },
            s_ohmic: p.s_ohmic,
            s_x0,
            s_x_mu,
            t_bath: self.env.t_bath,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Evaluation budget per simplex run.
    pub max_evals: usize,
    /// Jittered restarts in addition to the run from the initial guess.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_evals: 3000,
            restarts: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slice_amp: f64,
    /// Drive strength and dressed gap at the slice centre.
    pub alpha: f64,
    pub n_res: u32,
    /// `Δ_n - f_rf` at the slice centre [Hz].
    pub gap_detuning: f64,
    pub params: Params3,
    pub residual: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
    pub param_spread: Spread3,
}

/// One-sigma parameter uncertainties; `None` where the objective has no
/// curvature along that parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread3 {
    pub s_phi0: Option<f64>,
    pub s_rel: Option<f64>,
    pub s_ohmic: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread2 {
    pub s_x0: Option<f64>,
    pub s_x_mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingParams {
    pub s_x0: f64,
    pub s_x_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalFitResult {
    pub s_x0: f64,
    pub s_x_mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
    pub param_spread: Spread2,
}

/// Forward model of one slice with the environment-independent work done.
pub struct SliceModel<'a> {
    slice: &'a Slice,
    ctx: &'a FitContext,
    points: Vec<Option<(BiasPoint, RateBasis)>>,
}

impl<'a> SliceModel<'a> {
    pub fn new(slice: &'a Slice, ctx: &'a FitContext) -> Result<Self> {
        if slice.ng.is_empty() || slice.ng.len() != slice.s11.len() {
            return Err(Error::InvalidParam("slice must be non-empty with one s11 per n_g".into()));
        }
        if let Some(w) = &slice.weights {
            if w.len() != slice.s11.len() || w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParam("weights must be >= 0, one per point".into()));
            }
        }
        let points = slice
            .ng
            .iter()
            .map(|&n_g| {
                let b = BiasPoint::new(n_g, slice.amp, &ctx.device).ok()?;
                let basis = RateBasis::new(&b, &ctx.device, ctx.m_max).ok()?;
                Some((b, basis))
            })
            .collect();
        Ok(Self { slice, ctx, points })
    }

    /// Model reflection at every point; `None` where the forward model fails.
    pub fn predict(&self, env: &EnvironmentSpectrum) -> Vec<Option<Complex64>> {
        self.points
            .iter()
            .map(|p| {
                let (b, basis) = p.as_ref()?;
                let rates = basis.rates(env, self.ctx.device.f_rf);
                response(b, &rates, &self.ctx.device).ok().map(|r| r.s11)
            })
            .collect()
    }

    /// Weighted complex least squares; `+inf` if any point fails.
    pub fn cost(&self, env: &EnvironmentSpectrum) -> f64 {
        let mut sum = 0.0;
        for (k, p) in self.predict(env).into_iter().enumerate() {
            let Some(s) = p else { return f64::INFINITY };
            let w = self.slice.weights.as_ref().map_or(1.0, |w| w[k]);
            sum += w * (s - self.slice.s11[k]).norm_sqr();
        }
        if sum.is_finite() {
            sum
        } else {
            f64::INFINITY
        }
    }
}

/// `Σ w |s11_model − s11_measured|²` over the slice.
pub fn objective(params: Params3, slice: &Slice, ctx: &FitContext) -> f64 {
    if params.to_array().iter().any(|v| !(*v >= 0.0)) {
        return f64::INFINITY;
    }
    match SliceModel::new(slice, ctx) {
        Ok(m) => m.cost(&ctx.env_with(params, None)),
        Err(_) => f64::INFINITY,
    }
}

fn positive_init(x: &[f64]) -> Result<Vec<f64>> {
    x.iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::InvalidParam(format!("initial guesses must be > 0, got {v}")))
            }
        })
        .collect()
}

struct Best {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
    evals: usize,
}

// simplex runs from the start point and from `restarts` jittered copies
fn multi_start<F: Fn(&[f64]) -> f64>(cost: F, start: &[f64], opts: &FitOptions) -> Best {
    let nm = NmOptions {
        max_evals: opts.max_evals,
        ..NmOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Best> = None;
    let mut evals = 0;
    for run in 0..=opts.restarts {
        let x0: Vec<f64> = if run == 0 {
            start.to_vec()
        } else {
            start.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect()
        };
        let r = nelder_mead(&cost, &x0, &nm);
        evals += r.evals;
        if best.as_ref().map_or(true, |b| r.f < b.f) {
            best = Some(Best {
                x: r.x,
                f: r.f,
                iterations: r.iterations,
                converged: r.converged,
                evals: 0,
            });
        }
    }
    let mut best = best.unwrap();
    best.evals = evals;
    best
}

// 1σ spread per coordinate from the diagonal curvature in log space;
// the noise variance per real component is estimated from the residual
fn log_spread<F: Fn(&[f64]) -> f64>(cost: F, x: &[f64], f0: f64, n_points: usize) -> Vec<Option<f64>> {
    let dof = (2 * n_points).saturating_sub(x.len()).max(1);
    let var = f0 / dof as f64;
    let h = 1e-3;
    (0..x.len())
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let curv = (cost(&xp) + cost(&xm) - 2.0 * f0) / (h * h);
            let sd = x[i].exp() * (2.0 * var / curv).sqrt();
            (curv > 0.0 && sd.is_finite()).then_some(sd)
        })
        .collect()
}

/// Fits `(s_phi0, s_rel, s_ohmic)` to one slice.
pub fn fit_slice(slice: &Slice, ctx: &FitContext, init: Params3, opts: &FitOptions) -> Result<FitResult> {
    let model = SliceModel::new(slice, ctx)?;
    let start = positive_init(&init.to_array())?;
    let cost = |x: &[f64]| {
        let p = Params3::from_slice(&x.iter().map(|v| v.exp()).collect::<Vec<_>>());
        model.cost(&ctx.env_with(p, None))
    };
    let best = multi_start(cost, &start, opts);
    let spread = log_spread(cost, &best.x, best.f, slice.s11.len());
    let centre = BiasPoint::new(slice.ng[slice.ng.len() / 2], slice.amp, &ctx.device)?;
    Ok(FitResult {
        slice_amp: slice.amp,
        alpha: centre.alpha,
        n_res: centre.n_res,
        gap_detuning: centre.delta_n - ctx.device.f_rf,
        params: Params3::from_slice(&best.x.iter().map(|v| v.exp()).collect::<Vec<_>>()),
        residual: best.f,
        iterations: best.iterations,
        evals: best.evals,
        converged: best.converged,
        param_spread: Spread3 {
            s_phi0: spread[0],
            s_rel: spread[1],
            s_ohmic: spread[2],
        },
    })
}

/// Fits every slice independently; slice `j` uses seed `seed + j`.
pub fn fit_map(map: &MeasuredMap, ctx: &FitContext, init: Params3, opts: &FitOptions) -> Result<Vec<FitResult>> {
    map.slices()
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let o = FitOptions {
                seed: opts.seed.wrapping_add(j as u64),
                ..*opts
            };
            fit_slice(s, ctx, init, &o)
        })
        .collect()
}

/// Fits `(s_x0, s_x_mu)` over the whole map with per-slice relaxation
/// parameters held fixed.
pub fn fit_global_dephasing(
    map: &MeasuredMap,
    ctx: &FitContext,
    per_slice: &[Params3],
    init: DephasingParams,
    opts: &FitOptions,
) -> Result<GlobalFitResult> {
    if per_slice.len() != map.amp.len() {
        return Err(Error::InvalidParam(format!(
            "{} per-slice parameter sets for {} slices",
            per_slice.len(),
            map.amp.len()
        )));
    }
    let slices = map.slices();
    let models: Vec<SliceModel> = slices.iter().map(|s| SliceModel::new(s, ctx)).collect::<Result<_>>()?;
    let start = positive_init(&[init.s_x0, init.s_x_mu])?;
    let cost = |x: &[f64]| {
        let s_x = Some((x[0].exp(), x[1].exp()));
        models
            .iter()
            .zip(per_slice)
            .map(|(m, p)| m.cost(&ctx.env_with(*p, s_x)))
            .sum::<f64>()
    };
    let best = multi_start(cost, &start, opts);
    let spread = log_spread(cost, &best.x, best.f, map.s11.len());
    Ok(GlobalFitResult {
        s_x0: best.x[0].exp(),
        s_x_mu: best.x[1].exp(),
        residual: best.f,
        iterations: best.iterations,
        evals: best.evals,
        converged: best.converged,
        param_spread: Spread2 {
            s_x0: spread[0],
            s_x_mu: spread[1],
        },
    })
}

/// Cost of the whole map at fixed per-slice and dephasing parameters.
pub fn global_objective(map: &MeasuredMap, ctx: &FitContext, per_slice: &[Params3], s_x: DephasingParams) -> f64 {
    map.slices()
        .iter()
        .zip(per_slice)
        .map(|(s, p)| match SliceModel::new(s, ctx) {
            Ok(m) => m.cost(&ctx.env_with(*p, Some((s_x.s_x0, s_x.s_x_mu)))),
            Err(_) => f64::INFINITY,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{add_noise, run_map, write_csv, SweepOptions};

    fn ctx() -> FitContext {
        FitContext {
            device: DeviceParams::representative(),
            env: EnvironmentSpectrum::scalar(0.0, 0.0, 0.0),
            m_max: None,
        }
    }

    const TRUTH: Params3 = Params3 {
        s_phi0: 1e6,
        s_rel: 3.3e6,
        s_ohmic: 2e6,
    };

    fn synthetic_slice(ctx: &FitContext, p: Params3) -> Slice {
        let amp = 0.02;
        let ng: Vec<f64> = (0..80).map(|i| 0.4380 + 0.0001 * i as f64).collect();
        let mut s = Slice {
            amp,
            s11: vec![Complex64::new(0.0, 0.0); ng.len()],
            ng,
            weights: None,
        };
        let model = SliceModel::new(&s, ctx).unwrap();
        let pred = model.predict(&ctx.env_with(p, None));
        s.s11 = pred.into_iter().map(Option::unwrap).collect();
        s
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_measurement(""), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_measurement("# ng,amp,re_s11,im_s11\n"), Err(Error::Parse { .. })));
        let nan = "# ng,amp,re_s11,im_s11\n0.1,0,1,0\n0.2,0,NaN,0\n";
        match parse_measurement(nan) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("re_s11"));
            }
            other => panic!("{other:?}"),
        }
        let bad = "# ng,amp,re_s11,im_s11\n0.1,0,1,0\n0.2,0,x,0\n";
        assert!(matches!(parse_measurement(bad), Err(Error::Parse { line: 3, .. })));
        let short = "# ng,amp,re_s11,im_s11\n0.1,0,1\n";
        assert!(matches!(parse_measurement(short), Err(Error::Parse { line: 2, .. })));
        let ragged = "# ng,amp,re_s11,im_s11\n0.1,0,1,0\n0.2,0,1,0\n0.1,1,1,0\n";
        assert!(matches!(parse_measurement(ragged), Err(Error::RaggedGrid(_))));
        let shifted = "# ng,amp,re_s11,im_s11\n0.1,0,1,0\n0.2,0,1,0\n0.1,1,1,0\n0.3,1,1,0\n";
        assert!(matches!(parse_measurement(shifted), Err(Error::RaggedGrid(_))));
        let no_header = "0.1,0,1,0\n";
        assert!(matches!(parse_measurement(no_header), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn weights_column() {
        let text = "# ng,amp,re_s11,im_s11,weight\n0.1,0,1,0,2\n0.2,0,1,0,0.5\n0.1,1,1,0,1\n0.2,1,1,0,1\n";
        let m = parse_measurement(text).unwrap();
        assert_eq!(m.weights.as_deref(), Some(&[2.0, 0.5, 1.0, 1.0][..]));
        assert_eq!(m.amp, vec![0.0, 1.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = ctx();
        let g = SweepGrid {
            ng_min: 0.43,
            ng_max: 0.46,
            ng_steps: 17,
            amp_min: 0.0,
            amp_max: 0.03,
            amp_steps: 4,
        };
        let env = EnvironmentSpectrum::scalar(1e6, 3.3e6, 2e6);
        for diagnostics in [false, true] {
            let sim = run_map(&g, &c.device, &env, SweepOptions { m_max: None, diagnostics }).unwrap();
            let mut buf = Vec::new();
            write_csv(&sim, &mut buf).unwrap();
            let back = parse_measurement(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back, MeasuredMap::from_sim(&sim));
            assert_eq!(back.grid(), g);
        }
    }

    #[test]
    fn generating_parameters_give_zero_objective() {
        let c = ctx();
        let s = synthetic_slice(&c, TRUTH);
        assert!(objective(TRUTH, &s, &c) < 1e-20);
        let off = Params3 { s_rel: 4e6, ..TRUTH };
        assert!(objective(off, &s, &c) > 1e-10);
        assert!(objective(Params3 { s_rel: -1.0, ..TRUTH }, &s, &c).is_infinite());
    }

    #[test]
    fn objective_is_quadratic_in_residuals() {
        let c = ctx();
        let s = synthetic_slice(&c, TRUTH);
        let off = Params3 { s_ohmic: 2.5e6, ..TRUTH };
        let model = SliceModel::new(&s, &c).unwrap();
        let pred: Vec<Complex64> = model.predict(&c.env_with(off, None)).into_iter().map(Option::unwrap).collect();
        let base = objective(off, &s, &c);
        // move the data so every residual doubles
        let mut doubled = s.clone();
        for (d, (m, p)) in doubled.s11.iter_mut().zip(s.s11.iter().zip(&pred)) {
            *d = p - 2.0 * (p - m);
        }
        let quad = objective(off, &doubled, &c);
        assert!((quad - 4.0 * base).abs() < 1e-9 * quad);
    }

    #[test]
    fn objective_rises_away_from_truth() {
        let c = ctx();
        let s = synthetic_slice(&c, TRUTH);
        let scan: Vec<f64> = (-6..=6)
            .map(|k| objective(Params3 { s_rel: TRUTH.s_rel * (1.0 + 0.05 * k as f64), ..TRUTH }, &s, &c))
            .collect();
        for k in 0..6 {
            assert!(scan[k] > scan[k + 1], "left side at {k}");
            assert!(scan[12 - k] > scan[11 - k], "right side at {k}");
        }
    }

    #[test]
    fn noiseless_round_trip() {
        let c = ctx();
        let s = synthetic_slice(&c, TRUTH);
        let init = Params3 {
            s_phi0: 2e6,
            s_rel: 2e6,
            s_ohmic: 3e6,
        };
        let r = fit_slice(&s, &c, init, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.residual < 1e-12, "{}", r.residual);
        for (got, want) in r.params.to_array().iter().zip(TRUTH.to_array()) {
            assert!((got / want - 1.0).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn weight_scale_leaves_argmin() {
        let c = ctx();
        let mut s = synthetic_slice(&c, TRUTH);
        // perturb the data so the optimum has a nonzero residual
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in s.s11.iter_mut() {
            *v += 1e-4 * Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let init = TRUTH;
        let opts = FitOptions {
            restarts: 0,
            ..FitOptions::default()
        };
        let a = fit_slice(&s, &c, init, &opts).unwrap();
        s.weights = Some(vec![8.0; s.s11.len()]);
        let b = fit_slice(&s, &c, init, &opts).unwrap();
        for (x, y) in a.params.to_array().iter().zip(b.params.to_array()) {
            assert!((x / y - 1.0).abs() < 1e-5, "{x} vs {y}");
        }
        assert!((b.residual / a.residual - 8.0).abs() < 1e-6);
    }

    #[test]
    fn flat_direction_survives_json() {
        let r = FitResult {
            slice_amp: 0.02,
            alpha: 0.45,
            n_res: 1,
            gap_detuning: -1e7,
            params: TRUTH,
            residual: 0.5,
            iterations: 10,
            evals: 20,
            converged: true,
            param_spread: Spread3 {
                s_phi0: None,
                s_rel: Some(1e4),
                s_ohmic: Some(2e4),
            },
        };
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"s_phi0\":null"));
        assert_eq!(serde_json::from_str::<FitResult>(&text).unwrap(), r);
    }

    #[test]
    fn restarts_are_deterministic() {
        let c = ctx();
        let s = synthetic_slice(&c, TRUTH);
        let init = Params3 {
            s_phi0: 5e5,
            s_rel: 1e6,
            s_ohmic: 1e6,
        };
        let opts = FitOptions {
            max_evals: 400,
            restarts: 3,
            seed: 11,
        };
        let a = fit_slice(&s, &c, init, &opts).unwrap();
        let b = fit_slice(&s, &c, init, &opts).unwrap();
        assert_eq!(a, b);
    }

    // Two rows where the n = 1 gap is 0.6 GHz: at low drive the σx noise
    // enters mostly through S_X(ω_μ), near J_1's second hump mostly through
    // S_X(0), so both are identifiable from one map.
    fn dephasing_map(s_x: DephasingParams, noise: Option<u64>) -> (MeasuredMap, FitContext) {
        let device = DeviceParams {
            n_rf: 1e-4,
            ..DeviceParams::representative()
        };
        let ctx = FitContext {
            device: device.clone(),
            env: EnvironmentSpectrum::scalar(0.0, 0.0, 0.0),
            m_max: None,
        };
        let env = ctx.env_with(TRUTH, Some((s_x.s_x0, s_x.s_x_mu)));
        let ng0 = 0.5 * (1.0 - (device.f_mu - 0.25e9) / device.e_q);
        let dng = 60e6 / (2.0 * device.e_q);
        let k = device.f_mu / (2.0 * device.e_q * device.gamma_mu);
        let g = SweepGrid {
            ng_min: ng0 - 0.5 * dng,
            ng_max: ng0 + 0.5 * dng,
            ng_steps: 1500,
            amp_min: 0.4748 * k,
            amp_max: 3.2754 * k,
            amp_steps: 2,
        };
        let mut sim = run_map(&g, &device, &env, SweepOptions::default()).unwrap();
        if let Some(seed) = noise {
            add_noise(&mut sim, 0.01, seed).unwrap();
        }
        (MeasuredMap::from_sim(&sim), ctx)
    }

    #[test]
    fn zero_dephasing_matches_plain_map() {
        let zero = DephasingParams { s_x0: 0.0, s_x_mu: 0.0 };
        let (map, ctx) = dephasing_map(zero, None);
        // the fit path sums the rates in a different order than the sweep
        assert!(global_objective(&map, &ctx, &[TRUTH; 2], zero) < 1e-24);
        let some = DephasingParams { s_x0: 1e6, s_x_mu: 1e6 };
        assert!(global_objective(&map, &ctx, &[TRUTH; 2], some) > 1e-6);
    }

    #[test]
    fn global_dephasing_round_trip() {
        let truth = DephasingParams { s_x0: 2e6, s_x_mu: 1e6 };
        let (map, ctx) = dephasing_map(truth, Some(21));
        let init = DephasingParams { s_x0: 1e5, s_x_mu: 1e5 };
        let r = fit_global_dephasing(&map, &ctx, &[TRUTH; 2], init, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.s_x0 / truth.s_x0 - 1.0).abs() < 0.1, "{r:?}");
        assert!((r.s_x_mu / truth.s_x_mu - 1.0).abs() < 0.1, "{r:?}");
        assert!(matches!(
            fit_global_dephasing(&map, &ctx, &[TRUTH; 1], init, &FitOptions::default()),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn global_objective_is_locally_quadratic() {
        let truth = DephasingParams { s_x0: 2e6, s_x_mu: 1e6 };
        let (map, ctx) = dephasing_map(truth, None);
        let at = |x0: f64, xmu: f64| global_objective(&map, &ctx, &[TRUTH; 2], DephasingParams { s_x0: x0, s_x_mu: xmu });
        for h in [1e-3, 2e-3] {
            for (lo, hi) in [
                (at(2e6 * (1.0 - h), 1e6), at(2e6 * (1.0 + h), 1e6)),
                (at(2e6, 1e6 * (1.0 - h)), at(2e6, 1e6 * (1.0 + h))),
            ] {
                // no linear term: both sides rise by the same amount
                assert!(lo > 0.0 && hi > 0.0);
                assert!((lo / hi - 1.0).abs() < 0.02, "{lo} {hi}");
            }
        }
        let (f1, f2) = (at(2e6 * 1.001, 1e6), at(2e6 * 1.002, 1e6));
        assert!((f2 / f1 - 4.0).abs() < 0.05, "{}", f2 / f1);
    }
}
