//! Chains of parameter samples with geometry-aware statistics and export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde_json::{json, Map, Value};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Geometry;

/// Provenance attached to a sample set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleMeta {
    pub sampler: String,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub acceptance_rate: Option<f64>,
    pub extra: Map<String, Value>,
}

/// Per-dimension credibility band.
#[derive(Clone, Debug, PartialEq)]
pub struct CredibleInterval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
}

impl CredibleInterval {
    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }
}

/// `n_samples` vectors of length `n_dim`, stored sample by sample.
#[derive(Clone, Debug)]
pub struct Samples {
    n_dim: usize,
    values: Vec<f64>,
    geometry: Arc<dyn Geometry>,
    meta: SampleMeta,
}

impl Samples {
    pub fn new(values: Vec<f64>, n_dim: usize, geometry: Arc<dyn Geometry>) -> Result<Self> {
        check_dim("sample dimension vs geometry", geometry.par_dim(), n_dim)?;
        if n_dim == 0 || values.is_empty() || values.len() % n_dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form a non-empty set of {n_dim}-vectors",
                values.len()
            )));
        }
        Ok(Samples {
            n_dim,
            values,
            geometry,
            meta: SampleMeta::default(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], geometry: Arc<dyn Geometry>) -> Result<Self> {
        let n_dim = geometry.par_dim();
        for r in rows {
            check_dim("sample row", n_dim, r.len())?;
        }
        Self::new(rows.concat(), n_dim, geometry)
    }

    pub fn with_meta(mut self, meta: SampleMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut SampleMeta {
        &mut self.meta
    }

    pub fn geometry(&self) -> &Arc<dyn Geometry> {
        &self.geometry
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_dim
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_dim..(j + 1) * self.n_dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Trace of coordinate `i` over all samples.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.iter().map(|s| s[i]).collect()
    }

    /// Samples at the given positions, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Samples> {
        let mut values = Vec::with_capacity(indices.len() * self.n_dim);
        for &j in indices {
            if j >= self.n_samples() {
                return Err(Error::InvalidArgument(format!("sample index {j} out of range")));
            }
            values.extend_from_slice(self.sample(j));
        }
        Ok(Samples::new(values, self.n_dim, self.geometry.clone())?.with_meta(self.meta.clone()))
    }

    /// Every `k`-th sample starting from the first.
    pub fn thin(&self, k: usize) -> Result<Samples> {
        let idx: Vec<usize> = (0..self.n_samples()).step_by(k.max(1)).collect();
        self.select(&idx)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_dim];
        for s in self.iter() {
            for (a, b) in m.iter_mut().zip(s) {
                *a += b;
            }
        }
        let n = self.n_samples() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Unbiased per-dimension variance.
    pub fn variance(&self) -> Result<Vec<f64>> {
        let n = self.n_samples();
        if n < 2 {
            return Err(Error::InvalidArgument("variance needs at least 2 samples".into()));
        }
        let m = self.mean();
        let mut v = vec![0.0; self.n_dim];
        for s in self.iter() {
            for ((acc, x), mu) in v.iter_mut().zip(s).zip(&m) {
                *acc += (x - mu) * (x - mu);
            }
        }
        v.iter_mut().for_each(|a| *a /= (n - 1) as f64);
        Ok(v)
    }

    /// Equal-tailed band from linearly interpolated order statistics.
    pub fn ci(&self, percent: f64) -> Result<CredibleInterval> {
        if !(percent > 0.0 && percent <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "credibility percent must be in (0, 100], got {percent}"
            )));
        }
        let p_lo = (1.0 - percent / 100.0) / 2.0;
        let p_hi = (1.0 + percent / 100.0) / 2.0;
        let mut lower = Vec::with_capacity(self.n_dim);
        let mut upper = Vec::with_capacity(self.n_dim);
        for i in 0..self.n_dim {
            let mut c = self.component(i);
            c.sort_by(f64::total_cmp);
            lower.push(quantile_sorted(&c, p_lo));
            upper.push(quantile_sorted(&c, p_hi));
        }
        Ok(CredibleInterval {
            lower,
            upper,
            mean: self.mean(),
        })
    }

    /// Samples mapped through `par2fun`, carrying the function-space geometry.
    pub fn funvals(&self) -> Result<Samples> {
        let fun_geo = self.geometry.fun_geometry();
        let mut values = Vec::with_capacity(self.n_samples() * fun_geo.par_dim());
        for s in self.iter() {
            values.extend(self.geometry.par2fun(s)?);
        }
        Ok(Samples::new(values, fun_geo.par_dim(), fun_geo)?.with_meta(self.meta.clone()))
    }

    /// Effective sample size per dimension via Geyer's initial positive sequence.
    pub fn ess(&self) -> Vec<f64> {
        (0..self.n_dim).map(|i| ess_1d(&self.component(i))).collect()
    }

    /// Writes `samples.csv`, `stats.csv` and `meta.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header: Vec<String> = (1..=self.n_dim).map(|i| format!("x_{i}")).collect();
        let mut text = header.join(",");
        text.push('\n');
        for s in self.iter() {
            write_row(&mut text, s);
        }
        let path = dir.join("samples.csv");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

        let path = dir.join("stats.csv");
        fs::write(&path, self.stats_csv()).map_err(|e| Error::io(&path, e))?;

        let path = dir.join("meta.json");
        let meta = serde_json::to_string_pretty(&self.meta_json()).expect("meta serializes");
        fs::write(&path, meta + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// `dim,mean,variance,ci95_lower,ci95_upper,ess` per dimension.
    pub fn stats_csv(&self) -> String {
        let mean = self.mean();
        let var = self.variance().unwrap_or_else(|_| vec![f64::NAN; self.n_dim]);
        let ci = self.ci(95.0).expect("95 is a valid percent");
        let ess = self.ess();
        let mut text = String::from("dim,mean,variance,ci95_lower,ci95_upper,ess\n");
        for i in 0..self.n_dim {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                i + 1,
                mean[i],
                var[i],
                ci.lower[i],
                ci.upper[i],
                ess[i]
            );
        }
        text
    }

    pub fn meta_json(&self) -> Value {
        json!({
            "sampler": self.meta.sampler,
            "seed": self.meta.seed,
            "rng": self.meta.rng,
            "acceptance_rate": self.meta.acceptance_rate,
            "n_samples": self.n_samples(),
            "n_dim": self.n_dim,
            "geometry": self.geometry.descriptor(),
            "extra": Value::Object(self.meta.extra.clone()),
        })
    }

    /// Reads a directory written by [`Samples::export`].
    pub fn import(dir: &Path, geometry: Arc<dyn Geometry>) -> Result<Samples> {
        let path = dir.join("samples.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(&path, "empty file"))?;
        let n_dim = header.split(',').count();
        for (i, name) in header.split(',').enumerate() {
            if name != format!("x_{}", i + 1) {
                return Err(Error::parse(&path, format!("unexpected column name '{name}'")));
            }
        }
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            let before = values.len();
            for field in line.split(',') {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(&path, format!("line {}: bad number '{field}'", ln + 2)))?;
                values.push(v);
            }
            if values.len() - before != n_dim {
                return Err(Error::parse(&path, format!("line {}: expected {n_dim} fields", ln + 2)));
            }
        }
        let mut samples = Samples::new(values, n_dim, geometry)?;
        let meta_path = dir.join("meta.json");
        if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::parse(&meta_path, e.to_string()))?;
            samples.meta = SampleMeta {
                sampler: v["sampler"].as_str().unwrap_or_default().to_string(),
                seed: v["seed"].as_u64(),
                rng: v["rng"].as_str().map(str::to_string),
                acceptance_rate: v["acceptance_rate"].as_f64(),
                extra: v["extra"].as_object().cloned().unwrap_or_default(),
            };
        }
        Ok(samples)
    }
}

fn write_row(text: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        let _ = write!(text, "{v}");
    }
    text.push('\n');
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normalized autocorrelation `ρ_0..ρ_{n-1}` computed with a zero-padded FFT.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        return vec![1.0; n];
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

fn ess_1d(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 1.0;
    }
    let first = x[0];
    if x.iter().all(|v| *v == first) {
        return 1.0;
    }
    let rho = autocorrelation(x);
    // Initial monotone positive sequence of paired autocorrelations.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = (rho[k] + rho[k + 1]).min(prev);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        prev = pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).max(1.0)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use crate::geometry::{Discrete, Grid1D, StepExpansion};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn one_d(values: Vec<f64>) -> Samples {
        Samples::new(values, 1, Arc::new(Discrete::new(1))).unwrap()
    }

    #[test]
    fn basic_moments() {
        let s = one_d(vec![-1.0, 1.0]);
        assert_eq!(s.mean(), vec![0.0]);
        assert_eq!(s.variance().unwrap(), vec![2.0]);
        assert_eq!(one_d(vec![3.0; 5]).variance().unwrap(), vec![0.0]);
        assert!(one_d(vec![1.0]).variance().is_err());
    }

    #[test]
    fn normal_statistics() {
        let s = one_d(normals(100_000, 1));
        assert!(s.mean()[0].abs() <= 0.02);
        let v = s.variance().unwrap()[0];
        assert!((0.98..=1.02).contains(&v), "{v}");
        let ci = s.ci(95.0).unwrap();
        assert!((ci.lower[0] + 1.96).abs() < 0.05 && (ci.upper[0] - 1.96).abs() < 0.05);
        let ess = s.ess()[0];
        assert!((ess - 1e5).abs() < 2e4, "{ess}");
    }

    #[test]
    fn ci_extremes_and_symmetry() {
        let ci = one_d(vec![2.0, 1.0, 3.0]).ci(100.0).unwrap();
        assert_eq!((ci.lower[0], ci.upper[0]), (1.0, 3.0));
        let ci = one_d(vec![-0.7, 0.7]).ci(50.0).unwrap();
        assert!((ci.lower[0] + ci.upper[0]).abs() < 1e-15);
        assert!(one_d(vec![1.0]).ci(0.0).is_err());
        assert!(one_d(vec![1.0]).ci(120.0).is_err());
    }

    #[test]
    fn ess_of_repeated_pairs_and_constants() {
        let base = normals(20_000, 7);
        let doubled: Vec<f64> = base.iter().flat_map(|v| [*v, *v]).collect();
        let ess = one_d(doubled).ess()[0];
        assert!((ess - 20_000.0).abs() <= 5_000.0, "{ess}");
        assert_eq!(one_d(vec![2.5; 50]).ess(), vec![1.0]);
    }

    #[test]
    fn funvals_of_step_sample() {
        let grid = Grid1D::interior(9, 0.0, 1.0).unwrap();
        let geo: Arc<dyn Geometry> = Arc::new(StepExpansion::new(grid, 3).unwrap());
        let s = Samples::from_rows(&[vec![0.0, 1.0, 0.5]], geo.clone()).unwrap();
        let f = s.funvals().unwrap();
        assert_eq!(f.n_dim(), 9);
        assert_eq!(f.sample(0), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let geo: Arc<dyn Geometry> = Arc::new(Discrete::new(3));
        let values: Vec<f64> = normals(30, 3).into_iter().map(|v| v * 1e-7 + 1.0 / 3.0).collect();
        let s = Samples::new(values, 3, geo.clone()).unwrap().with_meta(SampleMeta {
            sampler: "mh".into(),
            seed: Some(42),
            rng: Some("chacha20".into()),
            acceptance_rate: Some(0.25),
            extra: Map::new(),
        });
        s.export(dir.path()).unwrap();
        let header = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
        assert!(header.starts_with("x_1,x_2,x_3\n"));
        let back = Samples::import(dir.path(), geo).unwrap();
        assert_eq!(back.values(), s.values());
        assert_eq!(back.meta(), s.meta());
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["seed"], 42);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = Samples::import(Path::new("/nonexistent/dir"), Arc::new(Discrete::new(1))).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/samples.csv"));
    }
}
