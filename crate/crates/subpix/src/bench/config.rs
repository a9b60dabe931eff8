//! Benchmark configuration: defaults, key=value config files, and
//! validation. Unknown keys are rejected so typos cannot silently corrupt
//! an experiment.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::SamplePattern;
use crate::warp::WarpRanges;

/// A benchmarkable alignment method, parsed from tags like `iclk`, `esm`,
/// `jd`, `dct-25`, `hp`, `hpdct-25`, `sym`, `symdct-25`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Iclk,
    Esm,
    Jd,
    Dct(u32),
    Hp,
    HpDct(u32),
    Sym,
    SymDct(u32),
}

impl Method {
    pub fn parse(tag: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method '{tag}'"));
        if let Some(r) = tag.strip_prefix("dct-") {
            return Ok(Method::Dct(r.parse().map_err(|_| bad())?));
        }
        if let Some(r) = tag.strip_prefix("hpdct-") {
            return Ok(Method::HpDct(r.parse().map_err(|_| bad())?));
        }
        if let Some(r) = tag.strip_prefix("symdct-") {
            return Ok(Method::SymDct(r.parse().map_err(|_| bad())?));
        }
        match tag {
            "iclk" => Ok(Method::Iclk),
            "esm" => Ok(Method::Esm),
            "jd" => Ok(Method::Jd),
            "hp" => Ok(Method::Hp),
            "sym" => Ok(Method::Sym),
            _ => Err(bad()),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Method::Iclk => "iclk".into(),
            Method::Esm => "esm".into(),
            Method::Jd => "jd".into(),
            Method::Dct(r) => format!("dct-{r}"),
            Method::Hp => "hp".into(),
            Method::HpDct(r) => format!("hpdct-{r}"),
            Method::Sym => "sym".into(),
            Method::SymDct(r) => format!("symdct-{r}"),
        }
    }

    /// Retained DCT coefficients, when the method uses a mapping.
    pub fn dct_r(&self) -> Option<u32> {
        match self {
            Method::Dct(r) | Method::HpDct(r) | Method::SymDct(r) => Some(*r),
            _ => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, Method::Sym | Method::SymDct(_))
    }
}

/// Sweep axis for `run_sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of training warps.
    M,
    /// Patch side length.
    Side,
    /// Maximum translation variation (training and test).
    Var,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepAxis::M),
            "side" => Ok(SweepAxis::Side),
            "var" => Ok(SweepAxis::Var),
            _ => Err(Error::Config(format!("unknown sweep axis '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::Side => "side",
            SweepAxis::Var => "var",
        }
    }
}

/// Full experiment protocol. Defaults follow the synthetic comparison:
/// 9x9 dense patches, 5000 training warps over ±1 px translation and ±0.2
/// deformation, 100 test warps per corner drawn from the training ranges,
/// 10 energy iterations, single-step prediction.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub image: PathBuf,
    pub side: u32,
    pub pattern: SamplePattern,
    pub train_ranges: WarpRanges,
    pub test_ranges: WarpRanges,
    pub num_train_warps: usize,
    pub num_test_warps: usize,
    pub methods: Vec<Method>,
    pub seed_train: u64,
    pub seed_test: u64,
    pub energy_iters: u32,
    pub lp_iters: u32,
    pub max_corners: usize,
    pub min_corner_score: f64,
    /// Extra border margin on top of what the warp footprints require.
    pub border_margin: u32,
    /// Gaussian noise added to test observations (intensity units).
    pub noise_sigma: f64,
    pub timing_repeats: u32,
    /// Scale for the trace-relative ridge.
    pub ridge_scale: f64,
    pub output: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            image: PathBuf::new(),
            side: 9,
            pattern: SamplePattern::Dense,
            train_ranges: WarpRanges::symmetric(1.0, 0.2).expect("valid"),
            test_ranges: WarpRanges::symmetric(1.0, 0.2).expect("valid"),
            num_train_warps: 5000,
            num_test_warps: 100,
            methods: vec![
                Method::Iclk,
                Method::Esm,
                Method::Jd,
                Method::Dct(25),
                Method::Hp,
                Method::HpDct(25),
                Method::Sym,
                Method::SymDct(25),
            ],
            seed_train: 1,
            seed_test: 2,
            energy_iters: 10,
            lp_iters: 1,
            max_corners: 40,
            min_corner_score: 1e-7,
            border_margin: 2,
            noise_sigma: 0.0,
            timing_repeats: 5,
            ridge_scale: 1e-8,
            output: None,
        }
    }
}

impl BenchConfig {
    /// Checks cross-field invariants. Test ranges must lie inside the
    /// training ranges: predictors are only valid in-range.
    pub fn validate(&self) -> Result<()> {
        if self.image.as_os_str().is_empty() {
            return Err(Error::Config("no image given".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if !self.test_ranges.is_subset_of(&self.train_ranges) {
            return Err(Error::Config(
                "test ranges exceed training ranges".into(),
            ));
        }
        if self.num_train_warps < 6 {
            return Err(Error::Config("need at least 6 training warps".into()));
        }
        if self.num_test_warps == 0 {
            return Err(Error::Config("need at least 1 test warp".into()));
        }
        if self.lp_iters == 0 || self.energy_iters == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if self.timing_repeats == 0 {
            return Err(Error::Config("timing repeats must be positive".into()));
        }
        let n = crate::imaging::PatchSpec::new((0, 0), self.side, self.pattern)?.len();
        for m in &self.methods {
            if let Some(r) = m.dct_r() {
                if r == 0 || r as usize > n {
                    return Err(Error::Config(format!(
                        "{} retains {r} of {n} coefficients",
                        m.tag()
                    )));
                }
                if self.pattern != SamplePattern::Dense {
                    return Err(Error::Config("DCT methods need a dense patch".into()));
                }
            }
        }
        Ok(())
    }

    /// Applies a `key = value` config file over the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Parses config text: one `key = value` per line, `#` comment lines,
    /// no duplicate or unknown keys.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
            self.apply_key(key, value)?;
        }
        Ok(())
    }

    /// Sets one configuration key from its string form.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {what} '{value}'"));
        match key {
            "image" => self.image = PathBuf::from(value),
            "side" => self.side = value.parse().map_err(|_| bad("side"))?,
            "pattern" => self.pattern = parse_pattern(value)?,
            "m" => self.num_train_warps = value.parse().map_err(|_| bad("m"))?,
            "test_warps" => {
                self.num_test_warps = value.parse().map_err(|_| bad("test_warps"))?
            }
            "train_translation" => {
                let t: f64 = value.parse().map_err(|_| bad("train_translation"))?;
                self.train_ranges = with_translation(&self.train_ranges, t)?;
            }
            "train_linear" => {
                let s: f64 = value.parse().map_err(|_| bad("train_linear"))?;
                self.train_ranges = with_linear(&self.train_ranges, s)?;
            }
            "test_translation" => {
                let t: f64 = value.parse().map_err(|_| bad("test_translation"))?;
                self.test_ranges = with_translation(&self.test_ranges, t)?;
            }
            "test_linear" => {
                let s: f64 = value.parse().map_err(|_| bad("test_linear"))?;
                self.test_ranges = with_linear(&self.test_ranges, s)?;
            }
            "train_ranges" => self.train_ranges = parse_ranges(value)?,
            "test_ranges" => self.test_ranges = parse_ranges(value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|t| Method::parse(t.trim()))
                    .collect::<Result<_>>()?;
            }
            "seed_train" => self.seed_train = value.parse().map_err(|_| bad("seed_train"))?,
            "seed_test" => self.seed_test = value.parse().map_err(|_| bad("seed_test"))?,
            "energy_iters" => {
                self.energy_iters = value.parse().map_err(|_| bad("energy_iters"))?
            }
            "lp_iters" => self.lp_iters = value.parse().map_err(|_| bad("lp_iters"))?,
            "max_corners" => self.max_corners = value.parse().map_err(|_| bad("max_corners"))?,
            "min_corner_score" => {
                self.min_corner_score = value.parse().map_err(|_| bad("min_corner_score"))?
            }
            "border_margin" => {
                self.border_margin = value.parse().map_err(|_| bad("border_margin"))?
            }
            "noise_sigma" => self.noise_sigma = value.parse().map_err(|_| bad("noise_sigma"))?,
            "timing_repeats" => {
                self.timing_repeats = value.parse().map_err(|_| bad("timing_repeats"))?
            }
            "ridge_scale" => self.ridge_scale = value.parse().map_err(|_| bad("ridge_scale"))?,
            "output" => self.output = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }
}

/// Parses `dense` or `strided-k`.
pub fn parse_pattern(value: &str) -> Result<SamplePattern> {
    if value == "dense" {
        return Ok(SamplePattern::Dense);
    }
    if let Some(s) = value.strip_prefix("strided-") {
        let s: u32 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid pattern '{value}'")))?;
        if s < 2 {
            return Err(Error::Config("stride must be >= 2".into()));
        }
        return Ok(SamplePattern::Strided(s));
    }
    Err(Error::Config(format!("invalid pattern '{value}'")))
}

/// Parses 12 comma-separated numbers as `lo,hi` per warp parameter.
pub fn parse_ranges(value: &str) -> Result<WarpRanges> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid ranges '{value}'")))?;
    if parts.len() != 12 {
        return Err(Error::Config(format!(
            "ranges need 12 numbers (lo,hi per parameter), got {}",
            parts.len()
        )));
    }
    let mut lo = [0.0; 6];
    let mut hi = [0.0; 6];
    for i in 0..6 {
        lo[i] = parts[2 * i];
        hi[i] = parts[2 * i + 1];
    }
    WarpRanges::new(lo, hi)
}

fn with_translation(base: &WarpRanges, t: f64) -> Result<WarpRanges> {
    let mut lo = base.lo;
    let mut hi = base.hi;
    lo[2] = -t;
    hi[2] = t;
    lo[5] = -t;
    hi[5] = t;
    WarpRanges::new(lo, hi)
}

fn with_linear(base: &WarpRanges, s: f64) -> Result<WarpRanges> {
    let mut lo = base.lo;
    let mut hi = base.hi;
    for i in [0usize, 1, 3, 4] {
        lo[i] = -s;
        hi[i] = s;
    }
    WarpRanges::new(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_round_trip() {
        for tag in ["iclk", "esm", "jd", "dct-25", "hp", "hpdct-49", "sym", "symdct-9"] {
            assert_eq!(Method::parse(tag).unwrap().tag(), tag);
        }
        assert!(Method::parse("fast").is_err());
        assert!(Method::parse("dct-x").is_err());
    }

    #[test]
    fn config_text_is_strict() {
        let mut cfg = BenchConfig::default();
        cfg.apply_text("# comment\nimage = board.pgm\nm = 300\nmethods = sym, jd\n")
            .unwrap();
        assert_eq!(cfg.image, PathBuf::from("board.pgm"));
        assert_eq!(cfg.num_train_warps, 300);
        assert_eq!(cfg.methods, vec![Method::Sym, Method::Jd]);

        let mut cfg = BenchConfig::default();
        assert!(matches!(
            cfg.apply_text("imge = x.pgm\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            cfg.apply_text("m = 10\nm = 20\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(cfg.apply_text("m 10\n"), Err(Error::Config(_))));
    }

    #[test]
    fn ranges_parsing() {
        let mut cfg = BenchConfig::default();
        cfg.apply_text("train_ranges = -0.1,0.1,-0.1,0.1,-2,2,-0.1,0.1,-0.1,0.1,-2,2\n")
            .unwrap();
        assert_eq!(cfg.train_ranges.lo[2], -2.0);
        assert!(cfg.apply_text("test_ranges = 1,2,3\n").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut cfg = BenchConfig::default();
        cfg.image = PathBuf::from("x.pgm");
        cfg.validate().unwrap();

        // Test ranges wider than training.
        cfg.test_ranges = WarpRanges::symmetric(2.0, 0.2).unwrap();
        assert!(cfg.validate().is_err());
        cfg.test_ranges = WarpRanges::symmetric(0.5, 0.1).unwrap();
        cfg.validate().unwrap();

        // DCT retention beyond the pixel count.
        cfg.methods = vec![Method::Dct(100)];
        assert!(cfg.validate().is_err());
    }
}
